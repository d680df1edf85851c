#include "museum/autograd.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <unordered_set>
#include <utility>

#include "museum/errors.hpp"

namespace museum::ag {

namespace {

using MatR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;

MapR as_mat(Tensor& t, int rows, int cols) { return {t.data.data(), rows, cols}; }
CMapR as_mat(const Tensor& t, int rows, int cols) { return {t.data.data(), rows, cols}; }

Var make_result(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> fn) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    bool any = false;
    for (const auto& in : inputs) any = any || in.requires_grad();
    if (any) {
        node->requires_grad = true;
        node->parents.reserve(inputs.size());
        for (const auto& in : inputs) node->parents.push_back(in.ptr());
        node->backward_fn = std::move(fn);
    }
    return Var(std::move(node));
}

void check_same(const Var& a, const Var& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw InputError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
}

// Broadcast rule for binary elementwise ops: equal shapes, or either side a
// single element.
std::vector<int> broadcast_shape(const Var& a, const Var& b, const char* op) {
    if (a.shape() == b.shape()) return a.shape();
    if (b.size() == 1) return a.shape();
    if (a.size() == 1) return b.shape();
    throw InputError(std::string(op) + ": cannot broadcast " + shape_str(a.shape()) + " with " + shape_str(b.shape()));
}

inline double at(const Tensor& t, std::size_t i) { return t.size() == 1 ? t[0] : t[i]; }

// Accumulate g (length n) into a parent that may be a broadcast scalar.
void accumulate(Node& parent, std::size_t i, double g) {
    Tensor& pg = parent.grad_buffer();
    if (pg.size() == 1) {
        pg[0] += g;
    } else {
        pg[i] += g;
    }
}

template <class F, class DA, class DB>
Var binary(const Var& a, const Var& b, const char* name, F f, DA da, DB db) {
    auto shape = broadcast_shape(a, b, name);
    Tensor out(shape);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(at(av, i), at(bv, i));
    return make_result(std::move(out), {a, b}, [da, db](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        for (std::size_t i = 0; i < self.value.size(); ++i) {
            const double x = at(pa.value, i);
            const double y = at(pb.value, i);
            const double g = self.grad[i];
            if (pa.requires_grad) accumulate(pa, i, g * da(x, y, self.value[i]));
            if (pb.requires_grad) accumulate(pb, i, g * db(x, y, self.value[i]));
        }
    });
}

template <class F, class D>
Var unary(const Var& a, F f, D d) {
    Tensor out(a.shape());
    const Tensor& av = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i]);
    return make_result(std::move(out), {a}, [d](Node& self) {
        Node& p = *self.parents[0];
        Tensor& pg = p.grad_buffer();
        for (std::size_t i = 0; i < self.value.size(); ++i) pg[i] += self.grad[i] * d(p.value[i], self.value[i]);
    });
}

}  // namespace

Tensor& Node::grad_buffer() {
    if (grad.size() != value.size()) grad = Tensor(value.shape, 0.0);
    return grad;
}

double Var::item() const {
    if (size() != 1) throw InputError("item() on tensor of shape " + shape_str(shape()));
    return value()[0];
}

void Var::zero_grad() const {
    if (node_) node_->grad = Tensor();
}

Var constant(Tensor value) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    return Var(std::move(node));
}

Var parameter(Tensor value) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->requires_grad = true;
    return Var(std::move(node));
}

void backward(const Var& root) {
    if (root.size() != 1) throw InputError("backward() needs a scalar root");
    if (!root.requires_grad()) return;

    // Iterative post-order DFS gives a topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.node(), 0);
    seen.insert(root.node());
    while (!stack.empty()) {
        auto& [n, idx] = stack.back();
        if (idx < n->parents.size()) {
            Node* p = n->parents[idx++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    root.node()->grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && n->grad.size() == n->value.size()) n->backward_fn(*n);
    }
}

Var add(const Var& a, const Var& b) {
    return binary(
        a, b, "add", [](double x, double y) { return x + y; }, [](double, double, double) { return 1.0; },
        [](double, double, double) { return 1.0; });
}

Var sub(const Var& a, const Var& b) {
    return binary(
        a, b, "sub", [](double x, double y) { return x - y; }, [](double, double, double) { return 1.0; },
        [](double, double, double) { return -1.0; });
}

Var mul(const Var& a, const Var& b) {
    return binary(
        a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y, double) { return y; },
        [](double x, double, double) { return x; });
}

Var div(const Var& a, const Var& b) {
    return binary(
        a, b, "div", [](double x, double y) { return x / y; }, [](double, double y, double) { return 1.0 / y; },
        [](double, double y, double o) { return -o / y; });
}

Var scale(const Var& a, double s) {
    return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(const Var& a, double s) {
    return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var sqrt(const Var& a) {
    return unary(a, [](double x) { return std::sqrt(x); }, [](double, double y) { return 0.5 / y; });
}

Var square(const Var& a) {
    return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var silu(const Var& a) {
    return unary(
        a, [](double x) { return x / (1.0 + std::exp(-x)); },
        [](double x, double) {
            const double s = 1.0 / (1.0 + std::exp(-x));
            return s * (1.0 + x * (1.0 - s));
        });
}

Var sigmoid(const Var& a) {
    return unary(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); }, [](double, double y) { return y * (1.0 - y); });
}

Var sum(const Var& a) {
    double s = 0.0;
    for (double v : a.value().data) s += v;
    return make_result(Tensor::scalar(s), {a}, [](Node& self) {
        Node& p = *self.parents[0];
        Tensor& pg = p.grad_buffer();
        const double g = self.grad[0];
        for (double& v : pg.data) v += g;
    });
}

Var mean(const Var& a) {
    if (a.size() == 0) throw InputError("mean of empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Var dot(const Var& a, const Var& b) {
    if (a.size() != b.size()) throw InputError("dot: length mismatch");
    double s = 0.0;
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < av.size(); ++i) s += av[i] * bv[i];
    return make_result(Tensor::scalar(s), {a, b}, [](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        const double g = self.grad[0];
        if (pa.requires_grad) {
            Tensor& ga = pa.grad_buffer();
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * pb.value[i];
        }
        if (pb.requires_grad) {
            Tensor& gb = pb.grad_buffer();
            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g * pa.value[i];
        }
    });
}

Var reshape(const Var& a, std::vector<int> shape) {
    Tensor out = a.value().reshaped(std::move(shape));
    return make_result(std::move(out), {a}, [](Node& self) {
        Tensor& pg = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += self.grad[i];
    });
}

Var matmul(const Var& a, const Var& b) {
    if (a.value().rank() != 2 || b.value().rank() != 2 || a.shape()[1] != b.shape()[0]) {
        throw InputError("matmul: incompatible shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    const int m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    Tensor out({m, n});
    as_mat(out, m, n).noalias() = as_mat(a.value(), m, k) * as_mat(b.value(), k, n);
    return make_result(std::move(out), {a, b}, [m, k, n](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        auto g = as_mat(std::as_const(self.grad), m, n);
        if (pa.requires_grad) as_mat(pa.grad_buffer(), m, k).noalias() += g * as_mat(std::as_const(pb.value), k, n).transpose();
        if (pb.requires_grad) as_mat(pb.grad_buffer(), k, n).noalias() += as_mat(std::as_const(pa.value), m, k).transpose() * g;
    });
}

Var matmul_nt(const Var& a, const Var& b) {
    if (a.value().rank() != 2 || b.value().rank() != 2 || a.shape()[1] != b.shape()[1]) {
        throw InputError("matmul_nt: incompatible shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()) + "^T");
    }
    const int m = a.shape()[0], k = a.shape()[1], n = b.shape()[0];
    Tensor out({m, n});
    as_mat(out, m, n).noalias() = as_mat(a.value(), m, k) * as_mat(b.value(), n, k).transpose();
    return make_result(std::move(out), {a, b}, [m, k, n](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        auto g = as_mat(std::as_const(self.grad), m, n);
        if (pa.requires_grad) as_mat(pa.grad_buffer(), m, k).noalias() += g * as_mat(std::as_const(pb.value), n, k);
        if (pb.requires_grad) as_mat(pb.grad_buffer(), n, k).noalias() += g.transpose() * as_mat(std::as_const(pa.value), m, k);
    });
}

Var add_row(const Var& a, const Var& bias) {
    if (a.value().rank() != 2 || static_cast<int>(bias.size()) != a.shape()[1]) {
        throw InputError("add_row: bias length does not match columns");
    }
    const int m = a.shape()[0], n = a.shape()[1];
    Tensor out = a.value();
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out[static_cast<std::size_t>(i * n + j)] += bias.value()[static_cast<std::size_t>(j)];
    return make_result(std::move(out), {a, bias}, [m, n](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (pa.requires_grad) {
            Tensor& ga = pa.grad_buffer();
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
        }
        if (pb.requires_grad) {
            Tensor& gb = pb.grad_buffer();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) gb[static_cast<std::size_t>(j)] += self.grad[static_cast<std::size_t>(i * n + j)];
        }
    });
}

Var add_channel(const Var& x, const Var& v) {
    if (x.value().rank() != 3 || static_cast<int>(v.size()) != x.shape()[0]) {
        throw InputError("add_channel: vector length does not match channels");
    }
    const int c = x.shape()[0];
    const int hw = x.shape()[1] * x.shape()[2];
    Tensor out = x.value();
    for (int ch = 0; ch < c; ++ch)
        for (int i = 0; i < hw; ++i) out[static_cast<std::size_t>(ch * hw + i)] += v.value()[static_cast<std::size_t>(ch)];
    return make_result(std::move(out), {x, v}, [c, hw](Node& self) {
        Node& px = *self.parents[0];
        Node& pv = *self.parents[1];
        if (px.requires_grad) {
            Tensor& gx = px.grad_buffer();
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
        }
        if (pv.requires_grad) {
            Tensor& gv = pv.grad_buffer();
            for (int ch = 0; ch < c; ++ch) {
                double s = 0.0;
                for (int i = 0; i < hw; ++i) s += self.grad[static_cast<std::size_t>(ch * hw + i)];
                gv[static_cast<std::size_t>(ch)] += s;
            }
        }
    });
}

Var softmax_rows(const Var& a) {
    if (a.value().rank() != 2) throw InputError("softmax_rows expects a matrix");
    const int m = a.shape()[0], n = a.shape()[1];
    Tensor out(a.shape());
    for (int i = 0; i < m; ++i) {
        const double* row = &a.value().data[static_cast<std::size_t>(i * n)];
        double* o = &out.data[static_cast<std::size_t>(i * n)];
        const double mx = *std::max_element(row, row + n);
        double s = 0.0;
        for (int j = 0; j < n; ++j) {
            o[j] = std::exp(row[j] - mx);
            s += o[j];
        }
        for (int j = 0; j < n; ++j) o[j] /= s;
    }
    return make_result(std::move(out), {a}, [m, n](Node& self) {
        Tensor& ga = self.parents[0]->grad_buffer();
        for (int i = 0; i < m; ++i) {
            const std::size_t off = static_cast<std::size_t>(i * n);
            double d = 0.0;
            for (int j = 0; j < n; ++j) d += self.grad[off + j] * self.value[off + j];
            for (int j = 0; j < n; ++j) ga[off + j] += self.value[off + j] * (self.grad[off + j] - d);
        }
    });
}

namespace {

struct ConvGeom {
    int c, h, w, o, k, stride, pad, ho, wo;
};

ConvGeom conv_geom(const Tensor& x, const Tensor& w, int stride, int pad) {
    if (x.rank() != 3 || w.rank() != 4 || w.dim(1) != x.dim(0) || w.dim(2) != w.dim(3)) {
        throw InputError("conv2d: incompatible shapes " + shape_str(x.shape) + " and " + shape_str(w.shape));
    }
    ConvGeom g{x.dim(0), x.dim(1), x.dim(2), w.dim(0), w.dim(2), stride, pad, 0, 0};
    g.ho = (g.h + 2 * pad - g.k) / stride + 1;
    g.wo = (g.w + 2 * pad - g.k) / stride + 1;
    if (g.ho <= 0 || g.wo <= 0) throw InputError("conv2d: output would be empty");
    return g;
}

MatR im2col(const Tensor& x, const ConvGeom& g) {
    MatR cols = MatR::Zero(g.c * g.k * g.k, g.ho * g.wo);
    for (int ch = 0; ch < g.c; ++ch)
        for (int ky = 0; ky < g.k; ++ky)
            for (int kx = 0; kx < g.k; ++kx) {
                const int row = (ch * g.k + ky) * g.k + kx;
                for (int oy = 0; oy < g.ho; ++oy) {
                    const int iy = oy * g.stride - g.pad + ky;
                    if (iy < 0 || iy >= g.h) continue;
                    for (int ox = 0; ox < g.wo; ++ox) {
                        const int ix = ox * g.stride - g.pad + kx;
                        if (ix < 0 || ix >= g.w) continue;
                        cols(row, oy * g.wo + ox) = x.data[static_cast<std::size_t>((ch * g.h + iy) * g.w + ix)];
                    }
                }
            }
    return cols;
}

void col2im_add(const MatR& cols, Tensor& dx, const ConvGeom& g) {
    for (int ch = 0; ch < g.c; ++ch)
        for (int ky = 0; ky < g.k; ++ky)
            for (int kx = 0; kx < g.k; ++kx) {
                const int row = (ch * g.k + ky) * g.k + kx;
                for (int oy = 0; oy < g.ho; ++oy) {
                    const int iy = oy * g.stride - g.pad + ky;
                    if (iy < 0 || iy >= g.h) continue;
                    for (int ox = 0; ox < g.wo; ++ox) {
                        const int ix = ox * g.stride - g.pad + kx;
                        if (ix < 0 || ix >= g.w) continue;
                        dx.data[static_cast<std::size_t>((ch * g.h + iy) * g.w + ix)] += cols(row, oy * g.wo + ox);
                    }
                }
            }
}

}  // namespace

Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
    const ConvGeom g = conv_geom(x, w, stride, pad);
    const MatR cols = im2col(x, g);
    Tensor out({g.o, g.ho, g.wo});
    auto om = as_mat(out, g.o, g.ho * g.wo);
    om.noalias() = as_mat(w, g.o, g.c * g.k * g.k) * cols;
    if (!b.empty()) {
        for (int o = 0; o < g.o; ++o) om.row(o).array() += b[static_cast<std::size_t>(o)];
    }
    return out;
}

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    const ConvGeom g = conv_geom(x.value(), w.value(), stride, pad);
    if (static_cast<int>(b.size()) != g.o) throw InputError("conv2d: bias length mismatch");
    auto cols = std::make_shared<MatR>(im2col(x.value(), g));
    Tensor out({g.o, g.ho, g.wo});
    auto om = as_mat(out, g.o, g.ho * g.wo);
    om.noalias() = as_mat(w.value(), g.o, g.c * g.k * g.k) * (*cols);
    for (int o = 0; o < g.o; ++o) om.row(o).array() += b.value()[static_cast<std::size_t>(o)];
    return make_result(std::move(out), {x, w, b}, [g, cols](Node& self) {
        Node& px = *self.parents[0];
        Node& pw = *self.parents[1];
        Node& pb = *self.parents[2];
        const int kk = g.c * g.k * g.k;
        auto go = as_mat(std::as_const(self.grad), g.o, g.ho * g.wo);
        if (pw.requires_grad) as_mat(pw.grad_buffer(), g.o, kk).noalias() += go * cols->transpose();
        if (pb.requires_grad) {
            Tensor& gb = pb.grad_buffer();
            for (int o = 0; o < g.o; ++o) gb[static_cast<std::size_t>(o)] += go.row(o).sum();
        }
        if (px.requires_grad) {
            MatR dcols = as_mat(std::as_const(pw.value), g.o, kk).transpose() * go;
            col2im_add(dcols, px.grad_buffer(), g);
        }
    });
}

Var upsample2x(const Var& x) {
    if (x.value().rank() != 3) throw InputError("upsample2x expects [C,H,W]");
    const int c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
    Tensor out({c, 2 * h, 2 * w});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < 2 * h; ++y)
            for (int xx = 0; xx < 2 * w; ++xx)
                out[static_cast<std::size_t>((ch * 2 * h + y) * 2 * w + xx)] =
                    x.value()[static_cast<std::size_t>((ch * h + y / 2) * w + xx / 2)];
    return make_result(std::move(out), {x}, [c, h, w](Node& self) {
        Tensor& gx = self.parents[0]->grad_buffer();
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < 2 * h; ++y)
                for (int xx = 0; xx < 2 * w; ++xx)
                    gx[static_cast<std::size_t>((ch * h + y / 2) * w + xx / 2)] +=
                        self.grad[static_cast<std::size_t>((ch * 2 * h + y) * 2 * w + xx)];
    });
}

Var concat_channels(const Var& a, const Var& b) {
    if (a.value().rank() != 3 || b.value().rank() != 3 || a.shape()[1] != b.shape()[1] || a.shape()[2] != b.shape()[2]) {
        throw InputError("concat_channels: spatial shapes differ");
    }
    const std::size_t na = a.size();
    Tensor out({a.shape()[0] + b.shape()[0], a.shape()[1], a.shape()[2]});
    std::copy(a.value().data.begin(), a.value().data.end(), out.data.begin());
    std::copy(b.value().data.begin(), b.value().data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(na));
    return make_result(std::move(out), {a, b}, [na](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (pa.requires_grad) {
            Tensor& ga = pa.grad_buffer();
            for (std::size_t i = 0; i < na; ++i) ga[i] += self.grad[i];
        }
        if (pb.requires_grad) {
            Tensor& gb = pb.grad_buffer();
            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += self.grad[na + i];
        }
    });
}

Var chw_to_tokens(const Var& x) {
    if (x.value().rank() != 3) throw InputError("chw_to_tokens expects [C,H,W]");
    const int c = x.shape()[0], hw = x.shape()[1] * x.shape()[2];
    Tensor out({hw, c});
    as_mat(out, hw, c) = as_mat(x.value(), c, hw).transpose();
    return make_result(std::move(out), {x}, [c, hw](Node& self) {
        as_mat(self.parents[0]->grad_buffer(), c, hw) += as_mat(std::as_const(self.grad), hw, c).transpose();
    });
}

Var tokens_to_chw(const Var& t, int h, int w) {
    if (t.value().rank() != 2 || t.shape()[0] != h * w) throw InputError("tokens_to_chw: token count mismatch");
    const int c = t.shape()[1], hw = h * w;
    Tensor out({c, h, w});
    as_mat(out, c, hw) = as_mat(t.value(), hw, c).transpose();
    return make_result(std::move(out), {t}, [c, hw](Node& self) {
        as_mat(self.parents[0]->grad_buffer(), hw, c) += as_mat(std::as_const(self.grad), c, hw).transpose();
    });
}

Var replace_row(const Var& base, int row, const Var& v) {
    if (base.value().rank() != 2) throw InputError("replace_row expects a matrix");
    const int s = base.shape()[0], d = base.shape()[1];
    if (row < 0 || row >= s) throw InputError("replace_row: row out of range");
    if (static_cast<int>(v.size()) != d) throw InputError("replace_row: vector length mismatch");
    Tensor out = base.value();
    std::copy(v.value().data.begin(), v.value().data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(row * d));
    return make_result(std::move(out), {base, v}, [row, d](Node& self) {
        Node& pb = *self.parents[0];
        Node& pv = *self.parents[1];
        const std::size_t off = static_cast<std::size_t>(row * d);
        if (pb.requires_grad) {
            Tensor& gb = pb.grad_buffer();
            for (std::size_t i = 0; i < gb.size(); ++i) {
                if (i < off || i >= off + static_cast<std::size_t>(d)) gb[i] += self.grad[i];
            }
        }
        if (pv.requires_grad) {
            Tensor& gv = pv.grad_buffer();
            for (int j = 0; j < d; ++j) gv[static_cast<std::size_t>(j)] += self.grad[off + static_cast<std::size_t>(j)];
        }
    });
}

namespace {
std::vector<double> log_softmax(const std::vector<double>& x, double tau) {
    double mx = -INFINITY;
    for (double v : x) mx = std::max(mx, v / tau);
    double s = 0.0;
    for (double v : x) s += std::exp(v / tau - mx);
    const double lse = mx + std::log(s);
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] / tau - lse;
    return out;
}
}  // namespace

Var softmax_kl(const Var& p_logits, const Var& q_logits, double tau) {
    check_same(p_logits, q_logits, "softmax_kl");
    if (!(tau > 0.0)) throw InputError("softmax_kl: temperature must be positive");
    if (p_logits.size() == 0) throw InputError("softmax_kl: empty input");
    if (!p_logits.value().all_finite() || !q_logits.value().all_finite()) {
        throw NumericError("softmax_kl: non-finite logits");
    }
    auto lp = std::make_shared<std::vector<double>>(log_softmax(p_logits.value().data, tau));
    auto lq = std::make_shared<std::vector<double>>(log_softmax(q_logits.value().data, tau));
    // log p_i - log q_i = d_i - c with d = (p - q) / tau and c = log sum_i q_i e^{d_i}.
    // Working on d keeps the result accurate when p and q nearly coincide.
    const Tensor& pv = p_logits.value();
    const Tensor& qv = q_logits.value();
    auto diff = std::make_shared<std::vector<double>>(lp->size());
    double dmax = -INFINITY;
    for (std::size_t i = 0; i < diff->size(); ++i) {
        (*diff)[i] = (pv[i] - qv[i]) / tau;
        dmax = std::max(dmax, (*diff)[i]);
    }
    double c = 0.0;
    if (dmax < 30.0) {
        double s = 0.0;
        for (std::size_t i = 0; i < diff->size(); ++i) s += std::exp((*lq)[i]) * std::expm1((*diff)[i]);
        c = std::log1p(s);
    } else {
        double s = 0.0;
        for (std::size_t i = 0; i < diff->size(); ++i) s += std::exp((*lq)[i] + (*diff)[i] - dmax);
        c = dmax + std::log(s);
    }
    for (double& v : *diff) v -= c;
    double kl = 0.0;
    for (std::size_t i = 0; i < lp->size(); ++i) kl += std::exp((*lp)[i]) * (*diff)[i];
    const double raw = kl;
    kl = std::max(kl, 0.0);
    return make_result(Tensor::scalar(kl), {p_logits, q_logits}, [lp, lq, diff, raw, tau](Node& self) {
        Node& pp = *self.parents[0];
        Node& pq = *self.parents[1];
        const double g = self.grad[0] / tau;
        if (pp.requires_grad) {
            Tensor& gp = pp.grad_buffer();
            for (std::size_t i = 0; i < lp->size(); ++i) {
                const double p = std::exp((*lp)[i]);
                gp[i] += g * p * ((*diff)[i] - raw);
            }
        }
        if (pq.requires_grad) {
            Tensor& gq = pq.grad_buffer();
            for (std::size_t i = 0; i < lq->size(); ++i) gq[i] += g * (std::exp((*lq)[i]) - std::exp((*lp)[i]));
        }
    });
}

}  // namespace museum::ag
