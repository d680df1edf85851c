#include "museum/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "museum/errors.hpp"
#include "museum/rng.hpp"

namespace museum {

FeatureExtractor::FeatureExtractor(std::uint64_t seed) {
    Rng rng(seed);
    const int spec[4][3] = {{3, 16, 1}, {16, 16, 2}, {16, 32, 1}, {32, 32, 2}};
    for (const auto& s : spec) {
        const int in = s[0], out = s[1];
        Layer l{rng.normal_tensor({out, in, 3, 3}, std::sqrt(2.0 / (in * 9))), rng.normal_tensor({out}, 0.05), s[2]};
        layers_.push_back(std::move(l));
    }
}

std::vector<Tensor> FeatureExtractor::taps(const Tensor& image) const {
    if (image.rank() != 3 || image.dim(0) != 3) throw InputError("feature extractor expects a (3, H, W) image");
    std::vector<Tensor> out;
    Tensor x = image;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        x = ag::conv2d_forward(x, layers_[i].w, layers_[i].b, layers_[i].stride, 1);
        for (double& v : x.data) v = std::max(v, 0.0);
        if (i == 1 || i == 3) out.push_back(x);
    }
    return out;
}

std::vector<double> FeatureExtractor::embed(const Tensor& image) const {
    std::vector<double> f;
    for (const Tensor& t : taps(image)) {
        const int c = t.dim(0);
        const std::size_t hw = t.size() / static_cast<std::size_t>(c);
        for (int ch = 0; ch < c; ++ch) {
            double s = 0.0;
            for (std::size_t i = 0; i < hw; ++i) s += t[static_cast<std::size_t>(ch) * hw + i];
            f.push_back(s / static_cast<double>(hw));
        }
    }
    return f;
}

Tensor gram_matrix(const Tensor& features) {
    if (features.rank() != 3 || features.empty()) throw InputError("gram_matrix expects non-empty (C, H, W) features");
    const int c = features.dim(0);
    const int hw = features.dim(1) * features.dim(2);
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> f(features.data.data(), c, hw);
    Tensor g({c, c});
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> gm(g.data.data(), c, c);
    gm.noalias() = f * f.transpose();
    gm /= static_cast<double>(c) * hw;
    return g;
}

double style_loss(const std::vector<Tensor>& generated, const std::vector<Tensor>& references,
                  const FeatureExtractor& extractor) {
    if (generated.empty() || references.empty()) throw InputError("style_loss needs non-empty image sets");
    auto grams = [&](const std::vector<Tensor>& imgs) {
        std::vector<std::vector<Tensor>> out;
        for (const auto& img : imgs) {
            std::vector<Tensor> gs;
            for (const auto& t : extractor.taps(img)) gs.push_back(gram_matrix(t));
            out.push_back(std::move(gs));
        }
        return out;
    };
    const auto gg = grams(generated);
    const auto gr = grams(references);
    double total = 0.0;
    std::size_t terms = 0;
    for (const auto& a : gg)
        for (const auto& b : gr)
            for (std::size_t l = 0; l < a.size(); ++l) {
                double d = 0.0;
                for (std::size_t i = 0; i < a[l].size(); ++i) {
                    const double e = a[l][i] - b[l][i];
                    d += e * e;
                }
                total += d;
                ++terms;
            }
    return total / static_cast<double>(terms);
}

namespace {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

void moments(const std::vector<std::vector<double>>& f, Vec& mu, Mat& cov) {
    if (f.size() < 2) throw InputError("fid needs at least 2 samples per set");
    const auto d = static_cast<Eigen::Index>(f[0].size());
    Mat x(static_cast<Eigen::Index>(f.size()), d);
    for (std::size_t i = 0; i < f.size(); ++i) {
        if (static_cast<Eigen::Index>(f[i].size()) != d) throw InputError("fid: feature vectors differ in length");
        for (Eigen::Index j = 0; j < d; ++j) x(static_cast<Eigen::Index>(i), j) = f[i][static_cast<std::size_t>(j)];
    }
    mu = x.colwise().mean();
    const Mat c = x.rowwise() - mu.transpose();
    cov = (c.transpose() * c) / static_cast<double>(f.size() - 1);
}

Mat sqrt_psd(const Mat& m) {
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.transpose()));
    Vec ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double fid(const std::vector<std::vector<double>>& feats_a, const std::vector<std::vector<double>>& feats_b) {
    Vec mu_a, mu_b;
    Mat cov_a, cov_b;
    moments(feats_a, mu_a, cov_a);
    moments(feats_b, mu_b, cov_b);
    if (mu_a.size() != mu_b.size()) throw InputError("fid: feature dimensions differ");
    // Tr((S_a S_b)^{1/2}) = Tr((S_a^{1/2} S_b S_a^{1/2})^{1/2}), symmetric in a and b.
    const Mat ra = sqrt_psd(cov_a);
    Eigen::SelfAdjointEigenSolver<Mat> es(ra * cov_b * ra);
    const double tr_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
    const double value = (mu_a - mu_b).squaredNorm() + cov_a.trace() + cov_b.trace() - 2.0 * tr_sqrt;
    return std::max(value, 0.0);
}

double proxy_clip(const std::vector<std::vector<double>>& generated, const std::vector<std::vector<double>>& references) {
    if (generated.empty() || references.empty()) throw InputError("proxy_clip needs non-empty sets");
    double total = 0.0;
    for (const auto& g : generated)
        for (const auto& r : references) {
            double gr = 0.0, gg = 0.0, rr = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i) {
                gr += g[i] * r[i];
                gg += g[i] * g[i];
                rr += r[i] * r[i];
            }
            total += (gg > 0.0 && rr > 0.0) ? gr / std::sqrt(gg * rr) : 0.0;
        }
    return total / static_cast<double>(generated.size() * references.size());
}

double linear_probe_accuracy(const std::vector<std::vector<double>>& class_a,
                             const std::vector<std::vector<double>>& class_b, double train_fraction) {
    if (class_a.size() < 2 || class_b.size() < 2) throw InputError("linear probe needs at least 2 samples per class");
    const std::size_t d = class_a[0].size();
    const auto split_a = std::max<std::size_t>(1, static_cast<std::size_t>(class_a.size() * train_fraction));
    const auto split_b = std::max<std::size_t>(1, static_cast<std::size_t>(class_b.size() * train_fraction));

    // Standardize with training statistics.
    std::vector<double> mu(d, 0.0), sd(d, 0.0);
    std::size_t n = 0;
    auto acc = [&](const std::vector<std::vector<double>>& set, std::size_t end) {
        for (std::size_t i = 0; i < end; ++i, ++n)
            for (std::size_t j = 0; j < d; ++j) mu[j] += set[i][j];
    };
    acc(class_a, split_a);
    acc(class_b, split_b);
    for (double& m : mu) m /= static_cast<double>(n);
    auto accv = [&](const std::vector<std::vector<double>>& set, std::size_t end) {
        for (std::size_t i = 0; i < end; ++i)
            for (std::size_t j = 0; j < d; ++j) sd[j] += (set[i][j] - mu[j]) * (set[i][j] - mu[j]);
    };
    accv(class_a, split_a);
    accv(class_b, split_b);
    for (double& s : sd) s = std::sqrt(s / static_cast<double>(n)) + 1e-8;

    std::vector<double> w(d, 0.0);
    double b = 0.0;
    Rng rng(0x9e0be);
    for (double& x : w) x = 0.01 * rng.normal();
    auto score = [&](const std::vector<double>& x) {
        double s = b;
        for (std::size_t j = 0; j < d; ++j) s += w[j] * (x[j] - mu[j]) / sd[j];
        return s;
    };
    for (int epoch = 0; epoch < 500; ++epoch) {
        std::vector<double> gw(d, 0.0);
        double gb = 0.0;
        auto grad = [&](const std::vector<std::vector<double>>& set, std::size_t end, double label) {
            for (std::size_t i = 0; i < end; ++i) {
                const double p = 1.0 / (1.0 + std::exp(-score(set[i])));
                const double e = p - label;
                for (std::size_t j = 0; j < d; ++j) gw[j] += e * (set[i][j] - mu[j]) / sd[j];
                gb += e;
            }
        };
        grad(class_a, split_a, 1.0);
        grad(class_b, split_b, 0.0);
        for (std::size_t j = 0; j < d; ++j) w[j] -= 0.1 * (gw[j] / static_cast<double>(n) + 1e-3 * w[j]);
        b -= 0.1 * gb / static_cast<double>(n);
    }
    std::size_t correct = 0, total = 0;
    for (std::size_t i = split_a; i < class_a.size(); ++i, ++total) correct += score(class_a[i]) > 0.0 ? 1 : 0;
    for (std::size_t i = split_b; i < class_b.size(); ++i, ++total) correct += score(class_b[i]) <= 0.0 ? 1 : 0;
    if (total == 0) throw InputError("linear probe has no held-out samples");
    return static_cast<double>(correct) / static_cast<double>(total);
}

Tensor contact_sheet(const std::vector<std::vector<Tensor>>& rows) {
    if (rows.empty() || rows[0].empty()) throw InputError("contact sheet needs at least one image");
    const int s = rows[0][0].dim(1);
    const int border = 2;
    std::size_t cols = 0;
    for (const auto& r : rows) cols = std::max(cols, r.size());
    const int h = static_cast<int>(rows.size()) * (s + border) + border;
    const int w = static_cast<int>(cols) * (s + border) + border;
    Tensor sheet({3, h, w}, 1.0);
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows[r].size(); ++c) {
            const Tensor& img = rows[r][c];
            const int oy = border + static_cast<int>(r) * (s + border);
            const int ox = border + static_cast<int>(c) * (s + border);
            for (int ch = 0; ch < 3; ++ch)
                for (int y = 0; y < s; ++y)
                    for (int x = 0; x < s; ++x)
                        sheet[static_cast<std::size_t>((ch * h + oy + y) * w + ox + x)] =
                            img[static_cast<std::size_t>((ch * s + y) * s + x)];
        }
    return sheet;
}

}  // namespace museum
