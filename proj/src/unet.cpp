#include "museum/unet.hpp"

#include <cmath>

#include "museum/errors.hpp"

namespace museum {

namespace {
const char* const kProj[4] = {"q", "k", "v", "o"};
}

UNet::UNet(const ModelConfig& cfg, Rng& rng)
    : latent_channels_(cfg.latent_channels),
      latent_size_(cfg.latent_size),
      c1_(cfg.base_channels),
      c2_(cfg.mid_channels),
      d_cond_(cfg.d_cond),
      time_dim_(cfg.time_dim) {
    if (latent_size_ % 2 != 0) throw ConfigError("latent size must be even for the two-resolution U-Net");
    time1_w_ = init_weight(rng, {time_dim_, time_dim_}, time_dim_);
    time1_b_ = init_zeros({time_dim_});
    time2_w_ = init_weight(rng, {time_dim_, time_dim_}, time_dim_);
    time2_b_ = init_zeros({time_dim_});
    conv_in_w_ = init_weight(rng, {c1_, latent_channels_, 3, 3}, latent_channels_ * 9);
    conv_in_b_ = init_zeros({c1_});
    res_.push_back(make_res(rng, c1_));
    xattn_.push_back(make_xattn(rng, c1_));
    down_w_ = init_weight(rng, {c2_, c1_, 3, 3}, c1_ * 9);
    down_b_ = init_zeros({c2_});
    res_.push_back(make_res(rng, c2_));
    xattn_.push_back(make_xattn(rng, c2_));
    res_.push_back(make_res(rng, c2_));
    xattn_.push_back(make_xattn(rng, c2_));
    up_w_ = init_weight(rng, {c1_, c1_ + c2_, 3, 3}, (c1_ + c2_) * 9);
    up_b_ = init_zeros({c1_});
    res_.push_back(make_res(rng, c1_));
    xattn_.push_back(make_xattn(rng, c1_));
    out_w_ = init_weight(rng, {latent_channels_, c1_, 3, 3}, c1_ * 9, 0.5);
    out_b_ = init_zeros({latent_channels_});
}

UNet::ResBlock UNet::make_res(Rng& rng, int ch) const {
    ResBlock rb;
    rb.conv1_w = init_weight(rng, {ch, ch, 3, 3}, ch * 9);
    rb.conv1_b = init_zeros({ch});
    rb.conv2_w = init_weight(rng, {ch, ch, 3, 3}, ch * 9, 0.5);
    rb.conv2_b = init_zeros({ch});
    rb.time_w = init_weight(rng, {ch, time_dim_}, time_dim_);
    rb.time_b = init_zeros({ch});
    return rb;
}

UNet::CrossAttention UNet::make_xattn(Rng& rng, int ch) const {
    CrossAttention xa;
    xa.dim = ch;
    xa.wq = init_weight(rng, {ch, ch}, ch);
    xa.wk = init_weight(rng, {ch, d_cond_}, d_cond_);
    xa.wv = init_weight(rng, {ch, d_cond_}, d_cond_);
    xa.wo = init_weight(rng, {ch, ch}, ch, 0.5);
    return xa;
}

ag::Var UNet::time_embedding(int t) const {
    Tensor e({time_dim_});
    const int half = time_dim_ / 2;
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * i / half);
        e[static_cast<std::size_t>(i)] = std::sin(t * freq);
        e[static_cast<std::size_t>(i + half)] = std::cos(t * freq);
    }
    ag::Var x = ag::reshape(ag::constant(std::move(e)), {1, time_dim_});
    x = ag::silu(ag::add_row(ag::matmul_nt(x, time1_w_), time1_b_));
    return ag::add_row(ag::matmul_nt(x, time2_w_), time2_b_);
}

ag::Var UNet::res_forward(const ResBlock& rb, const ag::Var& x, const ag::Var& temb) const {
    const int ch = x.shape()[0];
    ag::Var h = ag::conv2d(ag::silu(x), rb.conv1_w, rb.conv1_b, 1, 1);
    const ag::Var tproj = ag::reshape(ag::add_row(ag::matmul_nt(ag::silu(temb), rb.time_w), rb.time_b), {ch});
    h = ag::add_channel(h, tproj);
    h = ag::conv2d(ag::silu(h), rb.conv2_w, rb.conv2_b, 1, 1);
    return ag::add(x, h);
}

namespace {
ag::Var project(const ag::Var& x, const ag::Var& w, const LoraAdapter* ad, double s) {
    ag::Var y = ag::matmul_nt(x, w);
    if (ad) y = ag::add(y, ag::scale(ag::matmul_nt(ag::matmul(x, ad->b), ad->a), s));
    return y;
}
}  // namespace

ag::Var UNet::xattn_forward(int layer, const ag::Var& x, const ag::Var& cond, const LoraState* lora) const {
    const CrossAttention& xa = xattn_[static_cast<std::size_t>(layer)];
    const int h = x.shape()[1];
    const int w = x.shape()[2];
    auto adapter = [&](int p) -> const LoraAdapter* {
        if (!lora) return nullptr;
        return lora->find("xattn" + std::to_string(layer) + "." + kProj[p]);
    };
    const double s = lora ? lora->scale() : 0.0;
    const ag::Var tokens = ag::chw_to_tokens(x);
    const ag::Var q = project(tokens, xa.wq, adapter(0), s);
    const ag::Var k = project(cond, xa.wk, adapter(1), s);
    const ag::Var v = project(cond, xa.wv, adapter(2), s);
    const ag::Var attn = ag::softmax_rows(ag::scale(ag::matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(xa.dim))));
    const ag::Var out = project(ag::matmul(attn, v), xa.wo, adapter(3), s);
    return ag::add(x, ag::tokens_to_chw(out, h, w));
}

ag::Var UNet::forward(const ag::Var& z_t, int t, const Conditioning& cond, const LoraState* lora) const {
    if (static_cast<int>(cond.layers.size()) != cross_attention_layers()) {
        throw ConfigError("conditioning has " + std::to_string(cond.layers.size()) + " layers; the model has " +
                          std::to_string(cross_attention_layers()) + " cross-attention layers");
    }
    if (z_t.shape() != latent_shape()) {
        throw InputError("predict_noise: latent shape " + shape_str(z_t.shape()) + " != " + shape_str(latent_shape()));
    }
    const ag::Var temb = time_embedding(t);
    ag::Var h = ag::conv2d(z_t, conv_in_w_, conv_in_b_, 1, 1);
    h = res_forward(res_[0], h, temb);
    h = xattn_forward(0, h, cond.layers[0], lora);
    const ag::Var skip = h;
    ag::Var d = ag::conv2d(h, down_w_, down_b_, 2, 1);
    d = res_forward(res_[1], d, temb);
    d = xattn_forward(1, d, cond.layers[1], lora);
    d = res_forward(res_[2], d, temb);
    d = xattn_forward(2, d, cond.layers[2], lora);
    ag::Var u = ag::concat_channels(ag::upsample2x(d), skip);
    u = ag::conv2d(u, up_w_, up_b_, 1, 1);
    u = res_forward(res_[3], u, temb);
    u = xattn_forward(3, u, cond.layers[3], lora);
    return ag::conv2d(ag::silu(u), out_w_, out_b_, 1, 1);
}

std::vector<ProjectionSpec> UNet::adapted_projections() const {
    std::vector<ProjectionSpec> out;
    for (std::size_t l = 0; l < xattn_.size(); ++l) {
        const auto& xa = xattn_[l];
        const std::string base = "xattn" + std::to_string(l) + ".";
        out.push_back({base + "q", xa.dim, xa.dim});
        out.push_back({base + "k", xa.dim, d_cond_});
        out.push_back({base + "v", xa.dim, d_cond_});
        out.push_back({base + "o", xa.dim, xa.dim});
    }
    return out;
}

ParamList UNet::params() const {
    ParamList p{{"unet.time1.w", time1_w_}, {"unet.time1.b", time1_b_}, {"unet.time2.w", time2_w_},
                {"unet.time2.b", time2_b_}, {"unet.conv_in.w", conv_in_w_}, {"unet.conv_in.b", conv_in_b_},
                {"unet.down.w", down_w_},   {"unet.down.b", down_b_},   {"unet.up.w", up_w_},
                {"unet.up.b", up_b_},       {"unet.conv_out.w", out_w_}, {"unet.conv_out.b", out_b_}};
    for (std::size_t i = 0; i < res_.size(); ++i) {
        const std::string b = "unet.res" + std::to_string(i) + ".";
        const auto& r = res_[i];
        p.insert(p.end(), {{b + "conv1.w", r.conv1_w}, {b + "conv1.b", r.conv1_b}, {b + "conv2.w", r.conv2_w},
                           {b + "conv2.b", r.conv2_b}, {b + "time.w", r.time_w}, {b + "time.b", r.time_b}});
    }
    for (std::size_t i = 0; i < xattn_.size(); ++i) {
        const std::string b = "unet.xattn" + std::to_string(i) + ".";
        const auto& x = xattn_[i];
        p.insert(p.end(), {{b + "wq", x.wq}, {b + "wk", x.wk}, {b + "wv", x.wv}, {b + "wo", x.wo}});
    }
    return p;
}

}  // namespace museum
