#include "museum/losses.hpp"

#include "museum/errors.hpp"

namespace museum {

void HyperParams::validate() const {
    if (!(tau > 0.0)) throw ConfigError("temperature tau must be positive");
    if (lambda1 < 0.0 || lambda2 < 0.0 || alpha < 0.0 || beta < 0.0) {
        throw ConfigError("loss weights must be non-negative");
    }
}

double softmax_kl(const Tensor& p_logits, const Tensor& q_logits, double tau) {
    return ag::softmax_kl(ag::constant(p_logits), ag::constant(q_logits), tau).item();
}

ag::Var l_sd(const std::vector<ag::Var>& eps_true, const std::vector<ag::Var>& eps_pred) {
    if (eps_true.empty() || eps_true.size() != eps_pred.size()) throw InputError("l_sd: batch sizes differ or are empty");
    ag::Var total;
    for (std::size_t i = 0; i < eps_true.size(); ++i) {
        if (eps_true[i].shape() != eps_pred[i].shape()) throw InputError("l_sd: shape mismatch in batch item");
        ag::Var mse = ag::mean(ag::square(ag::sub(eps_true[i], eps_pred[i])));
        total = total.defined() ? ag::add(total, mse) : mse;
    }
    return ag::scale(total, 1.0 / static_cast<double>(eps_true.size()));
}

double l_sd(const std::vector<Tensor>& eps_true, const std::vector<Tensor>& eps_pred) {
    std::vector<ag::Var> a, b;
    for (const auto& t : eps_true) a.push_back(ag::constant(t));
    for (const auto& t : eps_pred) b.push_back(ag::constant(t));
    return l_sd(a, b).item();
}

Tensor mean_latent(const std::vector<Tensor>& latents) {
    if (latents.empty()) throw InputError("mean_latent: empty latent list");
    Tensor out(latents[0].shape);
    for (const auto& z : latents) {
        if (z.shape != out.shape) throw InputError("mean_latent: latents have different shapes");
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += z[i];
    }
    const double n = static_cast<double>(latents.size());
    for (double& v : out.data) v /= n;
    return out;
}

ag::Var l_sdl(const std::vector<ag::Var>& pred_single, const std::vector<ag::Var>& pred_mean, double tau) {
    if (pred_single.empty() || pred_single.size() != pred_mean.size()) {
        throw InputError("l_sdl: batch sizes differ or are empty");
    }
    ag::Var total;
    for (std::size_t i = 0; i < pred_single.size(); ++i) {
        ag::Var kl = ag::softmax_kl(pred_single[i], pred_mean[i], tau);
        total = total.defined() ? ag::add(total, kl) : kl;
    }
    return ag::scale(total, 1.0 / static_cast<double>(pred_single.size()));
}

double l_sdl_literal(const std::vector<Tensor>& latents, const Tensor& mean, double tau) {
    if (latents.empty()) throw InputError("l_sdl_literal: empty batch");
    double s = 0.0;
    for (const auto& z : latents) s += softmax_kl(z, mean, tau);
    return s / static_cast<double>(latents.size());
}

ag::Var l_w(const LoraState& prev, const LoraState& cur) {
    if (!prev.structure_matches(cur)) throw InputError("l_w: LoRA states have different structure");
    const std::size_t n = cur.layer_count();
    ag::Var total;
    for (std::size_t l = 0; l < n; ++l) {
        const ag::Var p = ag::constant(delta_weight(prev, l));
        const ag::Var c = delta_weight_var(cur, l);
        ag::Var term = ag::add_scalar(ag::scale(cosine_similarity(p, c), -1.0), 1.0);
        total = total.defined() ? ag::add(total, term) : term;
    }
    return ag::scale(total, 1.0 / static_cast<double>(n));
}

ag::Var l_f(const std::vector<std::vector<ag::Var>>& past_preds, const std::vector<std::vector<ag::Var>>& cur_preds,
            double tau) {
    if (past_preds.size() != cur_preds.size()) throw InputError("l_f: past and current task groups differ");
    if (past_preds.empty()) return ag::constant(Tensor::scalar(0.0));
    ag::Var total;
    for (std::size_t j = 0; j < past_preds.size(); ++j) {
        const auto& past = past_preds[j];
        const auto& cur = cur_preds[j];
        if (past.empty() || past.size() != cur.size()) throw InputError("l_f: batch sizes differ or are empty");
        ag::Var group;
        for (std::size_t i = 0; i < past.size(); ++i) {
            ag::Var kl = ag::softmax_kl(ag::constant(past[i].value()), cur[i], tau);
            group = group.defined() ? ag::add(group, kl) : kl;
        }
        group = ag::scale(group, 1.0 / static_cast<double>(past.size()));
        total = total.defined() ? ag::add(total, group) : group;
    }
    return ag::scale(total, 1.0 / static_cast<double>(past_preds.size()));
}

double l_dr(double lw, double lf, const HyperParams& h) { return h.lambda1 * lw + h.lambda2 * lf; }

ag::Var l_dr(const ag::Var& lw, const ag::Var& lf, const HyperParams& h) {
    return ag::add(ag::scale(lw, h.lambda1), ag::scale(lf, h.lambda2));
}

double l_overall_step(double l_sd, double l_sdl, double l_dr, const HyperParams& h) {
    return l_sd + h.alpha * l_sdl + h.beta * l_dr;
}

ag::Var l_overall_step(const ag::Var& l_sd, const ag::Var& l_sdl, const ag::Var& l_dr, const HyperParams& h) {
    return ag::add(l_sd, ag::add(ag::scale(l_sdl, h.alpha), ag::scale(l_dr, h.beta)));
}

}  // namespace museum
