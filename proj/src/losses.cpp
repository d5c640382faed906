#include "sketret/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace sketret {

bool operator==(const LossTerms& a, const LossTerms& b) {
    return a.tskl == b.tskl && a.triplet == b.triplet &&
           a.classification == b.classification && a.local_adv == b.local_adv &&
           a.reconstruction == b.reconstruction && a.semantic == b.semantic &&
           a.global_adv == b.global_adv;
}

double gaussian_kl(const GaussianLatent& p, const GaussianLatent& q) {
    if (p.mean.size() != q.mean.size())
        throw std::invalid_argument("gaussian_kl: dimension mismatch");
    double kl = 0.0;
    for (std::size_t d = 0; d < p.mean.size(); ++d) {
        const double lvp = p.log_var[d], lvq = q.log_var[d];
        const double dm = p.mean[d] - q.mean[d];
        kl += 0.5 * (lvq - lvp) + (std::exp(lvp) + dm * dm) / (2.0 * std::exp(lvq)) - 0.5;
    }
    return kl;
}

double symmetric_kl(const GaussianLatent& p, const GaussianLatent& q) {
    return 0.5 * (gaussian_kl(p, q) + gaussian_kl(q, p));
}

double tskl_triplet(const GaussianLatent& p_alpha, const GaussianLatent& p_pos,
                    const GaussianLatent& p_neg, const LossConfig& cfg) {
    const double gap =
        symmetric_kl(p_alpha, p_pos) - symmetric_kl(p_alpha, p_neg) + cfg.lambda;
    return cfg.beta * std::max(0.0, gap);
}

double instance_triplet(const Tensor& z_alpha, const Tensor& z_pos, const Tensor& z_neg,
                        double mu) {
    const double d_pos = std::sqrt(squared_distance(z_alpha, z_pos));
    const double d_neg = std::sqrt(squared_distance(z_alpha, z_neg));
    return std::max(0.0, mu + d_pos - d_neg);
}

double classification_ce(const Tensor& logits, std::size_t label) {
    if (label >= logits.size())
        throw std::invalid_argument("classification_ce: label out of range");
    double mx = logits[0];
    for (std::size_t i = 1; i < logits.size(); ++i) mx = std::max(mx, logits[i]);
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) z += std::exp(logits[i] - mx);
    return mx + std::log(z) - logits[label];
}

double local_adversarial(double l_sketch, double l_image) {
    return 0.5 * std::log(1.0 - l_sketch) + 0.5 * std::log(l_image);
}

double unit_gaussian_kl(const GaussianLatent& enc) {
    double kl = 0.0;
    for (std::size_t d = 0; d < enc.mean.size(); ++d) {
        const double lv = enc.log_var[d];
        kl += 0.5 * (std::exp(lv) + enc.mean[d] * enc.mean[d] - 1.0 - lv);
    }
    return kl;
}

double crossmodal_recon(const Tensor& recon_p, const Tensor& target_psi_alpha,
                        const GaussianLatent& enc_p, const Tensor& recon_alpha,
                        const Tensor& target_phi_p, const GaussianLatent& enc_alpha) {
    const double rec1 = squared_distance(recon_p, target_psi_alpha) + unit_gaussian_kl(enc_p);
    const double rec2 =
        squared_distance(recon_alpha, target_phi_p) + unit_gaussian_kl(enc_alpha);
    return rec1 + rec2;
}

double cosine_margin(const Tensor& x, const Tensor& y, double t) {
    return 0.5 * (t - cosine_similarity(x, y));
}

double semantic_loss(const Tensor& z_psi_alpha, const Tensor& z_phi_p,
                     const Tensor& z_phi_n, const Tensor& g_wplus,
                     const LossConfig& cfg) {
    return cosine_margin(z_psi_alpha, g_wplus, cfg.t_pos) +
           cosine_margin(z_phi_p, g_wplus, cfg.t_pos) +
           cosine_margin(z_phi_n, g_wplus, cfg.t_neg);
}

TotalLoss total_loss(const LossComponents& c, const LossTerms& enabled) {
    TotalLoss out;
    auto take = [&](bool on, const char* name, double value) {
        if (!on) return;
        out.breakdown[name] = value;
        out.total += value;
    };
    take(enabled.tskl, "tskl", c.tskl);
    take(enabled.triplet, "triplet", c.triplet);
    take(enabled.classification, "classification", c.classification);
    take(enabled.local_adv, "local_adv", c.local_adv);
    take(enabled.reconstruction, "reconstruction", c.reconstruction);
    take(enabled.semantic, "semantic", c.semantic);
    take(enabled.global_adv, "global_adv", c.global_adv);
    return out;
}

namespace rows {

using ad::Var;

Var gaussian_kl(ad::Graph& g, const GaussianVar& p, const GaussianVar& q) {
    if (!p.mean->value.same_shape(q.mean->value))
        throw std::invalid_argument("gaussian_kl: dimension mismatch");
    Var half_logs = ad::mul_scalar(g, ad::sub(g, q.log_var, p.log_var), 0.5);
    Var dm = ad::sub(g, p.mean, q.mean);
    Var num = ad::add(g, ad::exp(g, p.log_var), ad::square(g, dm));
    Var ratio = ad::div(g, num, ad::mul_scalar(g, ad::exp(g, q.log_var), 2.0));
    Var per_dim = ad::add_scalar(g, ad::add(g, half_logs, ratio), -0.5);
    return ad::row_sum(g, per_dim);
}

Var symmetric_kl(ad::Graph& g, const GaussianVar& p, const GaussianVar& q) {
    return ad::mul_scalar(g, ad::add(g, gaussian_kl(g, p, q), gaussian_kl(g, q, p)), 0.5);
}

Var tskl_triplet(ad::Graph& g, const GaussianVar& p_alpha, const GaussianVar& p_pos,
                 const GaussianVar& p_neg, const LossConfig& cfg) {
    Var gap = ad::sub(g, symmetric_kl(g, p_alpha, p_pos), symmetric_kl(g, p_alpha, p_neg));
    return ad::mul_scalar(g, ad::relu(g, ad::add_scalar(g, gap, cfg.lambda)), cfg.beta);
}

Var euclidean(ad::Graph& g, const ad::Var& a, const ad::Var& b) {
    return ad::sqrt(g, ad::row_sum(g, ad::square(g, ad::sub(g, a, b))));
}

Var instance_triplet(ad::Graph& g, const ad::Var& z_alpha, const ad::Var& z_pos,
                     const ad::Var& z_neg, double mu) {
    Var gap = ad::sub(g, euclidean(g, z_alpha, z_pos), euclidean(g, z_alpha, z_neg));
    return ad::relu(g, ad::add_scalar(g, gap, mu));
}

Var local_adversarial(ad::Graph& g, const ad::Var& l_sketch, const ad::Var& l_image) {
    Var s = ad::log(g, ad::add_scalar(g, ad::neg(g, l_sketch), 1.0));
    Var i = ad::log(g, l_image);
    return ad::mul_scalar(g, ad::add(g, s, i), 0.5);
}

Var unit_gaussian_kl(ad::Graph& g, const GaussianVar& enc) {
    Var per_dim = ad::add_scalar(
        g,
        ad::sub(g, ad::add(g, ad::exp(g, enc.log_var), ad::square(g, enc.mean)),
                enc.log_var),
        -1.0);
    return ad::mul_scalar(g, ad::row_sum(g, per_dim), 0.5);
}

Var cosine(ad::Graph& g, const ad::Var& x, const ad::Var& y) {
    Var dots = ad::row_sum(g, ad::mul(g, x, y));
    Var nx = ad::sqrt(g, ad::row_sum(g, ad::square(g, x)));
    Var ny = ad::sqrt(g, ad::row_sum(g, ad::square(g, y)));
    return ad::div(g, dots, ad::mul(g, nx, ny));
}

Var cosine_margin(ad::Graph& g, const ad::Var& x, const ad::Var& y, double t) {
    return ad::mul_scalar(g, ad::add_scalar(g, ad::neg(g, cosine(g, x, y)), t), 0.5);
}

Var semantic_loss(ad::Graph& g, const ad::Var& z_alpha, const ad::Var& z_pos,
                  const ad::Var& z_neg, const ad::Var& g_wplus, const LossConfig& cfg) {
    Var a = cosine_margin(g, z_alpha, g_wplus, cfg.t_pos);
    Var p = cosine_margin(g, z_pos, g_wplus, cfg.t_pos);
    Var n = cosine_margin(g, z_neg, g_wplus, cfg.t_neg);
    return ad::add(g, ad::add(g, a, p), n);
}

}  // namespace rows

}  // namespace sketret
