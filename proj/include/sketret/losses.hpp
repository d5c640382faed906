#pragma once

#include <map>
#include <string>

#include "sketret/autodiff.hpp"
#include "sketret/model.hpp"
#include "sketret/tensor.hpp"

namespace sketret {

struct LossConfig {
    double beta = 1e-4;    // SKL triplet weight
    double lambda = 0.1;   // SKL triplet margin
    double mu = 0.1;       // instance triplet margin
    double t_pos = 1.0;
    double t_neg = 0.0;
    bool enable_global_adversarial = false;
};

// Ablation switches; every term is a pure selector in the total.
struct LossTerms {
    bool tskl = true;
    bool triplet = true;
    bool classification = true;
    bool local_adv = true;
    bool reconstruction = true;
    bool semantic = true;
    bool global_adv = false;

    static LossTerms full() { return {}; }
    static LossTerms baseline() {
        LossTerms t;
        t.tskl = t.classification = t.local_adv = t.reconstruction = false;
        return t;
    }
};

bool operator==(const LossTerms& a, const LossTerms& b);

// --- closed-form scalar losses on value-level types ---

double gaussian_kl(const GaussianLatent& p, const GaussianLatent& q);
double symmetric_kl(const GaussianLatent& p, const GaussianLatent& q);
double tskl_triplet(const GaussianLatent& p_alpha, const GaussianLatent& p_pos,
                    const GaussianLatent& p_neg, const LossConfig& cfg);
double instance_triplet(const Tensor& z_alpha, const Tensor& z_pos, const Tensor& z_neg,
                        double mu);
double classification_ce(const Tensor& logits, std::size_t label);
double local_adversarial(double l_sketch, double l_image);
double unit_gaussian_kl(const GaussianLatent& enc);
double crossmodal_recon(const Tensor& recon_p, const Tensor& target_psi_alpha,
                        const GaussianLatent& enc_p, const Tensor& recon_alpha,
                        const Tensor& target_phi_p, const GaussianLatent& enc_alpha);
double cosine_margin(const Tensor& x, const Tensor& y, double t);
double semantic_loss(const Tensor& z_psi_alpha, const Tensor& z_phi_p,
                     const Tensor& z_phi_n, const Tensor& g_wplus,
                     const LossConfig& cfg);

struct LossComponents {
    double tskl = 0.0;
    double triplet = 0.0;
    double classification = 0.0;
    double local_adv = 0.0;
    double reconstruction = 0.0;
    double semantic = 0.0;
    double global_adv = 0.0;
};

struct TotalLoss {
    double total = 0.0;
    std::map<std::string, double> breakdown;  // enabled terms only
};

TotalLoss total_loss(const LossComponents& components, const LossTerms& enabled);

// --- graph-mode rowwise losses (one triplet per row) ---

namespace rows {

ad::Var gaussian_kl(ad::Graph& g, const GaussianVar& p, const GaussianVar& q);
ad::Var symmetric_kl(ad::Graph& g, const GaussianVar& p, const GaussianVar& q);
ad::Var tskl_triplet(ad::Graph& g, const GaussianVar& p_alpha, const GaussianVar& p_pos,
                     const GaussianVar& p_neg, const LossConfig& cfg);
ad::Var euclidean(ad::Graph& g, const ad::Var& a, const ad::Var& b);
ad::Var instance_triplet(ad::Graph& g, const ad::Var& z_alpha, const ad::Var& z_pos,
                         const ad::Var& z_neg, double mu);
ad::Var local_adversarial(ad::Graph& g, const ad::Var& l_sketch, const ad::Var& l_image);
ad::Var unit_gaussian_kl(ad::Graph& g, const GaussianVar& enc);
ad::Var cosine(ad::Graph& g, const ad::Var& x, const ad::Var& y);
ad::Var cosine_margin(ad::Graph& g, const ad::Var& x, const ad::Var& y, double t);
ad::Var semantic_loss(ad::Graph& g, const ad::Var& z_alpha, const ad::Var& z_pos,
                      const ad::Var& z_neg, const ad::Var& g_wplus, const LossConfig& cfg);

}  // namespace rows

}  // namespace sketret
