#pragma once

#include <cstdint>
#include <string>

#include "sketret/data.hpp"
#include "sketret/model.hpp"

namespace sketret {

struct BoundReport {
    double d_alpha_p = 0.0;  // anchor-class sketches vs same-class images
    double d_alpha_n = 0.0;  // anchor-class sketches vs other-class images
    double d_p_unit = 0.0;   // same-class images vs unit-Gaussian draws
    double d_n_unit = 0.0;   // other-class images vs unit-Gaussian draws
    bool ordering_holds = false;  // d_alpha_p <= d_alpha_n
    double rhs_eq10 = 0.0;        // d_p_unit - d_n_unit
};

// Proxy A-distance: a held-out linear domain probe's error eps gives
// max{0, 2(1 - 2 eps)}. The probe is logistic regression trained by
// full-batch gradient descent on a stratified 70/30 split.
double estimate_divergence(const Tensor& samples_a, const Tensor& samples_b,
                           std::uint64_t seed);

// Latent clouds use the deterministic mean embeddings of the seen classes;
// the report only measures, assertions live in the callers.
BoundReport bound_report(const ModelParams& params, const DimensionSpec& dims,
                         const DatasetBundle& bundle, std::uint64_t seed);

std::string bound_report_to_json(const BoundReport& report, const std::string& config_hash,
                                 std::uint64_t seed);

}  // namespace sketret
