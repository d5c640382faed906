#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sketret/data.hpp"
#include "sketret/losses.hpp"
#include "sketret/model.hpp"
#include "sketret/semantic_graph.hpp"

namespace sketret {

struct TrainConfig {
    std::size_t epochs = 40;
    std::size_t triplets_per_epoch = 200;
    std::size_t batch_size = 32;
    double learning_rate = 1e-3;
    double momentum = 0.9;
    LossConfig loss_config;
    LossTerms terms;
    GammaMode gamma_mode = GammaMode::dissimilarity;
    DimensionSpec dims;  // grid/channels/semantic_dim/seen_classes overridden per bundle
    std::uint64_t seed = 1;

    void validate() const;
};

bool operator==(const TrainConfig& a, const TrainConfig& b);

inline constexpr std::array<const char*, 7> kLossTermNames = {
    "tskl", "triplet", "classification", "local_adv", "reconstruction",
    "semantic", "global_adv"};

struct EpochLosses {
    std::map<std::string, double> terms;  // enabled terms only
    double total = 0.0;
};

struct Checkpoint {
    ModelParams params;
    TrainConfig train_config;
    std::size_t epoch = 0;
    std::vector<EpochLosses> loss_history;
};

// Completes dims fields that are dictated by the data.
DimensionSpec dims_for(const DatasetBundle& bundle, const TrainConfig& config);

// Per-epoch audit losses are measured on a fixed probe batch with fixed
// noise so consecutive history entries are comparable.
Checkpoint train(const DatasetBundle& bundle, const TrainConfig& config);

// Max relative error between analytic gradients of the enabled total loss
// and central finite differences (step 1e-5) over randomly probed
// parameters.
double finite_difference_audit(const DatasetBundle& bundle, const TrainConfig& config,
                               std::size_t probes);

// Graph-mode batch loss over a triplet batch; `mask` selects the terms that
// enter the returned total (term_vars holds the per-term scalar nodes).
struct BatchLoss {
    ad::Var total;
    std::map<std::string, ad::Var> term_vars;
};

BatchLoss compose_batch_loss(ad::Graph& g, ParamBinding& p, const DimensionSpec& dims,
                             const DatasetBundle& bundle, const SemanticGraph& graph,
                             std::span<const Triplet> batch, const LossConfig& loss_cfg,
                             const LossTerms& mask, std::uint64_t noise_seed);

// Binary container: magic "BDAS", u16 version, u32 entry count; per entry a
// u16 name length, UTF-8 name, u8 rank, u32 dims, little-endian f64 data;
// trailing CRC32 over every preceding byte.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace sketret
