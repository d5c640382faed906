#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sketret/data.hpp"
#include "sketret/model.hpp"

namespace sketret {

enum class EvalMode { ZS, GZS };

struct HubnessStats {
    std::size_t k = 0;
    std::map<std::size_t, std::size_t> n_k;  // gallery index -> occurrence count
    double skewness = 0.0;
    std::vector<std::pair<std::size_t, std::size_t>> top_hubs;
};

struct QueryRanking {
    std::size_t query = 0;                  // index into the query list
    std::vector<std::size_t> gallery_order; // gallery indices, best first
    std::vector<char> relevance;            // class match per rank position
};

struct MetricsReport {
    EvalMode mode = EvalMode::ZS;
    double map_all = 0.0;
    double map_at_200 = 0.0;
    double p_at_100 = 0.0;
    double p_at_200 = 0.0;
    std::map<std::size_t, double> per_class_ap;
    HubnessStats hubness;
};

// Latent means of every sample, one row each; inference is deterministic so
// noise_seed is accepted for interface parity and ignored.
Tensor embed_set(const ModelParams& params, const DimensionSpec& dims,
                 const std::vector<SampleRecord>& samples, std::uint64_t noise_seed = 0);

// Reparameterized draws from every sample's latent Gaussian: `draws` rows
// per sample, grouped sample-major. Deterministic under seed.
Tensor embed_samples(const ModelParams& params, const DimensionSpec& dims,
                     const std::vector<SampleRecord>& samples, std::size_t draws,
                     std::uint64_t seed);

// Ascending Euclidean distance; ties broken by ascending gallery index.
std::vector<std::size_t> rank(const Tensor& query_row, const Tensor& gallery_matrix);

double precision_at_k(const std::vector<char>& ranked_relevance, std::size_t k);

// cutoff empty -> AP@all. Throws if no item is relevant.
double average_precision(const std::vector<char>& ranked_relevance,
                         std::optional<std::size_t> cutoff = std::nullopt);

constexpr std::size_t kHubnessK = 10;
constexpr std::size_t kTopHubs = 8;

HubnessStats hubness_stats(const std::vector<QueryRanking>& rankings, std::size_t k,
                           std::size_t gallery_size);

struct EvalResult {
    MetricsReport report;
    std::vector<QueryRanking> rankings;
    std::vector<std::size_t> query_sketches;  // bundle sketch indices
    std::vector<std::size_t> gallery_images;  // bundle image indices
};

// Queries are unseen-class sketches; the gallery holds unseen images (ZS) or
// all images (GZS). Metrics are macro-averaged over query classes.
EvalResult evaluate(const ModelParams& params, const DimensionSpec& dims,
                    const DatasetBundle& bundle, EvalMode mode,
                    std::size_t hubness_k = kHubnessK);

std::string metrics_to_json(const MetricsReport& report, const std::string& config_hash,
                            std::uint64_t seed);

}  // namespace sketret
