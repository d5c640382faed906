#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "sketret/data.hpp"
#include "sketret/trainer.hpp"

namespace sketret {

// Invalid keys or values; the CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Flat typed key=value configuration. Unknown keys are hard errors so a
// typo in an ablation script cannot silently run the wrong experiment.
struct ExperimentConfig {
    GeneratorSpec generator;
    TrainConfig train;
    std::size_t hubness_k = 10;

    void set(const std::string& key, const std::string& value);
    // Every known key in sorted order, one "key=value" per line.
    std::string canonical() const;
    // FNV-1a 64-bit hash of canonical(), as 16 hex digits.
    std::string hash() const;
};

ExperimentConfig load_config_file(const std::string& path);

// Applies "key=value" override strings (the --set flag).
void apply_overrides(ExperimentConfig& config, const std::vector<std::string>& overrides);

std::string terms_to_string(const LossTerms& terms);
LossTerms terms_from_string(const std::string& csv);

}  // namespace sketret
