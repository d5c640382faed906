#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sketret/autodiff.hpp"
#include "sketret/data.hpp"
#include "sketret/tensor.hpp"

namespace sketret {

// Fixed architecture shapes. The structural ablation switches (attention
// gate, GCN branch) live here because they change which parameters the
// forward pass touches.
struct DimensionSpec {
    std::size_t grid = 7;
    std::size_t channels = 8;
    std::size_t semantic_dim = 16;
    std::size_t latent_dim = 32;
    std::size_t codec_dim = 16;
    std::size_t seen_classes = 6;
    std::size_t semantic_hidden = 24;  // g1 / g2 output width
    std::size_t fusion_hidden = 32;    // g3 hidden width
    bool attention_enabled = true;
    bool gcn_enabled = true;

    std::size_t map_size() const { return grid * grid * channels; }
};

// Named trainable tensors. Iteration order is the sorted name order, which
// keeps updates and checkpoints deterministic.
class ModelParams {
public:
    void add(std::string name, Tensor value);
    bool has(const std::string& name) const;
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    std::map<std::string, Tensor>& tensors() { return tensors_; }
    const std::map<std::string, Tensor>& tensors() const { return tensors_; }
    std::size_t count() const { return tensors_.size(); }

private:
    std::map<std::string, Tensor> tensors_;
};

bool operator==(const ModelParams& a, const ModelParams& b);

// Glorot-uniform weights, zero biases; each tensor gets its own seed stream
// derived from (seed, name).
ModelParams init_params(const DimensionSpec& dims, std::uint64_t seed);

// True for parameters updated by the discriminator ascent step (the local
// domain classifier, and the global one when enabled).
bool is_discriminator_param(const std::string& name);

struct GaussianLatent {
    Tensor mean;
    Tensor log_var;
    Tensor sample;
};

constexpr double kLogVarClamp = 8.0;
constexpr double kProbClip = 1e-6;

// --- graph-mode forward passes (batched; one flattened sample per row) ---

struct GaussianVar {
    ad::Var mean;
    ad::Var log_var;
    ad::Var sample;
};

struct CodecVar {
    ad::Var reconstruction;
    GaussianVar encoding;
};

enum class CodecKind { V_p, V_alpha };

// Binds ModelParams tensors into a graph as (optionally trainable) leaves.
class ParamBinding {
public:
    ParamBinding(ad::Graph& graph, const ModelParams& params, bool trainable)
        : graph_(graph), params_(params), trainable_(trainable) {}

    ad::Var operator()(const std::string& name);

    // Gradients of every bound parameter, valid after Graph::backward.
    std::map<std::string, Tensor> gradients() const;

private:
    ad::Graph& graph_;
    const ModelParams& params_;
    bool trainable_;
    std::map<std::string, ad::Var> leaves_;
};

ad::Var backbone_forward(ad::Graph& g, ParamBinding& p, const DimensionSpec& dims,
                         Modality modality, const ad::Var& maps);
ad::Var attention_apply(ad::Graph& g, ParamBinding& p, const DimensionSpec& dims,
                        Modality modality, const ad::Var& maps);
ad::Var spatial_average_pool(ad::Graph& g, const DimensionSpec& dims, const ad::Var& maps);
GaussianVar latent_head(ad::Graph& g, ParamBinding& p, const DimensionSpec& dims,
                        Modality modality, const ad::Var& attended, const Tensor& noise);
ad::Var classify(ad::Graph& g, ParamBinding& p, const ad::Var& latents);
ad::Var local_domain_classify(ad::Graph& g, ParamBinding& p, const ad::Var& pooled);
ad::Var global_domain_classify(ad::Graph& g, ParamBinding& p, const ad::Var& latents);
CodecVar codec_forward(ad::Graph& g, ParamBinding& p, const DimensionSpec& dims,
                       CodecKind which, const ad::Var& attended, const Tensor& noise);

// Draws the reparameterization noise for a batch; dimension is latent_dim or
// codec_dim depending on the consumer.
Tensor draw_noise(std::size_t rows, std::size_t dim, std::uint64_t seed);

// --- value-level single-sample wrappers ---

Tensor backbone_forward(const ModelParams& params, const DimensionSpec& dims,
                        const SampleRecord& sample);
Tensor attention_apply(const ModelParams& params, const DimensionSpec& dims,
                       Modality modality, const Tensor& map);
Tensor spatial_average_pool(const DimensionSpec& dims, const Tensor& map);
GaussianLatent latent_head(const ModelParams& params, const DimensionSpec& dims,
                           Modality modality, const Tensor& attended,
                           std::uint64_t noise_seed);
Tensor classify(const ModelParams& params, const Tensor& latent_sample);
double local_domain_classify(const ModelParams& params, const Tensor& pooled);

struct CodecResult {
    Tensor reconstruction;
    GaussianLatent encoding;
};

CodecResult codec_forward(const ModelParams& params, const DimensionSpec& dims,
                          CodecKind which, const Tensor& attended,
                          std::uint64_t noise_seed);

}  // namespace sketret
