#pragma once

#include "sketret/autodiff.hpp"
#include "sketret/data.hpp"
#include "sketret/model.hpp"
#include "sketret/tensor.hpp"

namespace sketret {

enum class GammaMode { dissimilarity, similarity };

struct SemanticGraph {
    Tensor prototypes;   // |C^s| x D_sem
    Tensor gamma;        // pairwise cosine dissimilarity, zero diagonal
    Tensor propagation;  // D^-1/2 (gamma + I) D^-1/2
};

// gamma[i][j] = 1 - cos(w_i, w_j); with GammaMode::similarity the edge
// weights become 1 - gamma/2 before self-loops and normalization.
SemanticGraph build_adjacency(const Tensor& prototypes,
                              GammaMode mode = GammaMode::dissimilarity);

enum class GcnActivation { linear, leaky_relu };

Tensor gcn_layer(const SemanticGraph& graph, const Tensor& features,
                 const Tensor& weights, GcnActivation activation = GcnActivation::leaky_relu);

constexpr double kLeakySlope = 0.1;

// g(W, gamma) = g3([g1(W), g2(gamma, W)]); rows are per-class latent
// embeddings. With dims.gcn_enabled == false the g2 contribution is zeroed.
ad::Var semantic_project(ad::Graph& g, ParamBinding& p, const DimensionSpec& dims,
                         const SemanticGraph& graph);

Tensor semantic_project(const ModelParams& params, const DimensionSpec& dims,
                        const SemanticGraph& graph);

// Pearson correlation between the strictly-upper-triangular entries of the
// two cosine-similarity matrices.
double topology_preservation_score(const Tensor& original, const Tensor& projected);

Tensor cosine_similarity_matrix(const Tensor& rows);

}  // namespace sketret
