#include "sketret/semantic_graph.hpp"

#include <cmath>
#include <stdexcept>

namespace sketret {

Tensor cosine_similarity_matrix(const Tensor& rows) {
    const std::size_t n = rows.rows(), d = rows.cols();
    std::vector<double> norms(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t c = 0; c < d; ++c) s += rows(i, c) * rows(i, c);
        norms[i] = std::sqrt(s);
        if (norms[i] == 0.0)
            throw std::invalid_argument("cosine_similarity_matrix: zero-norm row");
    }
    Tensor sim = Tensor::matrix(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t c = 0; c < d; ++c) s += rows(i, c) * rows(j, c);
            sim(i, j) = s / (norms[i] * norms[j]);
        }
    return sim;
}

SemanticGraph build_adjacency(const Tensor& prototypes, GammaMode mode) {
    const std::size_t n = prototypes.rows();
    Tensor sim = cosine_similarity_matrix(prototypes);

    SemanticGraph graph;
    graph.prototypes = prototypes;
    graph.gamma = Tensor::matrix(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            graph.gamma(i, j) = i == j ? 0.0 : 1.0 - sim(i, j);

    // Self-loops with weight 1, then symmetric degree normalization.
    Tensor adj = Tensor::matrix(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double w = graph.gamma(i, j);
            if (mode == GammaMode::similarity && i != j) w = 1.0 - w / 2.0;
            adj(i, j) = i == j ? 1.0 : w;
        }
    std::vector<double> inv_sqrt_deg(n);
    for (std::size_t i = 0; i < n; ++i) {
        double deg = 0.0;
        for (std::size_t j = 0; j < n; ++j) deg += adj(i, j);
        inv_sqrt_deg[i] = 1.0 / std::sqrt(deg);
    }
    graph.propagation = Tensor::matrix(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            graph.propagation(i, j) = inv_sqrt_deg[i] * adj(i, j) * inv_sqrt_deg[j];
    return graph;
}

Tensor gcn_layer(const SemanticGraph& graph, const Tensor& features,
                 const Tensor& weights, GcnActivation activation) {
    if (features.rows() != graph.propagation.rows())
        throw std::invalid_argument("gcn_layer: feature rows must equal class count");
    Tensor out = matmul(matmul(graph.propagation, features), weights);
    if (activation == GcnActivation::leaky_relu)
        for (std::size_t i = 0; i < out.size(); ++i)
            if (out[i] < 0.0) out[i] *= kLeakySlope;
    return out;
}

namespace {

ad::Var leaky(ad::Graph& g, const ad::Var& x) { return ad::leaky_relu(g, x, kLeakySlope); }

ad::Var dense(ad::Graph& g, ParamBinding& p, const std::string& prefix, const ad::Var& x) {
    return ad::add_rowvec(g, ad::matmul(g, x, p(prefix + "W")), p(prefix + "b"));
}

}  // namespace

ad::Var semantic_project(ad::Graph& g, ParamBinding& p, const DimensionSpec& dims,
                         const SemanticGraph& graph) {
    ad::Var w = g.leaf(graph.prototypes);

    ad::Var g1 = leaky(g, dense(g, p, "g1/1_", w));
    g1 = leaky(g, dense(g, p, "g1/2_", g1));
    g1 = leaky(g, dense(g, p, "g1/3_", g1));

    ad::Var g2;
    if (dims.gcn_enabled) {
        ad::Var prop = g.leaf(graph.propagation);
        g2 = leaky(g, dense(g, p, "g2/", ad::matmul(g, prop, w)));
    } else {
        g2 = g.leaf(Tensor::matrix(graph.prototypes.rows(), dims.semantic_hidden));
    }

    ad::Var fused = ad::concat_cols(g, g1, g2);
    ad::Var g3 = leaky(g, dense(g, p, "g3/1_", fused));
    g3 = leaky(g, dense(g, p, "g3/2_", g3));
    return dense(g, p, "g3/3_", g3);
}

Tensor semantic_project(const ModelParams& params, const DimensionSpec& dims,
                        const SemanticGraph& graph) {
    ad::Graph g;
    ParamBinding p(g, params, false);
    return semantic_project(g, p, dims, graph)->value;
}

double topology_preservation_score(const Tensor& original, const Tensor& projected) {
    const std::size_t n = original.rows();
    if (projected.rows() != n)
        throw std::invalid_argument("topology_preservation_score: row count mismatch");
    if (n < 3)
        throw std::invalid_argument("topology_preservation_score: need at least 3 rows");

    Tensor sim_a = cosine_similarity_matrix(original);
    Tensor sim_b = cosine_similarity_matrix(projected);
    std::vector<double> a, b;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            a.push_back(sim_a(i, j));
            b.push_back(sim_b(i, j));
        }
    const double m = double(a.size());
    double mean_a = 0.0, mean_b = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        mean_a += a[i];
        mean_b += b[i];
    }
    mean_a /= m;
    mean_b /= m;
    double cov = 0.0, var_a = 0.0, var_b = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        cov += (a[i] - mean_a) * (b[i] - mean_b);
        var_a += (a[i] - mean_a) * (a[i] - mean_a);
        var_b += (b[i] - mean_b) * (b[i] - mean_b);
    }
    if (var_a == 0.0 || var_b == 0.0)
        throw std::runtime_error(
            "topology_preservation_score: degenerate similarity structure");
    return cov / std::sqrt(var_a * var_b);
}

}  // namespace sketret
