#include "sketret/theory.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

#include "sketret/eval.hpp"
#include "sketret/rng.hpp"

namespace sketret {

namespace {

struct Probe {
    std::vector<double> weights;  // last entry is the bias
};

}  // namespace

double estimate_divergence(const Tensor& samples_a, const Tensor& samples_b,
                           std::uint64_t seed) {
    const std::size_t na = samples_a.rows(), nb = samples_b.rows();
    const std::size_t d = samples_a.cols();
    if (samples_b.cols() != d)
        throw std::invalid_argument("estimate_divergence: dimension mismatch");
    if (na < 20 || nb < 20)
        throw std::invalid_argument("estimate_divergence: need >= 20 samples per side");

    // Stratified 70/30 split so the held-out set stays label-balanced.
    auto split = [&](std::size_t n, std::uint64_t sub) {
        std::vector<std::size_t> order(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        Rng rng(derive_seed(seed, "split", sub));
        rng.shuffle(order);
        const std::size_t train = (n * 7) / 10;
        return std::pair{std::vector<std::size_t>(order.begin(), order.begin() + train),
                         std::vector<std::size_t>(order.begin() + train, order.end())};
    };
    auto [train_a, test_a] = split(na, 0);
    auto [train_b, test_b] = split(nb, 1);

    // Feature standardization from the training portion keeps gradient
    // descent well-conditioned without affecting the held-out error notion.
    std::vector<double> mean(d, 0.0), scale(d, 0.0);
    const double train_total = double(train_a.size() + train_b.size());
    for (std::size_t c = 0; c < d; ++c) {
        for (std::size_t r : train_a) mean[c] += samples_a(r, c);
        for (std::size_t r : train_b) mean[c] += samples_b(r, c);
        mean[c] /= train_total;
        for (std::size_t r : train_a) {
            const double v = samples_a(r, c) - mean[c];
            scale[c] += v * v;
        }
        for (std::size_t r : train_b) {
            const double v = samples_b(r, c) - mean[c];
            scale[c] += v * v;
        }
        scale[c] = std::sqrt(scale[c] / train_total);
        if (scale[c] == 0.0) scale[c] = 1.0;
    }
    auto feature = [&](const Tensor& x, std::size_t row, std::size_t c) {
        return (x(row, c) - mean[c]) / scale[c];
    };

    // Logistic regression, label 1 for side a; full-batch GD, small ridge.
    Probe probe;
    probe.weights.assign(d + 1, 0.0);
    const double lr = 0.5, ridge = 1e-3;
    const int iterations = 300;
    std::vector<double> grad(d + 1);
    for (int it = 0; it < iterations; ++it) {
        std::fill(grad.begin(), grad.end(), 0.0);
        auto accumulate = [&](const Tensor& x, const std::vector<std::size_t>& idx,
                              double label) {
            for (std::size_t r : idx) {
                double z = probe.weights[d];
                for (std::size_t c = 0; c < d; ++c)
                    z += probe.weights[c] * feature(x, r, c);
                const double p = 1.0 / (1.0 + std::exp(-z));
                const double err = p - label;
                for (std::size_t c = 0; c < d; ++c) grad[c] += err * feature(x, r, c);
                grad[d] += err;
            }
        };
        accumulate(samples_a, train_a, 1.0);
        accumulate(samples_b, train_b, 0.0);
        for (std::size_t c = 0; c <= d; ++c) {
            grad[c] = grad[c] / train_total + ridge * probe.weights[c];
            probe.weights[c] -= lr * grad[c];
        }
    }

    std::size_t errors = 0, total = 0;
    auto score = [&](const Tensor& x, const std::vector<std::size_t>& idx, bool is_a) {
        for (std::size_t r : idx) {
            double z = probe.weights[d];
            for (std::size_t c = 0; c < d; ++c) z += probe.weights[c] * feature(x, r, c);
            const bool predicted_a = z >= 0.0;
            if (predicted_a != is_a) ++errors;
            ++total;
        }
    };
    score(samples_a, test_a, true);
    score(samples_b, test_b, false);

    const double eps = double(errors) / double(total);
    return std::max(0.0, 2.0 * (1.0 - 2.0 * eps));
}

BoundReport bound_report(const ModelParams& params, const DimensionSpec& dims,
                         const DatasetBundle& bundle, std::uint64_t seed) {
    const auto& seen = bundle.split.seen_classes;
    if (seen.size() < 2)
        throw std::invalid_argument("bound_report: need at least 2 seen classes");

    // The clouds are draws from the per-sample latent Gaussians so they
    // reflect the distributions the losses act on, not just their means.
    constexpr std::size_t kDraws = 8;
    const Tensor sketch_emb = embed_samples(params, dims, bundle.sketches, kDraws,
                                            derive_seed(seed, "sketch_draws"));
    const Tensor image_emb = embed_samples(params, dims, bundle.images, kDraws,
                                           derive_seed(seed, "image_draws"));

    auto gather = [&](const Tensor& emb, const std::vector<std::size_t>& rows) {
        Tensor out = Tensor::matrix(rows.size() * kDraws, dims.latent_dim);
        for (std::size_t r = 0; r < rows.size(); ++r)
            for (std::size_t d = 0; d < kDraws; ++d)
                for (std::size_t c = 0; c < dims.latent_dim; ++c)
                    out(r * kDraws + d, c) = emb(rows[r] * kDraws + d, c);
        return out;
    };

    BoundReport report;
    std::size_t classes_used = 0;
    for (std::size_t ci = 0; ci < seen.size(); ++ci) {
        const std::size_t cls = seen[ci];
        const std::vector<std::size_t> anchor_rows = bundle.sketch_indices_of_class(cls);
        const std::vector<std::size_t> same_rows = bundle.image_indices_of_class(cls);

        std::vector<std::size_t> other_rows;
        for (std::size_t i = 0; i < bundle.images.size(); ++i) {
            const std::size_t c = bundle.images[i].class_id;
            if (c != cls && bundle.split.is_seen(c)) other_rows.push_back(i);
        }
        // Subsample the pooled other-class images to the same-class count so
        // the probe sees balanced clouds.
        Rng rng(derive_seed(seed, "subsample", cls));
        rng.shuffle(other_rows);
        if (other_rows.size() > same_rows.size()) other_rows.resize(same_rows.size());

        const Tensor anchors = gather(sketch_emb, anchor_rows);
        const Tensor same = gather(image_emb, same_rows);
        const Tensor other = gather(image_emb, other_rows);

        Rng unit_rng(derive_seed(seed, "unit", cls));
        const Tensor unit_p = unit_rng.normal_tensor({same.rows(), dims.latent_dim});
        const Tensor unit_n = unit_rng.normal_tensor({other.rows(), dims.latent_dim});

        report.d_alpha_p += estimate_divergence(anchors, same, derive_seed(seed, "ap", cls));
        report.d_alpha_n += estimate_divergence(anchors, other, derive_seed(seed, "an", cls));
        report.d_p_unit += estimate_divergence(same, unit_p, derive_seed(seed, "pu", cls));
        report.d_n_unit += estimate_divergence(other, unit_n, derive_seed(seed, "nu", cls));
        ++classes_used;
    }

    report.d_alpha_p /= double(classes_used);
    report.d_alpha_n /= double(classes_used);
    report.d_p_unit /= double(classes_used);
    report.d_n_unit /= double(classes_used);
    report.ordering_holds = report.d_alpha_p <= report.d_alpha_n;
    report.rhs_eq10 = report.d_p_unit - report.d_n_unit;
    return report;
}

std::string bound_report_to_json(const BoundReport& report, const std::string& config_hash,
                                 std::uint64_t seed) {
    nlohmann::json j;
    j["config_hash"] = config_hash;
    j["seed"] = seed;
    j["d_alpha_p"] = report.d_alpha_p;
    j["d_alpha_n"] = report.d_alpha_n;
    j["d_p_unit"] = report.d_p_unit;
    j["d_n_unit"] = report.d_n_unit;
    j["ordering_holds"] = report.ordering_holds;
    j["rhs_eq10"] = report.rhs_eq10;
    return j.dump(2) + "\n";
}

}  // namespace sketret
