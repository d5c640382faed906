#include "sketret/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "sketret/rng.hpp"

namespace sketret {

Tensor embed_set(const ModelParams& params, const DimensionSpec& dims,
                 const std::vector<SampleRecord>& samples, std::uint64_t /*noise_seed*/) {
    Tensor out = Tensor::matrix(samples.size(), dims.latent_dim);
    if (samples.empty()) return out;

    // One batched pass per modality; rows keep the input order.
    for (Modality modality : {Modality::image, Modality::sketch}) {
        std::vector<std::size_t> rows;
        for (std::size_t i = 0; i < samples.size(); ++i)
            if (samples[i].modality == modality) rows.push_back(i);
        if (rows.empty()) continue;

        Tensor maps = Tensor::matrix(rows.size(), dims.map_size());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const Tensor& map = samples[rows[r]].feature_map;
            if (map.size() != dims.map_size())
                throw std::invalid_argument("embed_set: sample map does not match dims");
            for (std::size_t c = 0; c < dims.map_size(); ++c) maps(r, c) = map[c];
        }

        ad::Graph g;
        ParamBinding p(g, params, false);
        ad::Var att = attention_apply(g, p, dims, modality,
                                      backbone_forward(g, p, dims, modality, g.leaf(maps)));
        GaussianVar latent = latent_head(g, p, dims, modality, att,
                                         Tensor::matrix(rows.size(), dims.latent_dim));
        const Tensor& means = latent.mean->value;
        for (std::size_t r = 0; r < rows.size(); ++r)
            for (std::size_t c = 0; c < dims.latent_dim; ++c)
                out(rows[r], c) = means(r, c);
    }
    return out;
}

Tensor embed_samples(const ModelParams& params, const DimensionSpec& dims,
                     const std::vector<SampleRecord>& samples, std::size_t draws,
                     std::uint64_t seed) {
    Tensor out = Tensor::matrix(samples.size() * draws, dims.latent_dim);
    for (Modality modality : {Modality::image, Modality::sketch}) {
        std::vector<std::size_t> rows;
        for (std::size_t i = 0; i < samples.size(); ++i)
            if (samples[i].modality == modality) rows.push_back(i);
        if (rows.empty()) continue;

        Tensor maps = Tensor::matrix(rows.size(), dims.map_size());
        for (std::size_t r = 0; r < rows.size(); ++r)
            for (std::size_t c = 0; c < dims.map_size(); ++c)
                maps(r, c) = samples[rows[r]].feature_map[c];

        for (std::size_t d = 0; d < draws; ++d) {
            ad::Graph g;
            ParamBinding p(g, params, false);
            ad::Var att =
                attention_apply(g, p, dims, modality,
                                backbone_forward(g, p, dims, modality, g.leaf(maps)));
            GaussianVar latent = latent_head(
                g, p, dims, modality, att,
                draw_noise(rows.size(), dims.latent_dim,
                           derive_seed(seed, "draw", d, modality == Modality::image)));
            const Tensor& sampled = latent.sample->value;
            for (std::size_t r = 0; r < rows.size(); ++r)
                for (std::size_t c = 0; c < dims.latent_dim; ++c)
                    out(rows[r] * draws + d, c) = sampled(r, c);
        }
    }
    return out;
}

std::vector<std::size_t> rank(const Tensor& query_row, const Tensor& gallery_matrix) {
    const std::size_t n = gallery_matrix.rows(), d = gallery_matrix.cols();
    if (n == 0) throw std::invalid_argument("rank: empty gallery");
    if (query_row.size() != d) throw std::invalid_argument("rank: dimension mismatch");

    std::vector<double> dist(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            const double diff = query_row[c] - gallery_matrix(i, c);
            s += diff * diff;
        }
        dist[i] = s;
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
    return order;
}

double precision_at_k(const std::vector<char>& ranked_relevance, std::size_t k) {
    if (k == 0) throw std::invalid_argument("precision_at_k: k must be positive");
    const std::size_t upto = std::min(k, ranked_relevance.size());
    std::size_t hits = 0;
    for (std::size_t i = 0; i < upto; ++i) hits += ranked_relevance[i] ? 1 : 0;
    return double(hits) / double(k);
}

double average_precision(const std::vector<char>& ranked_relevance,
                         std::optional<std::size_t> cutoff) {
    std::size_t total_relevant = 0;
    for (char r : ranked_relevance) total_relevant += r ? 1 : 0;
    if (total_relevant == 0)
        throw std::runtime_error("average_precision: no relevant item in gallery");

    const std::size_t upto =
        cutoff ? std::min(*cutoff, ranked_relevance.size()) : ranked_relevance.size();
    std::size_t hits = 0;
    double sum = 0.0;
    for (std::size_t i = 0; i < upto; ++i) {
        if (!ranked_relevance[i]) continue;
        ++hits;
        sum += double(hits) / double(i + 1);
    }
    const std::size_t denom = cutoff ? std::min(total_relevant, *cutoff) : total_relevant;
    return sum / double(denom);
}

HubnessStats hubness_stats(const std::vector<QueryRanking>& rankings, std::size_t k,
                           std::size_t gallery_size) {
    if (k == 0 || k > gallery_size)
        throw std::invalid_argument("hubness_stats: k out of range");
    HubnessStats stats;
    stats.k = k;
    std::vector<std::size_t> counts(gallery_size, 0);
    for (const QueryRanking& r : rankings) {
        const std::size_t upto = std::min(k, r.gallery_order.size());
        for (std::size_t i = 0; i < upto; ++i) ++counts[r.gallery_order[i]];
    }
    for (std::size_t i = 0; i < gallery_size; ++i)
        if (counts[i] > 0) stats.n_k[i] = counts[i];

    // Skewness of the N_k distribution over all gallery items.
    const double n = double(gallery_size);
    double mean = 0.0;
    for (std::size_t c : counts) mean += double(c);
    mean /= n;
    double m2 = 0.0, m3 = 0.0;
    for (std::size_t c : counts) {
        const double d = double(c) - mean;
        m2 += d * d;
        m3 += d * d * d;
    }
    m2 /= n;
    m3 /= n;
    stats.skewness = m2 == 0.0 ? 0.0 : m3 / std::pow(m2, 1.5);

    std::vector<std::pair<std::size_t, std::size_t>> hubs(stats.n_k.begin(), stats.n_k.end());
    std::stable_sort(hubs.begin(), hubs.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (hubs.size() > kTopHubs) hubs.resize(kTopHubs);
    stats.top_hubs = std::move(hubs);
    return stats;
}

EvalResult evaluate(const ModelParams& params, const DimensionSpec& dims,
                    const DatasetBundle& bundle, EvalMode mode, std::size_t hubness_k) {
    EvalResult result;
    result.report.mode = mode;

    for (std::size_t i = 0; i < bundle.sketches.size(); ++i)
        if (bundle.split.is_unseen(bundle.sketches[i].class_id))
            result.query_sketches.push_back(i);
    for (std::size_t i = 0; i < bundle.images.size(); ++i) {
        const bool unseen = bundle.split.is_unseen(bundle.images[i].class_id);
        if (mode == EvalMode::GZS || unseen) result.gallery_images.push_back(i);
    }
    if (result.query_sketches.empty()) throw std::runtime_error("evaluate: no queries");
    if (result.gallery_images.empty()) throw std::runtime_error("evaluate: empty gallery");

    std::vector<SampleRecord> queries, gallery;
    for (std::size_t i : result.query_sketches) queries.push_back(bundle.sketches[i]);
    for (std::size_t i : result.gallery_images) gallery.push_back(bundle.images[i]);

    const Tensor query_emb = embed_set(params, dims, queries);
    const Tensor gallery_emb = embed_set(params, dims, gallery);

    struct ClassAccum {
        double ap = 0.0, ap200 = 0.0, p100 = 0.0, p200 = 0.0;
        std::size_t count = 0;
    };
    std::map<std::size_t, ClassAccum> per_class;

    for (std::size_t q = 0; q < queries.size(); ++q) {
        Tensor row = Tensor::vector(dims.latent_dim);
        for (std::size_t c = 0; c < dims.latent_dim; ++c) row[c] = query_emb(q, c);

        QueryRanking ranking;
        ranking.query = q;
        ranking.gallery_order = rank(row, gallery_emb);
        ranking.relevance.resize(ranking.gallery_order.size());
        for (std::size_t i = 0; i < ranking.gallery_order.size(); ++i)
            ranking.relevance[i] =
                gallery[ranking.gallery_order[i]].class_id == queries[q].class_id ? 1 : 0;

        ClassAccum& acc = per_class[queries[q].class_id];
        acc.ap += average_precision(ranking.relevance);
        acc.ap200 += average_precision(ranking.relevance, 200);
        acc.p100 += precision_at_k(ranking.relevance, 100);
        acc.p200 += precision_at_k(ranking.relevance, 200);
        ++acc.count;
        result.rankings.push_back(std::move(ranking));
    }

    MetricsReport& rep = result.report;
    for (const auto& [cls, acc] : per_class) {
        const double n = double(acc.count);
        rep.per_class_ap[cls] = acc.ap / n;
        rep.map_all += acc.ap / n;
        rep.map_at_200 += acc.ap200 / n;
        rep.p_at_100 += acc.p100 / n;
        rep.p_at_200 += acc.p200 / n;
    }
    const double classes = double(per_class.size());
    rep.map_all /= classes;
    rep.map_at_200 /= classes;
    rep.p_at_100 /= classes;
    rep.p_at_200 /= classes;

    rep.hubness = hubness_stats(result.rankings, hubness_k, gallery.size());
    return result;
}

std::string metrics_to_json(const MetricsReport& report, const std::string& config_hash,
                            std::uint64_t seed) {
    nlohmann::json j;
    j["config_hash"] = config_hash;
    j["seed"] = seed;
    j["mode"] = report.mode == EvalMode::ZS ? "zs" : "gzs";
    j["map_all"] = report.map_all;
    j["map_at_200"] = report.map_at_200;
    j["p_at_100"] = report.p_at_100;
    j["p_at_200"] = report.p_at_200;
    nlohmann::json per_class = nlohmann::json::object();
    for (const auto& [cls, ap] : report.per_class_ap)
        per_class[std::to_string(cls)] = ap;
    j["per_class_ap"] = per_class;
    nlohmann::json n_k = nlohmann::json::object();
    for (const auto& [idx, count] : report.hubness.n_k) n_k[std::to_string(idx)] = count;
    nlohmann::json hubs = nlohmann::json::array();
    for (const auto& [idx, count] : report.hubness.top_hubs)
        hubs.push_back({{"index", idx}, {"count", count}});
    j["hubness"] = {{"k", report.hubness.k},
                    {"n_k", n_k},
                    {"skewness", report.hubness.skewness},
                    {"top_hubs", hubs}};
    return j.dump(2) + "\n";
}

}  // namespace sketret
