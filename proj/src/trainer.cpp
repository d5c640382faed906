#include "sketret/trainer.hpp"

#include <cmath>
#include <stdexcept>

#include "sketret/io.hpp"
#include "sketret/rng.hpp"

namespace sketret {

void TrainConfig::validate() const {
    if (triplets_per_epoch == 0 || batch_size == 0)
        throw std::invalid_argument("TrainConfig: counts must be positive");
    if (!(learning_rate > 0.0))
        throw std::invalid_argument("TrainConfig: learning_rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0))
        throw std::invalid_argument("TrainConfig: momentum must be in [0, 1)");
    if (loss_config.beta < 0.0 || loss_config.lambda < 0.0 || loss_config.mu < 0.0)
        throw std::invalid_argument("TrainConfig: loss weights/margins must be >= 0");
}

bool operator==(const TrainConfig& a, const TrainConfig& b) {
    return a.epochs == b.epochs && a.triplets_per_epoch == b.triplets_per_epoch &&
           a.batch_size == b.batch_size && a.learning_rate == b.learning_rate &&
           a.momentum == b.momentum && a.seed == b.seed && a.gamma_mode == b.gamma_mode &&
           a.loss_config.beta == b.loss_config.beta &&
           a.loss_config.lambda == b.loss_config.lambda &&
           a.loss_config.mu == b.loss_config.mu &&
           a.loss_config.t_pos == b.loss_config.t_pos &&
           a.loss_config.t_neg == b.loss_config.t_neg &&
           a.loss_config.enable_global_adversarial ==
               b.loss_config.enable_global_adversarial &&
           a.terms == b.terms && a.dims.grid == b.dims.grid &&
           a.dims.channels == b.dims.channels &&
           a.dims.semantic_dim == b.dims.semantic_dim &&
           a.dims.latent_dim == b.dims.latent_dim &&
           a.dims.codec_dim == b.dims.codec_dim &&
           a.dims.seen_classes == b.dims.seen_classes &&
           a.dims.semantic_hidden == b.dims.semantic_hidden &&
           a.dims.fusion_hidden == b.dims.fusion_hidden &&
           a.dims.attention_enabled == b.dims.attention_enabled &&
           a.dims.gcn_enabled == b.dims.gcn_enabled;
}

DimensionSpec dims_for(const DatasetBundle& bundle, const TrainConfig& config) {
    DimensionSpec dims = config.dims;
    if (bundle.images.empty())
        throw std::invalid_argument("dims_for: bundle has no images");
    const auto& shape = bundle.images.front().feature_map.shape();
    if (shape.size() != 3)
        throw std::invalid_argument("dims_for: feature maps must be rank 3");
    dims.grid = shape[0];
    dims.channels = shape[2];
    dims.semantic_dim = bundle.prototypes.dim();
    dims.seen_classes = bundle.split.seen_classes.size();
    return dims;
}

namespace {

Tensor gather_maps(const std::vector<SampleRecord>& records,
                   std::span<const Triplet> batch, std::size_t Triplet::*field,
                   std::size_t map_size) {
    Tensor out = Tensor::matrix(batch.size(), map_size);
    for (std::size_t r = 0; r < batch.size(); ++r) {
        const Tensor& map = records[batch[r].*field].feature_map;
        for (std::size_t c = 0; c < map_size; ++c) out(r, c) = map[c];
    }
    return out;
}

SemanticGraph seen_class_graph(const DatasetBundle& bundle, GammaMode mode) {
    const auto& seen = bundle.split.seen_classes;
    Tensor prototypes = Tensor::matrix(seen.size(), bundle.prototypes.dim());
    for (std::size_t i = 0; i < seen.size(); ++i)
        for (std::size_t c = 0; c < bundle.prototypes.dim(); ++c)
            prototypes(i, c) = bundle.prototypes.vectors(seen[i], c);
    return build_adjacency(prototypes, mode);
}

struct Momentum {
    std::map<std::string, Tensor> velocity;

    void step(ModelParams& params, const std::map<std::string, Tensor>& grads,
              double learning_rate, double momentum, double sign) {
        for (const auto& [name, grad] : grads) {
            Tensor& theta = params.at(name);
            auto [it, inserted] = velocity.try_emplace(name, Tensor(theta.shape()));
            Tensor& v = it->second;
            for (std::size_t i = 0; i < theta.size(); ++i) {
                v[i] = momentum * v[i] + sign * learning_rate * grad[i];
                theta[i] += v[i];
            }
        }
    }
};

void check_finite(const std::map<std::string, ad::Var>& term_vars) {
    for (const auto& [name, var] : term_vars)
        if (!std::isfinite(var->value[0]))
            throw std::runtime_error("train: loss term '" + name +
                                     "' became non-finite; aborting");
}

EpochLosses measure_epoch(const DatasetBundle& bundle, const SemanticGraph& graph,
                          const DimensionSpec& dims, const ModelParams& params,
                          const TrainConfig& config, std::span<const Triplet> audit,
                          std::uint64_t noise_seed) {
    ad::Graph g;
    ParamBinding p(g, params, false);
    BatchLoss loss = compose_batch_loss(g, p, dims, bundle, graph, audit,
                                        config.loss_config, config.terms, noise_seed);
    EpochLosses out;
    out.total = loss.total->value[0];
    for (const auto& [name, var] : loss.term_vars) out.terms[name] = var->value[0];
    return out;
}

}  // namespace

BatchLoss compose_batch_loss(ad::Graph& g, ParamBinding& p, const DimensionSpec& dims,
                             const DatasetBundle& bundle, const SemanticGraph& graph,
                             std::span<const Triplet> batch, const LossConfig& loss_cfg,
                             const LossTerms& mask, std::uint64_t noise_seed) {
    const std::size_t B = batch.size();
    const std::size_t F = dims.map_size();

    ad::Var maps_a = g.leaf(gather_maps(bundle.sketches, batch, &Triplet::anchor, F));
    ad::Var maps_p = g.leaf(gather_maps(bundle.images, batch, &Triplet::positive, F));
    ad::Var maps_n = g.leaf(gather_maps(bundle.images, batch, &Triplet::negative, F));

    ad::Var att_a = attention_apply(g, p, dims, Modality::sketch,
                                    backbone_forward(g, p, dims, Modality::sketch, maps_a));
    ad::Var att_p = attention_apply(g, p, dims, Modality::image,
                                    backbone_forward(g, p, dims, Modality::image, maps_p));
    ad::Var att_n = attention_apply(g, p, dims, Modality::image,
                                    backbone_forward(g, p, dims, Modality::image, maps_n));

    const bool needs_latents = mask.tskl || mask.triplet || mask.classification ||
                               mask.reconstruction || mask.semantic || mask.global_adv;

    GaussianVar lat_a, lat_p, lat_n;
    if (needs_latents) {
        lat_a = latent_head(g, p, dims, Modality::sketch, att_a,
                            draw_noise(B, dims.latent_dim, derive_seed(noise_seed, "a")));
        lat_p = latent_head(g, p, dims, Modality::image, att_p,
                            draw_noise(B, dims.latent_dim, derive_seed(noise_seed, "p")));
        lat_n = latent_head(g, p, dims, Modality::image, att_n,
                            draw_noise(B, dims.latent_dim, derive_seed(noise_seed, "n")));
    }

    BatchLoss out;
    auto enable = [&](const char* name, const ad::Var& batch_rows) {
        ad::Var term = ad::mean(g, batch_rows);
        out.term_vars[name] = term;
        out.total = out.total ? ad::add(g, out.total, term) : term;
    };

    if (mask.tskl)
        enable("tskl", rows::tskl_triplet(g, lat_a, lat_p, lat_n, loss_cfg));
    if (mask.triplet)
        enable("triplet",
               rows::instance_triplet(g, lat_a.sample, lat_p.sample, lat_n.sample,
                                      loss_cfg.mu));
    if (mask.classification) {
        std::vector<std::size_t> labels(B);
        std::vector<std::size_t> neg_labels(B);
        for (std::size_t r = 0; r < B; ++r) {
            labels[r] = bundle.split.seen_index(batch[r].positive_prototype);
            neg_labels[r] =
                bundle.split.seen_index(bundle.images[batch[r].negative].class_id);
        }
        ad::Var ce = ad::add(
            g, ad::softmax_cross_entropy(g, classify(g, p, lat_a.sample), labels),
            ad::softmax_cross_entropy(g, classify(g, p, lat_p.sample), labels));
        ce = ad::add(g, ce,
                     ad::softmax_cross_entropy(g, classify(g, p, lat_n.sample), neg_labels));
        enable("classification", ce);
    }
    if (mask.local_adv) {
        ad::Var l_sketch = local_domain_classify(g, p, spatial_average_pool(g, dims, att_a));
        ad::Var l_image = local_domain_classify(g, p, spatial_average_pool(g, dims, att_p));
        enable("local_adv", rows::local_adversarial(g, l_sketch, l_image));
    }
    if (mask.reconstruction) {
        CodecVar v_p = codec_forward(g, p, dims, CodecKind::V_p, att_p,
                                     draw_noise(B, dims.codec_dim,
                                                derive_seed(noise_seed, "codec_p")));
        CodecVar v_a = codec_forward(g, p, dims, CodecKind::V_alpha, att_a,
                                     draw_noise(B, dims.codec_dim,
                                                derive_seed(noise_seed, "codec_a")));
        ad::Var rec1 = ad::add(
            g, ad::row_sum(g, ad::square(g, ad::sub(g, v_p.reconstruction, lat_a.sample))),
            rows::unit_gaussian_kl(g, v_p.encoding));
        ad::Var rec2 = ad::add(
            g, ad::row_sum(g, ad::square(g, ad::sub(g, v_a.reconstruction, lat_p.sample))),
            rows::unit_gaussian_kl(g, v_a.encoding));
        enable("reconstruction", ad::add(g, rec1, rec2));
    }
    if (mask.semantic) {
        ad::Var projected = semantic_project(g, p, dims, graph);
        std::vector<std::size_t> rows_idx(B);
        for (std::size_t r = 0; r < B; ++r)
            rows_idx[r] = bundle.split.seen_index(batch[r].positive_prototype);
        ad::Var g_wplus = ad::gather_rows(g, projected, std::move(rows_idx));
        enable("semantic", rows::semantic_loss(g, lat_a.sample, lat_p.sample,
                                               lat_n.sample, g_wplus, loss_cfg));
    }
    if (mask.global_adv) {
        ad::Var f_a = global_domain_classify(g, p, lat_a.sample);
        ad::Var f_p = global_domain_classify(g, p, lat_p.sample);
        ad::Var f_n = global_domain_classify(g, p, lat_n.sample);
        ad::Var term = ad::add(
            g, ad::log(g, ad::add_scalar(g, ad::neg(g, f_a), 1.0)),
            ad::add(g, ad::log(g, f_p), ad::log(g, f_n)));
        enable("global_adv", term);
    }

    if (!out.total) out.total = g.scalar(0.0);
    return out;
}

Checkpoint train(const DatasetBundle& bundle, const TrainConfig& config) {
    config.validate();
    if (bundle.split.seen_classes.size() < 2)
        throw std::invalid_argument("train: bundle needs at least 2 seen classes");

    const DimensionSpec dims = dims_for(bundle, config);
    const SemanticGraph graph = seen_class_graph(bundle, config.gamma_mode);

    Checkpoint ckpt;
    ckpt.params = init_params(dims, derive_seed(config.seed, "init"));
    ckpt.train_config = config;
    ckpt.train_config.dims = dims;

    LossTerms adversarial_mask;
    adversarial_mask = LossTerms{};
    adversarial_mask.tskl = adversarial_mask.triplet = adversarial_mask.classification =
        adversarial_mask.reconstruction = adversarial_mask.semantic = false;
    adversarial_mask.local_adv = config.terms.local_adv;
    adversarial_mask.global_adv = config.terms.global_adv;
    const bool has_discriminator = adversarial_mask.local_adv || adversarial_mask.global_adv;

    const std::size_t audit_count = std::min(config.batch_size, config.triplets_per_epoch);
    const std::vector<Triplet> audit =
        mine_triplets(bundle, audit_count, derive_seed(config.seed, "audit"));
    const std::uint64_t audit_noise = derive_seed(config.seed, "audit_noise");

    Momentum feature_momentum, discriminator_momentum;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const std::vector<Triplet> triplets = mine_triplets(
            bundle, config.triplets_per_epoch, derive_seed(config.seed, "mine", epoch));

        for (std::size_t start = 0, b = 0; start < triplets.size();
             start += config.batch_size, ++b) {
            const std::size_t len = std::min(config.batch_size, triplets.size() - start);
            std::span<const Triplet> batch(triplets.data() + start, len);

            if (has_discriminator) {
                ad::Graph g;
                ParamBinding p(g, ckpt.params, true);
                BatchLoss loss = compose_batch_loss(
                    g, p, dims, bundle, graph, batch, config.loss_config,
                    adversarial_mask, derive_seed(config.seed, "noise_d", epoch, b));
                check_finite(loss.term_vars);
                g.backward(loss.total);
                std::map<std::string, Tensor> grads;
                for (auto& [name, grad] : p.gradients())
                    if (is_discriminator_param(name)) grads.emplace(name, std::move(grad));
                discriminator_momentum.step(ckpt.params, grads, config.learning_rate,
                                            config.momentum, +1.0);
            }
            {
                ad::Graph g;
                ParamBinding p(g, ckpt.params, true);
                BatchLoss loss = compose_batch_loss(
                    g, p, dims, bundle, graph, batch, config.loss_config, config.terms,
                    derive_seed(config.seed, "noise_f", epoch, b));
                check_finite(loss.term_vars);
                g.backward(loss.total);
                std::map<std::string, Tensor> grads;
                for (auto& [name, grad] : p.gradients())
                    if (!is_discriminator_param(name)) grads.emplace(name, std::move(grad));
                feature_momentum.step(ckpt.params, grads, config.learning_rate,
                                      config.momentum, -1.0);
            }
        }

        ckpt.loss_history.push_back(
            measure_epoch(bundle, graph, dims, ckpt.params, config, audit, audit_noise));
        ++ckpt.epoch;
    }
    return ckpt;
}

double finite_difference_audit(const DatasetBundle& bundle, const TrainConfig& config,
                               std::size_t probes) {
    config.validate();
    const DimensionSpec dims = dims_for(bundle, config);
    const SemanticGraph graph = seen_class_graph(bundle, config.gamma_mode);
    ModelParams params = init_params(dims, derive_seed(config.seed, "init"));

    const std::vector<Triplet> batch =
        mine_triplets(bundle, std::min<std::size_t>(8, config.batch_size),
                      derive_seed(config.seed, "fd_batch"));
    const std::uint64_t noise = derive_seed(config.seed, "fd_noise");

    auto loss_value = [&](const ModelParams& theta) {
        ad::Graph g;
        ParamBinding p(g, theta, false);
        return compose_batch_loss(g, p, dims, bundle, graph, batch, config.loss_config,
                                  config.terms, noise)
            .total->value[0];
    };

    std::map<std::string, Tensor> analytic;
    {
        ad::Graph g;
        ParamBinding p(g, params, true);
        BatchLoss loss = compose_batch_loss(g, p, dims, bundle, graph, batch,
                                            config.loss_config, config.terms, noise);
        g.backward(loss.total);
        analytic = p.gradients();
    }

    std::vector<std::pair<std::string, std::size_t>> pool;
    for (const auto& [name, grad] : analytic)
        for (std::size_t i = 0; i < grad.size(); ++i) pool.emplace_back(name, i);

    Rng rng(derive_seed(config.seed, "fd_probes"));
    const double h = 1e-5;
    double max_rel = 0.0;
    for (std::size_t probe = 0; probe < probes; ++probe) {
        const auto& [name, idx] = pool[rng.index(pool.size())];
        const double saved = params.at(name)[idx];
        params.at(name)[idx] = saved + h;
        const double up = loss_value(params);
        params.at(name)[idx] = saved - h;
        const double down = loss_value(params);
        params.at(name)[idx] = saved;
        const double fd = (up - down) / (2.0 * h);
        const double an = analytic.at(name)[idx];
        const double rel = std::fabs(an - fd) / std::max({std::fabs(an), std::fabs(fd), 1e-6});
        max_rel = std::max(max_rel, rel);
    }
    return max_rel;
}

// --- checkpoint encoding on top of the tensor container ---

namespace {

Tensor vec1(double v) { return Tensor({std::size_t{1}}, {v}); }

std::map<std::string, Tensor> encode_meta(const Checkpoint& ckpt) {
    const TrainConfig& c = ckpt.train_config;
    std::map<std::string, Tensor> meta;
    meta["__meta/epoch"] = vec1(double(ckpt.epoch));
    meta["__meta/train/epochs"] = vec1(double(c.epochs));
    meta["__meta/train/triplets_per_epoch"] = vec1(double(c.triplets_per_epoch));
    meta["__meta/train/batch_size"] = vec1(double(c.batch_size));
    meta["__meta/train/learning_rate"] = vec1(c.learning_rate);
    meta["__meta/train/momentum"] = vec1(c.momentum);
    meta["__meta/train/seed"] = vec1(double(c.seed));
    meta["__meta/train/gamma_mode"] = vec1(c.gamma_mode == GammaMode::similarity ? 1.0 : 0.0);
    meta["__meta/loss/beta"] = vec1(c.loss_config.beta);
    meta["__meta/loss/lambda"] = vec1(c.loss_config.lambda);
    meta["__meta/loss/mu"] = vec1(c.loss_config.mu);
    meta["__meta/loss/t_pos"] = vec1(c.loss_config.t_pos);
    meta["__meta/loss/t_neg"] = vec1(c.loss_config.t_neg);
    meta["__meta/loss/global_adversarial"] =
        vec1(c.loss_config.enable_global_adversarial ? 1.0 : 0.0);
    meta["__meta/terms"] =
        Tensor({std::size_t{7}},
               {double(c.terms.tskl), double(c.terms.triplet),
                double(c.terms.classification), double(c.terms.local_adv),
                double(c.terms.reconstruction), double(c.terms.semantic),
                double(c.terms.global_adv)});
    meta["__meta/dims"] = Tensor(
        {std::size_t{10}},
        {double(c.dims.grid), double(c.dims.channels), double(c.dims.semantic_dim),
         double(c.dims.latent_dim), double(c.dims.codec_dim), double(c.dims.seen_classes),
         double(c.dims.semantic_hidden), double(c.dims.fusion_hidden),
         double(c.dims.attention_enabled ? 1.0 : 0.0),
         double(c.dims.gcn_enabled ? 1.0 : 0.0)});

    Tensor history = Tensor::matrix(ckpt.loss_history.size(), kLossTermNames.size() + 1);
    for (std::size_t e = 0; e < ckpt.loss_history.size(); ++e) {
        const EpochLosses& el = ckpt.loss_history[e];
        for (std::size_t t = 0; t < kLossTermNames.size(); ++t) {
            auto it = el.terms.find(kLossTermNames[t]);
            history(e, t) = it == el.terms.end() ? 0.0 : it->second;
        }
        history(e, kLossTermNames.size()) = el.total;
    }
    meta["__meta/history"] = std::move(history);
    // Enabled-term mask for the history columns (disabled slots read as 0).
    Tensor enabled({kLossTermNames.size()});
    if (!ckpt.loss_history.empty())
        for (std::size_t t = 0; t < kLossTermNames.size(); ++t)
            enabled[t] = ckpt.loss_history.front().terms.count(kLossTermNames[t]) ? 1.0 : 0.0;
    meta["__meta/history_terms"] = std::move(enabled);
    return meta;
}

double meta_scalar(const std::map<std::string, Tensor>& meta, const std::string& key) {
    auto it = meta.find(key);
    if (it == meta.end())
        throw std::runtime_error("checkpoint: missing metadata entry " + key);
    return it->second[0];
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::map<std::string, Tensor> entries = encode_meta(ckpt);
    for (const auto& [name, tensor] : ckpt.params.tensors()) entries.emplace(name, tensor);
    write_tensor_container(path, entries);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::map<std::string, Tensor> entries = read_tensor_container(path);

    Checkpoint ckpt;
    std::map<std::string, Tensor> meta;
    for (auto& [name, tensor] : entries) {
        if (name.rfind("__meta/", 0) == 0)
            meta.emplace(name, std::move(tensor));
        else
            ckpt.params.add(name, std::move(tensor));
    }

    ckpt.epoch = std::size_t(meta_scalar(meta, "__meta/epoch"));
    TrainConfig& c = ckpt.train_config;
    c.epochs = std::size_t(meta_scalar(meta, "__meta/train/epochs"));
    c.triplets_per_epoch = std::size_t(meta_scalar(meta, "__meta/train/triplets_per_epoch"));
    c.batch_size = std::size_t(meta_scalar(meta, "__meta/train/batch_size"));
    c.learning_rate = meta_scalar(meta, "__meta/train/learning_rate");
    c.momentum = meta_scalar(meta, "__meta/train/momentum");
    c.seed = std::uint64_t(meta_scalar(meta, "__meta/train/seed"));
    c.gamma_mode = meta_scalar(meta, "__meta/train/gamma_mode") != 0.0
                       ? GammaMode::similarity
                       : GammaMode::dissimilarity;
    c.loss_config.beta = meta_scalar(meta, "__meta/loss/beta");
    c.loss_config.lambda = meta_scalar(meta, "__meta/loss/lambda");
    c.loss_config.mu = meta_scalar(meta, "__meta/loss/mu");
    c.loss_config.t_pos = meta_scalar(meta, "__meta/loss/t_pos");
    c.loss_config.t_neg = meta_scalar(meta, "__meta/loss/t_neg");
    c.loss_config.enable_global_adversarial =
        meta_scalar(meta, "__meta/loss/global_adversarial") != 0.0;

    const Tensor& terms = meta.at("__meta/terms");
    c.terms.tskl = terms[0] != 0.0;
    c.terms.triplet = terms[1] != 0.0;
    c.terms.classification = terms[2] != 0.0;
    c.terms.local_adv = terms[3] != 0.0;
    c.terms.reconstruction = terms[4] != 0.0;
    c.terms.semantic = terms[5] != 0.0;
    c.terms.global_adv = terms[6] != 0.0;

    const Tensor& dims = meta.at("__meta/dims");
    c.dims.grid = std::size_t(dims[0]);
    c.dims.channels = std::size_t(dims[1]);
    c.dims.semantic_dim = std::size_t(dims[2]);
    c.dims.latent_dim = std::size_t(dims[3]);
    c.dims.codec_dim = std::size_t(dims[4]);
    c.dims.seen_classes = std::size_t(dims[5]);
    c.dims.semantic_hidden = std::size_t(dims[6]);
    c.dims.fusion_hidden = std::size_t(dims[7]);
    c.dims.attention_enabled = dims[8] != 0.0;
    c.dims.gcn_enabled = dims[9] != 0.0;

    const Tensor& history = meta.at("__meta/history");
    const Tensor& enabled = meta.at("__meta/history_terms");
    for (std::size_t e = 0; e < history.rows(); ++e) {
        EpochLosses el;
        for (std::size_t t = 0; t < kLossTermNames.size(); ++t)
            if (enabled[t] != 0.0) el.terms[kLossTermNames[t]] = history(e, t);
        el.total = history(e, kLossTermNames.size());
        ckpt.loss_history.push_back(std::move(el));
    }
    return ckpt;
}

}  // namespace sketret
