#include "sketret/model.hpp"

#include <cmath>
#include <stdexcept>

#include "sketret/rng.hpp"

namespace sketret {

void ModelParams::add(std::string name, Tensor value) {
    if (!tensors_.emplace(std::move(name), std::move(value)).second)
        throw std::invalid_argument("ModelParams::add: duplicate parameter name");
}

bool ModelParams::has(const std::string& name) const { return tensors_.count(name) != 0; }

Tensor& ModelParams::at(const std::string& name) {
    auto it = tensors_.find(name);
    if (it == tensors_.end())
        throw std::invalid_argument("ModelParams: unknown parameter '" + name + "'");
    return it->second;
}

const Tensor& ModelParams::at(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end())
        throw std::invalid_argument("ModelParams: unknown parameter '" + name + "'");
    return it->second;
}

bool operator==(const ModelParams& a, const ModelParams& b) {
    return a.tensors() == b.tensors();
}

namespace {

Tensor glorot(std::uint64_t seed, const std::string& name, std::size_t fan_in,
              std::size_t fan_out) {
    const double a = std::sqrt(6.0 / double(fan_in + fan_out));
    Rng rng(derive_seed(seed, name));
    return rng.uniform_tensor({fan_in, fan_out}, -a, a);
}

void add_dense(ModelParams& p, std::uint64_t seed, const std::string& prefix,
               std::size_t in, std::size_t out) {
    p.add(prefix + "W", glorot(seed, prefix + "W", in, out));
    p.add(prefix + "b", Tensor::vector(out));
}

}  // namespace

ModelParams init_params(const DimensionSpec& dims, std::uint64_t seed) {
    ModelParams p;
    const std::size_t F = dims.map_size();
    const std::size_t C = dims.channels;
    const std::size_t H = dims.semantic_hidden;
    const std::size_t Hf = dims.fusion_hidden;

    add_dense(p, seed, "image_backbone/", C, C);
    add_dense(p, seed, "sketch_backbone/", C, C);
    add_dense(p, seed, "image_attention/", C, C);
    add_dense(p, seed, "sketch_attention/", C, C);

    add_dense(p, seed, "image_head/mean_", F, dims.latent_dim);
    add_dense(p, seed, "image_head/logvar_", F, dims.latent_dim);
    add_dense(p, seed, "sketch_head/mean_", F, dims.latent_dim);
    add_dense(p, seed, "sketch_head/logvar_", F, dims.latent_dim);

    add_dense(p, seed, "classifier/", dims.latent_dim, dims.seen_classes);
    add_dense(p, seed, "local_domain/", dims.grid * dims.grid, 1);
    add_dense(p, seed, "global_domain/", dims.latent_dim, 1);

    add_dense(p, seed, "codec_p/enc_mean_", F, dims.codec_dim);
    add_dense(p, seed, "codec_p/enc_logvar_", F, dims.codec_dim);
    add_dense(p, seed, "codec_p/dec_", dims.codec_dim, dims.latent_dim);
    add_dense(p, seed, "codec_alpha/enc_mean_", F, dims.codec_dim);
    add_dense(p, seed, "codec_alpha/enc_logvar_", F, dims.codec_dim);
    add_dense(p, seed, "codec_alpha/dec_", dims.codec_dim, dims.latent_dim);

    add_dense(p, seed, "g1/1_", dims.semantic_dim, H);
    add_dense(p, seed, "g1/2_", H, H);
    add_dense(p, seed, "g1/3_", H, H);
    add_dense(p, seed, "g2/", dims.semantic_dim, H);
    add_dense(p, seed, "g3/1_", 2 * H, Hf);
    add_dense(p, seed, "g3/2_", Hf, Hf);
    add_dense(p, seed, "g3/3_", Hf, dims.latent_dim);
    return p;
}

bool is_discriminator_param(const std::string& name) {
    return name.rfind("local_domain/", 0) == 0 || name.rfind("global_domain/", 0) == 0;
}

ad::Var ParamBinding::operator()(const std::string& name) {
    auto it = leaves_.find(name);
    if (it != leaves_.end()) return it->second;
    const Tensor& t = params_.at(name);
    // Vectors enter the graph as 1 x n row vectors.
    Tensor v = t.rank() == 1 ? t.reshaped({std::size_t{1}, t.size()}) : t;
    ad::Var leaf = graph_.leaf(std::move(v), trainable_);
    leaves_.emplace(name, leaf);
    return leaf;
}

std::map<std::string, Tensor> ParamBinding::gradients() const {
    std::map<std::string, Tensor> out;
    for (const auto& [name, leaf] : leaves_) {
        const Tensor& shape_ref = params_.at(name);
        out.emplace(name, leaf->grad.reshaped(shape_ref.shape()));
    }
    return out;
}

namespace {

// Channel-mixing affine applied at every spatial position: rows of `maps`
// are flattened G*G*C grids.
ad::Var positionwise_affine(ad::Graph& g, ParamBinding& p, const DimensionSpec& dims,
                            const std::string& prefix, const ad::Var& maps) {
    const std::size_t rows = maps->value.rows();
    const std::size_t positions = rows * dims.grid * dims.grid;
    ad::Var x = ad::reshape(g, maps, positions, dims.channels);
    ad::Var z = ad::matmul(g, x, p(prefix + "W"));
    z = ad::add_rowvec(g, z, p(prefix + "b"));
    return ad::reshape(g, z, rows, dims.map_size());
}

ad::Var dense(ad::Graph& g, ParamBinding& p, const std::string& prefix, const ad::Var& x) {
    return ad::add_rowvec(g, ad::matmul(g, x, p(prefix + "W")), p(prefix + "b"));
}

GaussianVar gaussian_from_heads(ad::Graph& g, const ad::Var& mean, ad::Var log_var,
                                const Tensor& noise) {
    log_var = ad::clamp(g, log_var, -kLogVarClamp, kLogVarClamp);
    if (!noise.same_shape(mean->value))
        throw std::invalid_argument("gaussian_from_heads: noise shape mismatch");
    ad::Var eps = g.leaf(noise);
    ad::Var std_dev = ad::exp(g, ad::mul_scalar(g, log_var, 0.5));
    ad::Var sample = ad::add(g, mean, ad::mul(g, std_dev, eps));
    return {mean, log_var, sample};
}

}  // namespace

ad::Var backbone_forward(ad::Graph& g, ParamBinding& p, const DimensionSpec& dims,
                         Modality modality, const ad::Var& maps) {
    if (maps->value.cols() != dims.map_size())
        throw std::invalid_argument("backbone_forward: flattened map width mismatch");
    const std::string prefix =
        modality == Modality::image ? "image_backbone/" : "sketch_backbone/";
    return ad::tanh(g, positionwise_affine(g, p, dims, prefix, maps));
}

ad::Var attention_apply(ad::Graph& g, ParamBinding& p, const DimensionSpec& dims,
                        Modality modality, const ad::Var& maps) {
    if (!dims.attention_enabled) return maps;
    const std::string prefix =
        modality == Modality::image ? "image_attention/" : "sketch_attention/";
    ad::Var gate = ad::sigmoid(g, positionwise_affine(g, p, dims, prefix, maps));
    return ad::mul(g, maps, gate);
}

ad::Var spatial_average_pool(ad::Graph& g, const DimensionSpec& dims, const ad::Var& maps) {
    const std::size_t rows = maps->value.rows();
    const std::size_t positions = rows * dims.grid * dims.grid;
    ad::Var x = ad::reshape(g, maps, positions, dims.channels);
    ad::Var pooled = ad::row_mean(g, x);
    return ad::reshape(g, pooled, rows, dims.grid * dims.grid);
}

GaussianVar latent_head(ad::Graph& g, ParamBinding& p, const DimensionSpec& dims,
                        Modality modality, const ad::Var& attended, const Tensor& noise) {
    const std::string prefix = modality == Modality::image ? "image_head/" : "sketch_head/";
    ad::Var mean = dense(g, p, prefix + "mean_", attended);
    ad::Var log_var = dense(g, p, prefix + "logvar_", attended);
    return gaussian_from_heads(g, mean, log_var, noise);
}

ad::Var classify(ad::Graph& g, ParamBinding& p, const ad::Var& latents) {
    return dense(g, p, "classifier/", latents);
}

ad::Var local_domain_classify(ad::Graph& g, ParamBinding& p, const ad::Var& pooled) {
    ad::Var z = ad::sigmoid(g, dense(g, p, "local_domain/", pooled));
    return ad::clamp(g, z, kProbClip, 1.0 - kProbClip);
}

ad::Var global_domain_classify(ad::Graph& g, ParamBinding& p, const ad::Var& latents) {
    ad::Var z = ad::sigmoid(g, dense(g, p, "global_domain/", latents));
    return ad::clamp(g, z, kProbClip, 1.0 - kProbClip);
}

CodecVar codec_forward(ad::Graph& g, ParamBinding& p, const DimensionSpec& dims,
                       CodecKind which, const ad::Var& attended, const Tensor& noise) {
    const std::string prefix = which == CodecKind::V_p ? "codec_p/" : "codec_alpha/";
    ad::Var mean = dense(g, p, prefix + "enc_mean_", attended);
    ad::Var log_var = dense(g, p, prefix + "enc_logvar_", attended);
    GaussianVar enc = gaussian_from_heads(g, mean, log_var, noise);
    ad::Var recon = dense(g, p, prefix + "dec_", enc.sample);
    return {recon, enc};
}

Tensor draw_noise(std::size_t rows, std::size_t dim, std::uint64_t seed) {
    Rng rng(seed);
    return rng.normal_tensor({rows, dim});
}

// --- value-level wrappers ---

namespace {

Tensor as_row(const Tensor& map) { return map.reshaped({std::size_t{1}, map.size()}); }

Tensor as_map(const Tensor& row, const DimensionSpec& dims) {
    return row.reshaped({dims.grid, dims.grid, dims.channels});
}

}  // namespace

Tensor backbone_forward(const ModelParams& params, const DimensionSpec& dims,
                        const SampleRecord& sample) {
    if (sample.feature_map.size() != dims.map_size())
        throw std::invalid_argument("backbone_forward: sample map does not match DimensionSpec");
    ad::Graph g;
    ParamBinding p(g, params, false);
    ad::Var maps = g.leaf(as_row(sample.feature_map));
    return as_map(backbone_forward(g, p, dims, sample.modality, maps)->value, dims);
}

Tensor attention_apply(const ModelParams& params, const DimensionSpec& dims,
                       Modality modality, const Tensor& map) {
    ad::Graph g;
    ParamBinding p(g, params, false);
    ad::Var maps = g.leaf(as_row(map));
    return as_map(attention_apply(g, p, dims, modality, maps)->value, dims);
}

Tensor spatial_average_pool(const DimensionSpec& dims, const Tensor& map) {
    ad::Graph g;
    ad::Var maps = g.leaf(as_row(map));
    Tensor pooled = spatial_average_pool(g, dims, maps)->value;
    return pooled.reshaped({dims.grid, dims.grid});
}

GaussianLatent latent_head(const ModelParams& params, const DimensionSpec& dims,
                           Modality modality, const Tensor& attended,
                           std::uint64_t noise_seed) {
    ad::Graph g;
    ParamBinding p(g, params, false);
    ad::Var maps = g.leaf(as_row(attended));
    GaussianVar latent = latent_head(g, p, dims, modality, maps,
                                     draw_noise(1, dims.latent_dim, noise_seed));
    return {latent.mean->value.reshaped({dims.latent_dim}),
            latent.log_var->value.reshaped({dims.latent_dim}),
            latent.sample->value.reshaped({dims.latent_dim})};
}

Tensor classify(const ModelParams& params, const Tensor& latent_sample) {
    ad::Graph g;
    ParamBinding p(g, params, false);
    ad::Var z = g.leaf(latent_sample.reshaped({std::size_t{1}, latent_sample.size()}));
    Tensor logits = classify(g, p, z)->value;
    return logits.reshaped({logits.size()});
}

double local_domain_classify(const ModelParams& params, const Tensor& pooled) {
    ad::Graph g;
    ParamBinding p(g, params, false);
    ad::Var x = g.leaf(pooled.reshaped({std::size_t{1}, pooled.size()}));
    return local_domain_classify(g, p, x)->value[0];
}

CodecResult codec_forward(const ModelParams& params, const DimensionSpec& dims,
                          CodecKind which, const Tensor& attended,
                          std::uint64_t noise_seed) {
    ad::Graph g;
    ParamBinding p(g, params, false);
    ad::Var maps = g.leaf(as_row(attended));
    CodecVar out = codec_forward(g, p, dims, which, maps,
                                 draw_noise(1, dims.codec_dim, noise_seed));
    return {out.reconstruction->value.reshaped({dims.latent_dim}),
            {out.encoding.mean->value.reshaped({dims.codec_dim}),
             out.encoding.log_var->value.reshaped({dims.codec_dim}),
             out.encoding.sample->value.reshaped({dims.codec_dim})}};
}

}  // namespace sketret
