#include "sketret/config.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace sketret {

namespace {

std::size_t parse_size(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const long long v = std::stoll(value, &used);
        if (used != value.size() || v < 0) throw std::invalid_argument(value);
        return std::size_t(v);
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' needs a non-negative integer, got '" +
                          value + "'");
    }
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' needs a number, got '" + value + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "on") return true;
    if (value == "false" || value == "0" || value == "off") return false;
    throw ConfigError("config: key '" + key + "' needs true/false, got '" + value + "'");
}

}  // namespace

std::string terms_to_string(const LossTerms& t) {
    std::string out;
    auto put = [&](bool on, const char* name) {
        if (!on) return;
        if (!out.empty()) out += ",";
        out += name;
    };
    put(t.tskl, "tskl");
    put(t.triplet, "triplet");
    put(t.classification, "classification");
    put(t.local_adv, "local_adv");
    put(t.reconstruction, "reconstruction");
    put(t.semantic, "semantic");
    put(t.global_adv, "global_adv");
    return out;
}

LossTerms terms_from_string(const std::string& csv) {
    LossTerms t;
    t.tskl = t.triplet = t.classification = t.local_adv = t.reconstruction = t.semantic =
        t.global_adv = false;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        if (item == "tskl")
            t.tskl = true;
        else if (item == "triplet")
            t.triplet = true;
        else if (item == "classification")
            t.classification = true;
        else if (item == "local_adv")
            t.local_adv = true;
        else if (item == "reconstruction")
            t.reconstruction = true;
        else if (item == "semantic")
            t.semantic = true;
        else if (item == "global_adv")
            t.global_adv = true;
        else
            throw ConfigError("config: unknown loss term '" + item + "'");
    }
    return t;
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
    if (key == "data.classes")
        generator.classes = parse_size(key, value);
    else if (key == "data.images_per_class")
        generator.images_per_class = parse_size(key, value);
    else if (key == "data.sketches_per_class")
        generator.sketches_per_class = parse_size(key, value);
    else if (key == "data.grid")
        generator.grid = parse_size(key, value);
    else if (key == "data.channels")
        generator.channels = parse_size(key, value);
    else if (key == "data.raw_dim")
        generator.raw_dim = parse_size(key, value);
    else if (key == "data.semantic_dim")
        generator.semantic_dim = parse_size(key, value);
    else if (key == "data.super_clusters")
        generator.super_clusters = parse_size(key, value);
    else if (key == "data.prototype_spread")
        generator.prototype_spread = parse_double(key, value);
    else if (key == "data.semantic_strength")
        generator.semantic_strength = parse_double(key, value);
    else if (key == "data.image_noise")
        generator.image_noise = parse_double(key, value);
    else if (key == "data.clutter")
        generator.clutter = parse_double(key, value);
    else if (key == "data.sketch_noise")
        generator.sketch_noise = parse_double(key, value);
    else if (key == "data.sketch_threshold")
        generator.sketch_threshold = parse_double(key, value);
    else if (key == "data.unseen_fraction")
        generator.unseen_fraction = parse_double(key, value);
    else if (key == "data.seed")
        generator.seed = parse_size(key, value);
    else if (key == "model.latent_dim")
        train.dims.latent_dim = parse_size(key, value);
    else if (key == "model.codec_dim")
        train.dims.codec_dim = parse_size(key, value);
    else if (key == "model.semantic_hidden")
        train.dims.semantic_hidden = parse_size(key, value);
    else if (key == "model.fusion_hidden")
        train.dims.fusion_hidden = parse_size(key, value);
    else if (key == "model.attention_enabled")
        train.dims.attention_enabled = parse_bool(key, value);
    else if (key == "model.gcn_enabled")
        train.dims.gcn_enabled = parse_bool(key, value);
    else if (key == "graph.gamma_mode") {
        if (value == "dissimilarity")
            train.gamma_mode = GammaMode::dissimilarity;
        else if (value == "similarity")
            train.gamma_mode = GammaMode::similarity;
        else
            throw ConfigError("config: graph.gamma_mode must be dissimilarity|similarity");
    } else if (key == "train.epochs")
        train.epochs = parse_size(key, value);
    else if (key == "train.triplets_per_epoch")
        train.triplets_per_epoch = parse_size(key, value);
    else if (key == "train.batch_size")
        train.batch_size = parse_size(key, value);
    else if (key == "train.learning_rate")
        train.learning_rate = parse_double(key, value);
    else if (key == "train.momentum")
        train.momentum = parse_double(key, value);
    else if (key == "loss.beta")
        train.loss_config.beta = parse_double(key, value);
    else if (key == "loss.lambda")
        train.loss_config.lambda = parse_double(key, value);
    else if (key == "loss.mu")
        train.loss_config.mu = parse_double(key, value);
    else if (key == "loss.t_pos")
        train.loss_config.t_pos = parse_double(key, value);
    else if (key == "loss.t_neg")
        train.loss_config.t_neg = parse_double(key, value);
    else if (key == "loss.global_adversarial") {
        const bool on = parse_bool(key, value);
        train.loss_config.enable_global_adversarial = on;
        train.terms.global_adv = on;
    } else if (key == "loss.terms") {
        train.terms = terms_from_string(value);
        train.loss_config.enable_global_adversarial = train.terms.global_adv;
    } else if (key == "eval.hubness_k")
        hubness_k = parse_size(key, value);
    else
        throw ConfigError("config: unknown key '" + key + "'");
}

std::string ExperimentConfig::canonical() const {
    std::map<std::string, std::string> kv;
    auto put_size = [&](const char* key, std::size_t v) { kv[key] = std::to_string(v); };
    auto put_double = [&](const char* key, double v) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        kv[key] = buf;
    };
    auto put_bool = [&](const char* key, bool v) { kv[key] = v ? "true" : "false"; };

    put_size("data.classes", generator.classes);
    put_size("data.images_per_class", generator.images_per_class);
    put_size("data.sketches_per_class", generator.sketches_per_class);
    put_size("data.grid", generator.grid);
    put_size("data.channels", generator.channels);
    put_size("data.raw_dim", generator.raw_dim);
    put_size("data.semantic_dim", generator.semantic_dim);
    put_size("data.super_clusters", generator.super_clusters);
    put_double("data.prototype_spread", generator.prototype_spread);
    put_double("data.semantic_strength", generator.semantic_strength);
    put_double("data.image_noise", generator.image_noise);
    put_double("data.clutter", generator.clutter);
    put_double("data.sketch_noise", generator.sketch_noise);
    put_double("data.sketch_threshold", generator.sketch_threshold);
    put_double("data.unseen_fraction", generator.unseen_fraction);
    put_size("data.seed", generator.seed);
    put_size("model.latent_dim", train.dims.latent_dim);
    put_size("model.codec_dim", train.dims.codec_dim);
    put_size("model.semantic_hidden", train.dims.semantic_hidden);
    put_size("model.fusion_hidden", train.dims.fusion_hidden);
    put_bool("model.attention_enabled", train.dims.attention_enabled);
    put_bool("model.gcn_enabled", train.dims.gcn_enabled);
    kv["graph.gamma_mode"] =
        train.gamma_mode == GammaMode::similarity ? "similarity" : "dissimilarity";
    put_size("train.epochs", train.epochs);
    put_size("train.triplets_per_epoch", train.triplets_per_epoch);
    put_size("train.batch_size", train.batch_size);
    put_double("train.learning_rate", train.learning_rate);
    put_double("train.momentum", train.momentum);
    put_double("loss.beta", train.loss_config.beta);
    put_double("loss.lambda", train.loss_config.lambda);
    put_double("loss.mu", train.loss_config.mu);
    put_double("loss.t_pos", train.loss_config.t_pos);
    put_double("loss.t_neg", train.loss_config.t_neg);
    put_bool("loss.global_adversarial", train.loss_config.enable_global_adversarial);
    kv["loss.terms"] = terms_to_string(train.terms);
    put_size("eval.hubness_k", hubness_k);

    std::string out;
    for (const auto& [key, value] : kv) out += key + "=" + value + "\n";
    return out;
}

std::string ExperimentConfig::hash() const {
    const std::string text = canonical();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char ch : text) {
        h ^= static_cast<unsigned char>(ch);
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    ExperimentConfig config;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t hash_pos = line.find('#');
        if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
        // trim
        const std::size_t begin = line.find_first_not_of(" \t\r");
        if (begin == std::string::npos) continue;
        const std::size_t end = line.find_last_not_of(" \t\r");
        line = line.substr(begin, end - begin + 1);
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: " + path + ":" + std::to_string(line_no) +
                              ": expected key=value");
        std::string key = line.substr(0, eq);
        std::string value = line.substr(eq + 1);
        const auto trim = [](std::string& s) {
            const std::size_t b = s.find_first_not_of(" \t");
            const std::size_t e = s.find_last_not_of(" \t");
            s = b == std::string::npos ? "" : s.substr(b, e - b + 1);
        };
        trim(key);
        trim(value);
        config.set(key, value);
    }
    return config;
}

void apply_overrides(ExperimentConfig& config, const std::vector<std::string>& overrides) {
    for (const std::string& item : overrides) {
        const std::size_t eq = item.find('=');
        if (eq == std::string::npos)
            throw ConfigError("--set expects key=value, got '" + item + "'");
        config.set(item.substr(0, eq), item.substr(eq + 1));
    }
}

}  // namespace sketret
