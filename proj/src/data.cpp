#include "sketret/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "sketret/rng.hpp"

namespace sketret {

bool ClassSplit::is_seen(std::size_t class_id) const {
    return std::find(seen_classes.begin(), seen_classes.end(), class_id) !=
           seen_classes.end();
}

bool ClassSplit::is_unseen(std::size_t class_id) const {
    return std::find(unseen_classes.begin(), unseen_classes.end(), class_id) !=
           unseen_classes.end();
}

std::size_t ClassSplit::seen_index(std::size_t class_id) const {
    auto it = std::find(seen_classes.begin(), seen_classes.end(), class_id);
    if (it == seen_classes.end())
        throw std::invalid_argument("seen_index: class is not a seen class");
    return static_cast<std::size_t>(it - seen_classes.begin());
}

Tensor SemanticPrototypes::row(std::size_t i) const {
    Tensor out = Tensor::vector(dim());
    for (std::size_t c = 0; c < dim(); ++c) out[c] = vectors(i, c);
    return out;
}

std::vector<std::size_t> DatasetBundle::image_indices_of_class(std::size_t class_id) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < images.size(); ++i)
        if (images[i].class_id == class_id) out.push_back(i);
    return out;
}

std::vector<std::size_t> DatasetBundle::sketch_indices_of_class(std::size_t class_id) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < sketches.size(); ++i)
        if (sketches[i].class_id == class_id) out.push_back(i);
    return out;
}

namespace {

// outer(u, v, w) laid out to match the G x G x C feature-map storage.
Tensor rank_one_pattern(Rng& rng, std::size_t grid, std::size_t channels,
                        bool positive) {
    Tensor u = rng.normal_tensor({grid});
    Tensor v = rng.normal_tensor({grid});
    Tensor w = rng.normal_tensor({channels});
    if (positive) {
        for (std::size_t i = 0; i < u.size(); ++i) u[i] = std::fabs(u[i]);
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::fabs(v[i]);
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::fabs(w[i]);
    }
    Tensor out({grid, grid, channels});
    std::size_t idx = 0;
    for (std::size_t x = 0; x < grid; ++x)
        for (std::size_t y = 0; y < grid; ++y)
            for (std::size_t c = 0; c < channels; ++c) out[idx++] = u[x] * v[y] * w[c];
    return out;
}

Tensor raw_projection(const Tensor& projector, const Tensor& map) {
    // projector is D_raw x F, map is flattened to F.
    const std::size_t d = projector.rows(), f = projector.cols();
    Tensor out = Tensor::vector(d);
    for (std::size_t r = 0; r < d; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < f; ++c) s += projector(r, c) * map[c];
        out[r] = s;
    }
    return out;
}

}  // namespace

DatasetBundle generate_synthetic_dataset(const GeneratorSpec& spec) {
    if (spec.classes < 4)
        throw std::invalid_argument("generate_synthetic_dataset: need at least 4 classes");
    if (spec.images_per_class < 2 || spec.sketches_per_class < 2)
        throw std::invalid_argument(
            "generate_synthetic_dataset: need at least 2 samples per class per modality");
    if (spec.super_clusters == 0 || spec.super_clusters > spec.classes)
        throw std::invalid_argument("generate_synthetic_dataset: bad super-cluster count");

    const std::size_t F = spec.grid * spec.grid * spec.channels;

    // Clustered semantic prototypes: classes are grouped round-robin into
    // super-clusters so the cosine neighborhood structure is nontrivial.
    SemanticPrototypes prototypes;
    {
        Rng rng(derive_seed(spec.seed, "prototypes"));
        Tensor centers = Tensor::matrix(spec.super_clusters, spec.semantic_dim);
        for (std::size_t s = 0; s < spec.super_clusters; ++s)
            for (std::size_t d = 0; d < spec.semantic_dim; ++d)
                centers(s, d) = 1.5 * rng.normal();
        prototypes.vectors = Tensor::matrix(spec.classes, spec.semantic_dim);
        for (std::size_t k = 0; k < spec.classes; ++k) {
            const std::size_t s = k % spec.super_clusters;
            for (std::size_t d = 0; d < spec.semantic_dim; ++d)
                prototypes.vectors(k, d) = centers(s, d) + spec.prototype_spread * rng.normal();
            char name[32];
            std::snprintf(name, sizeof(name), "class_%02zu", k);
            prototypes.class_names.push_back(name);
        }
    }

    // Per-class latent templates driven by the prototypes (RMS-normalized so
    // downstream scales do not depend on the semantic dimension).
    std::vector<Tensor> templates(spec.classes);
    {
        Rng rng(derive_seed(spec.seed, "templates"));
        Tensor projector = rng.normal_tensor({F, spec.semantic_dim},
                                             1.0 / std::sqrt(double(spec.semantic_dim)));
        for (std::size_t k = 0; k < spec.classes; ++k) {
            Tensor t({spec.grid, spec.grid, spec.channels});
            for (std::size_t i = 0; i < F; ++i) {
                double s = 0.0;
                for (std::size_t d = 0; d < spec.semantic_dim; ++d)
                    s += projector(i, d) * prototypes.vectors(k, d);
                t[i] = spec.semantic_strength * s + rng.normal();
            }
            double rms = std::sqrt(dot(t, t) / double(F));
            for (std::size_t i = 0; i < F; ++i) t[i] /= rms;
            templates[k] = std::move(t);
        }
    }

    Rng raw_rng(derive_seed(spec.seed, "raw_projection"));
    Tensor raw_proj = raw_rng.normal_tensor({spec.raw_dim, F}, 1.0 / std::sqrt(double(F)));

    DatasetBundle bundle;
    bundle.prototypes = prototypes;

    for (std::size_t k = 0; k < spec.classes; ++k) {
        for (std::size_t i = 0; i < spec.images_per_class; ++i) {
            Rng rng(derive_seed(spec.seed, "image", k, i));
            Tensor map = templates[k];
            if (spec.clutter != 0.0) {
                Tensor bg = rank_one_pattern(rng, spec.grid, spec.channels, true);
                for (std::size_t j = 0; j < map.size(); ++j) map[j] += spec.clutter * bg[j];
            }
            if (spec.image_noise != 0.0) {
                Tensor smooth = rank_one_pattern(rng, spec.grid, spec.channels, false);
                for (std::size_t j = 0; j < map.size(); ++j)
                    map[j] += spec.image_noise * (0.7 * smooth[j] + 0.5 * rng.normal());
            }
            SampleRecord rec;
            rec.modality = Modality::image;
            rec.class_id = k;
            rec.flat_features = raw_projection(raw_proj, map);
            rec.feature_map = std::move(map);
            bundle.images.push_back(std::move(rec));
        }
        for (std::size_t i = 0; i < spec.sketches_per_class; ++i) {
            Rng rng(derive_seed(spec.seed, "sketch", k, i));
            Tensor map = templates[k];
            for (std::size_t j = 0; j < map.size(); ++j) {
                const double s = map[j] + spec.sketch_noise * rng.normal();
                map[j] = s > spec.sketch_threshold ? 1.0
                         : s < -spec.sketch_threshold ? -1.0
                                                      : 0.0;
            }
            SampleRecord rec;
            rec.modality = Modality::sketch;
            rec.class_id = k;
            rec.flat_features = raw_projection(raw_proj, map);
            rec.feature_map = std::move(map);
            bundle.sketches.push_back(std::move(rec));
        }
    }

    return split_seen_unseen(std::move(bundle), spec.unseen_fraction,
                             derive_seed(spec.seed, "split"));
}

DatasetBundle split_seen_unseen(DatasetBundle bundle, double unseen_fraction,
                                std::uint64_t seed) {
    if (!(unseen_fraction > 0.0 && unseen_fraction < 1.0))
        throw std::invalid_argument("split_seen_unseen: unseen_fraction must be in (0, 1)");
    const std::size_t k = bundle.class_count();
    std::size_t unseen = static_cast<std::size_t>(std::llround(unseen_fraction * double(k)));
    if (unseen == 0 || k - unseen < 2)
        throw std::invalid_argument(
            "split_seen_unseen: split needs >= 1 unseen and >= 2 seen classes");

    std::vector<std::size_t> order(k);
    for (std::size_t i = 0; i < k; ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);

    ClassSplit split;
    split.unseen_classes.assign(order.begin(), order.begin() + unseen);
    split.seen_classes.assign(order.begin() + unseen, order.end());
    std::sort(split.unseen_classes.begin(), split.unseen_classes.end());
    std::sort(split.seen_classes.begin(), split.seen_classes.end());
    bundle.split = std::move(split);
    return bundle;
}

std::vector<Triplet> mine_triplets(const DatasetBundle& bundle, std::size_t count,
                                   std::uint64_t seed) {
    if (count == 0) throw std::invalid_argument("mine_triplets: count must be positive");
    if (bundle.split.seen_classes.size() < 2)
        throw std::invalid_argument("mine_triplets: need at least 2 seen classes");

    std::vector<std::size_t> seen_sketches;
    for (std::size_t i = 0; i < bundle.sketches.size(); ++i)
        if (bundle.split.is_seen(bundle.sketches[i].class_id)) seen_sketches.push_back(i);

    std::vector<std::vector<std::size_t>> images_by_class;
    std::vector<std::size_t> other_counts;  // seen images outside each class
    std::size_t seen_images_total = 0;
    const std::size_t class_count = bundle.class_count();
    images_by_class.resize(class_count);
    for (std::size_t i = 0; i < bundle.images.size(); ++i) {
        if (!bundle.split.is_seen(bundle.images[i].class_id)) continue;
        images_by_class[bundle.images[i].class_id].push_back(i);
        ++seen_images_total;
    }
    if (seen_sketches.empty() || seen_images_total == 0)
        throw std::invalid_argument("mine_triplets: no seen-class samples");

    Rng rng(derive_seed(seed, "triplets"));
    std::vector<Triplet> out;
    out.reserve(count);
    while (out.size() < count) {
        Triplet t;
        t.anchor = seen_sketches[rng.index(seen_sketches.size())];
        const std::size_t cls = bundle.sketches[t.anchor].class_id;
        const auto& positives = images_by_class[cls];
        if (positives.empty())
            throw std::invalid_argument("mine_triplets: class has no seen images");
        t.positive = positives[rng.index(positives.size())];
        const std::size_t others = seen_images_total - positives.size();
        if (others == 0)
            throw std::invalid_argument("mine_triplets: no negative candidates");
        std::size_t pick = rng.index(others);
        for (std::size_t c = 0; c < class_count; ++c) {
            if (c == cls) continue;
            if (pick < images_by_class[c].size()) {
                t.negative = images_by_class[c][pick];
                break;
            }
            pick -= images_by_class[c].size();
        }
        t.positive_prototype = cls;
        out.push_back(t);
    }
    return out;
}

SemanticPrototypes load_semantic_embeddings(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_semantic_embeddings: cannot open " + path);

    auto parse_error = [&](std::size_t line, const std::string& what) {
        std::ostringstream os;
        os << path << ":" << line << ": " << what;
        return std::runtime_error(os.str());
    };

    std::string line;
    if (!std::getline(in, line)) throw parse_error(1, "missing header line");
    std::istringstream header(line);
    std::size_t count = 0, dim = 0;
    if (!(header >> count >> dim) || count == 0 || dim == 0)
        throw parse_error(1, "header must be '<class_count> <dim>'");

    SemanticPrototypes out;
    out.vectors = Tensor::matrix(count, dim);
    std::set<std::string> names;
    for (std::size_t r = 0; r < count; ++r) {
        const std::size_t line_no = r + 2;
        if (!std::getline(in, line)) throw parse_error(line_no, "unexpected end of file");
        std::istringstream row(line);
        std::string name;
        if (!(row >> name)) throw parse_error(line_no, "missing class name");
        if (!names.insert(name).second)
            throw parse_error(line_no, "duplicate class name '" + name + "'");
        for (std::size_t c = 0; c < dim; ++c) {
            std::string token;
            if (!(row >> token)) throw parse_error(line_no, "row has fewer values than header dim");
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(token, &used);
            } catch (const std::exception&) {
                throw parse_error(line_no, "non-numeric token '" + token + "'");
            }
            if (used != token.size())
                throw parse_error(line_no, "non-numeric token '" + token + "'");
            out.vectors(r, c) = v;
        }
        std::string extra;
        if (row >> extra) throw parse_error(line_no, "row has more values than header dim");
        out.class_names.push_back(name);
    }
    return out;
}

void save_semantic_embeddings(const SemanticPrototypes& prototypes,
                              const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_semantic_embeddings: cannot open " + path);
    out << prototypes.class_count() << " " << prototypes.dim() << "\n";
    char buf[64];
    for (std::size_t r = 0; r < prototypes.class_count(); ++r) {
        out << prototypes.class_names[r];
        for (std::size_t c = 0; c < prototypes.dim(); ++c) {
            std::snprintf(buf, sizeof(buf), "%.17g", prototypes.vectors(r, c));
            out << " " << buf;
        }
        out << "\n";
    }
}

SemanticPrototypes concat_prototypes(const SemanticPrototypes& a,
                                     const SemanticPrototypes& b) {
    if (a.class_names != b.class_names)
        throw std::invalid_argument("concat_prototypes: class name lists differ");
    SemanticPrototypes out;
    out.class_names = a.class_names;
    out.vectors = Tensor::matrix(a.class_count(), a.dim() + b.dim());
    for (std::size_t r = 0; r < a.class_count(); ++r) {
        for (std::size_t c = 0; c < a.dim(); ++c) out.vectors(r, c) = a.vectors(r, c);
        for (std::size_t c = 0; c < b.dim(); ++c) out.vectors(r, a.dim() + c) = b.vectors(r, c);
    }
    return out;
}

}  // namespace sketret
