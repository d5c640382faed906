#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sketret/tensor.hpp"

namespace sketret {

enum class Modality { image, sketch };

struct SampleRecord {
    Modality modality = Modality::image;
    std::size_t class_id = 0;
    Tensor feature_map;   // G x G x C_mid grid, stored as rank-3 tensor
    Tensor flat_features; // length D_raw
};

struct ClassSplit {
    std::vector<std::size_t> seen_classes;
    std::vector<std::size_t> unseen_classes;

    bool is_seen(std::size_t class_id) const;
    bool is_unseen(std::size_t class_id) const;
    // Position of class_id in seen_classes; used as the classifier label.
    std::size_t seen_index(std::size_t class_id) const;
};

struct SemanticPrototypes {
    std::vector<std::string> class_names;
    Tensor vectors;  // |C| x D_sem

    std::size_t class_count() const { return class_names.size(); }
    std::size_t dim() const { return vectors.cols(); }
    Tensor row(std::size_t i) const;
};

struct DatasetBundle {
    std::vector<SampleRecord> images;
    std::vector<SampleRecord> sketches;
    ClassSplit split;
    SemanticPrototypes prototypes;

    std::size_t class_count() const { return prototypes.class_count(); }
    std::vector<std::size_t> image_indices_of_class(std::size_t class_id) const;
    std::vector<std::size_t> sketch_indices_of_class(std::size_t class_id) const;
};

struct Triplet {
    std::size_t anchor = 0;     // index into bundle.sketches
    std::size_t positive = 0;   // index into bundle.images, same class
    std::size_t negative = 0;   // index into bundle.images, different class
    std::size_t positive_prototype = 0;  // class_id of the anchor/positive
};

struct GeneratorSpec {
    std::size_t classes = 8;
    std::size_t images_per_class = 20;
    std::size_t sketches_per_class = 20;
    std::size_t grid = 7;          // G
    std::size_t channels = 8;      // C_mid
    std::size_t raw_dim = 32;      // D_raw
    std::size_t semantic_dim = 16; // D_sem
    std::size_t super_clusters = 3;
    double prototype_spread = 0.35;
    // Weight of the prototype-driven component in the visual templates;
    // the rest is per-class idiosyncratic, so visual and semantic
    // neighborhoods only partially agree.
    double semantic_strength = 0.5;
    double image_noise = 0.35;
    double clutter = 1.5;
    double sketch_noise = 0.8;
    double sketch_threshold = 0.9;
    double unseen_fraction = 0.25;
    std::uint64_t seed = 7;
};

// Draws per-class latent templates from clustered semantic prototypes, then
// renders the two modalities: images get a dense positive background clutter
// pattern plus noise, sketches get a noisy ternary quantization of the
// template (stroke-like, sparse, high intra-class variance).
DatasetBundle generate_synthetic_dataset(const GeneratorSpec& spec);

DatasetBundle split_seen_unseen(DatasetBundle bundle, double unseen_fraction,
                                std::uint64_t seed);

std::vector<Triplet> mine_triplets(const DatasetBundle& bundle, std::size_t count,
                                   std::uint64_t seed);

// Text format: first line "<class_count> <dim>", then one
// "<class_name> v1 ... vdim" line per class.
SemanticPrototypes load_semantic_embeddings(const std::string& path);
void save_semantic_embeddings(const SemanticPrototypes& prototypes,
                              const std::string& path);

SemanticPrototypes concat_prototypes(const SemanticPrototypes& a,
                                     const SemanticPrototypes& b);

}  // namespace sketret
