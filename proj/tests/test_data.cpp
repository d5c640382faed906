#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>

#include "sketret/data.hpp"
#include "sketret/io.hpp"

using namespace sketret;

namespace {

GeneratorSpec small_spec() {
    GeneratorSpec spec;
    spec.classes = 8;
    spec.images_per_class = 6;
    spec.sketches_per_class = 6;
    spec.seed = 11;
    return spec;
}

bool bundles_equal(const DatasetBundle& a, const DatasetBundle& b) {
    if (a.images.size() != b.images.size() || a.sketches.size() != b.sketches.size())
        return false;
    for (std::size_t i = 0; i < a.images.size(); ++i)
        if (!(a.images[i].feature_map == b.images[i].feature_map) ||
            !(a.images[i].flat_features == b.images[i].flat_features) ||
            a.images[i].class_id != b.images[i].class_id)
            return false;
    for (std::size_t i = 0; i < a.sketches.size(); ++i)
        if (!(a.sketches[i].feature_map == b.sketches[i].feature_map) ||
            a.sketches[i].class_id != b.sketches[i].class_id)
            return false;
    return a.split.seen_classes == b.split.seen_classes &&
           a.split.unseen_classes == b.split.unseen_classes &&
           a.prototypes.class_names == b.prototypes.class_names &&
           a.prototypes.vectors == b.prototypes.vectors;
}

}  // namespace

TEST_CASE("generator is deterministic and validates its spec") {
    const GeneratorSpec spec = small_spec();
    DatasetBundle a = generate_synthetic_dataset(spec);
    DatasetBundle b = generate_synthetic_dataset(spec);
    CHECK(bundles_equal(a, b));

    GeneratorSpec bad = spec;
    bad.classes = 3;
    CHECK_THROWS_AS(generate_synthetic_dataset(bad), std::invalid_argument);
    bad = spec;
    bad.images_per_class = 1;
    CHECK_THROWS_AS(generate_synthetic_dataset(bad), std::invalid_argument);
    bad = spec;
    bad.unseen_fraction = 0.0;  // zero unseen classes
    CHECK_THROWS_AS(generate_synthetic_dataset(bad), std::invalid_argument);
}

TEST_CASE("zero noise and clutter collapse same-class images") {
    GeneratorSpec spec = small_spec();
    spec.image_noise = 0.0;
    spec.clutter = 0.0;
    DatasetBundle bundle = generate_synthetic_dataset(spec);
    for (std::size_t i = 1; i < spec.images_per_class; ++i)
        CHECK(bundle.images[i].feature_map == bundle.images[0].feature_map);
    // Sketches with zero noise quantize the template identically too.
    GeneratorSpec quiet = spec;
    quiet.sketch_noise = 0.0;
    DatasetBundle sk = generate_synthetic_dataset(quiet);
    for (std::size_t i = 1; i < quiet.sketches_per_class; ++i)
        CHECK(sk.sketches[i].feature_map == sk.sketches[0].feature_map);
}

TEST_CASE("generated sketches are ternary and images are not") {
    DatasetBundle bundle = generate_synthetic_dataset(small_spec());
    std::size_t zeros = 0, entries = 0;
    for (const SampleRecord& rec : bundle.sketches)
        for (std::size_t i = 0; i < rec.feature_map.size(); ++i) {
            const double v = rec.feature_map[i];
            CHECK((v == 0.0 || v == 1.0 || v == -1.0));
            zeros += v == 0.0 ? 1 : 0;
            ++entries;
        }
    CHECK(double(zeros) / double(entries) > 0.25);  // sparse strokes
}

TEST_CASE("generator leaves a measurable domain gap") {
    DatasetBundle bundle = generate_synthetic_dataset(small_spec());
    // Mean within-class distances, cross-modal vs within-modality.
    double cross = 0.0, within = 0.0;
    std::size_t cross_n = 0, within_n = 0;
    for (std::size_t cls = 0; cls < bundle.class_count(); ++cls) {
        const auto imgs = bundle.image_indices_of_class(cls);
        const auto skts = bundle.sketch_indices_of_class(cls);
        for (std::size_t i : imgs)
            for (std::size_t j : skts) {
                cross += std::sqrt(squared_distance(bundle.images[i].flat_features,
                                                    bundle.sketches[j].flat_features));
                ++cross_n;
            }
        for (std::size_t a = 0; a < imgs.size(); ++a)
            for (std::size_t b = a + 1; b < imgs.size(); ++b) {
                within += std::sqrt(squared_distance(bundle.images[imgs[a]].flat_features,
                                                     bundle.images[imgs[b]].flat_features));
                ++within_n;
            }
        for (std::size_t a = 0; a < skts.size(); ++a)
            for (std::size_t b = a + 1; b < skts.size(); ++b) {
                within += std::sqrt(squared_distance(bundle.sketches[skts[a]].flat_features,
                                                     bundle.sketches[skts[b]].flat_features));
                ++within_n;
            }
    }
    CHECK(cross / double(cross_n) > within / double(within_n));
}

TEST_CASE("split respects fraction, determinism and bounds") {
    DatasetBundle bundle = generate_synthetic_dataset(small_spec());
    DatasetBundle s1 = split_seen_unseen(bundle, 0.25, 21);
    CHECK(s1.split.seen_classes.size() == 6);
    CHECK(s1.split.unseen_classes.size() == 2);

    DatasetBundle s2 = split_seen_unseen(bundle, 0.25, 21);
    CHECK(s1.split.seen_classes == s2.split.seen_classes);
    CHECK(s1.split.unseen_classes == s2.split.unseen_classes);

    std::set<std::size_t> all;
    for (std::size_t c : s1.split.seen_classes) all.insert(c);
    for (std::size_t c : s1.split.unseen_classes) all.insert(c);
    CHECK(all.size() == bundle.class_count());

    CHECK_THROWS_AS(split_seen_unseen(bundle, 0.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(split_seen_unseen(bundle, 1.0, 1), std::invalid_argument);
}

TEST_CASE("triplet mining invariants") {
    DatasetBundle bundle = generate_synthetic_dataset(small_spec());
    const auto triplets = mine_triplets(bundle, 5000, 3);
    CHECK(triplets.size() == 5000);
    for (const Triplet& t : triplets) {
        const std::size_t anchor_cls = bundle.sketches[t.anchor].class_id;
        CHECK(anchor_cls == bundle.images[t.positive].class_id);
        CHECK(anchor_cls != bundle.images[t.negative].class_id);
        CHECK(anchor_cls == t.positive_prototype);
        CHECK(bundle.split.is_seen(anchor_cls));
        CHECK(bundle.split.is_seen(bundle.images[t.negative].class_id));
    }
    CHECK_THROWS_AS(mine_triplets(bundle, 0, 3), std::invalid_argument);

    const auto again = mine_triplets(bundle, 5000, 3);
    for (std::size_t i = 0; i < triplets.size(); ++i) {
        CHECK(triplets[i].anchor == again[i].anchor);
        CHECK(triplets[i].positive == again[i].positive);
        CHECK(triplets[i].negative == again[i].negative);
    }
}

TEST_CASE("two seen classes force the negative choice") {
    GeneratorSpec spec = small_spec();
    spec.classes = 4;
    spec.unseen_fraction = 0.5;  // 2 seen, 2 unseen
    DatasetBundle bundle = generate_synthetic_dataset(spec);
    const auto triplets = mine_triplets(bundle, 200, 9);
    const auto& seen = bundle.split.seen_classes;
    for (const Triplet& t : triplets) {
        const std::size_t anchor_cls = bundle.sketches[t.anchor].class_id;
        const std::size_t neg_cls = bundle.images[t.negative].class_id;
        const std::size_t other = anchor_cls == seen[0] ? seen[1] : seen[0];
        CHECK(neg_cls == other);
    }
}

TEST_CASE("embedding file round trip and validation") {
    const std::string dir = std::filesystem::temp_directory_path().string();
    const std::string path = dir + "/sketret_test_embeddings.txt";

    SemanticPrototypes p;
    p.class_names = {"cat", "dog"};
    p.vectors = Tensor({2, 3}, {0.25, -1.5, 3.0 / 7.0, 2.0, 0.125, -0.875});
    save_semantic_embeddings(p, path);

    SemanticPrototypes q = load_semantic_embeddings(path);
    CHECK(q.class_names == p.class_names);
    CHECK(q.vectors == p.vectors);

    auto write = [&](const char* text) {
        std::FILE* f = std::fopen(path.c_str(), "w");
        std::fputs(text, f);
        std::fclose(f);
    };
    write("2 3\ncat 1 2 3\ncat 4 5 6\n");
    CHECK_THROWS_WITH_AS(load_semantic_embeddings(path),
                         doctest::Contains(":3:"), std::runtime_error);
    write("2 3\ncat 1 2 3\ndog 4 x 6\n");
    CHECK_THROWS_WITH_AS(load_semantic_embeddings(path),
                         doctest::Contains("non-numeric"), std::runtime_error);
    write("2 3\ncat 1 2 3\ndog 4 5\n");
    CHECK_THROWS_AS(load_semantic_embeddings(path), std::runtime_error);
    write("2 3\ncat 1 2 3\ndog 4 5 6 7\n");
    CHECK_THROWS_AS(load_semantic_embeddings(path), std::runtime_error);
    std::filesystem::remove(path);
}

TEST_CASE("prototype concatenation") {
    SemanticPrototypes a;
    a.class_names = {"x", "y", "z"};
    a.vectors = Tensor({3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    SemanticPrototypes b;
    b.class_names = a.class_names;
    b.vectors = Tensor({3, 4}, {9, 8, 7, 6, 5, 4, 3, 2, 1, 0, -1, -2});

    SemanticPrototypes ab = concat_prototypes(a, b);
    CHECK(ab.dim() == 7);
    CHECK(ab.vectors(1, 0) == 4);
    CHECK(ab.vectors(1, 3) == 5);
    CHECK(ab.vectors(1, 4) == 4);

    SemanticPrototypes ba = concat_prototypes(b, a);
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 3; ++c)
            CHECK(ba.vectors(r, 4 + c) == ab.vectors(r, c));

    SemanticPrototypes self = concat_prototypes(a, a);
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 3; ++c)
            CHECK(self.vectors(r, c) == self.vectors(r, 3 + c));

    SemanticPrototypes renamed = b;
    renamed.class_names[2] = "w";
    CHECK_THROWS_AS(concat_prototypes(a, renamed), std::invalid_argument);
}

TEST_CASE("dataset container round trip") {
    GeneratorSpec spec = small_spec();
    spec.classes = 5;
    spec.images_per_class = 3;
    spec.sketches_per_class = 2;
    DatasetBundle bundle = generate_synthetic_dataset(spec);

    const std::string dir =
        (std::filesystem::temp_directory_path() / "sketret_dataset_io").string();
    std::filesystem::create_directories(dir);
    save_dataset(bundle, dir);
    DatasetBundle loaded = load_dataset(dir);
    CHECK(bundles_equal(bundle, loaded));
    std::filesystem::remove_all(dir);
}
