#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "semgen/config.hpp"
#include "semgen/dataio.hpp"
#include "semgen/discovery.hpp"
#include "semgen/errors.hpp"
#include "semgen/rng.hpp"
#include "oracles.hpp"

using namespace semgen;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
    const fs::path dir = fs::temp_directory_path() / "semgen_tests" / ("discovery_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

// identical patients: zero deformation jitter, zero noise
CorpusManifest flat_corpus(const fs::path& dir, int64_t n, Shape3 shape) {
    PhantomSpec spec;
    spec.n_patients = n;
    spec.base_shape = shape;
    spec.n_structures = 2;
    spec.structure_radius_range = {1, 2};
    spec.deformation = 0.0;
    spec.noise = 0.0;
    spec.heldout_fraction = 0.0;
    spec.seed = 7;
    return generate_phantom_corpus(spec, dir);
}

LatentVector lv(const std::string& id, std::vector<double> values) {
    return LatentVector{id, std::move(values)};
}

// pairwise overlap = intersection volume / crop volume (equal extents)
double overlap(const Coordinate& a, const Coordinate& b) {
    int64_t inter = 1;
    for (size_t axis = 0; axis < 3; ++axis) {
        const int64_t ea = axis == 0 ? a.extent.d : axis == 1 ? a.extent.h : a.extent.w;
        const int64_t lo = std::max(a.origin[axis], b.origin[axis]);
        const int64_t hi = std::min(a.origin[axis] + ea, b.origin[axis] + ea);
        inter *= std::max<int64_t>(0, hi - lo);
    }
    return static_cast<double>(inter) / static_cast<double>(a.extent.voxels());
}

DiscoveryIndex hand_index(const CorpusManifest& corpus, int64_t K) {
    DiscoveryIndex index;
    index.reference_id = corpus.entries[0].patient_id;
    index.latents[index.reference_id] = lv(index.reference_id, {0.0});
    for (int64_t i = 1; i <= K; ++i)
        index.neighbors.emplace_back(corpus.entries[static_cast<size_t>(i)].patient_id,
                                     static_cast<double>(i));
    return index;
}

} // namespace

TEST_CASE("autoencoder memorizes a corpus of identical volumes") {
    const CorpusManifest corpus = flat_corpus(fresh_dir("ae"), 2, Shape3{8, 8, 8});
    AutoencoderConfig cfg;
    cfg.input_shape = Shape3{8, 8, 8};
    cfg.stages = 2;
    cfg.base_channels = 8;
    cfg.latent_dim = 32;
    cfg.epochs = 1200;
    cfg.learning_rate = 0.002;
    cfg.batch_size = 2;
    std::vector<double> log;
    AutoEncoder<float> ae = train_autoencoder(corpus, cfg, 11, &log);
    REQUIRE(log.size() == 1200);
    CHECK(log.back() < log.front()); // training improved on initialization

    const Volume v = corpus.load(corpus.entries[0]);
    Tensor<float> x({1, 1, 8, 8, 8});
    for (size_t i = 0; i < v.voxels.size(); ++i) x[static_cast<int64_t>(i)] = v.voxels[i];
    const Tensor<float>& recon = ae.forward(x);
    double mae = 0.0;
    for (int64_t i = 0; i < x.numel(); ++i) mae += std::abs(double(recon[i]) - double(x[i]));
    mae /= static_cast<double>(x.numel());
    CHECK(mae < 1e-3); // measured 7.7e-4 under this exact configuration

    // embeddings: deterministic, finite, configured width; identical inputs
    // land on the same latent
    const LatentVector za = embed(v, ae);
    const LatentVector zb = embed(corpus.load(corpus.entries[1]), ae);
    CHECK(za.values.size() == 32);
    CHECK(za.values == embed(v, ae).values);
    CHECK(za.values == zb.values); // identical volumes, distance 0
    Volume wrong(Shape3{4, 8, 8});
    wrong.voxels.assign(wrong.shape.voxels(), 0.0f);
    CHECK_THROWS_AS(embed(wrong, ae), ValidationError);
}

TEST_CASE("autoencoder training is deterministic and rejects an empty corpus") {
    const CorpusManifest corpus = flat_corpus(fresh_dir("ae_det"), 3, Shape3{8, 8, 8});
    AutoencoderConfig cfg;
    cfg.input_shape = Shape3{8, 8, 8};
    cfg.stages = 2;
    cfg.base_channels = 4;
    cfg.latent_dim = 8;
    cfg.epochs = 3;
    cfg.batch_size = 2;
    std::vector<double> log1, log2;
    train_autoencoder(corpus, cfg, 5, &log1);
    train_autoencoder(corpus, cfg, 5, &log2);
    CHECK(log1 == log2);

    CorpusManifest empty;
    empty.root = corpus.root;
    CHECK_THROWS_WITH_AS(train_autoencoder(empty, cfg, 5), doctest::Contains("empty corpus"),
                         ValidationError);
}

TEST_CASE("nearest neighbors: hand distances") {
    std::map<std::string, LatentVector> latents;
    latents["r"] = lv("r", {0.0, 0.0});
    latents["a"] = lv("a", {3.0, 4.0});
    latents["b"] = lv("b", {6.0, 8.0});
    const DiscoveryIndex idx = nearest_neighbors("r", latents, 2);
    REQUIRE(idx.neighbors.size() == 2);
    CHECK(idx.neighbors[0].first == "a");
    CHECK(idx.neighbors[0].second == 5.0);
    CHECK(idx.neighbors[1].first == "b");
    CHECK(idx.neighbors[1].second == 10.0);
    CHECK_NOTHROW(idx.validate());
}

TEST_CASE("nearest neighbors: ties break by ascending patient id") {
    std::map<std::string, LatentVector> latents;
    latents["r"] = lv("r", {0.0});
    latents["p2"] = lv("p2", {1.0});
    latents["p1"] = lv("p1", {1.0});
    latents["p3"] = lv("p3", {-1.0});
    const DiscoveryIndex idx = nearest_neighbors("r", latents, 3);
    REQUIRE(idx.neighbors.size() == 3);
    CHECK(idx.neighbors[0].first == "p1");
    CHECK(idx.neighbors[1].first == "p2");
    CHECK(idx.neighbors[2].first == "p3");
}

// [DERIVED] brute-force oracle over all pairwise distances
TEST_CASE("nearest neighbors match brute force on random instances") {
    Rng rng(99);
    for (int inst = 0; inst < 50; ++inst) {
        const int n = static_cast<int>(rng.uniform_int(3, 40));
        const int dim = static_cast<int>(rng.uniform_int(1, 8));
        std::map<std::string, LatentVector> latents;
        std::vector<std::pair<std::string, std::vector<double>>> points;
        for (int i = 0; i < n; ++i) {
            char buf[16];
            std::snprintf(buf, sizeof buf, "p%03d", i);
            std::vector<double> z(static_cast<size_t>(dim));
            // coarse grid values provoke exact distance ties
            for (double& v : z) v = static_cast<double>(rng.uniform_int(0, 3));
            latents[buf] = lv(buf, z);
            points.emplace_back(buf, z);
        }
        const std::string ref = points[static_cast<size_t>(rng.uniform_int(0, n - 1))].first;
        const int64_t K = rng.uniform_int(1, n - 1);
        const DiscoveryIndex idx = nearest_neighbors(ref, latents, K);
        const auto expect =
            oracles::nearest(points, latents[ref].values, ref, static_cast<size_t>(K));
        REQUIRE(idx.neighbors.size() == expect.size());
        for (size_t i = 0; i < expect.size(); ++i) {
            CHECK(idx.neighbors[i].first == expect[i].first);
            CHECK(idx.neighbors[i].second == doctest::Approx(expect[i].second).epsilon(1e-12));
        }
        CHECK_NOTHROW(idx.validate());
    }
}

TEST_CASE("nearest neighbors rejects bad K and unknown references") {
    std::map<std::string, LatentVector> latents;
    latents["r"] = lv("r", {0.0});
    latents["a"] = lv("a", {1.0});
    CHECK_THROWS_WITH_AS(nearest_neighbors("r", latents, 2), doctest::Contains("K="),
                         ValidationError);
    CHECK_THROWS_WITH_AS(nearest_neighbors("zz", latents, 1), doctest::Contains("unknown reference"),
                         ValidationError);
}

TEST_CASE("discovery index validation catches malformed results") {
    DiscoveryIndex idx;
    idx.reference_id = "r";
    idx.latents["r"] = lv("r", {0.0});
    SUBCASE("missing reference latent") {
        idx.latents.clear();
        CHECK_THROWS_WITH_AS(idx.validate(), doctest::Contains("has no latent"), ValidationError);
    }
    SUBCASE("reference in its own neighbor list") {
        idx.neighbors = {{"r", 0.0}};
        CHECK_THROWS_WITH_AS(idx.validate(), doctest::Contains("own neighbor list"), ValidationError);
    }
    SUBCASE("distances out of order") {
        idx.neighbors = {{"a", 2.0}, {"b", 1.0}};
        CHECK_THROWS_WITH_AS(idx.validate(), doctest::Contains("not sorted"), ValidationError);
    }
    SUBCASE("negative distance") {
        idx.neighbors = {{"a", -1.0}};
        CHECK_THROWS_WITH_AS(idx.validate(), doctest::Contains("invalid distance"), ValidationError);
    }
}

TEST_CASE("sampled coordinates are in bounds, indexed, and overlap capped") {
    const Shape3 ref{128, 128, 128};
    const Shape3 extent{32, 32, 32};
    const auto coords = sample_coordinates(ref, 44, extent, 0.25, 10000, 3);
    REQUIRE(coords.size() == 44);
    for (size_t i = 0; i < coords.size(); ++i) {
        CHECK(coords[i].index == static_cast<int>(i));
        CHECK_NOTHROW(coords[i].validate(ref));
        CHECK(coords[i].extent == extent);
    }
    for (size_t i = 0; i < coords.size(); ++i)
        for (size_t j = i + 1; j < coords.size(); ++j)
            CHECK(overlap(coords[i], coords[j]) <= 0.25);

    // deterministic per seed
    const auto again = sample_coordinates(ref, 44, extent, 0.25, 10000, 3);
    for (size_t i = 0; i < coords.size(); ++i) CHECK(coords[i].origin == again[i].origin);
    const auto other = sample_coordinates(ref, 44, extent, 0.25, 10000, 4);
    bool all_same = true;
    for (size_t i = 0; i < coords.size(); ++i) all_same = all_same && coords[i].origin == other[i].origin;
    CHECK(!all_same);
}

TEST_CASE("coordinate sampling edge cases") {
    SUBCASE("single coordinate") {
        const auto coords = sample_coordinates(Shape3{8, 8, 8}, 1, Shape3{4, 4, 4}, 0.25, 100, 1);
        REQUIRE(coords.size() == 1);
        CHECK(coords[0].index == 0);
    }
    SUBCASE("full-volume extent cannot host two crops") {
        CHECK_THROWS_WITH_AS(sample_coordinates(Shape3{8, 8, 8}, 2, Shape3{8, 8, 8}, 0.25, 1000, 1),
                             doctest::Contains("cannot satisfy overlap constraint"), ValidationError);
    }
    SUBCASE("extent larger than the reference") {
        CHECK_THROWS_WITH_AS(sample_coordinates(Shape3{8, 8, 8}, 1, Shape3{16, 8, 8}, 0.25, 100, 1),
                             doctest::Contains("extent"), ValidationError);
    }
}

TEST_CASE("crop extraction over reference plus neighbors") {
    const CorpusManifest corpus = flat_corpus(fresh_dir("extract"), 6, Shape3{16, 32, 32});
    const DiscoveryIndex index = hand_index(corpus, 4); // K=4 neighbors
    const auto coords = sample_coordinates(Shape3{16, 32, 32}, 6, Shape3{8, 16, 16}, 0.25, 10000, 2);

    PretrainConfig cfg;
    cfg.K = 4;
    cfg.C = 6;
    cfg.canonical_crop_shape = Shape3{8, 16, 16};
    cfg.scale_factors = {1.0};

    const auto crops = extract_crops(corpus, index, coords, cfg);
    REQUIRE(crops.size() == 30); // (K+1) x C x |scales|

    std::map<int, int> label_counts;
    for (const auto& c : crops) {
        CHECK(c.pseudo_label == c.coordinate_index);
        CHECK(c.data.shape == cfg.canonical_crop_shape);
        CHECK_NOTHROW(c.validate(cfg.canonical_crop_shape));
        ++label_counts[c.pseudo_label];
    }
    REQUIRE(label_counts.size() == 6); // label set is exactly 0..C-1
    for (const auto& [label, count] : label_counts) CHECK(count == 5);

    // scale 1.0 with extent == canonical shape: crop equals the raw sub-volume
    const Volume& ref_vol = corpus.load(corpus.entries[0]);
    const Coordinate& c0 = coords[0];
    const PatternCrop* first = nullptr;
    for (const auto& c : crops)
        if (c.patient_id == index.reference_id && c.coordinate_index == 0) first = &c;
    REQUIRE(first != nullptr);
    bool raw_equal = true;
    for (int64_t z = 0; z < 8; ++z)
        for (int64_t y = 0; y < 16; ++y)
            for (int64_t x = 0; x < 16; ++x)
                raw_equal = raw_equal && first->data.at(z, y, x) ==
                                             ref_vol.at(c0.origin[0] + z, c0.origin[1] + y,
                                                        c0.origin[2] + x);
    CHECK(raw_equal);

    // identical patients: crops with equal pseudo_label are bit-identical
    for (int label = 0; label < 6; ++label) {
        const PatternCrop* base = nullptr;
        for (const auto& c : crops)
            if (c.pseudo_label == label) {
                if (base == nullptr)
                    base = &c;
                else
                    CHECK(c.data == base->data);
            }
    }
}

TEST_CASE("multi-scale extraction resizes every window to the canonical shape") {
    const CorpusManifest corpus = flat_corpus(fresh_dir("scales"), 3, Shape3{16, 32, 32});
    const DiscoveryIndex index = hand_index(corpus, 2);
    const auto coords = sample_coordinates(Shape3{16, 32, 32}, 2, Shape3{8, 16, 16}, 0.25, 10000, 5);

    PretrainConfig cfg;
    cfg.K = 2;
    cfg.C = 2;
    cfg.canonical_crop_shape = Shape3{8, 16, 16};
    cfg.scale_factors = {0.8, 1.0, 1.2};
    const auto crops = extract_crops(corpus, index, coords, cfg);
    REQUIRE(crops.size() == 18); // 3 patients x 2 coords x 3 scales
    std::set<double> scales;
    for (const auto& c : crops) {
        CHECK(c.data.shape == cfg.canonical_crop_shape);
        CHECK_NOTHROW(c.data.validate());
        scales.insert(c.scale_factor);
    }
    CHECK(scales == std::set<double>{0.8, 1.0, 1.2});

    cfg.scale_factors = {0.05}; // 8 * 0.05 rounds below 2 voxels
    CHECK_THROWS_WITH_AS(extract_crops(corpus, index, coords, cfg),
                         doctest::Contains("degenerate"), ValidationError);
}

TEST_CASE("full discovery stage is deterministic and reports round-trip") {
    const CorpusManifest corpus = flat_corpus(fresh_dir("run"), 6, Shape3{8, 16, 16});
    Config config;
    config.seed = 21;
    config.pretrain.K = 3;
    config.pretrain.C = 4;
    config.pretrain.canonical_crop_shape = Shape3{4, 8, 8};
    config.pretrain.scale_factors = {1.0};
    config.autoencoder.input_shape = Shape3{8, 16, 16};
    config.autoencoder.stages = 2;
    config.autoencoder.base_channels = 4;
    config.autoencoder.latent_dim = 8;
    config.autoencoder.epochs = 2;
    config.autoencoder.batch_size = 3;
    config.bind_derived_fields();

    DiscoveryReport rep1, rep2;
    const auto crops1 = run_discovery(corpus, config, config.seed, &rep1);
    const auto crops2 = run_discovery(corpus, config, config.seed, &rep2);
    REQUIRE(crops1.size() == 16); // (K+1) x C
    REQUIRE(crops2.size() == crops1.size());
    for (size_t i = 0; i < crops1.size(); ++i) {
        CHECK(crops1[i].data == crops2[i].data);
        CHECK(crops1[i].patient_id == crops2[i].patient_id);
        CHECK(crops1[i].pseudo_label == crops2[i].pseudo_label);
    }
    CHECK(rep1.references.size() == 1);
    CHECK(rep1.coordinates.size() == 4);
    CHECK(rep1.ae_final_loss == rep2.ae_final_loss);
    CHECK(rep1.config_hash == config.hash());

    const std::string text = discovery_report_to_json_text(rep1);
    const DiscoveryReport back = discovery_report_from_json_text(text);
    CHECK(discovery_report_to_json_text(back) == text);
    CHECK_THROWS_WITH_AS(discovery_report_from_json_text("{nope"), doctest::Contains("invalid JSON"),
                         ValidationError);
}

TEST_CASE("multiple reference rounds share coordinates and deduplicate patients") {
    const CorpusManifest corpus = flat_corpus(fresh_dir("rounds"), 6, Shape3{8, 16, 16});
    Config config;
    config.seed = 22;
    config.pretrain.K = 4;
    config.pretrain.C = 3;
    config.pretrain.canonical_crop_shape = Shape3{4, 8, 8};
    config.pretrain.scale_factors = {1.0};
    config.autoencoder.input_shape = Shape3{8, 16, 16};
    config.autoencoder.stages = 2;
    config.autoencoder.base_channels = 4;
    config.autoencoder.latent_dim = 8;
    config.autoencoder.epochs = 2;
    config.autoencoder.batch_size = 3;
    config.discovery.reference_seeds = {1, 2};
    config.bind_derived_fields();

    DiscoveryReport rep;
    const auto crops = run_discovery(corpus, config, config.seed, &rep);
    CHECK(rep.references.size() == 2);
    CHECK(rep.coordinates.size() == 3); // one shared coordinate set across rounds

    // every patient contributes each coordinate at most once
    std::set<std::pair<std::string, int>> seen;
    for (const auto& c : crops) {
        const bool fresh = seen.emplace(c.patient_id, c.coordinate_index).second;
        CHECK(fresh);
    }
    CHECK(crops.size() == seen.size());
    CHECK(crops.size() % 3 == 0); // dedup keeps whole patients, C crops each
}
