#include <doctest.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "semgen/config.hpp"
#include "semgen/dataio.hpp"
#include "semgen/errors.hpp"
#include "semgen/rng.hpp"

using namespace semgen;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& leaf) {
    const fs::path dir = fs::temp_directory_path() / "semgen_tests" / leaf;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

Volume random_volume(Shape3 s, uint64_t seed) {
    Volume v(s);
    Rng rng(seed);
    for (float& x : v.voxels) x = static_cast<float>(rng.uniform());
    return v;
}

std::string read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

} // namespace

TEST_CASE("format_double round-trips exactly") {
    for (double v : {0.0, 1.0, -1.5, 0.1, 1e-300, 123456.789012345, 2.0 / 3.0}) {
        CHECK(std::stod(format_double(v)) == v);
    }
}

TEST_CASE("csv field splitting and safety") {
    const auto fields = split_csv_line("a,b,,d");
    REQUIRE(fields.size() == 4);
    CHECK(fields[0] == "a");
    CHECK(fields[2] == "");
    CHECK(fields[3] == "d");
    CHECK(split_csv_line("").empty());
    CHECK(split_csv_line("a,").size() == 2);
    CHECK_NOTHROW(check_csv_safe("patient_000", "patient_id"));
    CHECK_THROWS_AS(check_csv_safe("a,b", "patient_id"), ValidationError);
    CHECK_THROWS_AS(check_csv_safe("a\nb", "patient_id"), ValidationError);
}

TEST_CASE("sgvol round-trip is bit exact") {
    const fs::path dir = fresh_dir("sgvol");
    const Volume v = random_volume(Shape3{3, 5, 7}, 42);
    save_volume(v, dir / "v.sgvol");
    const Volume back = load_volume(dir / "v.sgvol");
    CHECK(back.shape == v.shape);
    CHECK(back.voxels == v.voxels); // float equality: bitwise container
    // header layout: 8-byte magic, then three u32 dims
    const std::string bytes = read_bytes(dir / "v.sgvol");
    REQUIRE(bytes.size() == 8 + 12 + v.voxels.size() * 4);
    CHECK(bytes.substr(0, 5) == "SGVOL");
    CHECK(static_cast<unsigned char>(bytes[7]) == 1);
    CHECK(static_cast<unsigned char>(bytes[8]) == 3); // depth little-endian
    CHECK(static_cast<unsigned char>(bytes[12]) == 5);
    CHECK(static_cast<unsigned char>(bytes[16]) == 7);
}

TEST_CASE("sgvol loader rejects bad files") {
    const fs::path dir = fresh_dir("sgvol_bad");
    SUBCASE("missing file") {
        CHECK_THROWS_WITH_AS(load_volume(dir / "absent.sgvol"), doctest::Contains("cannot open"),
                             ValidationError);
    }
    SUBCASE("wrong magic") {
        std::ofstream(dir / "bad.sgvol", std::ios::binary) << "NOTSGVOLxxxxxxxxxxxx";
        CHECK_THROWS_WITH_AS(load_volume(dir / "bad.sgvol"), doctest::Contains("not an SGVOL"),
                             ValidationError);
    }
    SUBCASE("truncated payload") {
        const Volume v = random_volume(Shape3{2, 2, 2}, 1);
        save_volume(v, dir / "t.sgvol");
        std::string bytes = read_bytes(dir / "t.sgvol");
        bytes.resize(bytes.size() - 3);
        std::ofstream(dir / "t.sgvol", std::ios::binary) << bytes;
        CHECK_THROWS_WITH_AS(load_volume(dir / "t.sgvol"), doctest::Contains("corrupt"),
                             ValidationError);
    }
}

TEST_CASE("manifest round-trip, lookup and validation") {
    const fs::path dir = fresh_dir("manifest");
    CorpusManifest m;
    m.root = dir;
    for (int i = 0; i < 4; ++i) {
        const std::string id = phantom_patient_id(i);
        const std::string file = id + ".sgvol";
        save_volume(random_volume(Shape3{2, 3, 4}, static_cast<uint64_t>(i)), dir / file);
        m.entries.push_back({id, file, Shape3{2, 3, 4}, i < 3 ? "train" : "heldout"});
    }
    CHECK_NOTHROW(m.validate());
    save_manifest(m, dir / "manifest.csv");
    const CorpusManifest back = load_manifest(dir / "manifest.csv");
    CHECK(back.entries == m.entries);
    CHECK(back.root == dir);
    CHECK(back.find("patient_002") != nullptr);
    CHECK(back.find("patient_009") == nullptr);
    CHECK(back.split_entries("train").size() == 3);
    CHECK(back.split_entries("heldout").size() == 1);
    const Volume v = back.load(back.entries[1]);
    CHECK(v.shape == Shape3{2, 3, 4});

    SUBCASE("duplicate ids rejected") {
        CorpusManifest dup = m;
        dup.entries.push_back(dup.entries[0]);
        CHECK_THROWS_WITH_AS(dup.validate(), doctest::Contains("duplicate"), ValidationError);
    }
    SUBCASE("missing volume rejected") {
        fs::remove(dir / "patient_000.sgvol");
        CHECK_THROWS_WITH_AS(m.validate(), doctest::Contains("not resolvable"), ValidationError);
    }
    SUBCASE("bad header rejected") {
        std::ofstream(dir / "manifest.csv") << "wrong,header\n";
        CHECK_THROWS_WITH_AS(load_manifest(dir / "manifest.csv"),
                             doctest::Contains("unexpected header"), ValidationError);
    }
}

TEST_CASE("phantom rendering is deterministic and patient varying") {
    PhantomSpec spec;
    spec.n_patients = 3;
    spec.base_shape = Shape3{8, 16, 16};
    spec.n_structures = 3;
    spec.structure_radius_range = {2.0, 4.0};
    spec.seed = 9;
    const Volume a = render_phantom(spec, 1);
    const Volume b = render_phantom(spec, 1);
    CHECK(a.voxels == b.voxels);
    CHECK_NOTHROW(a.validate());
    const Volume c = render_phantom(spec, 2);
    CHECK(a.voxels != c.voxels);
}

TEST_CASE("zero jitter and zero noise make identical patients") {
    PhantomSpec spec;
    spec.n_patients = 3;
    spec.base_shape = Shape3{8, 16, 16};
    spec.n_structures = 3;
    spec.structure_radius_range = {2.0, 4.0};
    spec.deformation = 0.0;
    spec.noise = 0.0;
    spec.seed = 5;
    CHECK(render_phantom(spec, 0).voxels == render_phantom(spec, 2).voxels);
}

// [DERIVED] oracle: stronger deformation moves patients further from the
// shared layout, measured as mean absolute difference against a zero-jitter
// render of the same seed
TEST_CASE("deformation increases deviation from the shared layout") {
    PhantomSpec spec;
    spec.n_patients = 4;
    spec.base_shape = Shape3{8, 16, 16};
    spec.n_structures = 4;
    spec.structure_radius_range = {2.0, 4.0};
    spec.noise = 0.0;
    spec.seed = 21;

    auto deviation = [&](double deformation) {
        PhantomSpec s = spec;
        s.deformation = deformation;
        PhantomSpec zero = spec;
        zero.deformation = 0.0;
        const Volume base = render_phantom(zero, 1);
        const Volume moved = render_phantom(s, 1);
        double sum = 0.0;
        for (size_t i = 0; i < base.voxels.size(); ++i)
            sum += std::abs(static_cast<double>(base.voxels[i]) -
                            static_cast<double>(moved.voxels[i]));
        return sum / static_cast<double>(base.voxels.size());
    };
    const double d0 = deviation(0.0);
    const double d1 = deviation(1.0);
    const double d3 = deviation(3.0);
    CHECK(d0 == 0.0);
    CHECK(d1 > 0.0);
    CHECK(d3 > d1);
}

TEST_CASE("structure masks are binary, non-empty and in range") {
    PhantomSpec spec;
    spec.base_shape = Shape3{8, 16, 16};
    spec.n_structures = 3;
    spec.structure_radius_range = {2.0, 4.0};
    spec.seed = 33;
    for (int64_t s = 0; s < spec.n_structures; ++s) {
        const Volume mask = structure_mask(spec, 0, s);
        CHECK(mask.shape == spec.base_shape);
        int64_t ones = 0;
        for (float v : mask.voxels) {
            CHECK((v == 0.0f || v == 1.0f));
            ones += v == 1.0f;
        }
        CHECK(ones > 0);
    }
    CHECK_THROWS_AS(structure_mask(spec, 0, 3), ValidationError);
}

TEST_CASE("phantom corpus generation is bitwise reproducible") {
    PhantomSpec spec;
    spec.n_patients = 5;
    spec.base_shape = Shape3{8, 16, 16};
    spec.n_structures = 3;
    spec.structure_radius_range = {2.0, 4.0};
    spec.heldout_fraction = 0.4;
    spec.seed = 77;
    const fs::path d1 = fresh_dir("corpus_a");
    const fs::path d2 = fresh_dir("corpus_b");
    const CorpusManifest m1 = generate_phantom_corpus(spec, d1);
    const CorpusManifest m2 = generate_phantom_corpus(spec, d2);
    CHECK(m1.entries == m2.entries);
    CHECK(m1.entries.size() == 5);
    CHECK_NOTHROW(m1.validate());
    CHECK(m1.split_entries("heldout").size() == 2); // round(0.4 * 5)
    for (const auto& e : m1.entries)
        CHECK(read_bytes(d1 / e.path) == read_bytes(d2 / e.path));
    CHECK(read_bytes(d1 / "phantom_spec.json") == read_bytes(d2 / "phantom_spec.json"));
    const PhantomSpec back = phantom_spec_from_json_text(read_bytes(d1 / "phantom_spec.json"));
    CHECK(back == spec);
}

TEST_CASE("crop dataset round-trip preserves every field and voxel") {
    const fs::path dir = fresh_dir("crops");
    std::vector<PatternCrop> crops;
    for (int i = 0; i < 5; ++i) {
        PatternCrop c;
        c.data = random_volume(Shape3{2, 4, 4}, static_cast<uint64_t>(100 + i));
        c.pseudo_label = i % 3;
        c.coordinate_index = i % 3;
        c.patient_id = phantom_patient_id(i / 3);
        c.scale_factor = i % 2 == 0 ? 1.0 : 0.8;
        crops.push_back(std::move(c));
    }
    save_crop_dataset(crops, dir);
    const auto back = load_crop_dataset(dir);
    REQUIRE(back.size() == crops.size());
    for (size_t i = 0; i < crops.size(); ++i) {
        CHECK(back[i].data == crops[i].data);
        CHECK(back[i].pseudo_label == crops[i].pseudo_label);
        CHECK(back[i].coordinate_index == crops[i].coordinate_index);
        CHECK(back[i].patient_id == crops[i].patient_id);
        CHECK(back[i].scale_factor == crops[i].scale_factor);
    }
    SUBCASE("corrupt header") {
        std::ofstream(dir / "crops.csv") << "bogus\n";
        CHECK_THROWS_WITH_AS(load_crop_dataset(dir), doctest::Contains("unexpected header"),
                             ValidationError);
    }
    SUBCASE("missing directory") {
        CHECK_THROWS_WITH_AS(load_crop_dataset(dir / "absent"), doctest::Contains("cannot open"),
                             ValidationError);
    }
}
