#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <vector>

#include "semgen/config.hpp"
#include "semgen/errors.hpp"
#include "semgen/rng.hpp"
#include "semgen/transforms.hpp"

using namespace semgen;

namespace {

Volume random_crop(Shape3 s, uint64_t seed) {
    Volume v(s);
    Rng rng(seed);
    for (float& x : v.voxels) x = static_cast<float>(rng.uniform());
    return v;
}

// indices whose voxels differ between two equal-shaped volumes
std::set<size_t> diff_mask(const Volume& a, const Volume& b) {
    std::set<size_t> changed;
    for (size_t i = 0; i < a.voxels.size(); ++i)
        if (a.voxels[i] != b.voxels[i]) changed.insert(i);
    return changed;
}

std::set<size_t> cuboid_union(const std::vector<Cuboid>& regions, const Shape3& s) {
    std::set<size_t> inside;
    for (int64_t z = 0; z < s.d; ++z)
        for (int64_t y = 0; y < s.h; ++y)
            for (int64_t x = 0; x < s.w; ++x)
                for (const Cuboid& c : regions)
                    if (c.contains(z, y, x)) {
                        inside.insert(static_cast<size_t>((z * s.h + y) * s.w + x));
                        break;
                    }
    return inside;
}

} // namespace

TEST_CASE("identity control points reproduce the crop bitwise") {
    const Volume crop = random_crop(Shape3{4, 8, 8}, 1);
    const Volume out = apply_nonlinear_curve(crop, NonlinearCurve{}); // defaults are the identity
    CHECK(out == crop);
}

TEST_CASE("decreasing curve reverses order and keeps equal inputs equal") {
    Volume crop(Shape3{1, 2, 2});
    crop.voxels = {0.2f, 0.8f, 0.2f, 0.8f};
    NonlinearCurve c;
    c.decreasing = true;
    const Volume out = apply_nonlinear_curve(crop, c);
    CHECK(out.voxels[0] == out.voxels[2]); // equal in, equal out
    CHECK(out.voxels[1] == out.voxels[3]);
    CHECK(out.voxels[0] > out.voxels[1]); // order reversed
    CHECK_NOTHROW(out.validate());
}

// [DERIVED] sort-order oracle: an increasing curve preserves value order
TEST_CASE("increasing curve preserves argsort") {
    NonlinearCurve c;
    c.y1 = 0.25;
    c.y2 = 0.75;
    Volume crop(Shape3{1, 1, 5});
    crop.voxels = {0.9f, 0.1f, 0.5f, 0.3f, 0.7f};
    const Volume out = apply_nonlinear_curve(crop, c);
    std::vector<size_t> order_in{1, 3, 2, 4, 0}, order_out(5);
    std::iota(order_out.begin(), order_out.end(), size_t{0});
    std::sort(order_out.begin(), order_out.end(),
              [&](size_t a, size_t b) { return out.voxels[a] < out.voxels[b]; });
    CHECK(order_out == order_in);
}

TEST_CASE("sampled nonlinear transform is pointwise and in range") {
    const Volume crop = random_crop(Shape3{4, 8, 8}, 2);
    for (uint64_t seed : {3u, 4u, 5u}) {
        auto [out, step] = nonlinear_intensity(crop, seed);
        CHECK(step.name == "nonlinear");
        CHECK_NOTHROW(out.validate());
        // pointwise: same input value -> same output value everywhere
        std::map<float, float> mapping;
        bool pointwise = true;
        for (size_t i = 0; i < crop.voxels.size(); ++i) {
            const auto [it, fresh] = mapping.emplace(crop.voxels[i], out.voxels[i]);
            pointwise = pointwise && (fresh || it->second == out.voxels[i]);
        }
        CHECK(pointwise);
    }
}

TEST_CASE("local shuffle preserves each recorded block's voxel multiset") {
    const Volume crop = random_crop(Shape3{8, 16, 16}, 6);
    TransformConfig cfg;
    cfg.shuffle_block_extent = {2, 4};
    cfg.shuffle_block_count = {5, 10};
    auto [out, step] = local_shuffle(crop, cfg, 7);
    CHECK(step.name == "local_shuffle");
    CHECK(!step.regions.empty());
    for (const Cuboid& blk : step.regions) {
        std::vector<float> before, after;
        for (int64_t z = blk.z; z < blk.z + blk.dz; ++z)
            for (int64_t y = blk.y; y < blk.y + blk.dy; ++y)
                for (int64_t x = blk.x; x < blk.x + blk.dx; ++x) {
                    before.push_back(crop.at(z, y, x));
                    after.push_back(out.at(z, y, x));
                }
        std::sort(before.begin(), before.end());
        std::sort(after.begin(), after.end());
        CHECK(before == after);
    }
    // voxels outside the recorded blocks are untouched
    const auto changed = diff_mask(crop, out);
    const auto allowed = cuboid_union(step.regions, crop.shape);
    for (size_t idx : changed) CHECK(allowed.count(idx) == 1);
}

TEST_CASE("local shuffle edge cases") {
    const Volume crop = random_crop(Shape3{4, 8, 8}, 8);
    TransformConfig cfg;
    cfg.shuffle_block_extent = {2, 3};
    SUBCASE("zero blocks requested leaves the crop unchanged") {
        cfg.shuffle_block_count = {0, 0};
        auto [out, step] = local_shuffle(crop, cfg, 9);
        CHECK(out == crop);
        CHECK(step.regions.empty());
    }
    SUBCASE("constant crop is invisible to shuffling") {
        Volume flat(Shape3{4, 8, 8});
        flat.voxels.assign(flat.voxels.size(), 0.5f);
        cfg.shuffle_block_count = {4, 8};
        auto [out, step] = local_shuffle(flat, cfg, 10);
        CHECK(out == flat);
    }
    SUBCASE("block extent larger than the crop errors") {
        cfg.shuffle_block_extent = {10, 12};
        cfg.shuffle_block_count = {1, 2};
        CHECK_THROWS_WITH_AS(local_shuffle(crop, cfg, 11), doctest::Contains("exceeds crop axis"),
                             ValidationError);
    }
}

TEST_CASE("inpaint changes voxels only inside the recorded cuboids") {
    const Volume crop = random_crop(Shape3{8, 16, 16}, 12);
    TransformConfig cfg;
    for (uint64_t seed = 0; seed < 10; ++seed) {
        auto [out, step] = inpaint(crop, cfg, seed);
        CHECK(step.name == "inpaint");
        CHECK_NOTHROW(out.validate());
        const auto changed = diff_mask(crop, out);
        const auto allowed = cuboid_union(step.regions, crop.shape);
        for (size_t idx : changed) CHECK(allowed.count(idx) == 1);
    }
}

TEST_CASE("zero-size inpaint cuboids leave the crop unchanged") {
    const Volume crop = random_crop(Shape3{4, 8, 8}, 13);
    TransformConfig cfg;
    cfg.inpaint_cuboid_fraction = {0.0, 0.0};
    auto [out, step] = inpaint(crop, cfg, 14);
    CHECK(out == crop);
}

TEST_CASE("outpaint keeps exactly the retained window") {
    const Volume crop = random_crop(Shape3{8, 16, 16}, 15);
    TransformConfig cfg;
    for (uint64_t seed = 0; seed < 10; ++seed) {
        auto [out, step] = outpaint(crop, cfg, seed);
        CHECK(step.name == "outpaint");
        CHECK_NOTHROW(out.validate());
        // changed-voxel set is exactly the complement of the retained union
        const auto changed = diff_mask(crop, out);
        const auto retained = cuboid_union(step.regions, crop.shape);
        for (size_t i = 0; i < crop.voxels.size(); ++i)
            CHECK(changed.count(i) + retained.count(i) == 1);
    }
}

TEST_CASE("outpaint rejects a retained window above the degeneracy threshold") {
    const Volume crop = random_crop(Shape3{20, 20, 20}, 16);
    TransformConfig cfg; // default max retained fraction 0.8
    cfg.outpaint_window_count = {1, 1};
    cfg.outpaint_window_fraction = {0.95, 0.95}; // (19/20)^3 ~ 0.857 of the crop
    CHECK_THROWS_WITH_AS(outpaint(crop, cfg, 17), doctest::Contains("outpaint degenerate"),
                         ValidationError);
}

TEST_CASE("compose applies the gated steps in order and deterministically") {
    const Volume crop = random_crop(Shape3{4, 8, 8}, 18);
    TransformConfig cfg;
    cfg.shuffle_block_extent = {2, 3};
    cfg.shuffle_block_count = {2, 5};
    auto [out1, rec1] = compose(crop, cfg, 19);
    auto [out2, rec2] = compose(crop, cfg, 19);
    CHECK(out1 == out2);
    CHECK(rec1.steps.size() == rec2.steps.size());
    CHECK_NOTHROW(out1.validate());
    // step order follows the fixed pipeline
    const std::vector<std::string> rank{"nonlinear", "local_shuffle", "inpaint", "outpaint"};
    int64_t last = -1;
    for (const auto& s : rec1.steps) {
        const auto it = std::find(rank.begin(), rank.end(), s.name);
        REQUIRE(it != rank.end());
        int64_t r = it - rank.begin();
        if (r == 3) r = 2; // inpaint/outpaint share the slot
        CHECK(r > last);
        last = r;
    }
}

TEST_CASE("compose with zero probabilities is the identity") {
    const Volume crop = random_crop(Shape3{4, 8, 8}, 20);
    TransformConfig cfg;
    cfg.p_nonlinear = 0.0;
    cfg.p_shuffle = 0.0;
    cfg.p_paint = 0.0;
    auto [out, rec] = compose(crop, cfg, 21);
    CHECK(out == crop);
    CHECK(rec.steps.empty());
}

// [DERIVED] Monte-Carlo frequency oracle: each gate fires at its probability
TEST_CASE("compose gate frequencies match the configured probabilities") {
    const Volume crop = random_crop(Shape3{2, 4, 4}, 22);
    TransformConfig cfg;
    cfg.p_nonlinear = 0.5;
    cfg.p_shuffle = 0.5;
    cfg.p_paint = 0.5;
    cfg.shuffle_block_extent = {1, 2};
    cfg.shuffle_block_count = {1, 2};
    const int n = 10000;
    std::map<std::string, int> counts;
    for (int i = 0; i < n; ++i) {
        auto [out, rec] = compose(crop, cfg, static_cast<uint64_t>(i));
        for (const auto& s : rec.steps) ++counts[s.name];
    }
    CHECK(std::abs(counts["nonlinear"] / double(n) - 0.5) < 0.02);
    CHECK(std::abs(counts["local_shuffle"] / double(n) - 0.5) < 0.02);
    const double paint = counts["inpaint"] + counts["outpaint"];
    CHECK(std::abs(paint / n - 0.5) < 0.02);
    // the painted half splits equiprobably
    CHECK(std::abs(counts["inpaint"] / paint - 0.5) < 0.02);
}

TEST_CASE("records replay bit-exactly, including through json") {
    const Volume crop = random_crop(Shape3{4, 8, 8}, 23);
    TransformConfig cfg;
    cfg.shuffle_block_extent = {2, 3};
    cfg.shuffle_block_count = {2, 5};
    for (uint64_t seed = 0; seed < 50; ++seed) {
        auto [out, rec] = compose(crop, cfg, seed);
        CHECK(apply_record(crop, rec) == out);
        const TransformRecord back = record_from_json_text(record_to_json_text(rec));
        CHECK(back.seed == rec.seed);
        REQUIRE(back.steps.size() == rec.steps.size());
        CHECK(apply_record(crop, back) == out);
    }
}

TEST_CASE("record json rejects unknown steps") {
    TransformRecord rec;
    rec.seed = 1;
    rec.steps.push_back({"melt", 2, "", {}});
    const std::string text = record_to_json_text(rec);
    const Volume crop = random_crop(Shape3{2, 4, 4}, 24);
    CHECK_THROWS_WITH_AS(apply_record(crop, record_from_json_text(text)),
                         doctest::Contains("unknown step"), ValidationError);
}
