#include "semgen/transforms.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "semgen/errors.hpp"
#include "semgen/rng.hpp"

namespace semgen {

using nlohmann::json;

namespace {

double bezier(double t, double p0, double p1, double p2, double p3) {
    const double u = 1.0 - t;
    return u * u * u * p0 + 3.0 * u * u * t * p1 + 3.0 * u * t * t * p2 + t * t * t * p3;
}

NonlinearCurve curve_from_payload(const std::string& payload) {
    json j;
    try {
        j = json::parse(payload);
    } catch (const json::parse_error& e) {
        throw ValidationError("transform record: bad nonlinear payload: " + std::string(e.what()));
    }
    NonlinearCurve c;
    c.x1 = j.at("x1").get<double>();
    c.x2 = j.at("x2").get<double>();
    c.y1 = j.at("y1").get<double>();
    c.y2 = j.at("y2").get<double>();
    c.decreasing = j.at("decreasing").get<bool>();
    return c;
}

std::string curve_to_payload(const NonlinearCurve& c) {
    return json{{"x1", c.x1}, {"x2", c.x2}, {"y1", c.y1}, {"y2", c.y2}, {"decreasing", c.decreasing}}
        .dump();
}

// extent per axis drawn from fraction of the axis, clamped to [0, axis]
Cuboid sample_cuboid(Rng& rng, const Shape3& shape, const std::array<double, 2>& fraction_range) {
    Cuboid c;
    const std::array<int64_t, 3> axes{shape.d, shape.h, shape.w};
    std::array<int64_t, 3> ext{};
    std::array<int64_t, 3> org{};
    for (int a = 0; a < 3; ++a) {
        const double f = rng.uniform(fraction_range[0], fraction_range[1]);
        ext[static_cast<size_t>(a)] = std::min(
            axes[static_cast<size_t>(a)],
            static_cast<int64_t>(std::llround(f * static_cast<double>(axes[static_cast<size_t>(a)]))));
        org[static_cast<size_t>(a)] =
            ext[static_cast<size_t>(a)] < axes[static_cast<size_t>(a)]
                ? rng.uniform_int(0, axes[static_cast<size_t>(a)] - ext[static_cast<size_t>(a)])
                : 0;
    }
    c.z = org[0];
    c.y = org[1];
    c.x = org[2];
    c.dz = ext[0];
    c.dy = ext[1];
    c.dx = ext[2];
    return c;
}

bool cuboids_overlap(const Cuboid& a, const Cuboid& b) {
    return a.z < b.z + b.dz && b.z < a.z + a.dz && a.y < b.y + b.dy && b.y < a.y + a.dy &&
           a.x < b.x + b.dx && b.x < a.x + a.dx;
}

void shuffle_block(Volume& v, const Cuboid& blk, Rng& rng) {
    std::vector<float> vals;
    vals.reserve(static_cast<size_t>(blk.voxels()));
    for (int64_t z = blk.z; z < blk.z + blk.dz; ++z)
        for (int64_t y = blk.y; y < blk.y + blk.dy; ++y)
            for (int64_t x = blk.x; x < blk.x + blk.dx; ++x) vals.push_back(v.at(z, y, x));
    rng.shuffle(vals);
    size_t i = 0;
    for (int64_t z = blk.z; z < blk.z + blk.dz; ++z)
        for (int64_t y = blk.y; y < blk.y + blk.dy; ++y)
            for (int64_t x = blk.x; x < blk.x + blk.dx; ++x) v.at(z, y, x) = vals[i++];
}

Volume replay_shuffle(const Volume& crop, const TransformStep& step) {
    Volume out = crop;
    for (size_t b = 0; b < step.regions.size(); ++b) {
        Rng rng(derive_seed(step.noise_seed, "perm", b));
        shuffle_block(out, step.regions[b], rng);
    }
    return out;
}

Volume replay_inpaint(const Volume& crop, const TransformStep& step) {
    Volume out = crop;
    Rng rng(derive_seed(step.noise_seed, "noise"));
    for (const Cuboid& c : step.regions)
        for (int64_t z = c.z; z < c.z + c.dz; ++z)
            for (int64_t y = c.y; y < c.y + c.dy; ++y)
                for (int64_t x = c.x; x < c.x + c.dx; ++x)
                    out.at(z, y, x) = static_cast<float>(rng.uniform());
    return out;
}

Volume replay_outpaint(const Volume& crop, const TransformStep& step) {
    Volume out = crop;
    Rng rng(derive_seed(step.noise_seed, "noise"));
    for (int64_t z = 0; z < out.shape.d; ++z)
        for (int64_t y = 0; y < out.shape.h; ++y)
            for (int64_t x = 0; x < out.shape.w; ++x) {
                bool retained = false;
                for (const Cuboid& c : step.regions)
                    if (c.contains(z, y, x)) {
                        retained = true;
                        break;
                    }
                if (retained) continue;
                // redraw on bitwise collision so the changed-voxel set is
                // exactly the complement of the retained window
                float nv;
                do {
                    nv = static_cast<float>(rng.uniform());
                } while (nv == out.at(z, y, x));
                out.at(z, y, x) = nv;
            }
    return out;
}

} // namespace

double nonlinear_map_value(const NonlinearCurve& curve, double v) {
    if (v <= 0.0) return curve.decreasing ? 1.0 : 0.0;
    if (v >= 1.0) return curve.decreasing ? 0.0 : 1.0;
    // x(t) is monotone for x-controls in [0,1]; invert by bisection
    double lo = 0.0, hi = 1.0;
    for (int i = 0; i < 60; ++i) {
        const double mid = 0.5 * (lo + hi);
        (bezier(mid, 0.0, curve.x1, curve.x2, 1.0) < v ? lo : hi) = mid;
    }
    const double t = 0.5 * (lo + hi);
    return curve.decreasing ? bezier(t, 1.0, curve.y1, curve.y2, 0.0)
                            : bezier(t, 0.0, curve.y1, curve.y2, 1.0);
}

Volume apply_nonlinear_curve(const Volume& crop, const NonlinearCurve& curve) {
    Volume out = crop;
    for (float& v : out.voxels)
        v = static_cast<float>(std::clamp(nonlinear_map_value(curve, static_cast<double>(v)), 0.0, 1.0));
    return out;
}

std::pair<Volume, TransformStep> nonlinear_intensity(const Volume& crop, uint64_t seed) {
    crop.validate("nonlinear_intensity");
    Rng rng(derive_seed(seed, "curve"));
    NonlinearCurve c;
    c.x1 = rng.uniform();
    c.x2 = rng.uniform();
    c.y1 = rng.uniform();
    c.y2 = rng.uniform();
    c.decreasing = rng.uniform() < 0.5;
    TransformStep step{"nonlinear", seed, curve_to_payload(c), {}};
    return {apply_nonlinear_curve(crop, c), step};
}

std::pair<Volume, TransformStep> local_shuffle(const Volume& crop, const TransformConfig& cfg,
                                               uint64_t seed) {
    crop.validate("local_shuffle");
    const std::array<int64_t, 3> axes{crop.shape.d, crop.shape.h, crop.shape.w};
    for (int64_t axis : axes)
        if (cfg.shuffle_block_extent[0] > axis)
            throw ValidationError("local_shuffle: block extent " +
                                  std::to_string(cfg.shuffle_block_extent[0]) +
                                  " exceeds crop axis " + std::to_string(axis));
    Rng rng(derive_seed(seed, "blocks"));
    const int64_t target = rng.uniform_int(cfg.shuffle_block_count[0], cfg.shuffle_block_count[1]);
    std::vector<Cuboid> blocks;
    // disjoint rejection sampling; give up quietly when the crop is too full
    for (int64_t attempt = 0; attempt < 50 * target && static_cast<int64_t>(blocks.size()) < target;
         ++attempt) {
        Cuboid b;
        std::array<int64_t, 3> ext{}, org{};
        for (int a = 0; a < 3; ++a) {
            ext[static_cast<size_t>(a)] =
                std::min(axes[static_cast<size_t>(a)],
                         rng.uniform_int(cfg.shuffle_block_extent[0], cfg.shuffle_block_extent[1]));
            org[static_cast<size_t>(a)] =
                rng.uniform_int(0, axes[static_cast<size_t>(a)] - ext[static_cast<size_t>(a)]);
        }
        b = Cuboid{org[0], org[1], org[2], ext[0], ext[1], ext[2]};
        bool clash = false;
        for (const Cuboid& other : blocks)
            if (cuboids_overlap(b, other)) {
                clash = true;
                break;
            }
        if (!clash) blocks.push_back(b);
    }
    TransformStep step{"local_shuffle", seed, "", std::move(blocks)};
    return {replay_shuffle(crop, step), step};
}

std::pair<Volume, TransformStep> inpaint(const Volume& crop, const TransformConfig& cfg,
                                         uint64_t seed) {
    crop.validate("inpaint");
    Rng rng(derive_seed(seed, "cuboids"));
    const int64_t count = rng.uniform_int(cfg.inpaint_cuboid_count[0], cfg.inpaint_cuboid_count[1]);
    std::vector<Cuboid> cuboids;
    for (int64_t i = 0; i < count; ++i)
        cuboids.push_back(sample_cuboid(rng, crop.shape, cfg.inpaint_cuboid_fraction));
    TransformStep step{"inpaint", seed, "", std::move(cuboids)};
    return {replay_inpaint(crop, step), step};
}

std::pair<Volume, TransformStep> outpaint(const Volume& crop, const TransformConfig& cfg,
                                          uint64_t seed) {
    crop.validate("outpaint");
    Rng rng(derive_seed(seed, "windows"));
    const int64_t count = rng.uniform_int(cfg.outpaint_window_count[0], cfg.outpaint_window_count[1]);
    std::vector<Cuboid> windows;
    for (int64_t i = 0; i < count; ++i)
        windows.push_back(sample_cuboid(rng, crop.shape, cfg.outpaint_window_fraction));
    int64_t retained = 0;
    for (int64_t z = 0; z < crop.shape.d; ++z)
        for (int64_t y = 0; y < crop.shape.h; ++y)
            for (int64_t x = 0; x < crop.shape.w; ++x)
                for (const Cuboid& c : windows)
                    if (c.contains(z, y, x)) {
                        ++retained;
                        break;
                    }
    const double fraction = static_cast<double>(retained) / static_cast<double>(crop.shape.voxels());
    if (fraction > cfg.outpaint_max_retained_fraction)
        throw ValidationError("outpaint degenerate: retained window covers " +
                              std::to_string(fraction) + " of the crop (max " +
                              std::to_string(cfg.outpaint_max_retained_fraction) + ")");
    TransformStep step{"outpaint", seed, "", std::move(windows)};
    return {replay_outpaint(crop, step), step};
}

std::pair<Volume, TransformRecord> compose(const Volume& crop, const TransformConfig& cfg,
                                           uint64_t seed) {
    Rng rng(derive_seed(seed, "compose"));
    TransformRecord record;
    record.seed = seed;
    Volume cur = crop;
    if (rng.uniform() < cfg.p_nonlinear) {
        auto [v, step] = nonlinear_intensity(cur, derive_seed(seed, "nonlinear"));
        cur = std::move(v);
        record.steps.push_back(std::move(step));
    }
    if (rng.uniform() < cfg.p_shuffle) {
        auto [v, step] = local_shuffle(cur, cfg, derive_seed(seed, "shuffle"));
        cur = std::move(v);
        record.steps.push_back(std::move(step));
    }
    if (rng.uniform() < cfg.p_paint) {
        if (rng.uniform() < 0.5) {
            auto [v, step] = inpaint(cur, cfg, derive_seed(seed, "inpaint"));
            cur = std::move(v);
            record.steps.push_back(std::move(step));
        } else {
            auto [v, step] = outpaint(cur, cfg, derive_seed(seed, "outpaint"));
            cur = std::move(v);
            record.steps.push_back(std::move(step));
        }
    }
    return {std::move(cur), std::move(record)};
}

Volume apply_step(const Volume& crop, const TransformStep& step) {
    if (step.name == "nonlinear") return apply_nonlinear_curve(crop, curve_from_payload(step.payload));
    if (step.name == "local_shuffle") return replay_shuffle(crop, step);
    if (step.name == "inpaint") return replay_inpaint(crop, step);
    if (step.name == "outpaint") return replay_outpaint(crop, step);
    throw ValidationError("transform record: unknown step \"" + step.name + "\"");
}

Volume apply_record(const Volume& crop, const TransformRecord& record) {
    Volume cur = crop;
    for (const TransformStep& step : record.steps) cur = apply_step(cur, step);
    return cur;
}

std::string record_to_json_text(const TransformRecord& record) {
    json steps = json::array();
    for (const TransformStep& s : record.steps) {
        json regions = json::array();
        for (const Cuboid& c : s.regions)
            regions.push_back(json{{"z", c.z}, {"y", c.y}, {"x", c.x}, {"dz", c.dz}, {"dy", c.dy}, {"dx", c.dx}});
        steps.push_back(json{{"name", s.name},
                             {"noise_seed", s.noise_seed},
                             {"payload", s.payload},
                             {"regions", std::move(regions)}});
    }
    return json{{"seed", record.seed}, {"steps", std::move(steps)}}.dump(2);
}

TransformRecord record_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError("transform record: invalid JSON: " + std::string(e.what()));
    }
    TransformRecord record;
    record.seed = j.at("seed").get<uint64_t>();
    for (const json& js : j.at("steps")) {
        TransformStep s;
        s.name = js.at("name").get<std::string>();
        s.noise_seed = js.at("noise_seed").get<uint64_t>();
        s.payload = js.at("payload").get<std::string>();
        for (const json& jr : js.at("regions"))
            s.regions.push_back(Cuboid{jr.at("z").get<int64_t>(), jr.at("y").get<int64_t>(),
                                       jr.at("x").get<int64_t>(), jr.at("dz").get<int64_t>(),
                                       jr.at("dy").get<int64_t>(), jr.at("dx").get<int64_t>()});
        record.steps.push_back(std::move(s));
    }
    return record;
}

} // namespace semgen
