#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "semgen/errors.hpp"

namespace semgen {

// Volume shape in voxels, stored (depth, height, width). Config files and the
// paper-style notation write the triple depth-last ("64x64x32" = h,w,d); the
// conversion happens at the JSON boundary.
struct Shape3 {
    int64_t d = 0;
    int64_t h = 0;
    int64_t w = 0;

    int64_t voxels() const { return d * h * w; }
    bool operator==(const Shape3&) const = default;
};

std::string to_string(const Shape3& s);

// A 3D scalar grid with intensities normalized to [0, 1]. The atomic unit of
// all I/O and transforms. Voxels are float32 row-major (z, y, x), matching the
// on-disk container bit for bit.
struct Volume {
    Shape3 shape;
    std::vector<float> voxels;
    std::array<float, 3> spacing{1.0f, 1.0f, 1.0f}; // informational only

    Volume() = default;
    explicit Volume(Shape3 s) : shape(s), voxels(static_cast<size_t>(s.voxels()), 0.0f) {}

    float& at(int64_t z, int64_t y, int64_t x) {
        return voxels[static_cast<size_t>((z * shape.h + y) * shape.w + x)];
    }
    float at(int64_t z, int64_t y, int64_t x) const {
        return voxels[static_cast<size_t>((z * shape.h + y) * shape.w + x)];
    }

    // Throws ValidationError naming the violated invariant.
    void validate(const std::string& context = "volume") const;
};

bool operator==(const Volume& a, const Volume& b);

struct LatentVector {
    std::string patient_id;
    std::vector<double> values;
};

// One of the C random but fixed crop positions in the reference patient.
struct Coordinate {
    int index = 0;               // in [0, C)
    std::array<int64_t, 3> origin{};  // (z, y, x)
    Shape3 extent;

    void validate(const Shape3& reference_shape) const;
};

// A canonical-size sub-volume with the pseudo label derived from its source
// coordinate index.
struct PatternCrop {
    Volume data;
    int pseudo_label = 0;
    std::string patient_id;
    int coordinate_index = 0;
    double scale_factor = 1.0;

    void validate(const Shape3& canonical_shape) const;
};

// Axis-aligned box, used by the transform records as region descriptor.
struct Cuboid {
    int64_t z = 0, y = 0, x = 0;
    int64_t dz = 0, dy = 0, dx = 0;

    int64_t voxels() const { return dz * dy * dx; }
    bool contains(int64_t vz, int64_t vy, int64_t vx) const {
        return vz >= z && vz < z + dz && vy >= y && vy < y + dy && vx >= x && vx < x + dx;
    }
    bool operator==(const Cuboid&) const = default;
};

// One applied transformation: its sampled parameters plus the regions it was
// allowed to touch. `payload` holds the transform-specific parameters as JSON
// text; `noise_seed` drives the stochastic fill (noise values, permutations).
struct TransformStep {
    std::string name;
    uint64_t noise_seed = 0;
    std::string payload;
    std::vector<Cuboid> regions;
};

// Seeded, ordered description of the transformations applied to a crop.
// Replaying it on the same input reproduces the output bit-exactly.
struct TransformRecord {
    uint64_t seed = 0;
    std::vector<TransformStep> steps;
};

struct LossWeights {
    double lambda_cls = 0.01;
    double lambda_rec = 1.0;
};

} // namespace semgen
