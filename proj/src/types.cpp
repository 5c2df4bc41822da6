#include "semgen/types.hpp"

#include <cmath>

namespace semgen {

std::string to_string(const Shape3& s) {
    return "(" + std::to_string(s.d) + "," + std::to_string(s.h) + "," + std::to_string(s.w) + ")";
}

void Volume::validate(const std::string& context) const {
    if (shape.d < 1 || shape.h < 1 || shape.w < 1)
        throw ValidationError(context + ": shape axes must all be >= 1, got " + to_string(shape));
    if (static_cast<int64_t>(voxels.size()) != shape.voxels())
        throw ValidationError(context + ": voxel count " + std::to_string(voxels.size()) +
                              " does not match shape " + to_string(shape));
    for (size_t i = 0; i < voxels.size(); ++i) {
        const float v = voxels[i];
        if (!(v >= 0.0f && v <= 1.0f))
            throw ValidationError(context + ": invariant violation: voxel " + std::to_string(i) +
                                  " = " + std::to_string(v) + " outside [0,1]");
    }
}

bool operator==(const Volume& a, const Volume& b) {
    return a.shape == b.shape && a.voxels == b.voxels;
}

void Coordinate::validate(const Shape3& reference_shape) const {
    if (index < 0) throw ValidationError("coordinate index must be >= 0");
    const int64_t org[3] = {origin[0], origin[1], origin[2]};
    const int64_t ext[3] = {extent.d, extent.h, extent.w};
    const int64_t ref[3] = {reference_shape.d, reference_shape.h, reference_shape.w};
    static const char* axis_name[3] = {"depth", "height", "width"};
    for (int a = 0; a < 3; ++a) {
        if (org[a] < 0)
            throw ValidationError(std::string("coordinate origin negative on ") + axis_name[a] + " axis");
        if (org[a] + ext[a] > ref[a])
            throw ValidationError(std::string("coordinate exceeds reference shape on ") + axis_name[a] +
                                  " axis: " + std::to_string(org[a]) + "+" + std::to_string(ext[a]) +
                                  " > " + std::to_string(ref[a]));
    }
}

void PatternCrop::validate(const Shape3& canonical_shape) const {
    data.validate("crop " + patient_id + "/" + std::to_string(coordinate_index));
    if (data.shape != canonical_shape)
        throw ValidationError("crop shape " + to_string(data.shape) + " differs from canonical " +
                              to_string(canonical_shape));
    if (pseudo_label != coordinate_index)
        throw ValidationError("invariant violation: pseudo_label " + std::to_string(pseudo_label) +
                              " != coordinate_index " + std::to_string(coordinate_index));
    if (!(scale_factor > 0.0))
        throw ValidationError("scale_factor must be > 0");
}

} // namespace semgen
