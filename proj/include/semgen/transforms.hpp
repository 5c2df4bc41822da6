#pragma once

// The four restoration-source transforms: nonlinear intensity remap, local
// shuffling, in-painting, out-painting, plus the seeded composition policy.
// Every op returns the step descriptor needed to replay it bit-exactly on the
// same input (realized regions/curve parameters, not the sampling config).

#include <cstdint>
#include <string>
#include <utility>

#include "semgen/config.hpp"
#include "semgen/types.hpp"

namespace semgen {

// Monotone cubic Bezier on [0,1]: x-controls (0, x1, x2, 1) are monotone for
// any x1,x2 in [0,1], y-controls (0, y1, y2, 1) rising or (1, y1, y2, 0)
// falling. x1=y1=1/3, x2=y2=2/3 gives the exact identity.
struct NonlinearCurve {
    double x1 = 1.0 / 3.0, x2 = 2.0 / 3.0;
    double y1 = 1.0 / 3.0, y2 = 2.0 / 3.0;
    bool decreasing = false;
};

double nonlinear_map_value(const NonlinearCurve& curve, double v);
Volume apply_nonlinear_curve(const Volume& crop, const NonlinearCurve& curve);

std::pair<Volume, TransformStep> nonlinear_intensity(const Volume& crop, uint64_t seed);
std::pair<Volume, TransformStep> local_shuffle(const Volume& crop, const TransformConfig& cfg,
                                               uint64_t seed);
std::pair<Volume, TransformStep> inpaint(const Volume& crop, const TransformConfig& cfg,
                                         uint64_t seed);
std::pair<Volume, TransformStep> outpaint(const Volume& crop, const TransformConfig& cfg,
                                          uint64_t seed);

// nonlinear (p_nonlinear) -> local_shuffle (p_shuffle) -> one of
// inpaint/outpaint, equiprobable (p_paint)
std::pair<Volume, TransformRecord> compose(const Volume& crop, const TransformConfig& cfg,
                                           uint64_t seed);

// replays recorded steps on the original crop; bit-exact reproduction
Volume apply_step(const Volume& crop, const TransformStep& step);
Volume apply_record(const Volume& crop, const TransformRecord& record);

// audit serialization
std::string record_to_json_text(const TransformRecord& record);
TransformRecord record_from_json_text(const std::string& text);

} // namespace semgen
