#include "semgen/kernels.hpp"
#include "semgen/kernels_ref.hpp"

#include <algorithm>
#include <array>

namespace semgen {
namespace {

// align-corners source coordinate for output index i
inline double source_coord(int64_t i, int64_t in_extent, int64_t out_extent) {
    if (out_extent == 1) return static_cast<double>(in_extent - 1) / 2.0;
    return static_cast<double>(i) *
           (static_cast<double>(in_extent - 1) / static_cast<double>(out_extent - 1));
}

inline float interp_at(const Volume& in, double sz, double sy, double sx) {
    const auto lo = [](double s) { return static_cast<int64_t>(std::floor(s)); };
    const int64_t z0 = lo(sz), y0 = lo(sy), x0 = lo(sx);
    const int64_t z1 = std::min(z0 + 1, in.shape.d - 1);
    const int64_t y1 = std::min(y0 + 1, in.shape.h - 1);
    const int64_t x1 = std::min(x0 + 1, in.shape.w - 1);
    const double fz = sz - static_cast<double>(z0);
    const double fy = sy - static_cast<double>(y0);
    const double fx = sx - static_cast<double>(x0);
    double v = 0.0;
    const std::array<int64_t, 2> zs{z0, z1}, ys{y0, y1}, xs{x0, x1};
    const std::array<double, 2> wz{1.0 - fz, fz}, wy{1.0 - fy, fy}, wx{1.0 - fx, fx};
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            for (int c = 0; c < 2; ++c) {
                const double w = wz[a] * wy[b] * wx[c];
                if (w == 0.0) continue;
                v += w * static_cast<double>(in.at(zs[a], ys[b], xs[c]));
            }
    return static_cast<float>(std::clamp(v, 0.0, 1.0));
}

} // namespace

namespace kernels {

Volume trilinear_resize(const Volume& in, const Shape3& out_shape) {
    Volume out;
    out.shape = out_shape;
    out.voxels.resize(static_cast<size_t>(out_shape.voxels()));
    out.spacing = in.spacing;
#pragma omp parallel for schedule(static)
    for (int64_t z = 0; z < out_shape.d; ++z) {
        const double sz = source_coord(z, in.shape.d, out_shape.d);
        for (int64_t y = 0; y < out_shape.h; ++y) {
            const double sy = source_coord(y, in.shape.h, out_shape.h);
            for (int64_t x = 0; x < out_shape.w; ++x) {
                const double sx = source_coord(x, in.shape.w, out_shape.w);
                out.at(z, y, x) = interp_at(in, sz, sy, sx);
            }
        }
    }
    return out;
}

} // namespace kernels

namespace kernels_ref {

Volume trilinear_resize(const Volume& in, const Shape3& out_shape) {
    Volume out;
    out.shape = out_shape;
    out.voxels.resize(static_cast<size_t>(out_shape.voxels()));
    out.spacing = in.spacing;
    for (int64_t z = 0; z < out_shape.d; ++z)
        for (int64_t y = 0; y < out_shape.h; ++y)
            for (int64_t x = 0; x < out_shape.w; ++x)
                out.at(z, y, x) = interp_at(in, source_coord(z, in.shape.d, out_shape.d),
                                            source_coord(y, in.shape.h, out_shape.h),
                                            source_coord(x, in.shape.w, out_shape.w));
    return out;
}

} // namespace kernels_ref
} // namespace semgen
