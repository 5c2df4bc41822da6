#pragma once

// Serial textbook implementations of the kernels in kernels.hpp. These stay
// deliberately naive (one nested loop per definition, no blocking, no OpenMP)
// so they can serve as the trusted side of kernel tests and as the baseline
// in the benchmark tool.

#include <cmath>
#include <cstdint>
#include <vector>

#include "semgen/tensor.hpp"
#include "semgen/types.hpp"

namespace semgen::kernels_ref {

template <typename T>
void conv3d_forward(const Tensor<T>& in, const Tensor<T>& weight, const std::vector<T>& bias,
                    Tensor<T>& out) {
    const int64_t N = in.dim(0), Ci = in.dim(1), D = in.dim(2), H = in.dim(3), W = in.dim(4);
    const int64_t Co = weight.dim(0), K = weight.dim(2), P = K / 2;
    for (int64_t n = 0; n < N; ++n)
        for (int64_t co = 0; co < Co; ++co)
            for (int64_t z = 0; z < D; ++z)
                for (int64_t y = 0; y < H; ++y)
                    for (int64_t x = 0; x < W; ++x) {
                        double s = static_cast<double>(bias[static_cast<size_t>(co)]);
                        for (int64_t ci = 0; ci < Ci; ++ci)
                            for (int64_t kz = 0; kz < K; ++kz)
                                for (int64_t ky = 0; ky < K; ++ky)
                                    for (int64_t kx = 0; kx < K; ++kx) {
                                        const int64_t iz = z + kz - P, iy = y + ky - P, ix = x + kx - P;
                                        if (iz < 0 || iz >= D || iy < 0 || iy >= H || ix < 0 || ix >= W)
                                            continue;
                                        s += static_cast<double>(weight.at5(co, ci, kz, ky, kx)) *
                                             static_cast<double>(in.at5(n, ci, iz, iy, ix));
                                    }
                        out.at5(n, co, z, y, x) = static_cast<T>(s);
                    }
}

template <typename T>
void conv3d_backward_data(const Tensor<T>& gout, const Tensor<T>& weight, Tensor<T>& gin) {
    gin.fill(T(0));
    const int64_t N = gin.dim(0), Ci = gin.dim(1), D = gin.dim(2), H = gin.dim(3), W = gin.dim(4);
    const int64_t Co = weight.dim(0), K = weight.dim(2), P = K / 2;
    // scatter form: walk every output position and push its gradient back
    for (int64_t n = 0; n < N; ++n)
        for (int64_t co = 0; co < Co; ++co)
            for (int64_t z = 0; z < D; ++z)
                for (int64_t y = 0; y < H; ++y)
                    for (int64_t x = 0; x < W; ++x) {
                        const T go = gout.at5(n, co, z, y, x);
                        for (int64_t ci = 0; ci < Ci; ++ci)
                            for (int64_t kz = 0; kz < K; ++kz)
                                for (int64_t ky = 0; ky < K; ++ky)
                                    for (int64_t kx = 0; kx < K; ++kx) {
                                        const int64_t iz = z + kz - P, iy = y + ky - P, ix = x + kx - P;
                                        if (iz < 0 || iz >= D || iy < 0 || iy >= H || ix < 0 || ix >= W)
                                            continue;
                                        gin.at5(n, ci, iz, iy, ix) += weight.at5(co, ci, kz, ky, kx) * go;
                                    }
                    }
}

template <typename T>
void conv3d_backward_weights(const Tensor<T>& in, const Tensor<T>& gout, Tensor<T>& gweight,
                             std::vector<T>& gbias) {
    gweight.fill(T(0));
    const int64_t N = in.dim(0), Ci = in.dim(1), D = in.dim(2), H = in.dim(3), W = in.dim(4);
    const int64_t Co = gweight.dim(0), K = gweight.dim(2), P = K / 2;
    for (size_t co = 0; co < gbias.size(); ++co) gbias[co] = T(0);
    for (int64_t n = 0; n < N; ++n)
        for (int64_t co = 0; co < Co; ++co)
            for (int64_t z = 0; z < D; ++z)
                for (int64_t y = 0; y < H; ++y)
                    for (int64_t x = 0; x < W; ++x) {
                        const T go = gout.at5(n, co, z, y, x);
                        gbias[static_cast<size_t>(co)] += go;
                        for (int64_t ci = 0; ci < Ci; ++ci)
                            for (int64_t kz = 0; kz < K; ++kz)
                                for (int64_t ky = 0; ky < K; ++ky)
                                    for (int64_t kx = 0; kx < K; ++kx) {
                                        const int64_t iz = z + kz - P, iy = y + ky - P, ix = x + kx - P;
                                        if (iz < 0 || iz >= D || iy < 0 || iy >= H || ix < 0 || ix >= W)
                                            continue;
                                        gweight.at5(co, ci, kz, ky, kx) += go * in.at5(n, ci, iz, iy, ix);
                                    }
                    }
}

template <typename T>
void groupnorm_forward(const Tensor<T>& in, const std::vector<T>& gamma, const std::vector<T>& beta,
                       int64_t groups, double eps, Tensor<T>& out) {
    const int64_t N = in.dim(0), C = in.dim(1);
    const int64_t spatial = in.dim(2) * in.dim(3) * in.dim(4);
    const int64_t cg = C / groups;
    for (int64_t n = 0; n < N; ++n)
        for (int64_t g = 0; g < groups; ++g) {
            double sum = 0.0;
            int64_t count = 0;
            for (int64_t c = g * cg; c < (g + 1) * cg; ++c)
                for (int64_t i = 0; i < spatial; ++i) {
                    sum += static_cast<double>(in[(n * C + c) * spatial + i]);
                    ++count;
                }
            const double mu = sum / static_cast<double>(count);
            double var = 0.0;
            for (int64_t c = g * cg; c < (g + 1) * cg; ++c)
                for (int64_t i = 0; i < spatial; ++i) {
                    const double d = static_cast<double>(in[(n * C + c) * spatial + i]) - mu;
                    var += d * d;
                }
            var /= static_cast<double>(count);
            const double is = 1.0 / std::sqrt(var + eps);
            for (int64_t c = g * cg; c < (g + 1) * cg; ++c)
                for (int64_t i = 0; i < spatial; ++i) {
                    const double xhat = (static_cast<double>(in[(n * C + c) * spatial + i]) - mu) * is;
                    out[(n * C + c) * spatial + i] =
                        static_cast<T>(static_cast<double>(gamma[static_cast<size_t>(c)]) * xhat +
                                       static_cast<double>(beta[static_cast<size_t>(c)]));
                }
        }
}

template <typename T>
void linear_forward(const Tensor<T>& in, const Tensor<T>& weight, const std::vector<T>& bias,
                    Tensor<T>& out) {
    const int64_t N = in.dim(0), I = in.dim(1), O = weight.dim(0);
    for (int64_t n = 0; n < N; ++n)
        for (int64_t o = 0; o < O; ++o) {
            double s = static_cast<double>(bias[static_cast<size_t>(o)]);
            for (int64_t i = 0; i < I; ++i)
                s += static_cast<double>(weight.at2(o, i)) * static_cast<double>(in.at2(n, i));
            out.at2(n, o) = static_cast<T>(s);
        }
}

template <typename T>
void maxpool2_forward(const Tensor<T>& in, Tensor<T>& out) {
    const int64_t N = in.dim(0), C = in.dim(1), OD = out.dim(2), OH = out.dim(3), OW = out.dim(4);
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c)
            for (int64_t oz = 0; oz < OD; ++oz)
                for (int64_t oy = 0; oy < OH; ++oy)
                    for (int64_t ox = 0; ox < OW; ++ox) {
                        T best = in.at5(n, c, 2 * oz, 2 * oy, 2 * ox);
                        for (int64_t dz = 0; dz < 2; ++dz)
                            for (int64_t dy = 0; dy < 2; ++dy)
                                for (int64_t dx = 0; dx < 2; ++dx)
                                    best = std::max(best, in.at5(n, c, 2 * oz + dz, 2 * oy + dy, 2 * ox + dx));
                        out.at5(n, c, oz, oy, ox) = best;
                    }
}

template <typename T>
void upsample2_forward(const Tensor<T>& in, Tensor<T>& out) {
    const int64_t N = in.dim(0), C = in.dim(1), OD = out.dim(2), OH = out.dim(3), OW = out.dim(4);
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c)
            for (int64_t z = 0; z < OD; ++z)
                for (int64_t y = 0; y < OH; ++y)
                    for (int64_t x = 0; x < OW; ++x)
                        out.at5(n, c, z, y, x) = in.at5(n, c, z / 2, y / 2, x / 2);
}

Volume trilinear_resize(const Volume& in, const Shape3& out_shape);

} // namespace semgen::kernels_ref
