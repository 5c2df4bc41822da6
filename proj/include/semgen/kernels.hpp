#pragma once

// Data-parallel kernels behind the network and the volume pipeline. Every
// kernel computes each output element on exactly one thread with a fixed
// inner summation order, so results are bit-identical for any worker count.
// Plain serial counterparts for testing live in kernels_ref.hpp.

#include <cmath>
#include <cstdint>
#include <vector>

#include <omp.h>

#include "semgen/tensor.hpp"
#include "semgen/types.hpp"

namespace semgen {

inline void set_workers(int n) { omp_set_num_threads(n < 1 ? 1 : n); }
inline int max_workers() { return omp_get_max_threads(); }

namespace kernels {

// in (N,Ci,D,H,W), weight (Co,Ci,K,K,K) with odd K, stride 1, pad K/2.
template <typename T>
void conv3d_forward(const Tensor<T>& in, const Tensor<T>& weight, const std::vector<T>& bias,
                    Tensor<T>& out) {
    const int64_t N = in.dim(0), Ci = in.dim(1), D = in.dim(2), H = in.dim(3), W = in.dim(4);
    const int64_t Co = weight.dim(0), K = weight.dim(2), P = K / 2;
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t n = 0; n < N; ++n) {
        for (int64_t co = 0; co < Co; ++co) {
            for (int64_t z = 0; z < D; ++z) {
                for (int64_t y = 0; y < H; ++y) {
                    T* orow = &out.at5(n, co, z, y, 0);
                    for (int64_t x = 0; x < W; ++x) orow[x] = bias[static_cast<size_t>(co)];
                    for (int64_t ci = 0; ci < Ci; ++ci) {
                        for (int64_t kz = 0; kz < K; ++kz) {
                            const int64_t iz = z + kz - P;
                            if (iz < 0 || iz >= D) continue;
                            for (int64_t ky = 0; ky < K; ++ky) {
                                const int64_t iy = y + ky - P;
                                if (iy < 0 || iy >= H) continue;
                                const T* irow = &in.at5(n, ci, iz, iy, 0);
                                const T* wk = &weight.at5(co, ci, kz, ky, 0);
                                for (int64_t kx = 0; kx < K; ++kx) {
                                    const T wv = wk[kx];
                                    const int64_t lo = std::max<int64_t>(0, P - kx);
                                    const int64_t hi = std::min<int64_t>(W, W + P - kx);
                                    const T* ishift = irow + (kx - P);
                                    for (int64_t x = lo; x < hi; ++x) orow[x] += wv * ishift[x];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void conv3d_backward_data(const Tensor<T>& gout, const Tensor<T>& weight, Tensor<T>& gin) {
    const int64_t N = gin.dim(0), Ci = gin.dim(1), D = gin.dim(2), H = gin.dim(3), W = gin.dim(4);
    const int64_t Co = weight.dim(0), K = weight.dim(2), P = K / 2;
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t n = 0; n < N; ++n) {
        for (int64_t ci = 0; ci < Ci; ++ci) {
            for (int64_t iz = 0; iz < D; ++iz) {
                for (int64_t iy = 0; iy < H; ++iy) {
                    T* grow = &gin.at5(n, ci, iz, iy, 0);
                    for (int64_t x = 0; x < W; ++x) grow[x] = T(0);
                    for (int64_t co = 0; co < Co; ++co) {
                        for (int64_t kz = 0; kz < K; ++kz) {
                            const int64_t oz = iz - kz + P;
                            if (oz < 0 || oz >= D) continue;
                            for (int64_t ky = 0; ky < K; ++ky) {
                                const int64_t oy = iy - ky + P;
                                if (oy < 0 || oy >= H) continue;
                                const T* gorow = &gout.at5(n, co, oz, oy, 0);
                                const T* wk = &weight.at5(co, ci, kz, ky, 0);
                                for (int64_t kx = 0; kx < K; ++kx) {
                                    const T wv = wk[kx];
                                    const int64_t lo = std::max<int64_t>(0, kx - P);
                                    const int64_t hi = std::min<int64_t>(W, W + kx - P);
                                    const T* gshift = gorow + (P - kx);
                                    for (int64_t x = lo; x < hi; ++x) grow[x] += wv * gshift[x];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void conv3d_backward_weights(const Tensor<T>& in, const Tensor<T>& gout, Tensor<T>& gweight,
                             std::vector<T>& gbias) {
    const int64_t N = in.dim(0), Ci = in.dim(1), D = in.dim(2), H = in.dim(3), W = in.dim(4);
    const int64_t Co = gweight.dim(0), K = gweight.dim(2), P = K / 2;
#pragma omp parallel for schedule(static)
    for (int64_t co = 0; co < Co; ++co) {
        std::vector<double> acc(static_cast<size_t>(Ci * K * K * K), 0.0);
        double bias_acc = 0.0;
        for (int64_t n = 0; n < N; ++n) {
            for (int64_t oz = 0; oz < D; ++oz) {
                for (int64_t oy = 0; oy < H; ++oy) {
                    const T* gorow = &gout.at5(n, co, oz, oy, 0);
                    for (int64_t x = 0; x < W; ++x) bias_acc += static_cast<double>(gorow[x]);
                    for (int64_t ci = 0; ci < Ci; ++ci) {
                        for (int64_t kz = 0; kz < K; ++kz) {
                            const int64_t iz = oz + kz - P;
                            if (iz < 0 || iz >= D) continue;
                            for (int64_t ky = 0; ky < K; ++ky) {
                                const int64_t iy = oy + ky - P;
                                if (iy < 0 || iy >= H) continue;
                                const T* irow = &in.at5(n, ci, iz, iy, 0);
                                double* arow = &acc[static_cast<size_t>(((ci * K + kz) * K + ky) * K)];
                                for (int64_t kx = 0; kx < K; ++kx) {
                                    const int64_t lo = std::max<int64_t>(0, P - kx);
                                    const int64_t hi = std::min<int64_t>(W, W + P - kx);
                                    const T* ishift = irow + (kx - P);
                                    double s = 0.0;
                                    for (int64_t x = lo; x < hi; ++x)
                                        s += static_cast<double>(gorow[x]) * static_cast<double>(ishift[x]);
                                    arow[kx] += s;
                                }
                            }
                        }
                    }
                }
            }
        }
        T* gw = &gweight[co * Ci * K * K * K];
        for (size_t i = 0; i < acc.size(); ++i) gw[static_cast<int64_t>(i)] = static_cast<T>(acc[i]);
        gbias[static_cast<size_t>(co)] = static_cast<T>(bias_acc);
    }
}

// 2x2x2 max pooling, stride 2. argmax keeps the flat input index (first max wins).
template <typename T>
void maxpool2_forward(const Tensor<T>& in, Tensor<T>& out, Tensor<int64_t>& argmax) {
    const int64_t N = in.dim(0), C = in.dim(1), OD = out.dim(2), OH = out.dim(3), OW = out.dim(4);
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t n = 0; n < N; ++n) {
        for (int64_t c = 0; c < C; ++c) {
            for (int64_t oz = 0; oz < OD; ++oz) {
                for (int64_t oy = 0; oy < OH; ++oy) {
                    for (int64_t ox = 0; ox < OW; ++ox) {
                        T best{};
                        int64_t best_idx = -1;
                        for (int64_t dz = 0; dz < 2; ++dz)
                            for (int64_t dy = 0; dy < 2; ++dy)
                                for (int64_t dx = 0; dx < 2; ++dx) {
                                    const int64_t idx = in.index5(n, c, 2 * oz + dz, 2 * oy + dy, 2 * ox + dx);
                                    const T v = in[idx];
                                    if (best_idx < 0 || v > best) {
                                        best = v;
                                        best_idx = idx;
                                    }
                                }
                        out.at5(n, c, oz, oy, ox) = best;
                        argmax.at5(n, c, oz, oy, ox) = best_idx;
                    }
                }
            }
        }
    }
}

template <typename T>
void maxpool2_backward(const Tensor<T>& gout, const Tensor<int64_t>& argmax, Tensor<T>& gin) {
    gin.fill(T(0));
    const int64_t N = gout.dim(0), C = gout.dim(1);
    const int64_t per_chan = gout.dim(2) * gout.dim(3) * gout.dim(4);
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t n = 0; n < N; ++n) {
        for (int64_t c = 0; c < C; ++c) {
            const int64_t base = (n * C + c) * per_chan;
            for (int64_t i = 0; i < per_chan; ++i) gin[argmax[base + i]] += gout[base + i];
        }
    }
}

// Nearest-neighbor x2 upsampling.
template <typename T>
void upsample2_forward(const Tensor<T>& in, Tensor<T>& out) {
    const int64_t N = in.dim(0), C = in.dim(1), OD = out.dim(2), OH = out.dim(3), OW = out.dim(4);
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t n = 0; n < N; ++n) {
        for (int64_t c = 0; c < C; ++c) {
            for (int64_t z = 0; z < OD; ++z)
                for (int64_t y = 0; y < OH; ++y) {
                    const T* irow = &in.at5(n, c, z / 2, y / 2, 0);
                    T* orow = &out.at5(n, c, z, y, 0);
                    for (int64_t x = 0; x < OW; ++x) orow[x] = irow[x / 2];
                }
        }
    }
}

template <typename T>
void upsample2_backward(const Tensor<T>& gout, Tensor<T>& gin) {
    const int64_t N = gin.dim(0), C = gin.dim(1), ID = gin.dim(2), IH = gin.dim(3), IW = gin.dim(4);
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t n = 0; n < N; ++n) {
        for (int64_t c = 0; c < C; ++c) {
            for (int64_t z = 0; z < ID; ++z)
                for (int64_t y = 0; y < IH; ++y)
                    for (int64_t x = 0; x < IW; ++x) {
                        T s{};
                        for (int64_t dz = 0; dz < 2; ++dz)
                            for (int64_t dy = 0; dy < 2; ++dy)
                                for (int64_t dx = 0; dx < 2; ++dx)
                                    s += gout.at5(n, c, 2 * z + dz, 2 * y + dy, 2 * x + dx);
                        gin.at5(n, c, z, y, x) = s;
                    }
        }
    }
}

template <typename T>
void relu_forward(const Tensor<T>& in, Tensor<T>& out) {
    const int64_t n = in.numel();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) out[i] = in[i] > T(0) ? in[i] : T(0);
}

template <typename T>
void relu_backward(const Tensor<T>& gout, const Tensor<T>& in, Tensor<T>& gin) {
    const int64_t n = in.numel();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) gin[i] = in[i] > T(0) ? gout[i] : T(0);
}

template <typename T>
void sigmoid_forward(const Tensor<T>& in, Tensor<T>& out) {
    const int64_t n = in.numel();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) out[i] = T(1) / (T(1) + std::exp(-in[i]));
}

template <typename T>
void sigmoid_backward(const Tensor<T>& gout, const Tensor<T>& out, Tensor<T>& gin) {
    const int64_t n = out.numel();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) gin[i] = gout[i] * out[i] * (T(1) - out[i]);
}

// Group normalization over (C/groups, D, H, W) slices. Saved statistics are
// double regardless of T.
template <typename T>
void groupnorm_forward(const Tensor<T>& in, const std::vector<T>& gamma, const std::vector<T>& beta,
                       int64_t groups, double eps, Tensor<T>& out, std::vector<double>& mean,
                       std::vector<double>& inv_std) {
    const int64_t N = in.dim(0), C = in.dim(1);
    const int64_t spatial = in.dim(2) * in.dim(3) * in.dim(4);
    const int64_t cg = C / groups;
    const int64_t group_elems = cg * spatial;
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t n = 0; n < N; ++n) {
        for (int64_t g = 0; g < groups; ++g) {
            const int64_t base = (n * C + g * cg) * spatial;
            double sum = 0.0, sum_sq = 0.0;
            for (int64_t i = 0; i < group_elems; ++i) {
                const double v = static_cast<double>(in[base + i]);
                sum += v;
                sum_sq += v * v;
            }
            const double mu = sum / static_cast<double>(group_elems);
            const double var = std::max(0.0, sum_sq / static_cast<double>(group_elems) - mu * mu);
            const double is = 1.0 / std::sqrt(var + eps);
            mean[static_cast<size_t>(n * groups + g)] = mu;
            inv_std[static_cast<size_t>(n * groups + g)] = is;
            for (int64_t c = g * cg; c < (g + 1) * cg; ++c) {
                const double ga = static_cast<double>(gamma[static_cast<size_t>(c)]);
                const double be = static_cast<double>(beta[static_cast<size_t>(c)]);
                const int64_t cbase = (n * C + c) * spatial;
                for (int64_t i = 0; i < spatial; ++i) {
                    const double xhat = (static_cast<double>(in[cbase + i]) - mu) * is;
                    out[cbase + i] = static_cast<T>(ga * xhat + be);
                }
            }
        }
    }
}

template <typename T>
void groupnorm_backward(const Tensor<T>& gout, const Tensor<T>& in, const std::vector<T>& gamma,
                        const std::vector<double>& mean, const std::vector<double>& inv_std,
                        int64_t groups, Tensor<T>& gin, std::vector<T>& ggamma, std::vector<T>& gbeta) {
    const int64_t N = in.dim(0), C = in.dim(1);
    const int64_t spatial = in.dim(2) * in.dim(3) * in.dim(4);
    const int64_t cg = C / groups;
    const int64_t group_elems = cg * spatial;
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t n = 0; n < N; ++n) {
        for (int64_t g = 0; g < groups; ++g) {
            const double mu = mean[static_cast<size_t>(n * groups + g)];
            const double is = inv_std[static_cast<size_t>(n * groups + g)];
            double m1 = 0.0, m2 = 0.0;
            for (int64_t c = g * cg; c < (g + 1) * cg; ++c) {
                const double ga = static_cast<double>(gamma[static_cast<size_t>(c)]);
                const int64_t cbase = (n * C + c) * spatial;
                for (int64_t i = 0; i < spatial; ++i) {
                    const double xhat = (static_cast<double>(in[cbase + i]) - mu) * is;
                    const double dxhat = static_cast<double>(gout[cbase + i]) * ga;
                    m1 += dxhat;
                    m2 += dxhat * xhat;
                }
            }
            m1 /= static_cast<double>(group_elems);
            m2 /= static_cast<double>(group_elems);
            for (int64_t c = g * cg; c < (g + 1) * cg; ++c) {
                const double ga = static_cast<double>(gamma[static_cast<size_t>(c)]);
                const int64_t cbase = (n * C + c) * spatial;
                for (int64_t i = 0; i < spatial; ++i) {
                    const double xhat = (static_cast<double>(in[cbase + i]) - mu) * is;
                    const double dxhat = static_cast<double>(gout[cbase + i]) * ga;
                    gin[cbase + i] = static_cast<T>(is * (dxhat - m1 - xhat * m2));
                }
            }
        }
    }
    // parameter gradients: one thread per channel, fixed (n, i) order
#pragma omp parallel for schedule(static)
    for (int64_t c = 0; c < C; ++c) {
        const int64_t g = c / cg;
        double dga = 0.0, dbe = 0.0;
        for (int64_t n = 0; n < N; ++n) {
            const double mu = mean[static_cast<size_t>(n * groups + g)];
            const double is = inv_std[static_cast<size_t>(n * groups + g)];
            const int64_t cbase = (n * C + c) * spatial;
            for (int64_t i = 0; i < spatial; ++i) {
                const double xhat = (static_cast<double>(in[cbase + i]) - mu) * is;
                const double go = static_cast<double>(gout[cbase + i]);
                dga += go * xhat;
                dbe += go;
            }
        }
        ggamma[static_cast<size_t>(c)] = static_cast<T>(dga);
        gbeta[static_cast<size_t>(c)] = static_cast<T>(dbe);
    }
}

// in (N,I), weight (O,I), out (N,O)
template <typename T>
void linear_forward(const Tensor<T>& in, const Tensor<T>& weight, const std::vector<T>& bias,
                    Tensor<T>& out) {
    const int64_t N = in.dim(0), I = in.dim(1), O = weight.dim(0);
#pragma omp parallel for schedule(static)
    for (int64_t n = 0; n < N; ++n) {
        const T* irow = &in.at2(n, 0);
        for (int64_t o = 0; o < O; ++o) {
            const T* wrow = &weight.at2(o, 0);
            double s = static_cast<double>(bias[static_cast<size_t>(o)]);
            for (int64_t i = 0; i < I; ++i) s += static_cast<double>(wrow[i]) * static_cast<double>(irow[i]);
            out.at2(n, o) = static_cast<T>(s);
        }
    }
}

template <typename T>
void linear_backward(const Tensor<T>& gout, const Tensor<T>& in, const Tensor<T>& weight,
                     Tensor<T>& gin, Tensor<T>& gweight, std::vector<T>& gbias) {
    const int64_t N = in.dim(0), I = in.dim(1), O = weight.dim(0);
#pragma omp parallel for schedule(static)
    for (int64_t n = 0; n < N; ++n) {
        const T* gorow = &gout.at2(n, 0);
        T* girow = &gin.at2(n, 0);
        for (int64_t i = 0; i < I; ++i) {
            double s = 0.0;
            for (int64_t o = 0; o < O; ++o)
                s += static_cast<double>(gorow[o]) * static_cast<double>(weight.at2(o, i));
            girow[i] = static_cast<T>(s);
        }
    }
#pragma omp parallel for schedule(static)
    for (int64_t o = 0; o < O; ++o) {
        T* gwrow = &gweight.at2(o, 0);
        double gb = 0.0;
        std::vector<double> acc(static_cast<size_t>(I), 0.0);
        for (int64_t n = 0; n < N; ++n) {
            const double go = static_cast<double>(gout.at2(n, o));
            gb += go;
            const T* irow = &in.at2(n, 0);
            for (int64_t i = 0; i < I; ++i) acc[static_cast<size_t>(i)] += go * static_cast<double>(irow[i]);
        }
        for (int64_t i = 0; i < I; ++i) gwrow[i] = static_cast<T>(acc[static_cast<size_t>(i)]);
        gbias[static_cast<size_t>(o)] = static_cast<T>(gb);
    }
}

// global average pool (N,C,D,H,W) -> (N,C)
template <typename T>
void gap_forward(const Tensor<T>& in, Tensor<T>& out) {
    const int64_t N = in.dim(0), C = in.dim(1);
    const int64_t spatial = in.dim(2) * in.dim(3) * in.dim(4);
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c) {
            const int64_t base = (n * C + c) * spatial;
            double s = 0.0;
            for (int64_t i = 0; i < spatial; ++i) s += static_cast<double>(in[base + i]);
            out.at2(n, c) = static_cast<T>(s / static_cast<double>(spatial));
        }
}

template <typename T>
void gap_backward(const Tensor<T>& gout, Tensor<T>& gin) {
    const int64_t N = gin.dim(0), C = gin.dim(1);
    const int64_t spatial = gin.dim(2) * gin.dim(3) * gin.dim(4);
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c) {
            const T g = gout.at2(n, c) / static_cast<T>(spatial);
            const int64_t base = (n * C + c) * spatial;
            for (int64_t i = 0; i < spatial; ++i) gin[base + i] = g;
        }
}

template <typename T>
void concat_channels(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>& out) {
    const int64_t N = a.dim(0), Ca = a.dim(1), Cb = b.dim(1);
    const int64_t spatial = a.dim(2) * a.dim(3) * a.dim(4);
#pragma omp parallel for schedule(static)
    for (int64_t n = 0; n < N; ++n) {
        std::copy(a.data() + n * Ca * spatial, a.data() + (n + 1) * Ca * spatial,
                  out.data() + n * (Ca + Cb) * spatial);
        std::copy(b.data() + n * Cb * spatial, b.data() + (n + 1) * Cb * spatial,
                  out.data() + (n * (Ca + Cb) + Ca) * spatial);
    }
}

template <typename T>
void split_channels(const Tensor<T>& gout, Tensor<T>& ga, Tensor<T>& gb) {
    const int64_t N = ga.dim(0), Ca = ga.dim(1), Cb = gb.dim(1);
    const int64_t spatial = ga.dim(2) * ga.dim(3) * ga.dim(4);
#pragma omp parallel for schedule(static)
    for (int64_t n = 0; n < N; ++n) {
        std::copy(gout.data() + n * (Ca + Cb) * spatial, gout.data() + (n * (Ca + Cb) + Ca) * spatial,
                  ga.data() + n * Ca * spatial);
        std::copy(gout.data() + (n * (Ca + Cb) + Ca) * spatial, gout.data() + (n + 1) * (Ca + Cb) * spatial,
                  gb.data() + n * Cb * spatial);
    }
}

template <typename T>
void add_inplace(Tensor<T>& a, const Tensor<T>& b) {
    const int64_t n = a.numel();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) a[i] += b[i];
}

template <typename T>
void scale_inplace(Tensor<T>& a, T s) {
    const int64_t n = a.numel();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) a[i] *= s;
}

// numerically-stable row softmax, (N,C)
template <typename T>
void softmax_rows(const Tensor<T>& in, Tensor<T>& out) {
    const int64_t N = in.dim(0), C = in.dim(1);
#pragma omp parallel for schedule(static)
    for (int64_t n = 0; n < N; ++n) {
        const T* irow = &in.at2(n, 0);
        T* orow = &out.at2(n, 0);
        double mx = static_cast<double>(irow[0]);
        for (int64_t c = 1; c < C; ++c) mx = std::max(mx, static_cast<double>(irow[c]));
        double sum = 0.0;
        for (int64_t c = 0; c < C; ++c) {
            const double e = std::exp(static_cast<double>(irow[c]) - mx);
            orow[c] = static_cast<T>(e);
            sum += e;
        }
        for (int64_t c = 0; c < C; ++c) orow[c] = static_cast<T>(static_cast<double>(orow[c]) / sum);
    }
}

// Adam update; moments are kept in double for all T.
template <typename T>
void adam_step(T* param, const T* grad, double* m, double* v, int64_t n, int64_t t, double lr,
               double beta1, double beta2, double eps) {
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) {
        const double g = static_cast<double>(grad[i]);
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        param[i] = static_cast<T>(static_cast<double>(param[i]) - lr * mhat / (std::sqrt(vhat) + eps));
    }
}

// Trilinear resize with align-corners mapping. Equal shapes reproduce the
// input bit-exactly (integer source coordinates, weight 1 on a single voxel).
Volume trilinear_resize(const Volume& in, const Shape3& out_shape);

} // namespace kernels
} // namespace semgen
