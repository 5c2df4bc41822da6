#pragma once

// Pretext losses. Values are always accumulated in double no matter what the
// activation scalar is; backward passes write gradients of the exact forward
// expression (including the probability clamp).

#include <cmath>
#include <cstdint>

#include "semgen/config.hpp"
#include "semgen/errors.hpp"
#include "semgen/tensor.hpp"

namespace semgen {

inline constexpr double kProbClampEps = 1e-7;

// categorical cross-entropy, -(1/N) sum_bc Y log(clamp(P, eps, 1))
template <typename T>
double loss_cls(const Tensor<T>& probs, const Tensor<T>& onehot) {
    if (!probs.same_shape(onehot)) throw ValidationError("loss_cls: P and Y shapes differ");
    const int64_t N = probs.dim(0), C = probs.dim(1);
    double total = 0.0;
    for (int64_t b = 0; b < N; ++b) {
        double row = 0.0;
        for (int64_t c = 0; c < C; ++c) {
            const double y = static_cast<double>(onehot.at2(b, c));
            if (y != 0.0 && y != 1.0) throw ValidationError("loss_cls: Y is not one-hot");
            row += y;
            if (y == 0.0) continue;
            const double p = std::clamp(static_cast<double>(probs.at2(b, c)), kProbClampEps, 1.0);
            total -= y * std::log(p);
        }
        if (row != 1.0) throw ValidationError("loss_cls: Y is not one-hot");
    }
    return total / static_cast<double>(N);
}

// dL/dP. The clamp kills the gradient below eps.
template <typename T>
void loss_cls_backward(const Tensor<T>& probs, const Tensor<T>& onehot, Tensor<T>& gprobs) {
    const int64_t N = probs.dim(0), C = probs.dim(1);
    for (int64_t b = 0; b < N; ++b)
        for (int64_t c = 0; c < C; ++c) {
            const double y = static_cast<double>(onehot.at2(b, c));
            const double p = static_cast<double>(probs.at2(b, c));
            const double g =
                (y != 0.0 && p > kProbClampEps) ? -y / (std::min(p, 1.0) * static_cast<double>(N)) : 0.0;
            gprobs.at2(b, c) = static_cast<T>(g);
        }
}

// mean over the batch of the Euclidean norm (not squared) of the voxel difference
template <typename T>
double loss_rec(const Tensor<T>& originals, const Tensor<T>& recons) {
    if (!originals.same_shape(recons)) throw ValidationError("loss_rec: shape mismatch");
    const int64_t N = originals.dim(0);
    const int64_t per = originals.numel() / N;
    double total = 0.0;
    for (int64_t b = 0; b < N; ++b) {
        double ss = 0.0;
        for (int64_t i = 0; i < per; ++i) {
            const double d = static_cast<double>(originals[b * per + i]) -
                             static_cast<double>(recons[b * per + i]);
            ss += d * d;
        }
        total += std::sqrt(ss);
    }
    return total / static_cast<double>(N);
}

// dL/dX' = (X' - X) / (N * ||X - X'||); zero at the (non-differentiable) origin
template <typename T>
void loss_rec_backward(const Tensor<T>& originals, const Tensor<T>& recons, Tensor<T>& grecons) {
    const int64_t N = originals.dim(0);
    const int64_t per = originals.numel() / N;
    for (int64_t b = 0; b < N; ++b) {
        double ss = 0.0;
        for (int64_t i = 0; i < per; ++i) {
            const double d = static_cast<double>(recons[b * per + i]) -
                             static_cast<double>(originals[b * per + i]);
            ss += d * d;
        }
        const double norm = std::sqrt(ss);
        const double scale = norm > 1e-12 ? 1.0 / (norm * static_cast<double>(N)) : 0.0;
        for (int64_t i = 0; i < per; ++i) {
            const double d = static_cast<double>(recons[b * per + i]) -
                             static_cast<double>(originals[b * per + i]);
            grecons[b * per + i] = static_cast<T>(d * scale);
        }
    }
}

inline double loss_total(double l_cls, double l_rec, const LossWeights& w) {
    return w.lambda_cls * l_cls + w.lambda_rec * l_rec;
}

// chain rule through softmax given dL/dP: g_j = P_j (gP_j - sum_c gP_c P_c)
template <typename T>
void softmax_backward(const Tensor<T>& probs, const Tensor<T>& gprobs, Tensor<T>& glogits) {
    const int64_t N = probs.dim(0), C = probs.dim(1);
    for (int64_t b = 0; b < N; ++b) {
        double dot = 0.0;
        for (int64_t c = 0; c < C; ++c)
            dot += static_cast<double>(gprobs.at2(b, c)) * static_cast<double>(probs.at2(b, c));
        for (int64_t c = 0; c < C; ++c) {
            const double p = static_cast<double>(probs.at2(b, c));
            glogits.at2(b, c) = static_cast<T>(p * (static_cast<double>(gprobs.at2(b, c)) - dot));
        }
    }
}

} // namespace semgen
