#pragma once

// Layer objects: thin stateful wrappers over the kernels that cache whatever
// the backward pass needs. Templated on the activation scalar so the same
// graph runs in float for training and double for gradient checking.

#include <cstdint>
#include <string>
#include <vector>

#include "semgen/kernels.hpp"
#include "semgen/rng.hpp"
#include "semgen/tensor.hpp"

namespace semgen {

template <typename T>
struct Param {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;

    void init_shape(std::string n, std::vector<int64_t> shape) {
        name = std::move(n);
        value = Tensor<T>(shape);
        grad = Tensor<T>(std::move(shape));
    }
    uint64_t checksum() const {
        return fnv1a64(value.data(), static_cast<size_t>(value.numel()) * sizeof(T));
    }
};

inline int64_t groupnorm_groups(int64_t channels) { return std::min<int64_t>(8, channels); }

template <typename T>
struct Conv3d {
    int64_t in_ch = 0, out_ch = 0, k = 3;
    Param<T> weight, bias;
    Tensor<T> in_cache, out, gin;

    void build(const std::string& prefix, int64_t ci, int64_t co, int64_t kernel) {
        in_ch = ci;
        out_ch = co;
        k = kernel;
        weight.init_shape(prefix + ".weight", {co, ci, k, k, k});
        bias.init_shape(prefix + ".bias", {co});
    }
    void collect(std::vector<Param<T>*>& ps) {
        ps.push_back(&weight);
        ps.push_back(&bias);
    }
    const Tensor<T>& forward(const Tensor<T>& in) {
        in_cache = in;
        out = Tensor<T>({in.dim(0), out_ch, in.dim(2), in.dim(3), in.dim(4)});
        kernels::conv3d_forward(in, weight.value, bias.value.vec(), out);
        return out;
    }
    const Tensor<T>& backward(const Tensor<T>& gout) {
        gin = Tensor<T>(in_cache.shape());
        kernels::conv3d_backward_data(gout, weight.value, gin);
        kernels::conv3d_backward_weights(in_cache, gout, weight.grad, bias.grad.vec());
        return gin;
    }
};

template <typename T>
struct GroupNorm {
    int64_t channels = 0, groups = 1;
    double eps = 1e-5;
    Param<T> gamma, beta;
    Tensor<T> in_cache, out, gin;
    std::vector<double> mean, inv_std;

    void build(const std::string& prefix, int64_t c) {
        channels = c;
        groups = groupnorm_groups(c);
        gamma.init_shape(prefix + ".gamma", {c});
        beta.init_shape(prefix + ".beta", {c});
        gamma.value.fill(T(1));
    }
    void collect(std::vector<Param<T>*>& ps) {
        ps.push_back(&gamma);
        ps.push_back(&beta);
    }
    const Tensor<T>& forward(const Tensor<T>& in) {
        in_cache = in;
        out = Tensor<T>(in.shape());
        mean.assign(static_cast<size_t>(in.dim(0) * groups), 0.0);
        inv_std.assign(static_cast<size_t>(in.dim(0) * groups), 0.0);
        kernels::groupnorm_forward(in, gamma.value.vec(), beta.value.vec(), groups, eps, out, mean,
                                   inv_std);
        return out;
    }
    const Tensor<T>& backward(const Tensor<T>& gout) {
        gin = Tensor<T>(in_cache.shape());
        kernels::groupnorm_backward(gout, in_cache, gamma.value.vec(), mean, inv_std, groups, gin,
                                    gamma.grad.vec(), beta.grad.vec());
        return gin;
    }
};

template <typename T>
struct ReLU {
    Tensor<T> in_cache, out, gin;
    const Tensor<T>& forward(const Tensor<T>& in) {
        in_cache = in;
        out = Tensor<T>(in.shape());
        kernels::relu_forward(in, out);
        return out;
    }
    const Tensor<T>& backward(const Tensor<T>& gout) {
        gin = Tensor<T>(in_cache.shape());
        kernels::relu_backward(gout, in_cache, gin);
        return gin;
    }
};

template <typename T>
struct Sigmoid {
    Tensor<T> out, gin;
    const Tensor<T>& forward(const Tensor<T>& in) {
        out = Tensor<T>(in.shape());
        kernels::sigmoid_forward(in, out);
        return out;
    }
    const Tensor<T>& backward(const Tensor<T>& gout) {
        gin = Tensor<T>(out.shape());
        kernels::sigmoid_backward(gout, out, gin);
        return gin;
    }
};

template <typename T>
struct MaxPool2 {
    Tensor<T> out, gin;
    Tensor<int64_t> argmax;
    std::vector<int64_t> in_shape;
    const Tensor<T>& forward(const Tensor<T>& in) {
        in_shape = in.shape();
        out = Tensor<T>({in.dim(0), in.dim(1), in.dim(2) / 2, in.dim(3) / 2, in.dim(4) / 2});
        argmax = Tensor<int64_t>(out.shape());
        kernels::maxpool2_forward(in, out, argmax);
        return out;
    }
    const Tensor<T>& backward(const Tensor<T>& gout) {
        gin = Tensor<T>(in_shape);
        kernels::maxpool2_backward(gout, argmax, gin);
        return gin;
    }
};

template <typename T>
struct Upsample2 {
    Tensor<T> out, gin;
    std::vector<int64_t> in_shape;
    const Tensor<T>& forward(const Tensor<T>& in) {
        in_shape = in.shape();
        out = Tensor<T>({in.dim(0), in.dim(1), in.dim(2) * 2, in.dim(3) * 2, in.dim(4) * 2});
        kernels::upsample2_forward(in, out);
        return out;
    }
    const Tensor<T>& backward(const Tensor<T>& gout) {
        gin = Tensor<T>(in_shape);
        kernels::upsample2_backward(gout, gin);
        return gin;
    }
};

template <typename T>
struct Linear {
    int64_t in_features = 0, out_features = 0;
    Param<T> weight, bias;
    Tensor<T> in_cache, out, gin;

    void build(const std::string& prefix, int64_t in_f, int64_t out_f) {
        in_features = in_f;
        out_features = out_f;
        weight.init_shape(prefix + ".weight", {out_f, in_f});
        bias.init_shape(prefix + ".bias", {out_f});
    }
    void collect(std::vector<Param<T>*>& ps) {
        ps.push_back(&weight);
        ps.push_back(&bias);
    }
    const Tensor<T>& forward(const Tensor<T>& in) {
        in_cache = in;
        out = Tensor<T>({in.dim(0), out_features});
        kernels::linear_forward(in, weight.value, bias.value.vec(), out);
        return out;
    }
    const Tensor<T>& backward(const Tensor<T>& gout) {
        gin = Tensor<T>(in_cache.shape());
        kernels::linear_backward(gout, in_cache, weight.value, gin, weight.grad, bias.grad.vec());
        return gin;
    }
};

template <typename T>
struct GlobalAvgPool {
    Tensor<T> out, gin;
    std::vector<int64_t> in_shape;
    const Tensor<T>& forward(const Tensor<T>& in) {
        in_shape = in.shape();
        out = Tensor<T>({in.dim(0), in.dim(1)});
        kernels::gap_forward(in, out);
        return out;
    }
    const Tensor<T>& backward(const Tensor<T>& gout) {
        gin = Tensor<T>(in_shape);
        kernels::gap_backward(gout, gin);
        return gin;
    }
};

// He-style init: conv and linear weights ~ N(0, sqrt(2 / fan_in)), biases and
// norm offsets zero, norm scales one. Draw order follows the parameter
// registry, so two models built from the same config and seed are identical.
template <typename T>
void init_params(std::vector<Param<T>*>& params, uint64_t seed) {
    Rng rng(derive_seed(seed, "init"));
    for (Param<T>* p : params) {
        const auto& shape = p->value.shape();
        const bool is_weight = p->name.size() >= 7 && p->name.rfind(".weight") == p->name.size() - 7;
        if (!is_weight) continue; // biases stay 0, gamma stays 1 from build()
        int64_t fan_in = 1;
        for (size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
        const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
        for (int64_t i = 0; i < p->value.numel(); ++i)
            p->value[i] = static_cast<T>(stddev * rng.normal());
    }
}

template <typename T>
void zero_grads(std::vector<Param<T>*>& params) {
    for (Param<T>* p : params) p->grad.fill(T(0));
}

} // namespace semgen
