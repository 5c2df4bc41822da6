#pragma once

#include <vector>

#include "semgen/errors.hpp"
#include "semgen/kernels.hpp"
#include "semgen/layers.hpp"

namespace semgen {

// Adam with the usual decay defaults. Moments are double for every parameter
// scalar type, so float training keeps a stable optimizer state.
template <typename T>
class Adam {
public:
    explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void attach(const std::vector<Param<T>*>& params) {
        m_.clear();
        v_.clear();
        for (const Param<T>* p : params) {
            m_.emplace_back(static_cast<size_t>(p->value.numel()), 0.0);
            v_.emplace_back(static_cast<size_t>(p->value.numel()), 0.0);
        }
    }

    void step(const std::vector<Param<T>*>& params) {
        if (params.size() != m_.size()) throw RunError("adam: step called with a different model");
        ++t_;
        for (size_t i = 0; i < params.size(); ++i) {
            Param<T>* p = params[i];
            kernels::adam_step(p->value.data(), p->grad.data(), m_[i].data(), v_[i].data(),
                               p->value.numel(), t_, lr_, beta1_, beta2_, eps_);
        }
    }

    int64_t steps_taken() const { return t_; }

private:
    double lr_, beta1_, beta2_, eps_;
    int64_t t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

} // namespace semgen
