// Times the OpenMP kernels against the serial reference implementations on
// training-sized tensors and reports agreement, so kernel changes can be
// checked for both speed and bitwise-safety in one run.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <string>

#include "semgen/kernels.hpp"
#include "semgen/kernels_ref.hpp"
#include "semgen/rng.hpp"
#include "semgen/tensor.hpp"

using namespace semgen;

namespace {

Tensor<float> random_tensor(std::vector<int64_t> shape, uint64_t seed) {
    Tensor<float> t(std::move(shape));
    Rng rng(seed);
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
    return t;
}

double max_abs_diff(const Tensor<float>& a, const Tensor<float>& b) {
    double m = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    return m;
}

template <typename F>
double time_ms(F&& f, int iters) {
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < iters; ++i) f();
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / iters;
}

void report(const std::string& name, double ref_ms, double omp_ms, double diff) {
    std::printf("%-22s ref %9.3f ms   omp %9.3f ms   speedup %5.2fx   max|diff| %.3g\n",
                name.c_str(), ref_ms, omp_ms, ref_ms / omp_ms, diff);
}

} // namespace

int main(int argc, char** argv) {
    int iters = 3;
    if (argc > 1) iters = std::max(1, std::atoi(argv[1]));
    std::printf("kernel benchmark: %d iteration(s), %d worker(s)\n\n", iters, max_workers());

    {
        const Tensor<float> x = random_tensor({2, 8, 16, 32, 32}, 1);
        const Tensor<float> w = random_tensor({8, 8, 3, 3, 3}, 2);
        const Tensor<float> b = random_tensor({8}, 3);
        Tensor<float> out_ref({2, 8, 16, 32, 32}), out_omp({2, 8, 16, 32, 32});
        const double t_ref =
            time_ms([&] { kernels_ref::conv3d_forward(x, w, b.vec(), out_ref); }, iters);
        const double t_omp = time_ms([&] { kernels::conv3d_forward(x, w, b.vec(), out_omp); }, iters);
        report("conv3d_forward", t_ref, t_omp, max_abs_diff(out_ref, out_omp));
    }
    {
        const Tensor<float> g = random_tensor({2, 8, 16, 32, 32}, 4);
        const Tensor<float> w = random_tensor({8, 8, 3, 3, 3}, 5);
        Tensor<float> out_ref({2, 8, 16, 32, 32}), out_omp({2, 8, 16, 32, 32});
        const double t_ref =
            time_ms([&] { kernels_ref::conv3d_backward_data(g, w, out_ref); }, iters);
        const double t_omp = time_ms([&] { kernels::conv3d_backward_data(g, w, out_omp); }, iters);
        report("conv3d_backward_data", t_ref, t_omp, max_abs_diff(out_ref, out_omp));
    }
    {
        const Tensor<float> x = random_tensor({2, 8, 16, 32, 32}, 6);
        const std::vector<float> gamma(8, 1.0f), beta(8, 0.0f);
        Tensor<float> out_ref({2, 8, 16, 32, 32}), out_omp({2, 8, 16, 32, 32});
        std::vector<double> mean_o, istd_o;
        const double t_ref = time_ms(
            [&] { kernels_ref::groupnorm_forward(x, gamma, beta, 4, 1e-5, out_ref); }, iters);
        const double t_omp = time_ms(
            [&] { kernels::groupnorm_forward(x, gamma, beta, 4, 1e-5, out_omp, mean_o, istd_o); },
            iters);
        report("groupnorm_forward", t_ref, t_omp, max_abs_diff(out_ref, out_omp));
    }
    {
        const Tensor<float> x = random_tensor({2, 8, 16, 32, 32}, 7);
        Tensor<float> out_ref({2, 8, 8, 16, 16}), out_omp({2, 8, 8, 16, 16});
        Tensor<int64_t> arg({2, 8, 8, 16, 16});
        const double t_ref = time_ms([&] { kernels_ref::maxpool2_forward(x, out_ref); }, iters);
        const double t_omp = time_ms([&] { kernels::maxpool2_forward(x, out_omp, arg); }, iters);
        report("maxpool2_forward", t_ref, t_omp, max_abs_diff(out_ref, out_omp));
    }
    {
        const Tensor<float> x = random_tensor({2, 8, 8, 16, 16}, 8);
        Tensor<float> out_ref({2, 8, 16, 32, 32}), out_omp({2, 8, 16, 32, 32});
        const double t_ref = time_ms([&] { kernels_ref::upsample2_forward(x, out_ref); }, iters);
        const double t_omp = time_ms([&] { kernels::upsample2_forward(x, out_omp); }, iters);
        report("upsample2_forward", t_ref, t_omp, max_abs_diff(out_ref, out_omp));
    }
    {
        Volume v{Shape3{32, 64, 64}};
        Rng rng(9);
        for (auto& f : v.voxels) f = static_cast<float>(rng.uniform());
        Volume out_ref, out_omp;
        const double t_ref =
            time_ms([&] { out_ref = kernels_ref::trilinear_resize(v, Shape3{16, 32, 32}); }, iters);
        const double t_omp =
            time_ms([&] { out_omp = kernels::trilinear_resize(v, Shape3{16, 32, 32}); }, iters);
        double diff = 0.0;
        for (size_t i = 0; i < out_ref.voxels.size(); ++i)
            diff = std::max(diff, std::abs(static_cast<double>(out_ref.voxels[i]) -
                                           static_cast<double>(out_omp.voxels[i])));
        report("trilinear_resize", t_ref, t_omp, diff);
    }
    {
        const Tensor<float> x = random_tensor({8, 512}, 10);
        const Tensor<float> w = random_tensor({256, 512}, 11);
        const Tensor<float> b = random_tensor({256}, 12);
        Tensor<float> out_ref({8, 256}), out_omp({8, 256});
        const double t_ref =
            time_ms([&] { kernels_ref::linear_forward(x, w, b.vec(), out_ref); }, iters);
        const double t_omp = time_ms([&] { kernels::linear_forward(x, w, b.vec(), out_omp); }, iters);
        report("linear_forward", t_ref, t_omp, max_abs_diff(out_ref, out_omp));
    }
    return 0;
}
