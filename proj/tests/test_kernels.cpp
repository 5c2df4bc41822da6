#include <doctest.h>

#include <cmath>
#include <vector>

#include "semgen/kernels.hpp"
#include "semgen/kernels_ref.hpp"
#include "semgen/rng.hpp"

#include "oracles.hpp"

using namespace semgen;

namespace {

template <typename T>
Tensor<T> random_tensor(std::vector<int64_t> shape, uint64_t seed, double lo = -1.0,
                        double hi = 1.0) {
    Tensor<T> t(std::move(shape));
    Rng rng(seed);
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.uniform(lo, hi));
    return t;
}

template <typename T>
std::vector<T> random_vec(size_t n, uint64_t seed) {
    std::vector<T> v(n);
    Rng rng(seed);
    for (auto& x : v) x = static_cast<T>(rng.uniform(-1.0, 1.0));
    return v;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    double mx = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i)
        mx = std::max(mx, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    return mx;
}

} // namespace

TEST_CASE("conv3d forward matches the serial reference") {
    const auto in = random_tensor<double>({2, 3, 4, 5, 6}, 1);
    const auto w = random_tensor<double>({4, 3, 3, 3, 3}, 2);
    const auto b = random_vec<double>(4, 3);
    Tensor<double> out({2, 4, 4, 5, 6}), ref({2, 4, 4, 5, 6});
    kernels::conv3d_forward(in, w, b, out);
    kernels_ref::conv3d_forward(in, w, b, ref);
    CHECK(max_abs_diff(out, ref) < 1e-12);
}

TEST_CASE("conv3d forward hand example with zero padding") {
    // 1D row [1,2,3], kernel [1,1,1]: zero-padded sums are [3,6,5]
    Tensor<double> in({1, 1, 1, 1, 3});
    in[0] = 1;
    in[1] = 2;
    in[2] = 3;
    Tensor<double> w({1, 1, 3, 3, 3});
    w.fill(0.0);
    for (int64_t kx = 0; kx < 3; ++kx) w.at5(0, 0, 1, 1, kx) = 1.0;
    Tensor<double> out({1, 1, 1, 1, 3});
    kernels::conv3d_forward(in, w, {0.0}, out);
    CHECK(out[0] == doctest::Approx(3.0));
    CHECK(out[1] == doctest::Approx(6.0));
    CHECK(out[2] == doctest::Approx(5.0));
}

TEST_CASE("conv3d backward matches the serial reference") {
    const auto in = random_tensor<double>({2, 2, 4, 4, 4}, 4);
    const auto w = random_tensor<double>({3, 2, 3, 3, 3}, 5);
    const auto gout = random_tensor<double>({2, 3, 4, 4, 4}, 6);
    Tensor<double> gin({2, 2, 4, 4, 4}), gin_ref({2, 2, 4, 4, 4});
    kernels::conv3d_backward_data(gout, w, gin);
    kernels_ref::conv3d_backward_data(gout, w, gin_ref);
    CHECK(max_abs_diff(gin, gin_ref) < 1e-12);

    Tensor<double> gw({3, 2, 3, 3, 3}), gw_ref({3, 2, 3, 3, 3});
    std::vector<double> gb(3), gb_ref(3);
    kernels::conv3d_backward_weights(in, gout, gw, gb);
    kernels_ref::conv3d_backward_weights(in, gout, gw_ref, gb_ref);
    CHECK(max_abs_diff(gw, gw_ref) < 1e-12);
    for (size_t i = 0; i < gb.size(); ++i) CHECK(gb[i] == doctest::Approx(gb_ref[i]));
}

TEST_CASE("conv3d adjoint identity <conv(x), y> == <x, conv_T(y)>") {
    const auto x = random_tensor<double>({1, 2, 3, 4, 5}, 7);
    const auto w = random_tensor<double>({3, 2, 3, 3, 3}, 8);
    const auto y = random_tensor<double>({1, 3, 3, 4, 5}, 9);
    const std::vector<double> zero_bias(3, 0.0);
    Tensor<double> conv_x({1, 3, 3, 4, 5});
    kernels::conv3d_forward(x, w, zero_bias, conv_x);
    Tensor<double> convT_y({1, 2, 3, 4, 5});
    kernels::conv3d_backward_data(y, w, convT_y);
    double lhs = 0.0, rhs = 0.0;
    for (int64_t i = 0; i < conv_x.numel(); ++i) lhs += conv_x[i] * y[i];
    for (int64_t i = 0; i < x.numel(); ++i) rhs += x[i] * convT_y[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
}

TEST_CASE("maxpool picks the first maximum and routes gradients to it") {
    Tensor<double> in({1, 1, 2, 2, 2});
    in.fill(0.5); // all tied: first-wins keeps flat index 0
    Tensor<double> out({1, 1, 1, 1, 1});
    Tensor<int64_t> argmax({1, 1, 1, 1, 1});
    kernels::maxpool2_forward(in, out, argmax);
    CHECK(out[0] == 0.5);
    CHECK(argmax[0] == 0);

    in.at5(0, 0, 1, 1, 0) = 0.9;
    kernels::maxpool2_forward(in, out, argmax);
    CHECK(out[0] == 0.9);
    CHECK(argmax[0] == in.index5(0, 0, 1, 1, 0));

    Tensor<double> gout({1, 1, 1, 1, 1});
    gout[0] = 2.5;
    Tensor<double> gin({1, 1, 2, 2, 2});
    kernels::maxpool2_backward(gout, argmax, gin);
    for (int64_t i = 0; i < gin.numel(); ++i)
        CHECK(gin[i] == (i == argmax[0] ? 2.5 : 0.0));
}

TEST_CASE("maxpool forward matches the serial reference") {
    const auto in = random_tensor<float>({2, 3, 4, 6, 8}, 10);
    Tensor<float> out({2, 3, 2, 3, 4}), ref({2, 3, 2, 3, 4});
    Tensor<int64_t> argmax({2, 3, 2, 3, 4});
    kernels::maxpool2_forward(in, out, argmax);
    kernels_ref::maxpool2_forward(in, ref);
    CHECK(max_abs_diff(out, ref) == 0.0);
}

TEST_CASE("upsample2 forward matches reference and adjoint holds") {
    const auto in = random_tensor<double>({1, 2, 2, 3, 4}, 11);
    Tensor<double> out({1, 2, 4, 6, 8}), ref({1, 2, 4, 6, 8});
    kernels::upsample2_forward(in, out);
    kernels_ref::upsample2_forward(in, ref);
    CHECK(max_abs_diff(out, ref) == 0.0);

    const auto y = random_tensor<double>({1, 2, 4, 6, 8}, 12);
    Tensor<double> gin({1, 2, 2, 3, 4});
    kernels::upsample2_backward(y, gin);
    double lhs = 0.0, rhs = 0.0;
    for (int64_t i = 0; i < out.numel(); ++i) lhs += out[i] * y[i];
    for (int64_t i = 0; i < in.numel(); ++i) rhs += in[i] * gin[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
}

TEST_CASE("groupnorm normalizes each group and matches the reference") {
    const auto in = random_tensor<double>({2, 4, 2, 3, 3}, 13, 0.0, 5.0);
    const std::vector<double> gamma(4, 1.0), beta(4, 0.0);
    const int64_t groups = 2;
    Tensor<double> out({2, 4, 2, 3, 3}), ref({2, 4, 2, 3, 3});
    std::vector<double> mean(4), inv_std(4);
    kernels::groupnorm_forward(in, gamma, beta, groups, 1e-5, out, mean, inv_std);
    kernels_ref::groupnorm_forward(in, gamma, beta, groups, 1e-5, ref);
    CHECK(max_abs_diff(out, ref) < 1e-12);

    // per-(sample, group) statistics of the normalized activations
    const int64_t spatial = 2 * 3 * 3, cg = 2;
    for (int64_t n = 0; n < 2; ++n)
        for (int64_t g = 0; g < groups; ++g) {
            double s = 0.0, ss = 0.0;
            for (int64_t c = g * cg; c < (g + 1) * cg; ++c)
                for (int64_t z = 0; z < 2; ++z)
                    for (int64_t y = 0; y < 3; ++y)
                        for (int64_t x = 0; x < 3; ++x) {
                            const double v = out.at5(n, c, z, y, x);
                            s += v;
                            ss += v * v;
                        }
            const double mu = s / static_cast<double>(cg * spatial);
            const double var = ss / static_cast<double>(cg * spatial) - mu * mu;
            CHECK(std::abs(mu) < 1e-10);
            CHECK(var == doctest::Approx(1.0).epsilon(1e-3)); // eps shrinks variance slightly
        }
}

TEST_CASE("linear matches reference and a hand example") {
    const auto in = random_tensor<double>({3, 5}, 14);
    const auto w = random_tensor<double>({2, 5}, 15);
    const auto b = random_vec<double>(2, 16);
    Tensor<double> out({3, 2}), ref({3, 2});
    kernels::linear_forward(in, w, b, out);
    kernels_ref::linear_forward(in, w, b, ref);
    CHECK(max_abs_diff(out, ref) < 1e-12);

    Tensor<double> x({1, 2});
    x[0] = 2.0;
    x[1] = 3.0;
    Tensor<double> w2({1, 2});
    w2[0] = 10.0;
    w2[1] = 0.5;
    Tensor<double> y({1, 1});
    kernels::linear_forward(x, w2, {1.0}, y);
    CHECK(y[0] == doctest::Approx(22.5)); // 2*10 + 3*0.5 + 1
}

TEST_CASE("linear backward reproduces analytic gradients") {
    // y = w x + b with w=(2,-1), x=(3,4): dy/dx = w, dy/dw = x, dy/db = 1
    Tensor<double> in({1, 2});
    in[0] = 3.0;
    in[1] = 4.0;
    Tensor<double> w({1, 2});
    w[0] = 2.0;
    w[1] = -1.0;
    Tensor<double> gout({1, 1});
    gout[0] = 1.0;
    Tensor<double> gin({1, 2}), gw({1, 2});
    std::vector<double> gb(1);
    kernels::linear_backward(gout, in, w, gin, gw, gb);
    CHECK(gin[0] == doctest::Approx(2.0));
    CHECK(gin[1] == doctest::Approx(-1.0));
    CHECK(gw[0] == doctest::Approx(3.0));
    CHECK(gw[1] == doctest::Approx(4.0));
    CHECK(gb[0] == doctest::Approx(1.0));
}

TEST_CASE("gap averages spatial cells") {
    Tensor<double> in({1, 2, 1, 1, 2});
    in.at5(0, 0, 0, 0, 0) = 1.0;
    in.at5(0, 0, 0, 0, 1) = 3.0;
    in.at5(0, 1, 0, 0, 0) = -2.0;
    in.at5(0, 1, 0, 0, 1) = 2.0;
    Tensor<double> out({1, 2});
    kernels::gap_forward(in, out);
    CHECK(out.at2(0, 0) == doctest::Approx(2.0));
    CHECK(out.at2(0, 1) == doctest::Approx(0.0));

    Tensor<double> gout({1, 2});
    gout.at2(0, 0) = 4.0;
    gout.at2(0, 1) = -4.0;
    Tensor<double> gin({1, 2, 1, 1, 2});
    kernels::gap_backward(gout, gin);
    CHECK(gin.at5(0, 0, 0, 0, 0) == doctest::Approx(2.0));
    CHECK(gin.at5(0, 1, 0, 0, 1) == doctest::Approx(-2.0));
}

TEST_CASE("concat and split are inverse channel operations") {
    const auto a = random_tensor<float>({2, 2, 2, 2, 2}, 17);
    const auto b = random_tensor<float>({2, 3, 2, 2, 2}, 18);
    Tensor<float> cat({2, 5, 2, 2, 2});
    kernels::concat_channels(a, b, cat);
    Tensor<float> a2({2, 2, 2, 2, 2}), b2({2, 3, 2, 2, 2});
    kernels::split_channels(cat, a2, b2);
    CHECK(max_abs_diff(a, a2) == 0.0);
    CHECK(max_abs_diff(b, b2) == 0.0);
}

TEST_CASE("softmax rows sum to one and match the oracle") {
    const auto logits = random_tensor<double>({4, 6}, 19, -5.0, 5.0);
    Tensor<double> probs({4, 6});
    kernels::softmax_rows(logits, probs);
    for (int64_t n = 0; n < 4; ++n) {
        std::vector<double> row(6);
        for (int64_t c = 0; c < 6; ++c) row[static_cast<size_t>(c)] = logits.at2(n, c);
        const auto expect = oracles::softmax_row(row);
        double sum = 0.0;
        for (int64_t c = 0; c < 6; ++c) {
            CHECK(probs.at2(n, c) == doctest::Approx(expect[static_cast<size_t>(c)]).epsilon(1e-12));
            sum += probs.at2(n, c);
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("adam first step follows the bias-corrected update") {
    // t=1: mhat = g, vhat = g*g, step = lr * g/(|g| + eps)
    double param = 0.0;
    const double g = 2.0;
    std::vector<double> m(1, 0.0), v(1, 0.0);
    kernels::adam_step(&param, &g, m.data(), v.data(), 1, 1, 0.001, 0.9, 0.999, 1e-8);
    CHECK(m[0] == doctest::Approx(0.2));
    CHECK(v[0] == doctest::Approx(0.004));
    CHECK(param == doctest::Approx(-0.001 * 2.0 / (2.0 + 1e-8)).epsilon(1e-12));
}

TEST_CASE("relu and sigmoid behave pointwise") {
    Tensor<double> in({1, 4});
    in[0] = -1.0;
    in[1] = 0.0;
    in[2] = 2.0;
    in[3] = -0.5;
    Tensor<double> out({1, 4});
    kernels::relu_forward(in, out);
    CHECK(out[0] == 0.0);
    CHECK(out[1] == 0.0);
    CHECK(out[2] == 2.0);

    kernels::sigmoid_forward(in, out);
    CHECK(out[1] == doctest::Approx(0.5));
    CHECK(out[2] == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))));
    for (int64_t i = 0; i < 4; ++i) {
        CHECK(out[i] > 0.0);
        CHECK(out[i] < 1.0);
    }
}

TEST_CASE("kernels are bitwise identical across worker counts") {
    const auto in = random_tensor<float>({2, 4, 4, 6, 6}, 20);
    const auto w = random_tensor<float>({4, 4, 3, 3, 3}, 21);
    const auto b = random_vec<float>(4, 22);
    const std::vector<float> gamma(4, 1.0f), beta(4, 0.0f);

    auto run_all = [&](int workers) {
        set_workers(workers);
        Tensor<float> conv({2, 4, 4, 6, 6});
        kernels::conv3d_forward(in, w, b, conv);
        Tensor<float> gn({2, 4, 4, 6, 6});
        std::vector<double> mean(4), inv_std(4);
        kernels::groupnorm_forward(conv, gamma, beta, 2, 1e-5, gn, mean, inv_std);
        Tensor<float> gw({4, 4, 3, 3, 3});
        std::vector<float> gb(4);
        kernels::conv3d_backward_weights(in, gn, gw, gb);
        return std::make_tuple(std::move(conv), std::move(gn), std::move(gw), gb);
    };
    auto [c1, n1, w1, b1] = run_all(1);
    auto [c4, n4, w4, b4] = run_all(4);
    set_workers(1);
    CHECK(max_abs_diff(c1, c4) == 0.0);
    CHECK(max_abs_diff(n1, n4) == 0.0);
    CHECK(max_abs_diff(w1, w4) == 0.0);
    CHECK(b1 == b4);
}

TEST_CASE("trilinear resize: identity, reference agreement, 1d hand case") {
    Volume v(Shape3{3, 5, 7});
    Rng rng(23);
    for (float& x : v.voxels) x = static_cast<float>(rng.uniform());
    const Volume same = kernels::trilinear_resize(v, v.shape);
    CHECK(same.voxels == v.voxels);

    const Volume up = kernels::trilinear_resize(v, Shape3{5, 9, 11});
    const Volume up_ref = kernels_ref::trilinear_resize(v, Shape3{5, 9, 11});
    CHECK(up.shape == Shape3{5, 9, 11});
    CHECK(up.voxels == up_ref.voxels);

    // align-corners on a 2-wide row: midpoint is the average of the ends
    Volume row(Shape3{1, 1, 2});
    row.voxels = {0.2f, 0.8f};
    const Volume mid = kernels::trilinear_resize(row, Shape3{1, 1, 3});
    CHECK(mid.voxels[0] == doctest::Approx(0.2));
    CHECK(mid.voxels[1] == doctest::Approx(0.5));
    CHECK(mid.voxels[2] == doctest::Approx(0.8));
}
