// Tensor algebra and autograd tests. Reference values come from independent
// oracles computed here (naive loops, two-pass statistics, central finite
// differences at 64-bit), never from the implementation under test.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <functional>
#include <vector>

#include "simda/ops.hpp"
#include "simda/rng.hpp"
#include "simda/tensor.hpp"

using simda::GradTapeT;
using simda::Rng;
using simda::TensorT;

using Td = TensorT<double>;
using Tf = TensorT<float>;

namespace {

// Central finite differences on every element of `param`, h = 1e-3, 64-bit.
// `loss` must re-evaluate the full forward from current tensor contents.
void check_grad_fd(Td& param, const std::function<double()>& loss,
                   const std::function<Td()>& loss_tensor, double tol = 1e-3,
                   double h = 1e-3) {
    Td analytic;
    {
        param.zero_grad();
        GradTapeT<double> tape;
        Td l = loss_tensor();
        tape.backward(l);
        REQUIRE(param.has_grad());
        analytic = param.clone();
        for (int i = 0; i < param.numel(); ++i) analytic[i] = param.grad()[i];
        param.zero_grad();
    }
    for (int i = 0; i < param.numel(); ++i) {
        const double keep = param[i];
        param[i] = keep + h;
        const double up = loss();
        param[i] = keep - h;
        const double down = loss();
        param[i] = keep;
        const double fd = (up - down) / (2.0 * h);
        const double an = analytic[i];
        const double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
        CAPTURE(i);
        CAPTURE(fd);
        CAPTURE(an);
        CHECK(std::abs(fd - an) / denom <= tol);
    }
}

std::vector<double> snapshot(const Td& t) {
    return std::vector<double>(t.data(), t.data() + t.numel());
}

} // namespace

// ---------------------------------------------------------------------------
// matmul
// ---------------------------------------------------------------------------

TEST_CASE("matmul identity") {
    auto eye = Tf::from({2, 2}, {1, 0, 0, 1});
    auto m = Tf::from({2, 2}, {1, 2, 3, 4});
    auto r = simda::matmul(eye, m);
    for (int i = 0; i < 4; ++i) CHECK(r[i] == m[i]);
}

TEST_CASE("matmul permutation") {
    auto a = Tf::from({2, 2}, {1, 2, 3, 4});
    auto p = Tf::from({2, 2}, {0, 1, 1, 0});
    auto r = simda::matmul(a, p);
    CHECK(r[0] == 2);
    CHECK(r[1] == 1);
    CHECK(r[2] == 4);
    CHECK(r[3] == 3);
}

TEST_CASE("matmul matches naive triple loop") {
    Rng rng(7);
    auto a = Tf::randn({7, 5}, rng);
    auto b = Tf::randn({5, 3}, rng);
    auto r = simda::matmul(a, b);
    for (int i = 0; i < 7; ++i)
        for (int j = 0; j < 3; ++j) {
            double acc = 0.0;
            for (int k = 0; k < 5; ++k) acc += double(a[i * 5 + k]) * double(b[k * 3 + j]);
            CHECK(std::abs(double(r[i * 3 + j]) - acc) <= 1e-6);
        }
}

TEST_CASE("matmul shape mismatch throws") {
    auto a = Tf::zeros({2, 3});
    auto b = Tf::zeros({2, 3});
    CHECK_THROWS_AS(simda::matmul(a, b), simda::ShapeError);
}

// ---------------------------------------------------------------------------
// softmax
// ---------------------------------------------------------------------------

TEST_CASE("softmax symmetry and closed forms") {
    auto s0 = simda::softmax(Tf::from({2}, {0, 0}), 0);
    CHECK(s0[0] == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(s0[1] == doctest::Approx(0.5).epsilon(1e-6));

    auto s1 = simda::softmax(Tf::from({2}, {std::log(2.0f), 0.0f}), 0);
    CHECK(s1[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-6));
    CHECK(s1[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-6));

    auto s2 = simda::softmax(Tf::from({2}, {1000, 1000}), 0);
    CHECK(std::isfinite(s2[0]));
    CHECK(s2[0] == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(s2[1] == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("softmax rows sum to one for random finite input") {
    Rng rng(11);
    auto x = Tf::randn({4, 9}, rng, 10.0);
    auto y = simda::softmax(x, 1);
    for (int i = 0; i < 4; ++i) {
        double s = 0.0;
        for (int j = 0; j < 9; ++j) {
            CHECK(y[i * 9 + j] >= 0.0f);
            s += y[i * 9 + j];
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
    }
}

// ---------------------------------------------------------------------------
// gelu
// ---------------------------------------------------------------------------

TEST_CASE("gelu closed-form points") {
    auto y = simda::gelu(Tf::from({3}, {0.0f, 1.0f, -10.0f}));
    CHECK(y[0] == 0.0f);
    // Oracle: x * Phi(x) evaluated with erf at double precision.
    const double oracle1 = 1.0 * 0.5 * (1.0 + std::erf(1.0 / std::sqrt(2.0)));
    CHECK(double(y[1]) == doctest::Approx(oracle1).epsilon(1e-6));
    CHECK(double(y[1]) == doctest::Approx(0.841345).epsilon(1e-5));
    CHECK(std::abs(y[2]) < 1e-8);
}

// ---------------------------------------------------------------------------
// depthwise_conv3d
// ---------------------------------------------------------------------------

TEST_CASE("depthwise_conv3d identity kernel") {
    Rng rng(3);
    auto x = Tf::randn({3, 2, 4, 4}, rng);
    auto k = Tf::zeros({2, 3, 3, 3});
    for (int c = 0; c < 2; ++c) k[((c * 3 + 1) * 3 + 1) * 3 + 1] = 1.0f;
    auto y = simda::depthwise_conv3d(x, k);
    for (int i = 0; i < x.numel(); ++i) CHECK(y[i] == x[i]);
}

TEST_CASE("depthwise_conv3d constant field interior") {
    auto x = Tf::full({5, 1, 6, 6}, 2.5f);
    auto k = Tf::zeros({1, 3, 3, 3});
    Rng rng(5);
    float sum = 0.0f;
    for (int i = 0; i < 27; ++i) {
        k[i] = float(rng.uniform());
        sum += k[i];
    }
    for (int i = 0; i < 27; ++i) k[i] /= sum; // kernel sums to 1
    auto y = simda::depthwise_conv3d(x, k);
    // zero padding distorts borders; interior voxels keep the constant
    for (int l = 1; l < 4; ++l)
        for (int yy = 1; yy < 5; ++yy)
            for (int xx = 1; xx < 5; ++xx)
                CHECK(y[((l * 1 + 0) * 6 + yy) * 6 + xx] ==
                      doctest::Approx(2.5f).epsilon(1e-5));
}

TEST_CASE("depthwise_conv3d matches direct summation oracle") {
    Rng rng(17);
    auto x = Tf::randn({4, 2, 5, 5}, rng);
    auto k = Tf::randn({2, 3, 1, 1}, rng);
    auto y = simda::depthwise_conv3d(x, k);
    // direct nested-loop convolution oracle
    for (int l = 0; l < 4; ++l)
        for (int c = 0; c < 2; ++c)
            for (int yy = 0; yy < 5; ++yy)
                for (int xx = 0; xx < 5; ++xx) {
                    double acc = 0.0;
                    for (int a = -1; a <= 1; ++a) {
                        const int li = l + a;
                        if (li < 0 || li >= 4) continue;
                        acc += double(x[((li * 2 + c) * 5 + yy) * 5 + xx]) *
                               double(k[c * 3 + (a + 1)]);
                    }
                    CHECK(std::abs(double(y[((l * 2 + c) * 5 + yy) * 5 + xx]) - acc) <= 1e-6);
                }
}

TEST_CASE("depthwise_conv3d rejects even kernel extents") {
    auto x = Tf::zeros({2, 1, 4, 4});
    auto k = Tf::zeros({1, 2, 1, 1});
    CHECK_THROWS_AS(simda::depthwise_conv3d(x, k), simda::ConfigError);
}

// ---------------------------------------------------------------------------
// group_norm
// ---------------------------------------------------------------------------

TEST_CASE("group_norm constant input maps to zeros") {
    auto x = Tf::full({2, 4, 3, 3}, 7.0f);
    auto gamma = Tf::full({4}, 1.0f);
    auto beta = Tf::zeros({4});
    auto y = simda::group_norm(x, 2, 1e-5f, gamma, beta);
    for (int i = 0; i < y.numel(); ++i) CHECK(std::abs(y[i]) < 1e-6);
}

TEST_CASE("group_norm leaves normalized input unchanged") {
    Rng rng(23);
    auto x = Tf::randn({1, 4, 4, 4}, rng);
    // normalize each group (2 channels x 16 pixels) to zero mean, unit variance
    const int cg = 2, hw = 16, m = cg * hw;
    for (int g = 0; g < 2; ++g) {
        double mean = 0.0;
        for (int j = 0; j < m; ++j) mean += x[g * m + j];
        mean /= m;
        double var = 0.0;
        for (int j = 0; j < m; ++j) var += (x[g * m + j] - mean) * (x[g * m + j] - mean);
        var /= m;
        const double s = 1.0 / std::sqrt(var);
        for (int j = 0; j < m; ++j) x[g * m + j] = float((x[g * m + j] - mean) * s);
    }
    auto y = simda::group_norm(x, 2, 1e-6f, Tf::full({4}, 1.0f), Tf::zeros({4}));
    for (int i = 0; i < x.numel(); ++i)
        CHECK(double(y[i]) == doctest::Approx(double(x[i])).epsilon(1e-5));
}

TEST_CASE("group_norm matches two-pass oracle") {
    Rng rng(29);
    auto x = Tf::randn({2, 6, 3, 3}, rng, 2.0);
    auto gamma = Tf::randn({6}, rng);
    auto beta = Tf::randn({6}, rng);
    const int groups = 3, cg = 2, hw = 9, m = cg * hw;
    auto y = simda::group_norm(x, groups, 1e-5f, gamma, beta);
    for (int l = 0; l < 2; ++l)
        for (int g = 0; g < groups; ++g) {
            const int base = (l * 6 + g * cg) * hw;
            double mean = 0.0;
            for (int j = 0; j < m; ++j) mean += x[base + j];
            mean /= m;
            double var = 0.0;
            for (int j = 0; j < m; ++j) var += (x[base + j] - mean) * (x[base + j] - mean);
            var /= m;
            const double ivar = 1.0 / std::sqrt(var + 1e-5);
            for (int cc = 0; cc < cg; ++cc)
                for (int p = 0; p < hw; ++p) {
                    const int idx = base + cc * hw + p;
                    const double want =
                        (x[idx] - mean) * ivar * gamma[g * cg + cc] + beta[g * cg + cc];
                    CHECK(double(y[idx]) == doctest::Approx(want).epsilon(1e-5));
                }
        }
}

TEST_CASE("group_norm rejects indivisible grouping") {
    auto x = Tf::zeros({1, 5, 2, 2});
    CHECK_THROWS_AS(simda::group_norm(x, 2, 1e-5f, Tf::full({5}, 1.0f), Tf::zeros({5})),
                    simda::ConfigError);
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

TEST_CASE("backward product rule") {
    auto x = Tf::scalar(3.0f);
    auto y = Tf::scalar(5.0f);
    x.set_requires_grad(true);
    y.set_requires_grad(true);
    simda::GradTape tape;
    auto loss = simda::mul(x, y);
    tape.backward(loss);
    CHECK(x.grad()[0] == 5.0f);
    CHECK(y.grad()[0] == 3.0f);
}

TEST_CASE("frozen tensor receives no grad") {
    auto x = Tf::scalar(3.0f);
    auto y = Tf::scalar(5.0f);
    x.set_requires_grad(true); // y stays frozen
    simda::GradTape tape;
    auto loss = simda::mul(x, y);
    tape.backward(loss);
    CHECK(x.has_grad());
    CHECK_FALSE(y.has_grad());
}

TEST_CASE("backward rejects non-scalar loss") {
    auto x = Tf::zeros({2});
    x.set_requires_grad(true);
    simda::GradTape tape;
    auto y = simda::scale(x, 2.0f);
    CHECK_THROWS_AS(tape.backward(y), simda::UsageError);
}

TEST_CASE("gradients match finite differences per op") {
    Rng rng(31);

    SUBCASE("matmul") {
        auto a = Td::randn({3, 4}, rng, 1.0, true);
        auto b = Td::randn({4, 2}, rng, 1.0, true);
        auto forward = [&] { return simda::mean_all(simda::gelu(simda::matmul(a, b))); };
        check_grad_fd(a, [&] { return forward().item(); }, forward);
        check_grad_fd(b, [&] { return forward().item(); }, forward);
    }
    SUBCASE("softmax") {
        auto x = Td::randn({3, 5}, rng, 1.0, true);
        auto w = Td::randn({3, 5}, rng);
        auto forward = [&] { return simda::mean_all(simda::mul(simda::softmax(x, 1), w)); };
        check_grad_fd(x, [&] { return forward().item(); }, forward);
    }
    SUBCASE("conv2d") {
        auto x = Td::randn({2, 2, 4, 4}, rng, 1.0, true);
        auto w = Td::randn({3, 2, 3, 3}, rng, 0.4, true);
        auto b = Td::randn({3}, rng, 0.2, true);
        auto forward = [&] { return simda::mean_all(simda::gelu(simda::conv2d(x, w, b))); };
        check_grad_fd(x, [&] { return forward().item(); }, forward);
        check_grad_fd(w, [&] { return forward().item(); }, forward);
        check_grad_fd(b, [&] { return forward().item(); }, forward);
    }
    SUBCASE("depthwise_conv3d") {
        auto x = Td::randn({3, 2, 3, 3}, rng, 1.0, true);
        auto k = Td::randn({2, 3, 1, 1}, rng, 0.5, true);
        auto forward = [&] { return simda::mean_all(simda::gelu(simda::depthwise_conv3d(x, k))); };
        check_grad_fd(x, [&] { return forward().item(); }, forward);
        check_grad_fd(k, [&] { return forward().item(); }, forward);
    }
    SUBCASE("group_norm") {
        auto x = Td::randn({2, 4, 3, 3}, rng, 1.5, true);
        auto gamma = Td::randn({4}, rng, 1.0, true);
        auto beta = Td::randn({4}, rng, 1.0, true);
        auto probe = Td::randn({2, 4, 3, 3}, rng);
        auto forward = [&] {
            return simda::mean_all(
                simda::mul(simda::group_norm(x, 2, 1e-5, gamma, beta), probe));
        };
        check_grad_fd(x, [&] { return forward().item(); }, forward);
        check_grad_fd(gamma, [&] { return forward().item(); }, forward);
        check_grad_fd(beta, [&] { return forward().item(); }, forward);
    }
    SUBCASE("linear + mse") {
        auto x = Td::randn({4, 3}, rng);
        auto w = Td::randn({3, 2}, rng, 1.0, true);
        auto b = Td::randn({2}, rng, 1.0, true);
        auto target = Td::randn({4, 2}, rng);
        auto forward = [&] { return simda::mse(simda::linear(x, w, b), target); };
        check_grad_fd(w, [&] { return forward().item(); }, forward);
        check_grad_fd(b, [&] { return forward().item(); }, forward);
    }
    SUBCASE("pooling and upsampling") {
        auto x = Td::randn({1, 2, 4, 4}, rng, 1.0, true);
        auto probe = Td::randn({1, 2, 4, 4}, rng);
        auto forward = [&] {
            return simda::mean_all(
                simda::mul(simda::upsample_nearest2(simda::avg_pool2(x)), probe));
        };
        check_grad_fd(x, [&] { return forward().item(); }, forward);
    }
    SUBCASE("token layout round trip") {
        auto x = Td::randn({2, 3, 2, 2}, rng, 1.0, true);
        auto probe = Td::randn({2, 3, 2, 2}, rng);
        auto forward = [&] {
            auto t = simda::latent_to_tokens(x);
            return simda::mean_all(simda::mul(simda::tokens_to_latent(t, 2, 2), probe));
        };
        check_grad_fd(x, [&] { return forward().item(); }, forward);
    }
    SUBCASE("embedding rows") {
        auto table = Td::randn({5, 3}, rng, 1.0, true);
        std::vector<int> ids = {2, 0, 4, 2};
        auto probe = Td::randn({4, 3}, rng);
        auto forward = [&] {
            return simda::mean_all(simda::mul(simda::embedding_rows(table, ids, 0), probe));
        };
        check_grad_fd(table, [&] { return forward().item(); }, forward);
        // pad row must stay zero-gradient
        GradTapeT<double> tape;
        auto l = forward();
        tape.backward(l);
        CHECK(table.grad()[0] == 0.0);
        CHECK(table.grad()[1] == 0.0);
        CHECK(table.grad()[2] == 0.0);
    }
}

TEST_CASE("ops are pure: inputs never mutated") {
    Rng rng(41);
    auto a = Td::randn({3, 4}, rng, 1.0, true);
    auto b = Td::randn({4, 4}, rng, 1.0, true);
    auto a0 = snapshot(a);
    auto b0 = snapshot(b);
    GradTapeT<double> tape;
    auto y = simda::matmul(a, b);
    auto z = simda::softmax(simda::gelu(y), 1);
    auto l = simda::mean_all(z);
    tape.backward(l);
    CHECK(snapshot(a) == a0);
    CHECK(snapshot(b) == b0);
}

TEST_CASE("tape replays each op exactly once in reverse order") {
    // running the same graph twice through one tape would double gradients
    auto x = Tf::scalar(2.0f);
    x.set_requires_grad(true);
    simda::GradTape tape;
    auto y = simda::scale(x, 3.0f);
    auto l = simda::mean_all(y);
    CHECK(tape.op_count() == 2);
    tape.backward(l);
    CHECK(x.grad()[0] == 3.0f);
}
