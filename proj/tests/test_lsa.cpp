// Latent-Shift Attention: shift composition, attention equivalences, and the
// analytic complexity model. The dense oracle here materializes concatenated
// keys/values and runs plain double-precision attention loops.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "simda/lsa.hpp"

using simda::AttentionVariant;
using simda::AttentionWeightsT;
using simda::Rng;
using simda::ShiftSpec;
using Tf = simda::TensorT<float>;

namespace {

// Dense double-precision attention oracle for one frame: q from `query`
// [N x d], keys/values from `kv` [M x d], single head.
std::vector<double> dense_attention_oracle(const Tf& query, const Tf& kv,
                                           const AttentionWeightsT<float>& w) {
    const int N = query.dim(0), M = kv.dim(0), d = query.dim(1);
    auto matd = [](const Tf& a, const Tf& b, int m, int k, int n) {
        std::vector<double> c(static_cast<std::size_t>(m) * n, 0.0);
        for (int i = 0; i < m; ++i)
            for (int p = 0; p < k; ++p)
                for (int j = 0; j < n; ++j)
                    c[i * n + j] += double(a[i * k + p]) * double(b[p * n + j]);
        return c;
    };
    auto q = matd(query, w.wq, N, d, d);
    auto k = matd(kv, w.wk, M, d, d);
    auto v = matd(kv, w.wv, M, d, d);
    const double sc = 1.0 / std::sqrt(double(d));
    std::vector<double> out(static_cast<std::size_t>(N) * d, 0.0);
    for (int i = 0; i < N; ++i) {
        std::vector<double> logits(M);
        double mx = -1e300;
        for (int j = 0; j < M; ++j) {
            double s = 0.0;
            for (int c = 0; c < d; ++c) s += q[i * d + c] * k[j * d + c];
            logits[j] = s * sc;
            mx = std::max(mx, logits[j]);
        }
        double z = 0.0;
        for (int j = 0; j < M; ++j) {
            logits[j] = std::exp(logits[j] - mx);
            z += logits[j];
        }
        std::vector<double> att(static_cast<std::size_t>(d), 0.0);
        for (int j = 0; j < M; ++j)
            for (int c = 0; c < d; ++c) att[c] += logits[j] / z * v[j * d + c];
        for (int c = 0; c < d; ++c) {
            double o = double(w.bo[c]);
            for (int cc = 0; cc < d; ++cc) o += att[cc] * double(w.wo[cc * d + c]);
            out[i * d + c] = o;
        }
    }
    return out;
}

} // namespace

TEST_CASE("shift composite clamps at frame zero") {
    Rng rng(1);
    auto x = Tf::randn({3, 4, 2}, rng);
    ShiftSpec spec{2};
    auto comp = simda::temporal_shift_compose(x, spec);
    for (int j = 0; j < 4 * 2; ++j) CHECK(comp[j] == x[j]);
}

TEST_CASE("window one shifts whole frames") {
    Rng rng(2);
    auto x = Tf::randn({4, 3, 2}, rng);
    ShiftSpec spec{1};
    auto comp = simda::temporal_shift_compose(x, spec);
    for (int i = 1; i < 4; ++i)
        for (int j = 0; j < 3 * 2; ++j) CHECK(comp[i * 6 + j] == x[(i - 1) * 6 + j]);
}

TEST_CASE("W=2 L=3 N=4 matches the hand-enumerated table") {
    Rng rng(3);
    const int L = 3, N = 4, d = 2;
    auto x = Tf::randn({L, N, d}, rng);
    ShiftSpec spec{2};
    auto comp = simda::temporal_shift_compose(x, spec);
    // off(p) = 1 + (p % 2): offsets {1,2,1,2}
    for (int i = 0; i < L; ++i)
        for (int p = 0; p < N; ++p) {
            const int src = std::max(i - (1 + p % 2), 0);
            for (int c = 0; c < d; ++c)
                CHECK(comp[(i * N + p) * d + c] == x[(src * N + p) * d + c]);
        }
    // spot checks from the table for frame 2
    CHECK(comp[(2 * N + 0) * d] == x[(1 * N + 0) * d]);
    CHECK(comp[(2 * N + 1) * d] == x[(0 * N + 1) * d]);
    CHECK(comp[(2 * N + 2) * d] == x[(1 * N + 2) * d]);
    CHECK(comp[(2 * N + 3) * d] == x[(0 * N + 3) * d]);
}

TEST_CASE("duplicated-key equivalence on static videos") {
    Rng rng(4);
    const int L = 4, N = 9, d = 8;
    auto w = AttentionWeightsT<float>::init(d, rng);
    // static video: every frame identical
    auto frame = Tf::randn({1, N, d}, rng);
    Tf x({L, N, d});
    for (int i = 0; i < L; ++i)
        for (int j = 0; j < N * d; ++j) x[i * N * d + j] = frame[j];
    ShiftSpec spec{2};
    auto with_shift = simda::lsa_forward(x, w, spec, 1, true);
    auto framewise = simda::lsa_forward(x, w, spec, 1, false);
    for (int i = 0; i < x.numel(); ++i)
        CHECK(std::abs(with_shift[i] - framewise[i]) <= 1e-5);
}

TEST_CASE("constant-token video yields constant output") {
    const int L = 3, N = 4, d = 6;
    Rng rng(5);
    auto w = AttentionWeightsT<float>::init(d, rng);
    Tf x({L, N, d});
    for (int i = 0; i < L; ++i)
        for (int p = 0; p < N; ++p)
            for (int c = 0; c < d; ++c) x[(i * N + p) * d + c] = 0.3f * float(c);
    ShiftSpec spec{2};
    auto y = simda::lsa_forward(x, w, spec);
    for (int i = 0; i < L; ++i)
        for (int p = 0; p < N; ++p)
            for (int c = 0; c < d; ++c)
                CHECK(y[(i * N + p) * d + c] == doctest::Approx(y[c]).epsilon(1e-5));
}

TEST_CASE("lsa matches the dense concatenated-KV oracle") {
    Rng rng(6);
    const int L = 5, N = 6, d = 8;
    auto w = AttentionWeightsT<float>::init(d, rng);
    auto x = Tf::randn({L, N, d}, rng);
    ShiftSpec spec{2};
    auto y = simda::lsa_forward(x, w, spec, 1, true);
    auto comp = simda::temporal_shift_compose(x, spec);
    for (int i = 0; i < L; ++i) {
        // materialize [frame || composite] by hand
        Tf kv({2 * N, d});
        for (int j = 0; j < N * d; ++j) {
            kv[j] = x[i * N * d + j];
            kv[N * d + j] = comp[i * N * d + j];
        }
        Tf qf({N, d});
        for (int j = 0; j < N * d; ++j) qf[j] = x[i * N * d + j];
        auto want = dense_attention_oracle(qf, kv, w);
        for (int j = 0; j < N * d; ++j)
            CHECK(std::abs(double(y[i * N * d + j]) - want[j]) <= 1e-5);
    }
}

TEST_CASE("multi-head output matches per-head oracle shape and finiteness") {
    Rng rng(7);
    const int L = 2, N = 4, d = 8;
    auto w = AttentionWeightsT<float>::init(d, rng);
    auto x = Tf::randn({L, N, d}, rng);
    ShiftSpec spec{2};
    auto y = simda::lsa_forward(x, w, spec, 2, true);
    CHECK(y.shape() == std::vector<int>{L, N, d});
    for (int i = 0; i < y.numel(); ++i) CHECK(std::isfinite(y[i]));
}

TEST_CASE("attention cost arithmetic") {
    auto g = simda::attention_cost(16, 64, 1, AttentionVariant::global_st);
    auto l = simda::attention_cost(16, 64, 1, AttentionVariant::lsa);
    CHECK(g.score_macs == 1048576);
    CHECK(l.score_macs == 131072);
    CHECK(g.score_macs / l.score_macs == 8); // L/2
    CHECK(g.total_macs == 2 * g.score_macs);

    // L = 1: lsa costs exactly twice frame-wise attention
    auto f1 = simda::attention_cost(1, 32, 16, AttentionVariant::framewise);
    auto l1 = simda::attention_cost(1, 32, 16, AttentionVariant::lsa);
    CHECK(l1.total_macs == 2 * f1.total_macs);

    // doubling L doubles lsa cost but quadruples global cost
    auto l8 = simda::attention_cost(8, 32, 16, AttentionVariant::lsa);
    auto l16 = simda::attention_cost(16, 32, 16, AttentionVariant::lsa);
    CHECK(l16.total_macs == 2 * l8.total_macs);
    auto g8 = simda::attention_cost(8, 32, 16, AttentionVariant::global_st);
    auto g16 = simda::attention_cost(16, 32, 16, AttentionVariant::global_st);
    CHECK(g16.total_macs == 4 * g8.total_macs);
}

TEST_CASE("global over lsa ratio is exactly L/2 across a size grid") {
    for (int L : {2, 4, 8, 16, 32})
        for (int N : {16, 64})
            for (int d : {8, 32}) {
                auto g = simda::attention_cost(L, N, d, AttentionVariant::global_st);
                auto l = simda::attention_cost(L, N, d, AttentionVariant::lsa);
                CHECK(g.total_macs * 2 == l.total_macs * static_cast<std::uint64_t>(L));
            }
}

TEST_CASE("shift spec validation") {
    ShiftSpec bad{0};
    auto x = Tf::zeros({2, 2, 2});
    CHECK_THROWS_AS(simda::temporal_shift_compose(x, bad), simda::ConfigError);
    CHECK_THROWS_AS(simda::attention_cost(0, 4, 4, AttentionVariant::lsa), simda::ConfigError);
}
