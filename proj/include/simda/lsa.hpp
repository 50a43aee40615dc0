#pragma once

// Latent-Shift Attention: a patch-level temporal shift assembles a composite
// key/value frame from preceding frames, reusing the frozen projections of
// plain frame-wise self-attention. No new parameters.

#include <cmath>
#include <cstdint>

#include "simda/ops.hpp"
#include "simda/tensor.hpp"

namespace simda {

// Shift window and the cyclic token-to-offset assignment.
struct ShiftSpec {
    int window = 2; // W >= 1: how many preceding frames contribute patches

    int offset(int p) const { return 1 + (p % window); }

    void validate() const {
        if (window < 1) throw ConfigError("shift spec: window must be >= 1");
    }
};

// out[i][p] = x[max(i - off(p), 0)][p]; frame 0 is its own composite.
template <typename S>
TensorT<S> temporal_shift_compose(const TensorT<S>& x, const ShiftSpec& spec) {
    spec.validate();
    if (x.ndim() != 3) throw ShapeError("temporal_shift_compose: expected [L,N,d] tokens");
    const int L = x.dim(0), N = x.dim(1), d = x.dim(2);
    TensorT<S> out({L, N, d});
    // gather map: (i, p) -> source frame
    for (int i = 0; i < L; ++i)
        for (int p = 0; p < N; ++p) {
            const int src = std::max(i - spec.offset(p), 0);
            const std::size_t so = (static_cast<std::size_t>(src) * N + p) * d;
            const std::size_t to = (static_cast<std::size_t>(i) * N + p) * d;
            for (int c = 0; c < d; ++c) out[static_cast<int>(to) + c] = x[static_cast<int>(so) + c];
        }
    out.set_requires_grad(x.requires_grad());
    if (detail::taping<S>(x.requires_grad())) {
        auto xn = x.node, on = out.node;
        const int W = spec.window;
        detail::record<S>([xn, on, L, N, d, W] {
            if (!detail::reached(on)) return;
            auto& gx = detail::grad_of(xn);
            for (int i = 0; i < L; ++i)
                for (int p = 0; p < N; ++p) {
                    const int src = std::max(i - (1 + (p % W)), 0);
                    const std::size_t so = (static_cast<std::size_t>(src) * N + p) * d;
                    const std::size_t to = (static_cast<std::size_t>(i) * N + p) * d;
                    for (int c = 0; c < d; ++c) gx[so + c] += on->grad[to + c];
                }
        });
    }
    return out;
}

// Frozen projections inherited from the 2D base network.
template <typename S>
struct AttentionWeightsT {
    TensorT<S> wq, wk, wv; // d x d, no biases
    TensorT<S> wo;         // d x d output projection
    TensorT<S> bo;         // d

    static AttentionWeightsT init(int d, Rng& rng) {
        const double s = 1.0 / std::sqrt(static_cast<double>(d));
        AttentionWeightsT w;
        w.wq = TensorT<S>::randn({d, d}, rng, s);
        w.wk = TensorT<S>::randn({d, d}, rng, s);
        w.wv = TensorT<S>::randn({d, d}, rng, s);
        w.wo = TensorT<S>::randn({d, d}, rng, s);
        w.bo = TensorT<S>::zeros({d});
        return w;
    }
};

// Scaled dot-product attention per frame. With `shift` on, keys/values come
// from [frame i || composite i] (2N entries); otherwise plain frame-wise
// self-attention. Q is always the frame's own tokens.
template <typename S>
TensorT<S> lsa_forward(const TensorT<S>& x, const AttentionWeightsT<S>& w,
                       const ShiftSpec& spec, int heads = 1, bool shift = true) {
    if (x.ndim() != 3) throw ShapeError("lsa_forward: expected [L,N,d] tokens");
    const int L = x.dim(0), d = x.dim(2);
    if (heads < 1 || d % heads != 0)
        throw ConfigError("lsa_forward: head count must divide token dim");
    const int dh = d / heads;
    const S scale_factor = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));

    TensorT<S> composite;
    if (shift) composite = temporal_shift_compose(x, spec);

    std::vector<TensorT<S>> out_frames;
    out_frames.reserve(static_cast<std::size_t>(L));
    for (int i = 0; i < L; ++i) {
        auto xi = frame_rows(x, i);
        auto kv_src = shift ? concat_rows(xi, frame_rows(composite, i)) : xi;
        auto q = matmul(xi, w.wq);
        auto k = matmul(kv_src, w.wk);
        auto v = matmul(kv_src, w.wv);
        TensorT<S> attended;
        if (heads == 1) {
            auto scores = scale(matmul_nt(q, k), scale_factor);
            attended = matmul(softmax(scores, 1), v);
        } else {
            std::vector<TensorT<S>> parts;
            parts.reserve(static_cast<std::size_t>(heads));
            for (int h = 0; h < heads; ++h) {
                auto qh = slice_cols(q, h * dh, (h + 1) * dh);
                auto kh = slice_cols(k, h * dh, (h + 1) * dh);
                auto vh = slice_cols(v, h * dh, (h + 1) * dh);
                auto scores = scale(matmul_nt(qh, kh), scale_factor);
                parts.push_back(matmul(softmax(scores, 1), vh));
            }
            attended = concat_cols(parts);
        }
        out_frames.push_back(linear(attended, w.wo, w.bo));
    }
    return stack_frames(out_frames);
}

// ---------------------------------------------------------------------------
// Analytic attention complexity
// ---------------------------------------------------------------------------

enum class AttentionVariant { global_st, framewise, lsa };

struct AttentionCost {
    std::uint64_t score_macs = 0; // QK^T
    std::uint64_t total_macs = 0; // score + aggregation
};

inline AttentionCost attention_cost(int L, int N, int d, AttentionVariant v) {
    if (L < 1 || N < 1 || d < 1) throw ConfigError("attention_cost: extents must be positive");
    const std::uint64_t uL = static_cast<std::uint64_t>(L);
    const std::uint64_t uN = static_cast<std::uint64_t>(N);
    const std::uint64_t ud = static_cast<std::uint64_t>(d);
    AttentionCost c;
    switch (v) {
    case AttentionVariant::global_st:
        c.score_macs = uL * uN * uL * uN * ud;
        break;
    case AttentionVariant::framewise:
        c.score_macs = uL * uN * uN * ud;
        break;
    case AttentionVariant::lsa:
        c.score_macs = uL * uN * (2 * uN) * ud;
        break;
    }
    c.total_macs = 2 * c.score_macs;
    return c;
}

} // namespace simda
