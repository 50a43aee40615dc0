#pragma once

// Differentiable tensor ops. Every op is pure (inputs are never mutated) and
// registers its backward rule on the active GradTape when any input requires
// gradients. Backward closures are no-ops for outputs the loss never reached.

#include <cmath>
#include <cstdint>
#include <vector>

#include "simda/gemm.hpp"
#include "simda/tensor.hpp"

namespace simda {

namespace detail {

template <typename S>
inline std::vector<S>& grad_of(const std::shared_ptr<TensorNode<S>>& n) {
    if (n->grad.empty()) n->grad.assign(n->data.size(), S(0));
    return n->grad;
}

template <typename S>
inline bool reached(const std::shared_ptr<TensorNode<S>>& out) {
    return !out->grad.empty();
}

inline void check_same_shape(const std::vector<int>& a, const std::vector<int>& b,
                             const char* op) {
    if (a != b) throw ShapeError(std::string(op) + ": shape mismatch");
}

} // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic
// ---------------------------------------------------------------------------

template <typename S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
    detail::check_same_shape(a.shape(), b.shape(), "add");
    TensorT<S> out(a.shape());
    const int n = a.numel();
    for (int i = 0; i < n; ++i) out[i] = a[i] + b[i];
    const bool req = a.requires_grad() || b.requires_grad();
    out.set_requires_grad(req);
    if (detail::taping<S>(req)) {
        auto an = a.node, bn = b.node, on = out.node;
        detail::record<S>([an, bn, on, n] {
            if (!detail::reached(on)) return;
            if (an->requires_grad) {
                auto& ga = detail::grad_of(an);
                for (int i = 0; i < n; ++i) ga[i] += on->grad[i];
            }
            if (bn->requires_grad) {
                auto& gb = detail::grad_of(bn);
                for (int i = 0; i < n; ++i) gb[i] += on->grad[i];
            }
        });
    }
    return out;
}

template <typename S>
TensorT<S> sub(const TensorT<S>& a, const TensorT<S>& b) {
    detail::check_same_shape(a.shape(), b.shape(), "sub");
    TensorT<S> out(a.shape());
    const int n = a.numel();
    for (int i = 0; i < n; ++i) out[i] = a[i] - b[i];
    const bool req = a.requires_grad() || b.requires_grad();
    out.set_requires_grad(req);
    if (detail::taping<S>(req)) {
        auto an = a.node, bn = b.node, on = out.node;
        detail::record<S>([an, bn, on, n] {
            if (!detail::reached(on)) return;
            if (an->requires_grad) {
                auto& ga = detail::grad_of(an);
                for (int i = 0; i < n; ++i) ga[i] += on->grad[i];
            }
            if (bn->requires_grad) {
                auto& gb = detail::grad_of(bn);
                for (int i = 0; i < n; ++i) gb[i] -= on->grad[i];
            }
        });
    }
    return out;
}

template <typename S>
TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b) {
    detail::check_same_shape(a.shape(), b.shape(), "mul");
    TensorT<S> out(a.shape());
    const int n = a.numel();
    for (int i = 0; i < n; ++i) out[i] = a[i] * b[i];
    const bool req = a.requires_grad() || b.requires_grad();
    out.set_requires_grad(req);
    if (detail::taping<S>(req)) {
        auto an = a.node, bn = b.node, on = out.node;
        detail::record<S>([an, bn, on, n] {
            if (!detail::reached(on)) return;
            if (an->requires_grad) {
                auto& ga = detail::grad_of(an);
                for (int i = 0; i < n; ++i) ga[i] += on->grad[i] * bn->data[i];
            }
            if (bn->requires_grad) {
                auto& gb = detail::grad_of(bn);
                for (int i = 0; i < n; ++i) gb[i] += on->grad[i] * an->data[i];
            }
        });
    }
    return out;
}

template <typename S>
TensorT<S> scale(const TensorT<S>& a, S c) {
    TensorT<S> out(a.shape());
    const int n = a.numel();
    for (int i = 0; i < n; ++i) out[i] = a[i] * c;
    out.set_requires_grad(a.requires_grad());
    if (detail::taping<S>(a.requires_grad())) {
        auto an = a.node, on = out.node;
        detail::record<S>([an, on, c, n] {
            if (!detail::reached(on)) return;
            auto& ga = detail::grad_of(an);
            for (int i = 0; i < n; ++i) ga[i] += on->grad[i] * c;
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Matrix products
// ---------------------------------------------------------------------------

// [m x k] * [k x n] -> [m x n]
template <typename S>
TensorT<S> matmul(const TensorT<S>& a, const TensorT<S>& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
        throw ShapeError("matmul: inner extents must match");
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    TensorT<S> out({m, n});
    gemm_nn(a.data(), b.data(), out.data(), m, k, n, false);
    const bool req = a.requires_grad() || b.requires_grad();
    out.set_requires_grad(req);
    if (detail::taping<S>(req)) {
        auto an = a.node, bn = b.node, on = out.node;
        detail::record<S>([an, bn, on, m, k, n] {
            if (!detail::reached(on)) return;
            if (an->requires_grad)
                gemm_nt(on->grad.data(), bn->data.data(), detail::grad_of(an).data(), m, n, k, true);
            if (bn->requires_grad)
                gemm_tn(an->data.data(), on->grad.data(), detail::grad_of(bn).data(), k, m, n, true);
        });
    }
    return out;
}

// [m x k] * [n x k]^T -> [m x n]
template <typename S>
TensorT<S> matmul_nt(const TensorT<S>& a, const TensorT<S>& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(1))
        throw ShapeError("matmul_nt: inner extents must match");
    const int m = a.dim(0), k = a.dim(1), n = b.dim(0);
    TensorT<S> out({m, n});
    gemm_nt(a.data(), b.data(), out.data(), m, k, n, false);
    const bool req = a.requires_grad() || b.requires_grad();
    out.set_requires_grad(req);
    if (detail::taping<S>(req)) {
        auto an = a.node, bn = b.node, on = out.node;
        detail::record<S>([an, bn, on, m, k, n] {
            if (!detail::reached(on)) return;
            if (an->requires_grad)
                gemm_nn(on->grad.data(), bn->data.data(), detail::grad_of(an).data(), m, n, k, true);
            if (bn->requires_grad)
                gemm_tn(on->grad.data(), an->data.data(), detail::grad_of(bn).data(), n, m, k, true);
        });
    }
    return out;
}

// x[N x din] * w[din x dout] + b[dout]
template <typename S>
TensorT<S> linear(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& b) {
    if (x.ndim() != 2 || w.ndim() != 2 || x.dim(1) != w.dim(0))
        throw ShapeError("linear: input/weight extents must match");
    const int rows = x.dim(0), din = x.dim(1), dout = w.dim(1);
    if (b.numel() != dout) throw ShapeError("linear: bias extent mismatch");
    TensorT<S> out({rows, dout});
    gemm_nn(x.data(), w.data(), out.data(), rows, din, dout, false);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < dout; ++j) out[i * dout + j] += b[j];
    const bool req = x.requires_grad() || w.requires_grad() || b.requires_grad();
    out.set_requires_grad(req);
    if (detail::taping<S>(req)) {
        auto xn = x.node, wn = w.node, bn = b.node, on = out.node;
        detail::record<S>([xn, wn, bn, on, rows, din, dout] {
            if (!detail::reached(on)) return;
            if (xn->requires_grad)
                gemm_nt(on->grad.data(), wn->data.data(), detail::grad_of(xn).data(), rows, dout, din, true);
            if (wn->requires_grad)
                gemm_tn(xn->data.data(), on->grad.data(), detail::grad_of(wn).data(), din, rows, dout, true);
            if (bn->requires_grad) {
                auto& gb = detail::grad_of(bn);
                for (int i = 0; i < rows; ++i)
                    for (int j = 0; j < dout; ++j) gb[j] += on->grad[i * dout + j];
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Nonlinearities
// ---------------------------------------------------------------------------

// Exact Gaussian-CDF GELU: x * Phi(x).
template <typename S>
TensorT<S> gelu(const TensorT<S>& x) {
    TensorT<S> out(x.shape());
    const int n = x.numel();
    const S inv_sqrt2 = static_cast<S>(0.7071067811865475244);
    for (int i = 0; i < n; ++i) {
        const S v = x[i];
        out[i] = v * S(0.5) * (S(1) + std::erf(v * inv_sqrt2));
    }
    out.set_requires_grad(x.requires_grad());
    if (detail::taping<S>(x.requires_grad())) {
        auto xn = x.node, on = out.node;
        detail::record<S>([xn, on, n, inv_sqrt2] {
            if (!detail::reached(on)) return;
            auto& gx = detail::grad_of(xn);
            const S inv_sqrt_2pi = static_cast<S>(0.3989422804014326779);
            for (int i = 0; i < n; ++i) {
                const S v = xn->data[i];
                const S phi_cdf = S(0.5) * (S(1) + std::erf(v * inv_sqrt2));
                const S phi_pdf = inv_sqrt_2pi * std::exp(S(-0.5) * v * v);
                gx[i] += on->grad[i] * (phi_cdf + v * phi_pdf);
            }
        });
    }
    return out;
}

// Max-subtracted softmax along `axis`.
template <typename S>
TensorT<S> softmax(const TensorT<S>& x, int axis) {
    if (axis < 0) axis += x.ndim();
    if (axis < 0 || axis >= x.ndim()) throw ShapeError("softmax: axis out of range");
    int outer = 1, inner = 1;
    const int len = x.dim(axis);
    for (int i = 0; i < axis; ++i) outer *= x.dim(i);
    for (int i = axis + 1; i < x.ndim(); ++i) inner *= x.dim(i);

    TensorT<S> out(x.shape());
    for (int o = 0; o < outer; ++o) {
        for (int in = 0; in < inner; ++in) {
            const std::size_t base = static_cast<std::size_t>(o) * len * inner + in;
            S mx = x[static_cast<int>(base)];
            for (int a = 1; a < len; ++a)
                mx = std::max(mx, x[static_cast<int>(base + static_cast<std::size_t>(a) * inner)]);
            S sum = S(0);
            for (int a = 0; a < len; ++a) {
                const std::size_t idx = base + static_cast<std::size_t>(a) * inner;
                const S e = std::exp(x[static_cast<int>(idx)] - mx);
                out[static_cast<int>(idx)] = e;
                sum += e;
            }
            const S inv = S(1) / sum;
            for (int a = 0; a < len; ++a) {
                const std::size_t idx = base + static_cast<std::size_t>(a) * inner;
                out[static_cast<int>(idx)] *= inv;
            }
        }
    }
    out.set_requires_grad(x.requires_grad());
    if (detail::taping<S>(x.requires_grad())) {
        auto xn = x.node, on = out.node;
        detail::record<S>([xn, on, outer, inner, len] {
            if (!detail::reached(on)) return;
            auto& gx = detail::grad_of(xn);
            for (int o = 0; o < outer; ++o) {
                for (int in = 0; in < inner; ++in) {
                    const std::size_t base = static_cast<std::size_t>(o) * len * inner + in;
                    S dot = S(0);
                    for (int a = 0; a < len; ++a) {
                        const std::size_t idx = base + static_cast<std::size_t>(a) * inner;
                        dot += on->grad[idx] * on->data[idx];
                    }
                    for (int a = 0; a < len; ++a) {
                        const std::size_t idx = base + static_cast<std::size_t>(a) * inner;
                        gx[idx] += on->data[idx] * (on->grad[idx] - dot);
                    }
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

template <typename S>
TensorT<S> reshape(const TensorT<S>& x, std::vector<int> shape) {
    if (TensorT<S>::count(shape) != static_cast<std::size_t>(x.numel()))
        throw ShapeError("reshape: element count mismatch");
    TensorT<S> out = x.clone();
    out.node->shape = std::move(shape);
    out.node->grad.clear();
    out.set_requires_grad(x.requires_grad());
    if (detail::taping<S>(x.requires_grad())) {
        auto xn = x.node, on = out.node;
        const int n = x.numel();
        detail::record<S>([xn, on, n] {
            if (!detail::reached(on)) return;
            auto& gx = detail::grad_of(xn);
            for (int i = 0; i < n; ++i) gx[i] += on->grad[i];
        });
    }
    return out;
}

// [L,C,H,W] -> [L, H*W, C] token layout
template <typename S>
TensorT<S> latent_to_tokens(const TensorT<S>& x) {
    if (x.ndim() != 4) throw ShapeError("latent_to_tokens: expected 4-d input");
    const int L = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int N = H * W;
    TensorT<S> out({L, N, C});
    for (int l = 0; l < L; ++l)
        for (int c = 0; c < C; ++c)
            for (int p = 0; p < N; ++p)
                out[(l * N + p) * C + c] = x[(l * C + c) * N + p];
    out.set_requires_grad(x.requires_grad());
    if (detail::taping<S>(x.requires_grad())) {
        auto xn = x.node, on = out.node;
        detail::record<S>([xn, on, L, C, N] {
            if (!detail::reached(on)) return;
            auto& gx = detail::grad_of(xn);
            for (int l = 0; l < L; ++l)
                for (int c = 0; c < C; ++c)
                    for (int p = 0; p < N; ++p)
                        gx[(l * C + c) * N + p] += on->grad[(l * N + p) * C + c];
        });
    }
    return out;
}

// [L, N, C] -> [L,C,H,W] with N == H*W
template <typename S>
TensorT<S> tokens_to_latent(const TensorT<S>& t, int H, int W) {
    if (t.ndim() != 3 || t.dim(1) != H * W)
        throw ShapeError("tokens_to_latent: token count does not match grid");
    const int L = t.dim(0), N = t.dim(1), C = t.dim(2);
    TensorT<S> out({L, C, H, W});
    for (int l = 0; l < L; ++l)
        for (int p = 0; p < N; ++p)
            for (int c = 0; c < C; ++c)
                out[(l * C + c) * N + p] = t[(l * N + p) * C + c];
    out.set_requires_grad(t.requires_grad());
    if (detail::taping<S>(t.requires_grad())) {
        auto tn = t.node, on = out.node;
        detail::record<S>([tn, on, L, C, N] {
            if (!detail::reached(on)) return;
            auto& gt = detail::grad_of(tn);
            for (int l = 0; l < L; ++l)
                for (int p = 0; p < N; ++p)
                    for (int c = 0; c < C; ++c)
                        gt[(l * N + p) * C + c] += on->grad[(l * C + c) * N + p];
        });
    }
    return out;
}

// Copy of frame i's token rows: [L,N,C] -> [N,C]
template <typename S>
TensorT<S> frame_rows(const TensorT<S>& t, int i) {
    if (t.ndim() != 3) throw ShapeError("frame_rows: expected [L,N,C]");
    const int L = t.dim(0), N = t.dim(1), C = t.dim(2);
    if (i < 0 || i >= L) throw RangeError("frame_rows: frame index out of range");
    TensorT<S> out({N, C});
    const std::size_t off = static_cast<std::size_t>(i) * N * C;
    for (int j = 0; j < N * C; ++j) out[j] = t[static_cast<int>(off) + j];
    out.set_requires_grad(t.requires_grad());
    if (detail::taping<S>(t.requires_grad())) {
        auto tn = t.node, on = out.node;
        const int n = N * C;
        detail::record<S>([tn, on, off, n] {
            if (!detail::reached(on)) return;
            auto& gt = detail::grad_of(tn);
            for (int j = 0; j < n; ++j) gt[off + j] += on->grad[j];
        });
    }
    return out;
}

// Stack L frames of [N,C] into [L,N,C].
template <typename S>
TensorT<S> stack_frames(const std::vector<TensorT<S>>& frames) {
    if (frames.empty()) throw ShapeError("stack_frames: empty input");
    const int N = frames[0].dim(0), C = frames[0].dim(1);
    const int L = static_cast<int>(frames.size());
    bool req = false;
    for (const auto& f : frames) {
        detail::check_same_shape(f.shape(), frames[0].shape(), "stack_frames");
        req = req || f.requires_grad();
    }
    TensorT<S> out({L, N, C});
    for (int l = 0; l < L; ++l)
        for (int j = 0; j < N * C; ++j) out[l * N * C + j] = frames[l][j];
    out.set_requires_grad(req);
    if (detail::taping<S>(req)) {
        std::vector<std::shared_ptr<TensorNode<S>>> nodes;
        nodes.reserve(frames.size());
        for (const auto& f : frames) nodes.push_back(f.node);
        auto on = out.node;
        const int n = N * C;
        detail::record<S>([nodes, on, n] {
            if (!detail::reached(on)) return;
            for (std::size_t l = 0; l < nodes.size(); ++l) {
                if (!nodes[l]->requires_grad) continue;
                auto& g = detail::grad_of(nodes[l]);
                for (int j = 0; j < n; ++j) g[j] += on->grad[l * n + j];
            }
        });
    }
    return out;
}

// Concatenate along rows: [Na,d] + [Nb,d] -> [Na+Nb,d]
template <typename S>
TensorT<S> concat_rows(const TensorT<S>& a, const TensorT<S>& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(1))
        throw ShapeError("concat_rows: column extents must match");
    const int na = a.dim(0), nb = b.dim(0), d = a.dim(1);
    TensorT<S> out({na + nb, d});
    for (int j = 0; j < na * d; ++j) out[j] = a[j];
    for (int j = 0; j < nb * d; ++j) out[na * d + j] = b[j];
    const bool req = a.requires_grad() || b.requires_grad();
    out.set_requires_grad(req);
    if (detail::taping<S>(req)) {
        auto an = a.node, bn = b.node, on = out.node;
        detail::record<S>([an, bn, on, na, nb, d] {
            if (!detail::reached(on)) return;
            if (an->requires_grad) {
                auto& ga = detail::grad_of(an);
                for (int j = 0; j < na * d; ++j) ga[j] += on->grad[j];
            }
            if (bn->requires_grad) {
                auto& gb = detail::grad_of(bn);
                for (int j = 0; j < nb * d; ++j) gb[j] += on->grad[na * d + j];
            }
        });
    }
    return out;
}

// Column slice [N, c0:c1) of a [N,d] matrix.
template <typename S>
TensorT<S> slice_cols(const TensorT<S>& x, int c0, int c1) {
    if (x.ndim() != 2 || c0 < 0 || c1 > x.dim(1) || c0 >= c1)
        throw ShapeError("slice_cols: bad column range");
    const int rows = x.dim(0), d = x.dim(1), w = c1 - c0;
    TensorT<S> out({rows, w});
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < w; ++j) out[i * w + j] = x[i * d + c0 + j];
    out.set_requires_grad(x.requires_grad());
    if (detail::taping<S>(x.requires_grad())) {
        auto xn = x.node, on = out.node;
        detail::record<S>([xn, on, rows, d, w, c0] {
            if (!detail::reached(on)) return;
            auto& gx = detail::grad_of(xn);
            for (int i = 0; i < rows; ++i)
                for (int j = 0; j < w; ++j) gx[i * d + c0 + j] += on->grad[i * w + j];
        });
    }
    return out;
}

template <typename S>
TensorT<S> concat_cols(const std::vector<TensorT<S>>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: empty input");
    const int rows = parts[0].dim(0);
    int total = 0;
    bool req = false;
    for (const auto& p : parts) {
        if (p.ndim() != 2 || p.dim(0) != rows) throw ShapeError("concat_cols: row mismatch");
        total += p.dim(1);
        req = req || p.requires_grad();
    }
    TensorT<S> out({rows, total});
    int col = 0;
    for (const auto& p : parts) {
        const int w = p.dim(1);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < w; ++j) out[i * total + col + j] = p[i * w + j];
        col += w;
    }
    out.set_requires_grad(req);
    if (detail::taping<S>(req)) {
        std::vector<std::shared_ptr<TensorNode<S>>> nodes;
        std::vector<int> widths;
        for (const auto& p : parts) {
            nodes.push_back(p.node);
            widths.push_back(p.dim(1));
        }
        auto on = out.node;
        detail::record<S>([nodes, widths, on, rows, total] {
            if (!detail::reached(on)) return;
            int c0 = 0;
            for (std::size_t k = 0; k < nodes.size(); ++k) {
                const int w = widths[k];
                if (nodes[k]->requires_grad) {
                    auto& g = detail::grad_of(nodes[k]);
                    for (int i = 0; i < rows; ++i)
                        for (int j = 0; j < w; ++j) g[i * w + j] += on->grad[i * total + c0 + j];
                }
                c0 += w;
            }
        });
    }
    return out;
}

// Concatenate along the channel axis: [L,C1,H,W] + [L,C2,H,W].
template <typename S>
TensorT<S> concat_channels(const TensorT<S>& a, const TensorT<S>& b) {
    if (a.ndim() != 4 || b.ndim() != 4 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) ||
        a.dim(3) != b.dim(3))
        throw ShapeError("concat_channels: frame/spatial extents must match");
    const int L = a.dim(0), C1 = a.dim(1), C2 = b.dim(1), H = a.dim(2), W = a.dim(3);
    const int hw = H * W;
    TensorT<S> out({L, C1 + C2, H, W});
    for (int l = 0; l < L; ++l) {
        for (int j = 0; j < C1 * hw; ++j) out[(l * (C1 + C2)) * hw + j] = a[l * C1 * hw + j];
        for (int j = 0; j < C2 * hw; ++j)
            out[(l * (C1 + C2) + C1) * hw + j] = b[l * C2 * hw + j];
    }
    const bool req = a.requires_grad() || b.requires_grad();
    out.set_requires_grad(req);
    if (detail::taping<S>(req)) {
        auto an = a.node, bn = b.node, on = out.node;
        detail::record<S>([an, bn, on, L, C1, C2, hw] {
            if (!detail::reached(on)) return;
            for (int l = 0; l < L; ++l) {
                if (an->requires_grad) {
                    auto& ga = detail::grad_of(an);
                    for (int j = 0; j < C1 * hw; ++j)
                        ga[l * C1 * hw + j] += on->grad[(l * (C1 + C2)) * hw + j];
                }
                if (bn->requires_grad) {
                    auto& gb = detail::grad_of(bn);
                    for (int j = 0; j < C2 * hw; ++j)
                        gb[l * C2 * hw + j] += on->grad[(l * (C1 + C2) + C1) * hw + j];
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Convolutions
// ---------------------------------------------------------------------------

namespace detail {

template <typename S>
void im2col(const S* x, S* cols, int C, int H, int W, int kh, int kw) {
    const int ph = kh / 2, pw = kw / 2, hw = H * W;
    std::size_t r = 0;
    for (int c = 0; c < C; ++c) {
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx, ++r) {
                S* dst = cols + r * hw;
                for (int oy = 0; oy < H; ++oy) {
                    const int iy = oy + ky - ph;
                    if (iy < 0 || iy >= H) {
                        for (int ox = 0; ox < W; ++ox) dst[oy * W + ox] = S(0);
                        continue;
                    }
                    for (int ox = 0; ox < W; ++ox) {
                        const int ix = ox + kx - pw;
                        dst[oy * W + ox] =
                            (ix >= 0 && ix < W) ? x[(c * H + iy) * W + ix] : S(0);
                    }
                }
            }
        }
    }
}

template <typename S>
void col2im_add(const S* cols, S* gx, int C, int H, int W, int kh, int kw) {
    const int ph = kh / 2, pw = kw / 2, hw = H * W;
    std::size_t r = 0;
    for (int c = 0; c < C; ++c) {
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx, ++r) {
                const S* src = cols + r * hw;
                for (int oy = 0; oy < H; ++oy) {
                    const int iy = oy + ky - ph;
                    if (iy < 0 || iy >= H) continue;
                    for (int ox = 0; ox < W; ++ox) {
                        const int ix = ox + kx - pw;
                        if (ix >= 0 && ix < W) gx[(c * H + iy) * W + ix] += src[oy * W + ox];
                    }
                }
            }
        }
    }
}

} // namespace detail

// Per-frame 2D convolution, stride 1, zero padding, odd kernels.
// x[L,Ci,H,W], w[Co,Ci,kh,kw], b[Co] -> [L,Co,H,W]
template <typename S>
TensorT<S> conv2d(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& b) {
    if (x.ndim() != 4 || w.ndim() != 4) throw ShapeError("conv2d: expected 4-d input/weight");
    const int L = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    if (w.dim(1) != Ci) throw ShapeError("conv2d: channel mismatch");
    if (kh % 2 == 0 || kw % 2 == 0) throw ConfigError("conv2d: kernel extents must be odd");
    if (b.numel() != Co) throw ShapeError("conv2d: bias extent mismatch");
    const int hw = H * W, K = Ci * kh * kw;
    TensorT<S> out({L, Co, H, W});
    std::vector<S> cols(static_cast<std::size_t>(K) * hw);
    for (int l = 0; l < L; ++l) {
        detail::im2col(x.data() + static_cast<std::size_t>(l) * Ci * hw, cols.data(), Ci, H, W,
                       kh, kw);
        S* out_l = out.data() + static_cast<std::size_t>(l) * Co * hw;
        gemm_nn(w.data(), cols.data(), out_l, Co, K, hw, false);
        for (int co = 0; co < Co; ++co) {
            const S bv = b[co];
            for (int p = 0; p < hw; ++p) out_l[co * hw + p] += bv;
        }
    }
    const bool req = x.requires_grad() || w.requires_grad() || b.requires_grad();
    out.set_requires_grad(req);
    if (detail::taping<S>(req)) {
        auto xn = x.node, wn = w.node, bn = b.node, on = out.node;
        detail::record<S>([xn, wn, bn, on, L, Ci, Co, H, W, kh, kw] {
            if (!detail::reached(on)) return;
            const int hw = H * W, K = Ci * kh * kw;
            std::vector<S> cols(static_cast<std::size_t>(K) * hw);
            std::vector<S> dcols(static_cast<std::size_t>(K) * hw);
            for (int l = 0; l < L; ++l) {
                const S* dout_l = on->grad.data() + static_cast<std::size_t>(l) * Co * hw;
                if (wn->requires_grad || xn->requires_grad)
                    detail::im2col(xn->data.data() + static_cast<std::size_t>(l) * Ci * hw,
                                   cols.data(), Ci, H, W, kh, kw);
                if (wn->requires_grad)
                    gemm_nt(dout_l, cols.data(), detail::grad_of(wn).data(), Co, hw, K, true);
                if (bn->requires_grad) {
                    auto& gb = detail::grad_of(bn);
                    for (int co = 0; co < Co; ++co) {
                        S s = S(0);
                        for (int p = 0; p < hw; ++p) s += dout_l[co * hw + p];
                        gb[co] += s;
                    }
                }
                if (xn->requires_grad) {
                    gemm_tn(wn->data.data(), dout_l, dcols.data(), K, Co, hw, false);
                    detail::col2im_add(dcols.data(),
                                       detail::grad_of(xn).data() +
                                           static_cast<std::size_t>(l) * Ci * hw,
                                       Ci, H, W, kh, kw);
                }
            }
        });
    }
    return out;
}

// Depth-wise 3D convolution over (time, height, width) with zero padding on
// all three axes. x[L,C,H,W], kernel[C,kt,kh,kw] -> same shape.
template <typename S>
TensorT<S> depthwise_conv3d(const TensorT<S>& x, const TensorT<S>& kernel) {
    if (x.ndim() != 4 || kernel.ndim() != 4)
        throw ShapeError("depthwise_conv3d: expected [L,C,H,W] input and [C,kt,kh,kw] kernel");
    const int L = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int kt = kernel.dim(1), kh = kernel.dim(2), kw = kernel.dim(3);
    if (kernel.dim(0) != C) throw ShapeError("depthwise_conv3d: channel mismatch");
    if (kt % 2 == 0 || kh % 2 == 0 || kw % 2 == 0)
        throw ConfigError("depthwise_conv3d: kernel extents must be odd");
    const int pt = kt / 2, ph = kh / 2, pw = kw / 2, hw = H * W;
    TensorT<S> out({L, C, H, W});
    for (int l = 0; l < L; ++l)
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < H; ++y)
                for (int xo = 0; xo < W; ++xo) {
                    S acc = S(0);
                    for (int a = 0; a < kt; ++a) {
                        const int li = l + a - pt;
                        if (li < 0 || li >= L) continue;
                        for (int b = 0; b < kh; ++b) {
                            const int yi = y + b - ph;
                            if (yi < 0 || yi >= H) continue;
                            for (int cc = 0; cc < kw; ++cc) {
                                const int xi = xo + cc - pw;
                                if (xi < 0 || xi >= W) continue;
                                acc += x[((li * C + c) * H + yi) * W + xi] *
                                       kernel[((c * kt + a) * kh + b) * kw + cc];
                            }
                        }
                    }
                    out[((l * C + c) * H + y) * W + xo] = acc;
                }
    const bool req = x.requires_grad() || kernel.requires_grad();
    out.set_requires_grad(req);
    if (detail::taping<S>(req)) {
        auto xn = x.node, kn = kernel.node, on = out.node;
        detail::record<S>([xn, kn, on, L, C, H, W, kt, kh, kw, pt, ph, pw] {
            if (!detail::reached(on)) return;
            for (int l = 0; l < L; ++l)
                for (int c = 0; c < C; ++c)
                    for (int y = 0; y < H; ++y)
                        for (int xo = 0; xo < W; ++xo) {
                            const S g = on->grad[((l * C + c) * H + y) * W + xo];
                            if (g == S(0)) continue;
                            for (int a = 0; a < kt; ++a) {
                                const int li = l + a - pt;
                                if (li < 0 || li >= L) continue;
                                for (int b = 0; b < kh; ++b) {
                                    const int yi = y + b - ph;
                                    if (yi < 0 || yi >= H) continue;
                                    for (int cc = 0; cc < kw; ++cc) {
                                        const int xi = xo + cc - pw;
                                        if (xi < 0 || xi >= W) continue;
                                        const std::size_t xidx = ((static_cast<std::size_t>(li) * C + c) * H + yi) * W + xi;
                                        const std::size_t kidx = ((static_cast<std::size_t>(c) * kt + a) * kh + b) * kw + cc;
                                        if (xn->requires_grad)
                                            detail::grad_of(xn)[xidx] += g * kn->data[kidx];
                                        if (kn->requires_grad)
                                            detail::grad_of(kn)[kidx] += g * xn->data[xidx];
                                    }
                                }
                            }
                        }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Normalization and resampling
// ---------------------------------------------------------------------------

// Group normalization over [L,C,H,W]; statistics per (frame, group), biased
// variance, eps floor. gamma/beta are per-channel.
template <typename S>
TensorT<S> group_norm(const TensorT<S>& x, int groups, S eps, const TensorT<S>& gamma,
                      const TensorT<S>& beta) {
    if (x.ndim() != 4) throw ShapeError("group_norm: expected [L,C,H,W]");
    const int L = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (groups <= 0 || C % groups != 0)
        throw ConfigError("group_norm: channels must be divisible by groups");
    if (gamma.numel() != C || beta.numel() != C)
        throw ShapeError("group_norm: affine extents must equal channel count");
    const int cg = C / groups, hw = H * W, m = cg * hw;
    TensorT<S> out(x.shape());
    auto stats = std::make_shared<std::vector<S>>(static_cast<std::size_t>(L) * groups * 2);
    for (int l = 0; l < L; ++l) {
        for (int g = 0; g < groups; ++g) {
            const std::size_t base = (static_cast<std::size_t>(l) * C + static_cast<std::size_t>(g) * cg) * hw;
            S mean = S(0);
            for (int j = 0; j < m; ++j) mean += x[static_cast<int>(base) + j];
            mean /= static_cast<S>(m);
            S var = S(0);
            for (int j = 0; j < m; ++j) {
                const S d = x[static_cast<int>(base) + j] - mean;
                var += d * d;
            }
            var /= static_cast<S>(m);
            const S ivar = S(1) / std::sqrt(var + eps);
            (*stats)[(static_cast<std::size_t>(l) * groups + g) * 2] = mean;
            (*stats)[(static_cast<std::size_t>(l) * groups + g) * 2 + 1] = ivar;
            for (int cc = 0; cc < cg; ++cc) {
                const int c = g * cg + cc;
                const S gam = gamma[c], bet = beta[c];
                const std::size_t cb = base + static_cast<std::size_t>(cc) * hw;
                for (int p = 0; p < hw; ++p)
                    out[static_cast<int>(cb) + p] =
                        (x[static_cast<int>(cb) + p] - mean) * ivar * gam + bet;
            }
        }
    }
    const bool req = x.requires_grad() || gamma.requires_grad() || beta.requires_grad();
    out.set_requires_grad(req);
    if (detail::taping<S>(req)) {
        auto xn = x.node, gn = gamma.node, bn = beta.node, on = out.node;
        detail::record<S>([xn, gn, bn, on, stats, L, C, groups, hw] {
            if (!detail::reached(on)) return;
            const int cg = C / groups, m = cg * hw;
            for (int l = 0; l < L; ++l) {
                for (int g = 0; g < groups; ++g) {
                    const std::size_t base = (static_cast<std::size_t>(l) * C + static_cast<std::size_t>(g) * cg) * hw;
                    const S mean = (*stats)[(static_cast<std::size_t>(l) * groups + g) * 2];
                    const S ivar = (*stats)[(static_cast<std::size_t>(l) * groups + g) * 2 + 1];
                    S s1 = S(0), s2 = S(0);
                    for (int cc = 0; cc < cg; ++cc) {
                        const int c = g * cg + cc;
                        const S gam = gn->data[c];
                        const std::size_t cb = base + static_cast<std::size_t>(cc) * hw;
                        for (int p = 0; p < hw; ++p) {
                            const S xh = (xn->data[cb + p] - mean) * ivar;
                            const S dyh = on->grad[cb + p] * gam;
                            s1 += dyh;
                            s2 += dyh * xh;
                        }
                    }
                    for (int cc = 0; cc < cg; ++cc) {
                        const int c = g * cg + cc;
                        const S gam = gn->data[c];
                        const std::size_t cb = base + static_cast<std::size_t>(cc) * hw;
                        for (int p = 0; p < hw; ++p) {
                            const S xh = (xn->data[cb + p] - mean) * ivar;
                            const S dy = on->grad[cb + p];
                            if (gn->requires_grad) detail::grad_of(gn)[c] += dy * xh;
                            if (bn->requires_grad) detail::grad_of(bn)[c] += dy;
                            if (xn->requires_grad) {
                                const S dyh = dy * gam;
                                detail::grad_of(xn)[cb + p] +=
                                    ivar * (dyh - s1 / static_cast<S>(m) - xh * s2 / static_cast<S>(m));
                            }
                        }
                    }
                }
            }
        });
    }
    return out;
}

// 2x average pooling: [L,C,H,W] -> [L,C,H/2,W/2]
template <typename S>
TensorT<S> avg_pool2(const TensorT<S>& x) {
    if (x.ndim() != 4 || x.dim(2) % 2 != 0 || x.dim(3) % 2 != 0)
        throw ShapeError("avg_pool2: spatial extents must be even");
    const int L = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Ho = H / 2, Wo = W / 2;
    TensorT<S> out({L, C, Ho, Wo});
    for (int lc = 0; lc < L * C; ++lc)
        for (int y = 0; y < Ho; ++y)
            for (int xo = 0; xo < Wo; ++xo) {
                const S* p = x.data() + (static_cast<std::size_t>(lc) * H + 2 * y) * W + 2 * xo;
                out[(lc * Ho + y) * Wo + xo] =
                    (p[0] + p[1] + p[W] + p[W + 1]) * static_cast<S>(0.25);
            }
    out.set_requires_grad(x.requires_grad());
    if (detail::taping<S>(x.requires_grad())) {
        auto xn = x.node, on = out.node;
        detail::record<S>([xn, on, L, C, H, W, Ho, Wo] {
            if (!detail::reached(on)) return;
            auto& gx = detail::grad_of(xn);
            for (int lc = 0; lc < L * C; ++lc)
                for (int y = 0; y < Ho; ++y)
                    for (int xo = 0; xo < Wo; ++xo) {
                        const S g = on->grad[(static_cast<std::size_t>(lc) * Ho + y) * Wo + xo] * static_cast<S>(0.25);
                        S* p = gx.data() + (static_cast<std::size_t>(lc) * H + 2 * y) * W + 2 * xo;
                        p[0] += g;
                        p[1] += g;
                        p[W] += g;
                        p[W + 1] += g;
                    }
        });
    }
    return out;
}

// 2x nearest-neighbour upsampling.
template <typename S>
TensorT<S> upsample_nearest2(const TensorT<S>& x) {
    if (x.ndim() != 4) throw ShapeError("upsample_nearest2: expected [L,C,H,W]");
    const int L = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Ho = H * 2, Wo = W * 2;
    TensorT<S> out({L, C, Ho, Wo});
    for (int lc = 0; lc < L * C; ++lc)
        for (int y = 0; y < Ho; ++y)
            for (int xo = 0; xo < Wo; ++xo)
                out[(lc * Ho + y) * Wo + xo] =
                    x[(lc * H + y / 2) * W + xo / 2];
    out.set_requires_grad(x.requires_grad());
    if (detail::taping<S>(x.requires_grad())) {
        auto xn = x.node, on = out.node;
        detail::record<S>([xn, on, L, C, H, W, Ho, Wo] {
            if (!detail::reached(on)) return;
            auto& gx = detail::grad_of(xn);
            for (int lc = 0; lc < L * C; ++lc)
                for (int y = 0; y < Ho; ++y)
                    for (int xo = 0; xo < Wo; ++xo)
                        gx[(static_cast<std::size_t>(lc) * H + y / 2) * W + xo / 2] +=
                            on->grad[(static_cast<std::size_t>(lc) * Ho + y) * Wo + xo];
        });
    }
    return out;
}

// Broadcast-add a per-channel vector over [L,C,H,W].
template <typename S>
TensorT<S> add_channel(const TensorT<S>& x, const TensorT<S>& v) {
    if (x.ndim() != 4 || v.numel() != x.dim(1))
        throw ShapeError("add_channel: vector extent must equal channel count");
    const int L = x.dim(0), C = x.dim(1), hw = x.dim(2) * x.dim(3);
    TensorT<S> out(x.shape());
    for (int l = 0; l < L; ++l)
        for (int c = 0; c < C; ++c) {
            const S vv = v[c];
            const std::size_t base = (static_cast<std::size_t>(l) * C + c) * hw;
            for (int p = 0; p < hw; ++p) out[static_cast<int>(base) + p] = x[static_cast<int>(base) + p] + vv;
        }
    const bool req = x.requires_grad() || v.requires_grad();
    out.set_requires_grad(req);
    if (detail::taping<S>(req)) {
        auto xn = x.node, vn = v.node, on = out.node;
        detail::record<S>([xn, vn, on, L, C, hw] {
            if (!detail::reached(on)) return;
            if (xn->requires_grad) {
                auto& gx = detail::grad_of(xn);
                for (std::size_t i = 0; i < on->grad.size(); ++i) gx[i] += on->grad[i];
            }
            if (vn->requires_grad) {
                auto& gv = detail::grad_of(vn);
                for (int l = 0; l < L; ++l)
                    for (int c = 0; c < C; ++c) {
                        const std::size_t base = (static_cast<std::size_t>(l) * C + c) * hw;
                        S s = S(0);
                        for (int p = 0; p < hw; ++p) s += on->grad[base + p];
                        gv[c] += s;
                    }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Embedding and reductions
// ---------------------------------------------------------------------------

// Row lookup into an embedding table; `pad_id` rows come out as zeros and
// receive no gradient.
template <typename S>
TensorT<S> embedding_rows(const TensorT<S>& table, const std::vector<int>& ids, int pad_id) {
    if (table.ndim() != 2) throw ShapeError("embedding_rows: table must be 2-d");
    const int V = table.dim(0), e = table.dim(1);
    TensorT<S> out({static_cast<int>(ids.size()), e});
    for (std::size_t k = 0; k < ids.size(); ++k) {
        const int id = ids[k];
        if (id < 0 || id >= V) throw VocabError("embedding_rows: token id out of vocabulary");
        if (id == pad_id) continue; // stays zero
        for (int j = 0; j < e; ++j) out[static_cast<int>(k) * e + j] = table[id * e + j];
    }
    out.set_requires_grad(table.requires_grad());
    if (detail::taping<S>(table.requires_grad())) {
        auto tn = table.node, on = out.node;
        detail::record<S>([tn, on, ids, pad_id, e] {
            if (!detail::reached(on)) return;
            auto& gt = detail::grad_of(tn);
            for (std::size_t k = 0; k < ids.size(); ++k) {
                if (ids[k] == pad_id) continue;
                for (int j = 0; j < e; ++j)
                    gt[static_cast<std::size_t>(ids[k]) * e + j] += on->grad[k * e + j];
            }
        });
    }
    return out;
}

template <typename S>
TensorT<S> mean_all(const TensorT<S>& x) {
    const int n = x.numel();
    S s = S(0);
    for (int i = 0; i < n; ++i) s += x[i];
    TensorT<S> out = TensorT<S>::scalar(s / static_cast<S>(n));
    out.set_requires_grad(x.requires_grad());
    if (detail::taping<S>(x.requires_grad())) {
        auto xn = x.node, on = out.node;
        detail::record<S>([xn, on, n] {
            if (!detail::reached(on)) return;
            auto& gx = detail::grad_of(xn);
            const S g = on->grad[0] / static_cast<S>(n);
            for (int i = 0; i < n; ++i) gx[i] += g;
        });
    }
    return out;
}

// Mean squared error over all elements.
template <typename S>
TensorT<S> mse(const TensorT<S>& a, const TensorT<S>& b) {
    detail::check_same_shape(a.shape(), b.shape(), "mse");
    const int n = a.numel();
    S s = S(0);
    for (int i = 0; i < n; ++i) {
        const S d = a[i] - b[i];
        s += d * d;
    }
    TensorT<S> out = TensorT<S>::scalar(s / static_cast<S>(n));
    const bool req = a.requires_grad() || b.requires_grad();
    out.set_requires_grad(req);
    if (detail::taping<S>(req)) {
        auto an = a.node, bn = b.node, on = out.node;
        detail::record<S>([an, bn, on, n] {
            if (!detail::reached(on)) return;
            const S g = on->grad[0] * S(2) / static_cast<S>(n);
            for (int i = 0; i < n; ++i) {
                const S d = g * (an->data[i] - bn->data[i]);
                if (an->requires_grad) detail::grad_of(an)[i] += d;
                if (bn->requires_grad) detail::grad_of(bn)[i] -= d;
            }
        });
    }
    return out;
}

// Sinusoidal position/timestep features; constant with respect to parameters.
template <typename S>
TensorT<S> sinusoidal_embedding(double t, int dim) {
    if (dim % 2 != 0) throw ConfigError("sinusoidal_embedding: dim must be even");
    TensorT<S> out({1, dim});
    const int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / half);
        out[2 * i] = static_cast<S>(std::sin(t * freq));
        out[2 * i + 1] = static_cast<S>(std::cos(t * freq));
    }
    return out;
}

} // namespace simda
