#pragma once

// Noise schedules, forward diffusion, epsilon-prediction loss, and the
// deterministic DDIM sampler with its inversion. Sampling-side math is plain
// (untaped) arithmetic; only training_loss participates in autograd.

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "simda/ops.hpp"
#include "simda/rng.hpp"
#include "simda/tensor.hpp"

namespace simda {

// Per-timestep beta / alpha / alpha_bar tables, 1-indexed over t in [1, T].
// Index 0 is the clean-data sentinel: alpha_bar[0] = 1.
struct NoiseSchedule {
    int T = 0;
    std::vector<double> beta;      // beta[0] unused (= 0)
    std::vector<double> alpha;     // 1 - beta
    std::vector<double> alpha_bar; // running product, strictly decreasing

    double abar(int t) const {
        if (t < 0 || t > T) throw RangeError("schedule: timestep out of [0, T]");
        return alpha_bar[static_cast<std::size_t>(t)];
    }
};

inline NoiseSchedule make_schedule(int T, double beta_start, double beta_end) {
    if (T < 1) throw ConfigError("make_schedule: T must be >= 1");
    if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0))
        throw ConfigError("make_schedule: require 0 < beta_start <= beta_end < 1");
    NoiseSchedule s;
    s.T = T;
    s.beta.assign(static_cast<std::size_t>(T) + 1, 0.0);
    s.alpha.assign(static_cast<std::size_t>(T) + 1, 1.0);
    s.alpha_bar.assign(static_cast<std::size_t>(T) + 1, 1.0);
    for (int t = 1; t <= T; ++t) {
        const double frac = (T == 1) ? 0.0 : static_cast<double>(t - 1) / (T - 1);
        s.beta[t] = beta_start + (beta_end - beta_start) * frac;
        s.alpha[t] = 1.0 - s.beta[t];
        s.alpha_bar[t] = s.alpha_bar[t - 1] * s.alpha[t];
    }
    return s;
}

struct SamplerConfig {
    int num_inference_steps = 50;
    double eta = 0.0; // 0 = fully deterministic
    std::uint64_t seed = 0;
};

// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps
template <typename S>
TensorT<S> q_sample(const TensorT<S>& x0, int t, const TensorT<S>& eps,
                    const NoiseSchedule& sched) {
    if (t < 1 || t > sched.T) throw RangeError("q_sample: t out of [1, T]");
    if (x0.shape() != eps.shape()) throw ShapeError("q_sample: x0/eps shape mismatch");
    const S a = static_cast<S>(std::sqrt(sched.abar(t)));
    const S b = static_cast<S>(std::sqrt(1.0 - sched.abar(t)));
    TensorT<S> out(x0.shape());
    for (int i = 0; i < x0.numel(); ++i) out[i] = a * x0[i] + b * eps[i];
    return out;
}

// Simplified training objective: || eps - model(x_t, c, t) ||^2 averaged over
// elements, with t ~ U[1, T] and eps standard normal, both drawn from `rng`.
// Model is any callable (x_t, text_emb, t) -> predicted eps.
template <typename S, typename Model>
TensorT<S> training_loss(Model&& model, const TensorT<S>& x0, const TensorT<S>& text_emb,
                         const NoiseSchedule& sched, Rng& rng) {
    const int t = rng.uniform_int(1, sched.T);
    TensorT<S> eps(x0.shape());
    for (int i = 0; i < eps.numel(); ++i) eps[i] = static_cast<S>(rng.normal());
    TensorT<S> x_t = q_sample(x0, t, eps, sched);
    TensorT<S> pred = model(x_t, text_emb, t);
    if (pred.shape() != eps.shape())
        throw ContractError("training_loss: model prediction shape mismatch");
    return mse(pred, eps);
}

// One deterministic (eta = 0) or partially stochastic DDIM update from t down
// to t_prev. `noise` is only consulted when eta > 0.
template <typename S>
TensorT<S> ddim_step(const TensorT<S>& x_t, const TensorT<S>& eps_pred, int t, int t_prev,
                     const NoiseSchedule& sched, double eta, const TensorT<S>* noise = nullptr) {
    if (!(t_prev < t)) throw RangeError("ddim_step: t_prev must be < t");
    if (x_t.shape() != eps_pred.shape()) throw ShapeError("ddim_step: shape mismatch");
    const double abar_t = sched.abar(t);
    const double abar_p = sched.abar(t_prev);
    if (abar_t <= 0.0) throw ConfigError("ddim_step: alpha_bar must be positive");
    const double sa = std::sqrt(abar_t), sb = std::sqrt(1.0 - abar_t);
    double sigma = 0.0;
    if (eta > 0.0 && t_prev >= 1) {
        sigma = eta * std::sqrt((1.0 - abar_p) / (1.0 - abar_t)) *
                std::sqrt(1.0 - abar_t / abar_p);
    }
    const double dir = std::sqrt(std::max(0.0, 1.0 - abar_p - sigma * sigma));
    const double sp = std::sqrt(abar_p);
    TensorT<S> out(x_t.shape());
    for (int i = 0; i < x_t.numel(); ++i) {
        const double x0_pred = (static_cast<double>(x_t[i]) - sb * eps_pred[i]) / sa;
        double v = sp * x0_pred + dir * eps_pred[i];
        if (sigma > 0.0 && noise != nullptr) v += sigma * (*noise)[i];
        out[i] = static_cast<S>(v);
    }
    return out;
}

// Uniformly strided descending timestep ladder; always starts at T and the
// trailing 0 denotes the clean-data endpoint.
inline std::vector<int> ddim_timesteps(int T, int num_steps) {
    if (num_steps < 0 || num_steps > T)
        throw ConfigError("ddim_timesteps: need 0 <= steps <= T");
    std::vector<int> ts;
    const int stride = num_steps > 0 ? T / num_steps : 0;
    for (int k = 0; k < num_steps; ++k) ts.push_back(T - k * stride);
    ts.push_back(0);
    return ts;
}

// Full sampling run from seeded Gaussian x_T (or a caller-provided start).
template <typename S, typename Model>
TensorT<S> ddim_sample(Model&& model, const std::vector<int>& shape, const TensorT<S>& text_emb,
                       const SamplerConfig& cfg, const NoiseSchedule& sched,
                       const TensorT<S>* x_start = nullptr) {
    TensorT<S> x;
    if (x_start != nullptr) {
        x = x_start->clone();
    } else {
        Rng rng(cfg.seed);
        x = TensorT<S>(shape);
        for (int i = 0; i < x.numel(); ++i) x[i] = static_cast<S>(rng.normal());
    }
    Rng noise_rng = Rng(cfg.seed).fork(0x5a11ce);
    const auto ts = ddim_timesteps(sched.T, cfg.num_inference_steps);
    for (std::size_t k = 0; k + 1 < ts.size(); ++k) {
        const int t = ts[k], t_prev = ts[k + 1];
        TensorT<S> eps = model(x, text_emb, t);
        if (cfg.eta > 0.0) {
            TensorT<S> noise(x.shape());
            for (int i = 0; i < noise.numel(); ++i) noise[i] = static_cast<S>(noise_rng.normal());
            x = ddim_step(x, eps, t, t_prev, sched, cfg.eta, &noise);
        } else {
            x = ddim_step(x, eps, t, t_prev, sched, 0.0);
        }
    }
    return x;
}

// Reverse DDIM recurrence: maps x0 to a noise latent x_T whose re-sampling
// approximately reconstructs x0. Defined only for the deterministic sampler.
// Each reverse step solves the implicit update by fixed-point iteration; the
// naive one-shot estimate leaves a round-trip error orders of magnitude above
// the editing tolerance.
template <typename S, typename Model>
TensorT<S> ddim_invert(Model&& model, const TensorT<S>& x0, const TensorT<S>& text_emb,
                       const SamplerConfig& cfg, const NoiseSchedule& sched,
                       int refine_iters = 3) {
    if (cfg.eta != 0.0) throw UsageError("ddim_invert: inversion requires eta = 0");
    if (cfg.num_inference_steps == 0) return x0.clone();
    auto ts = ddim_timesteps(sched.T, cfg.num_inference_steps);
    TensorT<S> x = x0.clone();
    for (std::size_t k = ts.size() - 1; k > 0; --k) {
        const int lo = ts[k], hi = ts[k - 1];
        const double abar_lo = sched.abar(lo), abar_hi = sched.abar(hi);
        const double s_lo = std::sqrt(abar_lo), s_lo1 = std::sqrt(1.0 - abar_lo);
        const double s_hi = std::sqrt(abar_hi), s_hi1 = std::sqrt(1.0 - abar_hi);
        TensorT<S> eps = model(x, text_emb, hi);
        TensorT<S> next(x.shape());
        for (int it = 0; it <= refine_iters; ++it) {
            if (it > 0) eps = model(next, text_emb, hi);
            for (int i = 0; i < x.numel(); ++i) {
                const double x0_pred = (static_cast<double>(x[i]) - s_lo1 * eps[i]) / s_lo;
                next[i] = static_cast<S>(s_hi * x0_pred + s_hi1 * eps[i]);
            }
        }
        x = next;
    }
    return x;
}

} // namespace simda
