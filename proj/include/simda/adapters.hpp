#pragma once

// The two trainable bottleneck modules and the frozen/trainable parameter
// ledger. Both adapters zero-initialize their output layer, so a freshly
// inserted adapter is exactly the identity and the host network is untouched
// at step 0.

#include <cstdint>
#include <map>
#include <string>

#include "simda/ops.hpp"
#include "simda/rng.hpp"
#include "simda/tensor.hpp"

namespace simda {

// ---------------------------------------------------------------------------
// Parameter ledger
// ---------------------------------------------------------------------------

struct ParamCounts {
    std::int64_t frozen = 0;
    std::int64_t trainable = 0;
    std::int64_t total = 0;
    double fraction = 0.0; // trainable / total, 0 for an empty set
};

template <typename S>
class ParamSetT {
public:
    struct Entry {
        TensorT<S> tensor;
        bool trainable = false;
    };

    void add(const std::string& name, TensorT<S> tensor, bool trainable) {
        if (name.empty()) throw ConfigError("param set: empty parameter name");
        if (entries_.count(name))
            throw ConfigError("param set: duplicate parameter name '" + name + "'");
        entries_[name] = Entry{std::move(tensor), trainable};
    }

    bool has(const std::string& name) const { return entries_.count(name) > 0; }

    TensorT<S>& at(const std::string& name) {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw ConfigError("param set: unknown parameter '" + name + "'");
        return it->second.tensor;
    }

    bool trainable(const std::string& name) const {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw ConfigError("param set: unknown parameter '" + name + "'");
        return it->second.trainable;
    }

    std::size_t size() const { return entries_.size(); }

    // Name-sorted iteration; this ordering is the canonical one used by the
    // optimizer and the checkpoint writer.
    auto begin() { return entries_.begin(); }
    auto end() { return entries_.end(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

private:
    std::map<std::string, Entry> entries_;
};

using ParamSet = ParamSetT<float>;

template <typename S>
ParamCounts count_params(const ParamSetT<S>& pset) {
    ParamCounts c;
    for (const auto& [name, entry] : pset) {
        (void)name;
        const std::int64_t n = entry.tensor.numel();
        c.total += n;
        if (entry.trainable)
            c.trainable += n;
        else
            c.frozen += n;
    }
    c.fraction = c.total > 0 ? static_cast<double>(c.trainable) / static_cast<double>(c.total) : 0.0;
    return c;
}

// ---------------------------------------------------------------------------
// Spatial adapter: X + W_up(GELU(W_down X))
// ---------------------------------------------------------------------------

template <typename S>
struct SpatialAdapterT {
    TensorT<S> down_w; // d x l
    TensorT<S> down_b; // l
    TensorT<S> up_w;   // l x d, zero at init
    TensorT<S> up_b;   // d, zero at init

    int dim() const { return down_w.dim(0); }
    int bottleneck() const { return down_w.dim(1); }

    static SpatialAdapterT init(int d, int l, Rng& rng) {
        if (l < 1 || l >= d)
            throw ConfigError("spatial adapter: bottleneck must satisfy 1 <= l < d");
        return make_raw(d, l, rng);
    }

    // Skips the l < d check; unit tests use degenerate 1x1 adapters.
    static SpatialAdapterT make_raw(int d, int l, Rng& rng) {
        SpatialAdapterT a;
        a.down_w = TensorT<S>::randn({d, l}, rng, 1.0 / std::sqrt(static_cast<double>(d)));
        a.down_b = TensorT<S>::zeros({l});
        a.up_w = TensorT<S>::zeros({l, d});
        a.up_b = TensorT<S>::zeros({d});
        return a;
    }

    // x: [rows x d]
    TensorT<S> forward(const TensorT<S>& x) const {
        if (x.ndim() != 2 || x.dim(1) != dim())
            throw ShapeError("spatial adapter: last extent must equal d");
        auto h = gelu(linear(x, down_w, down_b));
        return add(x, linear(h, up_w, up_b));
    }
};

// ---------------------------------------------------------------------------
// Temporal adapter: X + W_up(DWConv3d(W_down X)), no activation in between
// ---------------------------------------------------------------------------

template <typename S>
struct TemporalAdapterT {
    TensorT<S> down_w; // d x l
    TensorT<S> down_b; // l
    TensorT<S> kernel; // [l, kt, 1, 1] depth-wise, purely temporal by default
    TensorT<S> up_w;   // l x d, zero at init
    TensorT<S> up_b;   // d, zero at init

    int dim() const { return down_w.dim(0); }
    int bottleneck() const { return down_w.dim(1); }

    static TemporalAdapterT init(int d, int l, Rng& rng, int kt = 3) {
        if (l < 1 || l >= d)
            throw ConfigError("temporal adapter: bottleneck must satisfy 1 <= l < d");
        if (kt % 2 == 0) throw ConfigError("temporal adapter: temporal extent must be odd");
        TemporalAdapterT a;
        a.down_w = TensorT<S>::randn({d, l}, rng, 1.0 / std::sqrt(static_cast<double>(d)));
        a.down_b = TensorT<S>::zeros({l});
        a.kernel = TensorT<S>::randn({l, kt, 1, 1}, rng, 1.0 / std::sqrt(static_cast<double>(kt)));
        a.up_w = TensorT<S>::zeros({l, d});
        a.up_b = TensorT<S>::zeros({d});
        return a;
    }

    // x: [L, d, H, W]; channel maps act pointwise per (frame, pixel)
    TensorT<S> forward(const TensorT<S>& x) const {
        if (x.ndim() != 4 || x.dim(1) != dim())
            throw ShapeError("temporal adapter: channel extent must equal d");
        const int L = x.dim(0), H = x.dim(2), W = x.dim(3);
        const int N = H * W, l = bottleneck();
        auto tok = reshape(latent_to_tokens(x), {L * N, dim()});
        auto low = tokens_to_latent(reshape(linear(tok, down_w, down_b), {L, N, l}), H, W);
        auto mixed = depthwise_conv3d(low, kernel);
        auto up_in = reshape(latent_to_tokens(mixed), {L * N, l});
        auto branch = tokens_to_latent(reshape(linear(up_in, up_w, up_b), {L, N, dim()}), H, W);
        return add(x, branch);
    }
};

// Register adapter tensors under `prefix` (which carries the adapter-site tag
// used by the trainable/frozen partition).
template <typename S>
void register_params(ParamSetT<S>& pset, const std::string& prefix, SpatialAdapterT<S>& a,
                     bool trainable) {
    pset.add(prefix + ".down.w", a.down_w, trainable);
    pset.add(prefix + ".down.b", a.down_b, trainable);
    pset.add(prefix + ".up.w", a.up_w, trainable);
    pset.add(prefix + ".up.b", a.up_b, trainable);
}

template <typename S>
void register_params(ParamSetT<S>& pset, const std::string& prefix, TemporalAdapterT<S>& a,
                     bool trainable) {
    pset.add(prefix + ".down.w", a.down_w, trainable);
    pset.add(prefix + ".down.b", a.down_b, trainable);
    pset.add(prefix + ".kernel", a.kernel, trainable);
    pset.add(prefix + ".up.w", a.up_w, trainable);
    pset.add(prefix + ".up.b", a.up_b, trainable);
}

} // namespace simda
