#pragma once

// The toy latent U-Net: a 2D text-to-image denoiser pre-trainable on single
// frames, plus its inflation to video (per-frame frozen convs, temporal
// adapters after each conv block, LSA in place of frame-wise self-attention,
// spatial adapters after attention and after the FFN).

#include <optional>
#include <string>
#include <vector>

#include "simda/adapters.hpp"
#include "simda/lsa.hpp"
#include "simda/ops.hpp"
#include "simda/rng.hpp"
#include "simda/tensor.hpp"

namespace simda {

struct DenoiserConfig {
    int latent_channels = 48;
    int latent_size = 8;            // base resolution; halved per extra level
    std::vector<int> widths = {32, 64};
    int blocks_per_level = 1;
    int gn_groups = 8;
    int adapter_ratio = 8;          // bottleneck l = max(1, d / ratio)
    int temporal_kernel = 3;
    ShiftSpec shift;                // LSA window
    int text_dim = 32;
    int text_tokens = 8;            // fixed caption length K (padded)
    int time_dim = 32;
    int heads = 1;
    int ffn_mult = 2;
    int vocab_size = 32;
    int feature_dim = 32;           // frame-feature width consumed by the similarity head
    bool superres = false;          // doubled input channels + noise-level conditioning

    int levels() const { return static_cast<int>(widths.size()); }
    int bottleneck(int d) const { return std::max(1, d / adapter_ratio); }
    int input_channels() const { return superres ? 2 * latent_channels : latent_channels; }

    void validate() const {
        if (widths.empty()) throw ConfigError("denoiser config: need at least one level");
        for (int w : widths) {
            if (w <= 0 || w % gn_groups != 0)
                throw ConfigError("denoiser config: widths must be positive and divisible by gn_groups");
            if (bottleneck(w) >= w)
                throw ConfigError("denoiser config: adapter ratio must yield l < d");
            if (w % heads != 0)
                throw ConfigError("denoiser config: head count must divide widths");
        }
        int size = latent_size;
        for (int i = 1; i < levels(); ++i) {
            if (size % 2 != 0)
                throw ConfigError("denoiser config: latent size not divisible across levels");
            size /= 2;
        }
        if (blocks_per_level < 1) throw ConfigError("denoiser config: blocks_per_level >= 1");
        if (time_dim % 2 != 0) throw ConfigError("denoiser config: time_dim must be even");
        if (temporal_kernel % 2 == 0)
            throw ConfigError("denoiser config: temporal kernel must be odd");
        shift.validate();
    }
};

template <typename S>
struct CrossAttentionWeightsT {
    TensorT<S> wq; // d x d
    TensorT<S> wk; // e x d
    TensorT<S> wv; // e x d
    TensorT<S> wo; // d x d
    TensorT<S> bo; // d

    static CrossAttentionWeightsT init(int d, int e, Rng& rng) {
        CrossAttentionWeightsT w;
        w.wq = TensorT<S>::randn({d, d}, rng, 1.0 / std::sqrt(static_cast<double>(d)));
        w.wk = TensorT<S>::randn({e, d}, rng, 1.0 / std::sqrt(static_cast<double>(e)));
        w.wv = TensorT<S>::randn({e, d}, rng, 1.0 / std::sqrt(static_cast<double>(e)));
        w.wo = TensorT<S>::randn({d, d}, rng, 1.0 / std::sqrt(static_cast<double>(d)));
        w.bo = TensorT<S>::zeros({d});
        return w;
    }
};

// Text cross-attention: queries from frame tokens, keys/values from the
// caption embedding (shared across frames).
template <typename S>
TensorT<S> cross_attention(const TensorT<S>& x, const TensorT<S>& text,
                           const CrossAttentionWeightsT<S>& w, int heads) {
    if (x.ndim() != 3 || text.ndim() != 2)
        throw ShapeError("cross_attention: expected [L,N,d] tokens and [K,e] text");
    const int L = x.dim(0), d = x.dim(2);
    const int dh = d / heads;
    const S sc = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));
    auto k = matmul(text, w.wk);
    auto v = matmul(text, w.wv);
    std::vector<TensorT<S>> out_frames;
    out_frames.reserve(static_cast<std::size_t>(L));
    for (int i = 0; i < L; ++i) {
        auto q = matmul(frame_rows(x, i), w.wq);
        TensorT<S> attended;
        if (heads == 1) {
            attended = matmul(softmax(scale(matmul_nt(q, k), sc), 1), v);
        } else {
            std::vector<TensorT<S>> parts;
            for (int h = 0; h < heads; ++h) {
                auto qh = slice_cols(q, h * dh, (h + 1) * dh);
                auto kh = slice_cols(k, h * dh, (h + 1) * dh);
                auto vh = slice_cols(v, h * dh, (h + 1) * dh);
                parts.push_back(matmul(softmax(scale(matmul_nt(qh, kh), sc), 1), vh));
            }
            attended = concat_cols(parts);
        }
        out_frames.push_back(linear(attended, w.wo, w.bo));
    }
    return stack_frames(out_frames);
}

template <typename S>
class DenoiserT {
public:
    struct ResBlock {
        int cin = 0, cout = 0;
        TensorT<S> gn1_g, gn1_b;
        TensorT<S> conv1_w, conv1_b;
        TensorT<S> temb_w, temb_b;
        TensorT<S> gn2_g, gn2_b;
        TensorT<S> conv2_w, conv2_b;
        TensorT<S> skip_w, skip_b; // 1x1, only when cin != cout
        std::optional<TemporalAdapterT<S>> adapter_t;
    };

    struct AttnBlock {
        int dim = 0;
        TensorT<S> norm_attn_g, norm_attn_b;
        AttentionWeightsT<S> self_w;
        std::optional<SpatialAdapterT<S>> adapter_s1;
        TensorT<S> norm_cross_g, norm_cross_b;
        CrossAttentionWeightsT<S> cross_w;
        TensorT<S> norm_ffn_g, norm_ffn_b;
        TensorT<S> ffn_w1, ffn_b1, ffn_w2, ffn_b2;
        std::optional<SpatialAdapterT<S>> adapter_s2;
    };

    // Ablation toggles for inflation: which adapter sites are attached and
    // whether attention uses the latent shift.
    struct InflateOptions {
        bool temporal_adapter = true;
        bool attn_adapter = true;
        bool ffn_adapter = true;
        bool lsa = true;
    };

    DenoiserConfig cfg;
    bool video = false;
    bool use_lsa = true;

    TensorT<S> time_w, time_b;
    TensorT<S> aug_time_w, aug_time_b; // superres only
    TensorT<S> text_table;
    TensorT<S> sim_head_w, sim_head_b;
    TensorT<S> conv_in_w, conv_in_b;
    std::vector<ResBlock> enc_res;   // level-major, blocks_per_level each
    std::vector<AttnBlock> enc_attn;
    std::vector<TensorT<S>> up_w, up_b; // 1x1 transitions, decoder order
    std::vector<ResBlock> dec_res;
    std::vector<AttnBlock> dec_attn;
    TensorT<S> out_gn_g, out_gn_b;
    TensorT<S> conv_out_w, conv_out_b;

    // Deterministic seeded construction of the 2D image denoiser.
    static DenoiserT build_image(const DenoiserConfig& cfg, std::uint64_t seed) {
        cfg.validate();
        DenoiserT m;
        m.cfg = cfg;
        Rng rng(seed);
        m.time_w = TensorT<S>::randn({cfg.time_dim, cfg.time_dim}, rng,
                                     1.0 / std::sqrt(static_cast<double>(cfg.time_dim)));
        m.time_b = TensorT<S>::zeros({cfg.time_dim});
        if (cfg.superres) {
            m.aug_time_w = TensorT<S>::randn({cfg.time_dim, cfg.time_dim}, rng,
                                             1.0 / std::sqrt(static_cast<double>(cfg.time_dim)));
            m.aug_time_b = TensorT<S>::zeros({cfg.time_dim});
        }
        m.text_table = TensorT<S>::randn({cfg.vocab_size, cfg.text_dim}, rng, 0.02);
        for (int j = 0; j < cfg.text_dim; ++j) m.text_table[j] = S(0); // PAD row
        m.sim_head_w = TensorT<S>::randn({cfg.feature_dim, cfg.text_dim}, rng,
                                         1.0 / std::sqrt(static_cast<double>(cfg.feature_dim)));
        m.sim_head_b = TensorT<S>::zeros({cfg.text_dim});
        m.conv_in_w = conv_weight(cfg.input_channels(), cfg.widths[0], 3, rng);
        m.conv_in_b = TensorT<S>::zeros({cfg.widths[0]});
        for (int lvl = 0; lvl < cfg.levels(); ++lvl) {
            for (int b = 0; b < cfg.blocks_per_level; ++b) {
                const int cin = (b > 0) ? cfg.widths[lvl]
                                        : (lvl == 0 ? cfg.widths[0] : cfg.widths[lvl - 1]);
                m.enc_res.push_back(make_res_block(cin, cfg.widths[lvl], cfg, rng));
                m.enc_attn.push_back(make_attn_block(cfg.widths[lvl], cfg, rng));
            }
        }
        for (int lvl = cfg.levels() - 2; lvl >= 0; --lvl) {
            m.up_w.push_back(conv_weight(cfg.widths[lvl + 1], cfg.widths[lvl], 1, rng));
            m.up_b.push_back(TensorT<S>::zeros({cfg.widths[lvl]}));
            for (int b = 0; b < cfg.blocks_per_level; ++b) {
                m.dec_res.push_back(make_res_block(cfg.widths[lvl], cfg.widths[lvl], cfg, rng));
                m.dec_attn.push_back(make_attn_block(cfg.widths[lvl], cfg, rng));
            }
        }
        m.out_gn_g = TensorT<S>::full({cfg.widths[0]}, S(1));
        m.out_gn_b = TensorT<S>::zeros({cfg.widths[0]});
        // zero-init final conv: the raw model predicts zero noise at step 0
        m.conv_out_w = TensorT<S>::zeros({cfg.latent_channels, cfg.widths[0], 3, 3});
        m.conv_out_b = TensorT<S>::zeros({cfg.latent_channels});
        return m;
    }

    // Video inflation: shared 2D weights (cloned, frozen by the partition),
    // zero-init adapters appended, frame-wise attention swapped for LSA.
    DenoiserT inflate_to_video(std::uint64_t adapter_seed,
                               const InflateOptions& opt = InflateOptions{}) const {
        DenoiserT m = deep_copy();
        m.video = true;
        m.use_lsa = opt.lsa;
        Rng rng(adapter_seed);
        if (opt.temporal_adapter) {
            for (auto& rb : m.enc_res) attach_temporal(rb, m.cfg, rng);
            for (auto& rb : m.dec_res) attach_temporal(rb, m.cfg, rng);
        }
        if (opt.attn_adapter || opt.ffn_adapter) {
            for (auto& ab : m.enc_attn) attach_spatial(ab, m.cfg, rng, opt.attn_adapter, opt.ffn_adapter);
            for (auto& ab : m.dec_attn) attach_spatial(ab, m.cfg, rng, opt.attn_adapter, opt.ffn_adapter);
        }
        return m;
    }

    DenoiserT clone_model() const { return deep_copy(); }

    // x: [L, input_channels, H, W] -> eps prediction [L, latent_channels, H, W].
    // aug_t is the noise-augmentation level of the SR conditioning signal.
    TensorT<S> forward(const TensorT<S>& x, const TensorT<S>& text_emb, int t,
                       int aug_t = 0) const {
        if (x.ndim() != 4 || x.dim(1) != cfg.input_channels())
            throw ShapeError("denoiser: input channel extent mismatch");
        if (text_emb.ndim() != 2 || text_emb.dim(1) != cfg.text_dim)
            throw ShapeError("denoiser: text embedding extent mismatch");
        auto temb = gelu(linear(sinusoidal_embedding<S>(static_cast<double>(t), cfg.time_dim),
                                time_w, time_b));
        if (cfg.superres)
            temb = add(temb, gelu(linear(sinusoidal_embedding<S>(static_cast<double>(aug_t),
                                                                 cfg.time_dim),
                                         aug_time_w, aug_time_b)));
        auto h = conv2d(x, conv_in_w, conv_in_b);
        std::vector<TensorT<S>> skips;
        int idx = 0;
        for (int lvl = 0; lvl < cfg.levels(); ++lvl) {
            for (int b = 0; b < cfg.blocks_per_level; ++b, ++idx) {
                h = res_forward(enc_res[static_cast<std::size_t>(idx)], h, temb);
                h = attn_forward(enc_attn[static_cast<std::size_t>(idx)], h, text_emb);
            }
            if (lvl + 1 < cfg.levels()) {
                skips.push_back(h);
                h = avg_pool2(h);
            }
        }
        idx = 0;
        for (int lvl = cfg.levels() - 2; lvl >= 0; --lvl) {
            const std::size_t u = static_cast<std::size_t>(cfg.levels() - 2 - lvl);
            h = conv2d(upsample_nearest2(h), up_w[u], up_b[u]);
            h = add(h, skips[static_cast<std::size_t>(lvl)]);
            for (int b = 0; b < cfg.blocks_per_level; ++b, ++idx) {
                h = res_forward(dec_res[static_cast<std::size_t>(idx)], h, temb);
                h = attn_forward(dec_attn[static_cast<std::size_t>(idx)], h, text_emb);
            }
        }
        h = gelu(group_norm(h, cfg.gn_groups, static_cast<S>(1e-5), out_gn_g, out_gn_b));
        return conv2d(h, conv_out_w, conv_out_b);
    }

    // Caption tokens -> [K, text_dim] via the learned table (PAD id 0 rows
    // stay zero); pads/truncates to the fixed token count.
    TensorT<S> embed_tokens(const std::vector<int>& token_ids) const {
        std::vector<int> padded(static_cast<std::size_t>(cfg.text_tokens), 0);
        for (std::size_t i = 0; i < padded.size() && i < token_ids.size(); ++i)
            padded[i] = token_ids[i];
        return embedding_rows(text_table, padded, 0);
    }

    enum class Partition { all_trainable, adapters_only };

    // Named-parameter ledger. The adapters_only partition is the Fig-2 split:
    // adapter tensors trainable, every inherited 2D weight frozen.
    ParamSetT<S> params(Partition mode) {
        ParamSetT<S> p;
        const bool base_train = (mode == Partition::all_trainable);
        p.add("time.w", time_w, base_train);
        p.add("time.b", time_b, base_train);
        if (cfg.superres) {
            p.add("time_aug.w", aug_time_w, base_train);
            p.add("time_aug.b", aug_time_b, base_train);
        }
        p.add("text.table", text_table, base_train);
        p.add("sim.head.w", sim_head_w, base_train);
        p.add("sim.head.b", sim_head_b, base_train);
        p.add("conv_in.w", conv_in_w, base_train);
        p.add("conv_in.b", conv_in_b, base_train);
        int idx = 0;
        for (int lvl = 0; lvl < cfg.levels(); ++lvl)
            for (int b = 0; b < cfg.blocks_per_level; ++b, ++idx) {
                const std::string pre = "enc" + std::to_string(lvl) + (cfg.blocks_per_level > 1 ? ".b" + std::to_string(b) : "");
                add_res_params(p, pre + ".res", enc_res[static_cast<std::size_t>(idx)], base_train);
                add_attn_params(p, pre + ".attn", enc_attn[static_cast<std::size_t>(idx)], base_train);
            }
        for (std::size_t u = 0; u < up_w.size(); ++u) {
            p.add("up" + std::to_string(u) + ".w", up_w[u], base_train);
            p.add("up" + std::to_string(u) + ".b", up_b[u], base_train);
        }
        idx = 0;
        for (int lvl = cfg.levels() - 2; lvl >= 0; --lvl)
            for (int b = 0; b < cfg.blocks_per_level; ++b, ++idx) {
                const std::string pre = "dec" + std::to_string(lvl) + (cfg.blocks_per_level > 1 ? ".b" + std::to_string(b) : "");
                add_res_params(p, pre + ".res", dec_res[static_cast<std::size_t>(idx)], base_train);
                add_attn_params(p, pre + ".attn", dec_attn[static_cast<std::size_t>(idx)], base_train);
            }
        p.add("out.gn.g", out_gn_g, base_train);
        p.add("out.gn.b", out_gn_b, base_train);
        p.add("conv_out.w", conv_out_w, base_train);
        p.add("conv_out.b", conv_out_b, base_train);

        for (auto& [name, entry] : p) {
            (void)name;
            entry.tensor.set_requires_grad(entry.trainable);
        }
        return p;
    }

private:
    static TensorT<S> conv_weight(int cin, int cout, int k, Rng& rng) {
        const double std = 1.0 / std::sqrt(static_cast<double>(cin) * k * k);
        return TensorT<S>::randn({cout, cin, k, k}, rng, std);
    }

    static ResBlock make_res_block(int cin, int cout, const DenoiserConfig& cfg, Rng& rng) {
        ResBlock rb;
        rb.cin = cin;
        rb.cout = cout;
        rb.gn1_g = TensorT<S>::full({cin}, S(1));
        rb.gn1_b = TensorT<S>::zeros({cin});
        rb.conv1_w = conv_weight(cin, cout, 3, rng);
        rb.conv1_b = TensorT<S>::zeros({cout});
        rb.temb_w = TensorT<S>::randn({cfg.time_dim, cout}, rng,
                                      1.0 / std::sqrt(static_cast<double>(cfg.time_dim)));
        rb.temb_b = TensorT<S>::zeros({cout});
        rb.gn2_g = TensorT<S>::full({cout}, S(1));
        rb.gn2_b = TensorT<S>::zeros({cout});
        rb.conv2_w = conv_weight(cout, cout, 3, rng);
        rb.conv2_b = TensorT<S>::zeros({cout});
        if (cin != cout) {
            rb.skip_w = conv_weight(cin, cout, 1, rng);
            rb.skip_b = TensorT<S>::zeros({cout});
        }
        return rb;
    }

    static AttnBlock make_attn_block(int d, const DenoiserConfig& cfg, Rng& rng) {
        AttnBlock ab;
        ab.dim = d;
        ab.norm_attn_g = TensorT<S>::full({d}, S(1));
        ab.norm_attn_b = TensorT<S>::zeros({d});
        ab.self_w = AttentionWeightsT<S>::init(d, rng);
        ab.norm_cross_g = TensorT<S>::full({d}, S(1));
        ab.norm_cross_b = TensorT<S>::zeros({d});
        ab.cross_w = CrossAttentionWeightsT<S>::init(d, cfg.text_dim, rng);
        ab.norm_ffn_g = TensorT<S>::full({d}, S(1));
        ab.norm_ffn_b = TensorT<S>::zeros({d});
        const int hidden = d * cfg.ffn_mult;
        ab.ffn_w1 = TensorT<S>::randn({d, hidden}, rng, 1.0 / std::sqrt(static_cast<double>(d)));
        ab.ffn_b1 = TensorT<S>::zeros({hidden});
        ab.ffn_w2 = TensorT<S>::randn({hidden, d}, rng, 1.0 / std::sqrt(static_cast<double>(hidden)));
        ab.ffn_b2 = TensorT<S>::zeros({d});
        return ab;
    }

    static void attach_temporal(ResBlock& rb, const DenoiserConfig& cfg, Rng& rng) {
        rb.adapter_t = TemporalAdapterT<S>::init(rb.cout, cfg.bottleneck(rb.cout), rng,
                                                 cfg.temporal_kernel);
    }

    static void attach_spatial(AttnBlock& ab, const DenoiserConfig& cfg, Rng& rng,
                               bool attn_site = true, bool ffn_site = true) {
        if (attn_site) ab.adapter_s1 = SpatialAdapterT<S>::init(ab.dim, cfg.bottleneck(ab.dim), rng);
        if (ffn_site) ab.adapter_s2 = SpatialAdapterT<S>::init(ab.dim, cfg.bottleneck(ab.dim), rng);
    }

    TensorT<S> res_forward(const ResBlock& rb, const TensorT<S>& x, const TensorT<S>& temb) const {
        const S eps = static_cast<S>(1e-5);
        auto h = conv2d(gelu(group_norm(x, cfg.gn_groups, eps, rb.gn1_g, rb.gn1_b)), rb.conv1_w,
                        rb.conv1_b);
        h = add_channel(h, reshape(linear(temb, rb.temb_w, rb.temb_b), {rb.cout}));
        h = conv2d(gelu(group_norm(h, cfg.gn_groups, eps, rb.gn2_g, rb.gn2_b)), rb.conv2_w,
                   rb.conv2_b);
        auto skip = rb.skip_w.defined() ? conv2d(x, rb.skip_w, rb.skip_b) : x;
        auto out = add(skip, h);
        if (video && rb.adapter_t) out = rb.adapter_t->forward(out);
        return out;
    }

    // Residual channel-wise adapter applied in token space.
    TensorT<S> spatial_adapt(const SpatialAdapterT<S>& a, const TensorT<S>& x) const {
        const int L = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
        auto rows = reshape(latent_to_tokens(x), {L * H * W, C});
        return tokens_to_latent(reshape(a.forward(rows), {L, H * W, C}), H, W);
    }

    TensorT<S> attn_forward(const AttnBlock& ab, const TensorT<S>& x,
                            const TensorT<S>& text_emb) const {
        const S eps = static_cast<S>(1e-5);
        const int H = x.dim(2), W = x.dim(3);
        auto t0 = latent_to_tokens(group_norm(x, cfg.gn_groups, eps, ab.norm_attn_g, ab.norm_attn_b));
        auto attended = lsa_forward(t0, ab.self_w, cfg.shift, cfg.heads, video && use_lsa);
        auto h = add(x, tokens_to_latent(attended, H, W));
        if (video && ab.adapter_s1) h = spatial_adapt(*ab.adapter_s1, h);
        auto t1 = latent_to_tokens(group_norm(h, cfg.gn_groups, eps, ab.norm_cross_g, ab.norm_cross_b));
        h = add(h, tokens_to_latent(cross_attention(t1, text_emb, ab.cross_w, cfg.heads), H, W));
        auto t2 = latent_to_tokens(group_norm(h, cfg.gn_groups, eps, ab.norm_ffn_g, ab.norm_ffn_b));
        const int L = x.dim(0), N = H * W;
        auto rows = reshape(t2, {L * N, ab.dim});
        auto f = linear(gelu(linear(rows, ab.ffn_w1, ab.ffn_b1)), ab.ffn_w2, ab.ffn_b2);
        h = add(h, tokens_to_latent(reshape(f, {L, N, ab.dim}), H, W));
        if (video && ab.adapter_s2) h = spatial_adapt(*ab.adapter_s2, h);
        return h;
    }

    DenoiserT deep_copy() const {
        DenoiserT m;
        m.cfg = cfg;
        m.video = video;
        m.use_lsa = use_lsa;
        m.time_w = time_w.clone();
        m.time_b = time_b.clone();
        if (aug_time_w.defined()) {
            m.aug_time_w = aug_time_w.clone();
            m.aug_time_b = aug_time_b.clone();
        }
        m.text_table = text_table.clone();
        m.sim_head_w = sim_head_w.clone();
        m.sim_head_b = sim_head_b.clone();
        m.conv_in_w = conv_in_w.clone();
        m.conv_in_b = conv_in_b.clone();
        auto copy_res = [](const ResBlock& rb) {
            ResBlock c;
            c.cin = rb.cin;
            c.cout = rb.cout;
            c.gn1_g = rb.gn1_g.clone();
            c.gn1_b = rb.gn1_b.clone();
            c.conv1_w = rb.conv1_w.clone();
            c.conv1_b = rb.conv1_b.clone();
            c.temb_w = rb.temb_w.clone();
            c.temb_b = rb.temb_b.clone();
            c.gn2_g = rb.gn2_g.clone();
            c.gn2_b = rb.gn2_b.clone();
            c.conv2_w = rb.conv2_w.clone();
            c.conv2_b = rb.conv2_b.clone();
            if (rb.skip_w.defined()) {
                c.skip_w = rb.skip_w.clone();
                c.skip_b = rb.skip_b.clone();
            }
            if (rb.adapter_t) {
                TemporalAdapterT<S> a;
                a.down_w = rb.adapter_t->down_w.clone();
                a.down_b = rb.adapter_t->down_b.clone();
                a.kernel = rb.adapter_t->kernel.clone();
                a.up_w = rb.adapter_t->up_w.clone();
                a.up_b = rb.adapter_t->up_b.clone();
                c.adapter_t = std::move(a);
            }
            return c;
        };
        auto copy_attn = [](const AttnBlock& ab) {
            AttnBlock c;
            c.dim = ab.dim;
            c.norm_attn_g = ab.norm_attn_g.clone();
            c.norm_attn_b = ab.norm_attn_b.clone();
            c.self_w.wq = ab.self_w.wq.clone();
            c.self_w.wk = ab.self_w.wk.clone();
            c.self_w.wv = ab.self_w.wv.clone();
            c.self_w.wo = ab.self_w.wo.clone();
            c.self_w.bo = ab.self_w.bo.clone();
            c.norm_cross_g = ab.norm_cross_g.clone();
            c.norm_cross_b = ab.norm_cross_b.clone();
            c.cross_w.wq = ab.cross_w.wq.clone();
            c.cross_w.wk = ab.cross_w.wk.clone();
            c.cross_w.wv = ab.cross_w.wv.clone();
            c.cross_w.wo = ab.cross_w.wo.clone();
            c.cross_w.bo = ab.cross_w.bo.clone();
            c.norm_ffn_g = ab.norm_ffn_g.clone();
            c.norm_ffn_b = ab.norm_ffn_b.clone();
            c.ffn_w1 = ab.ffn_w1.clone();
            c.ffn_b1 = ab.ffn_b1.clone();
            c.ffn_w2 = ab.ffn_w2.clone();
            c.ffn_b2 = ab.ffn_b2.clone();
            auto copy_sa = [](const SpatialAdapterT<S>& a) {
                SpatialAdapterT<S> s;
                s.down_w = a.down_w.clone();
                s.down_b = a.down_b.clone();
                s.up_w = a.up_w.clone();
                s.up_b = a.up_b.clone();
                return s;
            };
            if (ab.adapter_s1) c.adapter_s1 = copy_sa(*ab.adapter_s1);
            if (ab.adapter_s2) c.adapter_s2 = copy_sa(*ab.adapter_s2);
            return c;
        };
        for (const auto& rb : enc_res) m.enc_res.push_back(copy_res(rb));
        for (const auto& ab : enc_attn) m.enc_attn.push_back(copy_attn(ab));
        for (const auto& w : up_w) m.up_w.push_back(w.clone());
        for (const auto& b : up_b) m.up_b.push_back(b.clone());
        for (const auto& rb : dec_res) m.dec_res.push_back(copy_res(rb));
        for (const auto& ab : dec_attn) m.dec_attn.push_back(copy_attn(ab));
        m.out_gn_g = out_gn_g.clone();
        m.out_gn_b = out_gn_b.clone();
        m.conv_out_w = conv_out_w.clone();
        m.conv_out_b = conv_out_b.clone();
        return m;
    }

    void add_res_params(ParamSetT<S>& p, const std::string& pre, ResBlock& rb, bool base_train) {
        p.add(pre + ".gn1.g", rb.gn1_g, base_train);
        p.add(pre + ".gn1.b", rb.gn1_b, base_train);
        p.add(pre + ".conv1.w", rb.conv1_w, base_train);
        p.add(pre + ".conv1.b", rb.conv1_b, base_train);
        p.add(pre + ".temb.w", rb.temb_w, base_train);
        p.add(pre + ".temb.b", rb.temb_b, base_train);
        p.add(pre + ".gn2.g", rb.gn2_g, base_train);
        p.add(pre + ".gn2.b", rb.gn2_b, base_train);
        p.add(pre + ".conv2.w", rb.conv2_w, base_train);
        p.add(pre + ".conv2.b", rb.conv2_b, base_train);
        if (rb.skip_w.defined()) {
            p.add(pre + ".skip.w", rb.skip_w, base_train);
            p.add(pre + ".skip.b", rb.skip_b, base_train);
        }
        if (rb.adapter_t) register_params(p, pre + ".adapter_t", *rb.adapter_t, true);
    }

    void add_attn_params(ParamSetT<S>& p, const std::string& pre, AttnBlock& ab, bool base_train) {
        p.add(pre + ".norm_attn.g", ab.norm_attn_g, base_train);
        p.add(pre + ".norm_attn.b", ab.norm_attn_b, base_train);
        p.add(pre + ".self.wq", ab.self_w.wq, base_train);
        p.add(pre + ".self.wk", ab.self_w.wk, base_train);
        p.add(pre + ".self.wv", ab.self_w.wv, base_train);
        p.add(pre + ".self.wo", ab.self_w.wo, base_train);
        p.add(pre + ".self.bo", ab.self_w.bo, base_train);
        if (ab.adapter_s1) register_params(p, pre + ".adapter_s1", *ab.adapter_s1, true);
        p.add(pre + ".norm_cross.g", ab.norm_cross_g, base_train);
        p.add(pre + ".norm_cross.b", ab.norm_cross_b, base_train);
        p.add(pre + ".cross.wq", ab.cross_w.wq, base_train);
        p.add(pre + ".cross.wk", ab.cross_w.wk, base_train);
        p.add(pre + ".cross.wv", ab.cross_w.wv, base_train);
        p.add(pre + ".cross.wo", ab.cross_w.wo, base_train);
        p.add(pre + ".cross.bo", ab.cross_w.bo, base_train);
        p.add(pre + ".norm_ffn.g", ab.norm_ffn_g, base_train);
        p.add(pre + ".norm_ffn.b", ab.norm_ffn_b, base_train);
        p.add(pre + ".ffn.w1", ab.ffn_w1, base_train);
        p.add(pre + ".ffn.b1", ab.ffn_b1, base_train);
        p.add(pre + ".ffn.w2", ab.ffn_w2, base_train);
        p.add(pre + ".ffn.b2", ab.ffn_b2, base_train);
        if (ab.adapter_s2) register_params(p, pre + ".adapter_s2", *ab.adapter_s2, true);
    }
};

using Denoiser = DenoiserT<float>;

// The Fig-2 frozen/trainable split of a fully constructed model: adapter
// tensors (tagged "adapter_" in their names) trainable, inherited 2D base
// weights frozen. A model without adapters yields an empty trainable set.
template <typename S>
ParamSetT<S> partition_params(DenoiserT<S>& model) {
    auto p = model.params(DenoiserT<S>::Partition::adapters_only);
    for (const auto& [name, entry] : p) {
        const bool tagged = name.find(".adapter_") != std::string::npos;
        if (entry.trainable != tagged)
            throw ContractError("partition_params: naming contract violated for '" + name + "'");
    }
    return p;
}

} // namespace simda
