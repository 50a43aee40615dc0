#include "simda/pipelines.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>

#include "simda/error.hpp"

namespace simda {

NoiseSchedule default_schedule() { return make_schedule(1000, 1e-4, 0.02); }

void TrainConfig::validate() const {
    if (steps < 0 || batch < 1 || lr <= 0.0 || beta1 <= 0.0 || beta1 >= 1.0 || beta2 <= 0.0 ||
        beta2 >= 1.0 || adam_eps <= 0.0 || cfg_dropout < 0.0 || cfg_dropout >= 1.0)
        throw ConfigError("train config: invalid numeric field");
}

// ---------------------------------------------------------------------------
// Data
// ---------------------------------------------------------------------------

Tensor pixels_to_latent(const Tensor& pixels) {
    auto z = encode_latent(pixels);
    for (int i = 0; i < z.numel(); ++i) z[i] = 2.0f * z[i] - 1.0f;
    return z;
}

Tensor latent_to_pixels(const Tensor& latent) {
    Tensor x = latent.clone();
    for (int i = 0; i < x.numel(); ++i) {
        float v = (x[i] + 1.0f) * 0.5f;
        x[i] = std::min(1.0f, std::max(0.0f, v));
    }
    return decode_latent(x);
}

Corpus make_corpus(std::uint64_t seed, int frames, int height, int width, int clip_limit,
                   Background background) {
    std::vector<SceneSpec> specs;
    for (int s = 0; s < 3; ++s)
        for (int c = 0; c < kPaletteSize; ++c)
            for (int m = 0; m < 5; ++m) {
                SceneSpec spec;
                spec.shape = static_cast<Shape>(s);
                spec.color = c;
                spec.motion = static_cast<Motion>(m);
                spec.speed = 1;
                spec.background = background;
                specs.push_back(spec);
            }
    if (clip_limit > 0 && clip_limit < static_cast<int>(specs.size())) {
        // seeded Fisher-Yates prefix
        Rng rng = Rng(seed).fork(0xc0);
        for (int i = 0; i < clip_limit; ++i) {
            const int j = rng.uniform_int(i, static_cast<int>(specs.size()) - 1);
            std::swap(specs[static_cast<std::size_t>(i)], specs[static_cast<std::size_t>(j)]);
        }
        specs.resize(static_cast<std::size_t>(clip_limit));
    }
    Corpus corpus;
    corpus.frames = frames;
    corpus.height = height;
    corpus.width = width;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        auto clip = synth_video(specs[i], frames, height, width, Rng::mix(seed, i));
        corpus.latents.push_back(pixels_to_latent(clip.pixels));
        corpus.caption_ids.push_back(clip.caption.token_ids);
        corpus.clips.push_back(std::move(clip));
    }
    return corpus;
}

namespace {

Tensor take_frame(const Tensor& latent, int f) {
    const int C = latent.dim(1), H = latent.dim(2), W = latent.dim(3);
    Tensor out({1, C, H, W});
    const std::size_t n = static_cast<std::size_t>(C) * H * W;
    for (std::size_t i = 0; i < n; ++i) out[static_cast<int>(i)] = latent[static_cast<int>(static_cast<std::size_t>(f) * n + i)];
    return out;
}

} // namespace

ValPack make_val_pack(const Corpus& corpus, const NoiseSchedule& sched, std::uint64_t seed,
                      int count) {
    if (corpus.latents.empty()) throw UsageError("make_val_pack: empty corpus");
    ValPack pack;
    Rng rng = Rng(seed).fork(0x7a1);
    for (int i = 0; i < count; ++i) {
        pack.clip_indices.push_back(i % static_cast<int>(corpus.latents.size()));
        // spread timesteps over the schedule, deterministically
        pack.timesteps.push_back(1 + (i * (sched.T - 1)) / std::max(1, count - 1));
        Tensor eps(corpus.latents[static_cast<std::size_t>(pack.clip_indices.back())].shape());
        for (int j = 0; j < eps.numel(); ++j) eps[j] = static_cast<float>(rng.normal());
        pack.eps.push_back(std::move(eps));
    }
    return pack;
}

double validation_loss(Denoiser& model, const Corpus& corpus, const ValPack& pack,
                       const NoiseSchedule& sched) {
    double total = 0.0;
    for (std::size_t i = 0; i < pack.clip_indices.size(); ++i) {
        const auto& x0 = corpus.latents[static_cast<std::size_t>(pack.clip_indices[i])];
        const auto& ids = corpus.caption_ids[static_cast<std::size_t>(pack.clip_indices[i])];
        auto x_t = q_sample(x0, pack.timesteps[i], pack.eps[i], sched);
        auto pred = model.forward(x_t, model.embed_tokens(ids), pack.timesteps[i]);
        total += mse(pred, pack.eps[i]).item();
    }
    return total / static_cast<double>(pack.clip_indices.size());
}

// ---------------------------------------------------------------------------
// Optimizer and freeze checks
// ---------------------------------------------------------------------------

void Adam::step(ParamSet& params) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (auto& [name, entry] : params) {
        if (!entry.trainable) continue;
        auto& tensor = entry.tensor;
        if (!tensor.has_grad()) continue;
        auto& [m, v] = moments_[name];
        if (m.empty()) {
            m.assign(static_cast<std::size_t>(tensor.numel()), 0.0f);
            v.assign(static_cast<std::size_t>(tensor.numel()), 0.0f);
        }
        const float* g = tensor.grad();
        for (int i = 0; i < tensor.numel(); ++i) {
            m[static_cast<std::size_t>(i)] = static_cast<float>(beta1_ * m[static_cast<std::size_t>(i)] + (1.0 - beta1_) * g[i]);
            v[static_cast<std::size_t>(i)] = static_cast<float>(beta2_ * v[static_cast<std::size_t>(i)] + (1.0 - beta2_) * double(g[i]) * g[i]);
            const double mhat = m[static_cast<std::size_t>(i)] / bc1;
            const double vhat = v[static_cast<std::size_t>(i)] / bc2;
            tensor[i] -= static_cast<float>(lr_ * mhat / (std::sqrt(vhat) + eps_));
        }
        tensor.zero_grad();
    }
}

std::uint64_t fnv1a_hash(const float* data, std::size_t n) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    const unsigned char* bytes = reinterpret_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n * sizeof(float); ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::map<std::string, std::uint64_t> hash_frozen(const ParamSet& params) {
    std::map<std::string, std::uint64_t> hashes;
    for (const auto& [name, entry] : params)
        if (!entry.trainable)
            hashes[name] = fnv1a_hash(entry.tensor.data(), static_cast<std::size_t>(entry.tensor.numel()));
    return hashes;
}

void check_frozen(const ParamSet& params, const std::map<std::string, std::uint64_t>& baseline) {
    for (const auto& [name, entry] : params) {
        if (entry.trainable) continue;
        auto it = baseline.find(name);
        if (it == baseline.end())
            throw ContractError("freeze check: tensor '" + name + "' missing from baseline");
        if (fnv1a_hash(entry.tensor.data(), static_cast<std::size_t>(entry.tensor.numel())) != it->second)
            throw ContractError("freeze check: frozen tensor '" + name + "' was modified");
    }
}

// ---------------------------------------------------------------------------
// Shared training loop
// ---------------------------------------------------------------------------

namespace {

struct TrainItem {
    Tensor x0;            // target latent for this sample
    std::vector<int> ids; // caption tokens
    Tensor cond;          // optional SR conditioning latent (same grid as x0)
    int aug_t = 0;
};

using ItemSampler = std::function<TrainItem(int step, int slot, Rng& rng)>;

LossLog train_loop(Denoiser& model, ParamSet& params, const TrainConfig& cfg,
                   const NoiseSchedule& sched, const ItemSampler& sample,
                   const std::map<std::string, std::uint64_t>* frozen_baseline) {
    cfg.validate();
    Adam adam(cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
    Rng master(cfg.seed);
    LossLog log;
    log.reserve(static_cast<std::size_t>(cfg.steps));
    for (int step = 0; step < cfg.steps; ++step) {
        const auto t0 = std::chrono::steady_clock::now();
        double step_loss = 0.0;
        for (int k = 0; k < cfg.batch; ++k) {
            Rng item_rng =
                master.fork(Rng::mix(static_cast<std::uint64_t>(step), static_cast<std::uint64_t>(k)));
            TrainItem item = sample(step, k, item_rng);
            if (cfg.cfg_dropout > 0.0 && item_rng.uniform() < cfg.cfg_dropout) item.ids.clear();
            GradTape tape;
            auto emb = model.embed_tokens(item.ids);
            auto model_fn = [&](const Tensor& x_t, const Tensor& e, int t) {
                if (item.cond.defined())
                    return model.forward(concat_channels(x_t, item.cond), e, t, item.aug_t);
                return model.forward(x_t, e, t);
            };
            auto loss = training_loss(model_fn, item.x0, emb, sched, item_rng);
            auto scaled = scale(loss, static_cast<float>(1.0 / cfg.batch));
            tape.backward(scaled);
            step_loss += loss.item();
        }
        adam.step(params);
        const auto t1 = std::chrono::steady_clock::now();
        const double loss_avg = step_loss / cfg.batch;
        if (!std::isfinite(loss_avg))
            throw ContractError("training diverged: non-finite loss at step " +
                                std::to_string(step));
        log.push_back({step, loss_avg,
                       std::chrono::duration<double, std::milli>(t1 - t0).count()});
        if (frozen_baseline && cfg.ckpt_every > 0 && (step + 1) % cfg.ckpt_every == 0)
            check_frozen(params, *frozen_baseline);
    }
    if (frozen_baseline) check_frozen(params, *frozen_baseline);
    return log;
}

} // namespace

void write_loss_csv(const std::string& path, const LossLog& log) {
    std::ofstream out(path);
    if (!out) throw IoError("write_loss_csv: cannot open " + path);
    out << "step,loss,wallclock_ms\n";
    char line[128];
    for (const auto& row : log) {
        std::snprintf(line, sizeof(line), "%d,%.8f,%.3f\n", row.step, row.loss, row.wallclock_ms);
        out << line;
    }
}

// ---------------------------------------------------------------------------
// Base pre-training
// ---------------------------------------------------------------------------

PretrainResult pretrainbase_impl(const DenoiserConfig& cfg, const TrainConfig& tcfg,
                                 const Corpus& corpus, const NoiseSchedule& sched,
                                 int sim_head_steps) {
    if (corpus.latents.empty()) throw UsageError("pretrain_base: empty corpus");
    PretrainResult result;
    result.model = Denoiser::build_image(cfg, Rng::mix(tcfg.seed, 0xb11d));
    auto params = result.model.params(Denoiser::Partition::all_trainable);

    Rng data_rng = Rng(tcfg.seed).fork(0xda7a);
    const int n_clips = static_cast<int>(corpus.latents.size());
    auto sampler = [&](int, int, Rng&) {
        TrainItem item;
        const int c = data_rng.uniform_int(0, n_clips - 1);
        const int f = data_rng.uniform_int(0, corpus.frames - 1);
        item.x0 = take_frame(corpus.latents[static_cast<std::size_t>(c)], f);
        item.ids = corpus.caption_ids[static_cast<std::size_t>(c)];
        return item;
    };
    result.log = train_loop(result.model, params, tcfg, sched, sampler, nullptr);

    // Similarity-head fit: regress projected frame features onto the
    // normalized pooled caption embedding (table now fixed).
    if (sim_head_steps > 0) {
        FrameFeatures feats(cfg.feature_dim);
        TextVideoScorer scorer;
        scorer.sim_head_w = result.model.sim_head_w;
        scorer.sim_head_b = result.model.sim_head_b;
        scorer.text_table = result.model.text_table;
        std::vector<float> xs, ys;
        int rows = 0;
        for (int c = 0; c < n_clips; ++c) {
            auto pooled = scorer.caption_embedding(corpus.caption_ids[static_cast<std::size_t>(c)]);
            double norm = 0.0;
            for (double v : pooled) norm += v * v;
            norm = std::sqrt(std::max(norm, 1e-12));
            for (int f = 0; f < corpus.frames; f += 2) {
                auto ff = feats.frame_feature(corpus.clips[static_cast<std::size_t>(c)].pixels, f);
                for (double v : ff) xs.push_back(static_cast<float>(v));
                for (double v : pooled) ys.push_back(static_cast<float>(v / norm));
                ++rows;
            }
        }
        auto X = Tensor::from({rows, cfg.feature_dim}, std::move(xs));
        auto Y = Tensor::from({rows, cfg.text_dim}, std::move(ys));
        ParamSet head_params;
        head_params.add("sim.head.w", result.model.sim_head_w, true);
        head_params.add("sim.head.b", result.model.sim_head_b, true);
        result.model.sim_head_w.set_requires_grad(true);
        result.model.sim_head_b.set_requires_grad(true);
        Adam adam(1e-2, tcfg.beta1, tcfg.beta2, tcfg.adam_eps);
        for (int s = 0; s < sim_head_steps; ++s) {
            GradTape tape;
            auto loss = mse(linear(X, result.model.sim_head_w, result.model.sim_head_b), Y);
            tape.backward(loss);
            adam.step(head_params);
        }
    }
    return result;
}

PretrainResult pretrain_base(const DenoiserConfig& cfg, const TrainConfig& tcfg,
                             const Corpus& corpus, const NoiseSchedule& sched,
                             int sim_head_steps) {
    return pretrainbase_impl(cfg, tcfg, corpus, sched, sim_head_steps);
}

// ---------------------------------------------------------------------------
// Adapter-only video training
// ---------------------------------------------------------------------------

AdaptResult adapt_train_t2v(const Denoiser& base, const TrainConfig& tcfg, const Corpus& corpus,
                            const NoiseSchedule& sched, const Denoiser::InflateOptions& opt,
                            std::uint64_t adapter_seed) {
    if (corpus.latents.empty()) throw UsageError("adapt_train_t2v: empty corpus");
    AdaptResult result;
    result.model = base.inflate_to_video(adapter_seed, opt);
    auto params = result.model.params(Denoiser::Partition::adapters_only);
    result.budget = count_params(params);
    const auto frozen = hash_frozen(params);

    Rng data_rng = Rng(tcfg.seed).fork(0xda7a);
    const int n_clips = static_cast<int>(corpus.latents.size());
    auto sampler = [&](int, int, Rng&) {
        TrainItem item;
        const int c = data_rng.uniform_int(0, n_clips - 1);
        item.x0 = corpus.latents[static_cast<std::size_t>(c)].clone();
        item.ids = corpus.caption_ids[static_cast<std::size_t>(c)];
        return item;
    };
    result.log = train_loop(result.model, params, tcfg, sched, sampler, &frozen);
    return result;
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

Generated generate_t2v(Denoiser& model, const std::string& caption, int frames,
                       const SamplerConfig& scfg, const NoiseSchedule& sched,
                       double guidance_scale) {
    const auto ids = tokenize(caption);
    auto emb = model.embed_tokens(ids);
    const std::vector<int> shape = {frames, model.cfg.latent_channels, model.cfg.latent_size,
                                    model.cfg.latent_size};
    Generated out;
    if (guidance_scale != 1.0) {
        auto emb_uncond = model.embed_tokens({});
        auto guided = [&](const Tensor& x_t, const Tensor& e, int t) {
            auto eps_c = model.forward(x_t, e, t);
            auto eps_u = model.forward(x_t, emb_uncond, t);
            Tensor eps(eps_c.shape());
            for (int i = 0; i < eps.numel(); ++i)
                eps[i] = static_cast<float>(eps_u[i] + guidance_scale * (eps_c[i] - eps_u[i]));
            return eps;
        };
        out.latents = ddim_sample(guided, shape, emb, scfg, sched);
    } else {
        auto model_fn = [&](const Tensor& x_t, const Tensor& e, int t) {
            return model.forward(x_t, e, t);
        };
        out.latents = ddim_sample(model_fn, shape, emb, scfg, sched);
    }
    out.pixels = latent_to_pixels(out.latents);
    return out;
}

// ---------------------------------------------------------------------------
// One-shot editing
// ---------------------------------------------------------------------------

EditResult one_shot_edit(const Denoiser& video_model, const VideoClip& source,
                         const std::string& edited_caption, int tune_steps,
                         const TrainConfig& tcfg, const SamplerConfig& scfg,
                         const NoiseSchedule& sched) {
    if (!video_model.video) throw UsageError("one_shot_edit: expected an inflated video model");
    EditResult result;
    result.tuned = video_model.clone_model();
    auto params = result.tuned.params(Denoiser::Partition::adapters_only);
    const auto frozen = hash_frozen(params);

    result.session.source_latents = pixels_to_latent(source.pixels);
    result.session.source_caption = source.caption.text;
    result.session.edited_caption = edited_caption;

    TrainConfig tune_cfg = tcfg;
    tune_cfg.steps = tune_steps;
    auto sampler = [&](int, int, Rng&) {
        TrainItem item;
        item.x0 = result.session.source_latents.clone();
        item.ids = source.caption.token_ids;
        return item;
    };
    result.tune_log = train_loop(result.tuned, params, tune_cfg, sched, sampler, &frozen);
    check_frozen(params, frozen);

    auto model_fn = [&](const Tensor& x_t, const Tensor& e, int t) {
        return result.tuned.forward(x_t, e, t);
    };
    SamplerConfig inv_cfg = scfg;
    inv_cfg.eta = 0.0;
    auto emb_src = result.tuned.embed_tokens(source.caption.token_ids);
    result.session.inverted =
        ddim_invert(model_fn, result.session.source_latents, emb_src, inv_cfg, sched);

    auto emb_edit = result.tuned.embed_tokens(tokenize(edited_caption));
    auto edited_latents = ddim_sample(model_fn, result.session.source_latents.shape(), emb_edit,
                                      inv_cfg, sched, &result.session.inverted);
    result.edited_pixels = latent_to_pixels(edited_latents);
    auto recon_latents = ddim_sample(model_fn, result.session.source_latents.shape(), emb_src,
                                     inv_cfg, sched, &result.session.inverted);
    result.recon_pixels = latent_to_pixels(recon_latents);
    return result;
}

// ---------------------------------------------------------------------------
// Super-resolution
// ---------------------------------------------------------------------------

Tensor downsample_pixels_4x(const Tensor& pixels) {
    if (pixels.ndim() != 4 || pixels.dim(2) % 4 != 0 || pixels.dim(3) % 4 != 0)
        throw ShapeError("downsample_pixels_4x: extents must divide by 4");
    const int L = pixels.dim(0), C = pixels.dim(1), H = pixels.dim(2), W = pixels.dim(3);
    const int Ho = H / 4, Wo = W / 4;
    Tensor out({L, C, Ho, Wo});
    for (int lc = 0; lc < L * C; ++lc)
        for (int y = 0; y < Ho; ++y)
            for (int x = 0; x < Wo; ++x) {
                float acc = 0.0f;
                for (int dy = 0; dy < 4; ++dy)
                    for (int dx = 0; dx < 4; ++dx)
                        acc += pixels[(lc * H + 4 * y + dy) * W + 4 * x + dx];
                out[(lc * Ho + y) * Wo + x] = acc / 16.0f;
            }
    return out;
}

Tensor upsample_pixels_4x(const Tensor& pixels) {
    if (pixels.ndim() != 4) throw ShapeError("upsample_pixels_4x: expected [L,C,h,w]");
    const int L = pixels.dim(0), C = pixels.dim(1), H = pixels.dim(2), W = pixels.dim(3);
    Tensor out({L, C, H * 4, W * 4});
    for (int lc = 0; lc < L * C; ++lc)
        for (int y = 0; y < 4 * H; ++y)
            for (int x = 0; x < 4 * W; ++x)
                out[(lc * 4 * H + y) * 4 * W + x] = pixels[(lc * H + y / 4) * W + x / 4];
    return out;
}

SuperresResult superres_train(const DenoiserConfig& cfg, const TrainConfig& base_cfg,
                              const TrainConfig& adapter_cfg, const Corpus& high_corpus,
                              const NoiseSchedule& sched, double aug_max_frac) {
    if (!cfg.superres) throw ConfigError("superres_train: config must have superres enabled");
    if (high_corpus.latents.empty()) throw UsageError("superres_train: empty corpus");

    // clean conditioning latents: low = 4x downsampled high, upsampled back
    std::vector<Tensor> cond;
    cond.reserve(high_corpus.clips.size());
    for (const auto& clip : high_corpus.clips)
        cond.push_back(pixels_to_latent(upsample_pixels_4x(downsample_pixels_4x(clip.pixels))));

    const int n_clips = static_cast<int>(high_corpus.latents.size());
    const int aug_max = static_cast<int>(aug_max_frac * sched.T);
    auto augment = [&](const Tensor& clean, Rng& rng) {
        const int aug_t = rng.uniform_int(0, std::max(0, aug_max));
        if (aug_t < 1) return std::make_pair(clean.clone(), 0);
        Tensor eps(clean.shape());
        for (int i = 0; i < eps.numel(); ++i) eps[i] = static_cast<float>(rng.normal());
        return std::make_pair(q_sample(clean, aug_t, eps, sched), aug_t);
    };

    SuperresResult result;
    {
        PretrainResult base;
        base.model = Denoiser::build_image(cfg, Rng::mix(base_cfg.seed, 0xb11d));
        auto params = base.model.params(Denoiser::Partition::all_trainable);
        Rng data_rng = Rng(base_cfg.seed).fork(0xda7a);
        auto sampler = [&](int, int, Rng& rng) {
            TrainItem item;
            const int c = data_rng.uniform_int(0, n_clips - 1);
            const int f = data_rng.uniform_int(0, high_corpus.frames - 1);
            item.x0 = take_frame(high_corpus.latents[static_cast<std::size_t>(c)], f);
            auto [aug, aug_t] = augment(take_frame(cond[static_cast<std::size_t>(c)], f), rng);
            item.cond = std::move(aug);
            item.aug_t = aug_t;
            item.ids = high_corpus.caption_ids[static_cast<std::size_t>(c)];
            return item;
        };
        base.log = train_loop(base.model, params, base_cfg, sched, sampler, nullptr);
        result.base_log = std::move(base.log);
        result.model = base.model.inflate_to_video(Rng::mix(adapter_cfg.seed, 0xadab));
    }
    {
        auto params = result.model.params(Denoiser::Partition::adapters_only);
        const auto frozen = hash_frozen(params);
        Rng data_rng = Rng(adapter_cfg.seed).fork(0xda7a);
        auto sampler = [&](int, int, Rng& rng) {
            TrainItem item;
            const int c = data_rng.uniform_int(0, n_clips - 1);
            item.x0 = high_corpus.latents[static_cast<std::size_t>(c)].clone();
            auto [aug, aug_t] = augment(cond[static_cast<std::size_t>(c)], rng);
            item.cond = std::move(aug);
            item.aug_t = aug_t;
            item.ids = high_corpus.caption_ids[static_cast<std::size_t>(c)];
            return item;
        };
        result.adapter_log = train_loop(result.model, params, adapter_cfg, sched, sampler, &frozen);
    }
    return result;
}

Tensor superres_apply(Denoiser& model, const Tensor& low_pixels, const std::string& caption,
                      const SamplerConfig& scfg, const NoiseSchedule& sched) {
    if (!model.cfg.superres) throw UsageError("superres_apply: not a super-resolution model");
    auto cond = pixels_to_latent(upsample_pixels_4x(low_pixels));
    if (cond.dim(2) != model.cfg.latent_size)
        throw ShapeError("superres_apply: conditioning grid does not match the model resolution");
    auto emb = model.embed_tokens(tokenize(caption));
    auto model_fn = [&](const Tensor& x_t, const Tensor& e, int t) {
        return model.forward(concat_channels(x_t, cond), e, t, /*aug_t=*/0);
    };
    const std::vector<int> shape = {low_pixels.dim(0), model.cfg.latent_channels,
                                    model.cfg.latent_size, model.cfg.latent_size};
    auto latents = ddim_sample(model_fn, shape, emb, scfg, sched);
    return latent_to_pixels(latents);
}

} // namespace simda
