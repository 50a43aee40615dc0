#pragma once

// The four workflows: base text-to-image pre-training, adapter-only video
// training, one-shot editing, and cascaded super-resolution; plus the Adam
// optimizer and the frozen-tensor integrity checks they share.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "simda/denoiser.hpp"
#include "simda/diffusion.hpp"
#include "simda/evalbench.hpp"
#include "simda/toyworld.hpp"

namespace simda {

// Default diffusion schedule: linear betas 1e-4 -> 0.02 over T = 1000.
NoiseSchedule default_schedule();

struct TrainConfig {
    int steps = 2000;
    int batch = 4;
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
    int eval_every = 0;   // 0 disables periodic validation
    int ckpt_every = 0;   // 0 disables periodic integrity checks
    double cfg_dropout = 0.0; // empty-caption conditioning dropout (optional CFG)

    void validate() const;
};

// ---------------------------------------------------------------------------
// Data
// ---------------------------------------------------------------------------

struct Corpus {
    int frames = 0, height = 0, width = 0;
    std::vector<VideoClip> clips;
    std::vector<Tensor> latents; // encoded and scaled to [-1, 1]
    std::vector<std::vector<int>> caption_ids;
};

// Deterministic moving-shapes corpus over the closed caption grammar.
// clip_limit 0 takes all 120 combinations; a positive value takes a seeded
// subsample.
Corpus make_corpus(std::uint64_t seed, int frames, int height, int width, int clip_limit = 0,
                   Background background = Background::black);

// Pixel [0,1] video -> scaled latent in [-1, 1] and back.
Tensor pixels_to_latent(const Tensor& pixels);
Tensor latent_to_pixels(const Tensor& latent);

// Fixed (clip, t, eps) probes for deterministic validation losses.
struct ValPack {
    std::vector<int> clip_indices;
    std::vector<int> timesteps;
    std::vector<Tensor> eps;
};
ValPack make_val_pack(const Corpus& corpus, const NoiseSchedule& sched, std::uint64_t seed,
                      int count);
double validation_loss(Denoiser& model, const Corpus& corpus, const ValPack& pack,
                       const NoiseSchedule& sched);

// ---------------------------------------------------------------------------
// Optimizer and freeze checks
// ---------------------------------------------------------------------------

// Decoupled-moment adaptive optimizer (Adam) with bias correction. Only
// trainable tensors that received gradients are updated; gradients are
// cleared after the step.
class Adam {
public:
    Adam(double lr, double beta1, double beta2, double eps)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(ParamSet& params);
    int steps_taken() const { return t_; }

private:
    double lr_, beta1_, beta2_, eps_;
    int t_ = 0;
    std::map<std::string, std::pair<std::vector<float>, std::vector<float>>> moments_;
};

std::uint64_t fnv1a_hash(const float* data, std::size_t n);
std::map<std::string, std::uint64_t> hash_frozen(const ParamSet& params);
// Throws ContractError if any frozen tensor changed.
void check_frozen(const ParamSet& params, const std::map<std::string, std::uint64_t>& baseline);

// ---------------------------------------------------------------------------
// Training pipelines
// ---------------------------------------------------------------------------

struct TrainLogRow {
    int step = 0;
    double loss = 0.0;
    double wallclock_ms = 0.0;
};
using LossLog = std::vector<TrainLogRow>;

void write_loss_csv(const std::string& path, const LossLog& log);

struct PretrainResult {
    Denoiser model;
    LossLog log;
};

// Trains the 2D denoiser and the text embedding table on single frames with
// the epsilon-prediction loss, then fits the similarity head on frozen frame
// features. Throws ContractError on divergence (non-finite loss).
PretrainResult pretrain_base(const DenoiserConfig& cfg, const TrainConfig& tcfg,
                             const Corpus& corpus, const NoiseSchedule& sched,
                             int sim_head_steps = 400);

struct AdaptResult {
    Denoiser model;
    LossLog log;
    ParamCounts budget;
};

// Inflates the base, freezes it, and trains only the adapters on video clips.
// Frozen tensors are hash-verified during and after the run.
AdaptResult adapt_train_t2v(const Denoiser& base, const TrainConfig& tcfg, const Corpus& corpus,
                            const NoiseSchedule& sched,
                            const Denoiser::InflateOptions& opt = Denoiser::InflateOptions{},
                            std::uint64_t adapter_seed = 0x5eed);

struct Generated {
    Tensor latents; // [L,48,h,w], scaled
    Tensor pixels;  // [L,3,H,W] in [0,1]
};

// DDIM-samples a clip for the caption and decodes it through the bijective
// codec. guidance_scale 1 disables classifier-free guidance.
Generated generate_t2v(Denoiser& model, const std::string& caption, int frames,
                       const SamplerConfig& scfg, const NoiseSchedule& sched,
                       double guidance_scale = 1.0);

// ---------------------------------------------------------------------------
// One-shot editing
// ---------------------------------------------------------------------------

struct EditSession {
    Tensor source_latents; // scaled
    std::string source_caption;
    std::string edited_caption;
    Tensor inverted; // eta = 0 inversion latents from the tuned model
};

struct EditResult {
    Denoiser tuned;
    EditSession session;
    Tensor edited_pixels;
    Tensor recon_pixels; // sampled with the source caption
    LossLog tune_log;
};

// Fine-tunes the adapters only on the single (clip, source caption) pair,
// inverts with the source caption, then samples with the edited caption.
EditResult one_shot_edit(const Denoiser& video_model, const VideoClip& source,
                         const std::string& edited_caption, int tune_steps,
                         const TrainConfig& tcfg, const SamplerConfig& scfg,
                         const NoiseSchedule& sched);

// ---------------------------------------------------------------------------
// Cascaded super-resolution
// ---------------------------------------------------------------------------

// Box 4x downsample / nearest 4x upsample on pixel videos.
Tensor downsample_pixels_4x(const Tensor& pixels);
Tensor upsample_pixels_4x(const Tensor& pixels);

struct SuperresResult {
    Denoiser model;
    LossLog base_log;
    LossLog adapter_log;
};

// Two-phase SR training on paired (low, high) clips derived from the corpus:
// pre-train the 2D SR base on single frames, then adapter-tune the inflated
// model on clips. Conditioning: noisy target latent concatenated per frame
// with the noise-augmented upsampled low-res latent; the augmentation level
// is drawn per example and fed as an extra conditioning scalar.
SuperresResult superres_train(const DenoiserConfig& cfg, const TrainConfig& base_cfg,
                              const TrainConfig& adapter_cfg, const Corpus& high_corpus,
                              const NoiseSchedule& sched, double aug_max_frac = 0.3);

// 4x upscale of a low-resolution pixel video (inference uses zero
// augmentation noise).
Tensor superres_apply(Denoiser& model, const Tensor& low_pixels, const std::string& caption,
                      const SamplerConfig& scfg, const NoiseSchedule& sched);

} // namespace simda
