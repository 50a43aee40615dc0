#pragma once

// Metrics (Gaussian Frechet distance, text-video similarity, frame
// consistency) and the attention micro-benchmark. The feature extractor is a
// frozen random projection with a tanh nonlinearity; the statistics on top of
// it are implemented exactly.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "simda/lsa.hpp"
#include "simda/tensor.hpp"

namespace simda {

// --- Gaussian feature statistics ---------------------------------------------

struct FeatureSet {
    int n = 0; // sample count
    int f = 0; // feature dimension
    std::vector<double> mean; // f
    std::vector<double> cov;  // f x f, unbiased (n-1) estimator

    static FeatureSet from_vectors(const std::vector<std::vector<double>>& rows);
};

// Symmetric eigendecomposition (cyclic Jacobi). Returns eigenvalues and the
// column eigenvectors of an n x n symmetric matrix.
void sym_eigen(std::vector<double> matrix, int n, std::vector<double>& eigvals,
               std::vector<double>& eigvecs);

// ||mu_a - mu_b||^2 + Tr(Sa + Sb - 2 (Sa Sb)^{1/2}); matrix square roots via
// symmetric eigendecomposition with negative eigenvalues clipped at zero.
double frechet_distance(const FeatureSet& a, const FeatureSet& b);

// --- frozen feature extractor -------------------------------------------------

class FrameFeatures {
public:
    explicit FrameFeatures(int dim = 32) : dim_(dim) {}

    int dim() const { return dim_; }

    // Per-frame feature of video[frame], video is [L,3,H,W].
    std::vector<double> frame_feature(const Tensor& video, int frame) const;

    // Clip feature: mean of projected non-overlapping 4-frame pixel blocks.
    std::vector<double> clip_feature(const Tensor& video) const;

private:
    int dim_;
};

double cosine(const std::vector<double>& a, const std::vector<double>& b);

// Mean pairwise cosine over all unordered frame pairs; requires L >= 2.
double frame_consistency(const Tensor& video, const FrameFeatures& feats);

// Mean over frames of cosine(head(frame feature), pooled caption embedding).
// Head and table are the frozen tensors trained during base pre-training.
struct TextVideoScorer {
    Tensor sim_head_w; // feature_dim x e
    Tensor sim_head_b; // e
    Tensor text_table; // V x e

    double score(const std::vector<int>& caption_ids, const Tensor& video,
                 const FrameFeatures& feats) const;
    std::vector<double> caption_embedding(const std::vector<int>& caption_ids) const;
};

// --- attention micro-benchmark -------------------------------------------------

struct BenchRow {
    std::string variant;
    int frames = 0;
    std::uint64_t score_macs = 0;
    std::uint64_t total_macs = 0;
    double median_ms = 0.0;
};

// Runs real attention forwards (global spatio-temporal vs frame-wise vs LSA)
// on random data; analytic MAC counts come from attention_cost. Wall-clock is
// the median over `repeats` runs, single-threaded.
std::vector<BenchRow> bench_attention(const std::vector<int>& frame_counts, int tokens, int dim,
                                      int repeats, std::uint64_t seed);

// --- JSON report ---------------------------------------------------------------

// Schema: {metric, value, config, commit, seed}
std::string metric_report_json(const std::string& metric, double value,
                               const std::map<std::string, std::string>& config,
                               std::uint64_t seed);

void write_text_file(const std::string& path, const std::string& content);

} // namespace simda
