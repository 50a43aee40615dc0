#include "simda/evalbench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "simda/error.hpp"
#include "simda/gemm.hpp"
#include "simda/rng.hpp"

namespace simda {

// ---------------------------------------------------------------------------
// Feature statistics
// ---------------------------------------------------------------------------

FeatureSet FeatureSet::from_vectors(const std::vector<std::vector<double>>& rows) {
    if (rows.size() < 2) throw UsageError("feature set: need n >= 2 for covariance");
    FeatureSet fs;
    fs.n = static_cast<int>(rows.size());
    fs.f = static_cast<int>(rows[0].size());
    for (const auto& r : rows)
        if (static_cast<int>(r.size()) != fs.f)
            throw ShapeError("feature set: inconsistent feature dimensions");
    fs.mean.assign(static_cast<std::size_t>(fs.f), 0.0);
    for (const auto& r : rows)
        for (int j = 0; j < fs.f; ++j) fs.mean[static_cast<std::size_t>(j)] += r[static_cast<std::size_t>(j)];
    for (auto& m : fs.mean) m /= fs.n;
    fs.cov.assign(static_cast<std::size_t>(fs.f) * fs.f, 0.0);
    for (const auto& r : rows)
        for (int i = 0; i < fs.f; ++i) {
            const double di = r[static_cast<std::size_t>(i)] - fs.mean[static_cast<std::size_t>(i)];
            for (int j = 0; j < fs.f; ++j)
                fs.cov[static_cast<std::size_t>(i) * fs.f + j] +=
                    di * (r[static_cast<std::size_t>(j)] - fs.mean[static_cast<std::size_t>(j)]);
        }
    for (auto& c : fs.cov) c /= (fs.n - 1);
    return fs;
}

void sym_eigen(std::vector<double> a, int n, std::vector<double>& eigvals,
               std::vector<double>& eigvecs) {
    eigvecs.assign(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) eigvecs[static_cast<std::size_t>(i) * n + i] = 1.0;
    auto off = [&] {
        double s = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) s += a[static_cast<std::size_t>(i) * n + j] * a[static_cast<std::size_t>(i) * n + j];
        return s;
    };
    for (int sweep = 0; sweep < 100 && off() > 1e-24; ++sweep) {
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = a[static_cast<std::size_t>(p) * n + q];
                if (std::abs(apq) < 1e-300) continue;
                const double app = a[static_cast<std::size_t>(p) * n + p];
                const double aqq = a[static_cast<std::size_t>(q) * n + q];
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = a[static_cast<std::size_t>(k) * n + p];
                    const double akq = a[static_cast<std::size_t>(k) * n + q];
                    a[static_cast<std::size_t>(k) * n + p] = c * akp - s * akq;
                    a[static_cast<std::size_t>(k) * n + q] = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = a[static_cast<std::size_t>(p) * n + k];
                    const double aqk = a[static_cast<std::size_t>(q) * n + k];
                    a[static_cast<std::size_t>(p) * n + k] = c * apk - s * aqk;
                    a[static_cast<std::size_t>(q) * n + k] = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    const double vkp = eigvecs[static_cast<std::size_t>(k) * n + p];
                    const double vkq = eigvecs[static_cast<std::size_t>(k) * n + q];
                    eigvecs[static_cast<std::size_t>(k) * n + p] = c * vkp - s * vkq;
                    eigvecs[static_cast<std::size_t>(k) * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    eigvals.assign(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) eigvals[static_cast<std::size_t>(i)] = a[static_cast<std::size_t>(i) * n + i];
}

namespace {

// B = sqrtm(A) for symmetric PSD A, negative eigenvalues clipped at 0.
std::vector<double> sym_sqrt(const std::vector<double>& a, int n) {
    std::vector<double> vals, vecs;
    sym_eigen(a, n, vals, vecs);
    std::vector<double> out(static_cast<std::size_t>(n) * n, 0.0);
    for (int k = 0; k < n; ++k) {
        const double s = vals[static_cast<std::size_t>(k)] > 0.0 ? std::sqrt(vals[static_cast<std::size_t>(k)]) : 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                out[static_cast<std::size_t>(i) * n + j] +=
                    s * vecs[static_cast<std::size_t>(i) * n + k] * vecs[static_cast<std::size_t>(j) * n + k];
    }
    return out;
}

std::vector<double> matmul_dd(const std::vector<double>& a, const std::vector<double>& b, int n) {
    std::vector<double> c(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k) {
            const double av = a[static_cast<std::size_t>(i) * n + k];
            if (av == 0.0) continue;
            for (int j = 0; j < n; ++j)
                c[static_cast<std::size_t>(i) * n + j] += av * b[static_cast<std::size_t>(k) * n + j];
        }
    return c;
}

} // namespace

double frechet_distance(const FeatureSet& a, const FeatureSet& b) {
    if (a.f != b.f) throw ShapeError("frechet_distance: feature dimensions differ");
    const int n = a.f;
    double d = 0.0;
    for (int i = 0; i < n; ++i) {
        const double diff = a.mean[static_cast<std::size_t>(i)] - b.mean[static_cast<std::size_t>(i)];
        d += diff * diff;
    }
    // Tr(Sa) + Tr(Sb)
    for (int i = 0; i < n; ++i)
        d += a.cov[static_cast<std::size_t>(i) * n + i] + b.cov[static_cast<std::size_t>(i) * n + i];
    // Tr((Sa Sb)^{1/2}) via the symmetric form sqrt(Sa)^T Sb sqrt(Sa)
    auto ra = sym_sqrt(a.cov, n);
    auto m = matmul_dd(matmul_dd(ra, b.cov, n), ra, n);
    // symmetrize against roundoff before the eigen solve
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            const double s = 0.5 * (m[static_cast<std::size_t>(i) * n + j] + m[static_cast<std::size_t>(j) * n + i]);
            m[static_cast<std::size_t>(i) * n + j] = s;
            m[static_cast<std::size_t>(j) * n + i] = s;
        }
    std::vector<double> vals, vecs;
    sym_eigen(m, n, vals, vecs);
    for (double v : vals)
        if (v > 0.0) d -= 2.0 * std::sqrt(v);
    return d;
}

// ---------------------------------------------------------------------------
// Frozen feature extractor
// ---------------------------------------------------------------------------

namespace {

constexpr std::uint64_t kFrameFeatureSeed = 0xfeedf00d1234ULL;
constexpr std::uint64_t kClipFeatureSeed = 0xc11bf00d5678ULL;

// Deterministic projection row stream for a given (seed, input-dim) pair.
std::vector<float> projection_matrix(std::uint64_t seed, int in_dim, int out_dim) {
    Rng rng(Rng::mix(seed, static_cast<std::uint64_t>(in_dim)));
    std::vector<float> w(static_cast<std::size_t>(in_dim) * out_dim);
    const double s = 1.0 / std::sqrt(static_cast<double>(in_dim));
    for (auto& v : w) v = static_cast<float>(rng.normal() * s);
    return w;
}

} // namespace

std::vector<double> FrameFeatures::frame_feature(const Tensor& video, int frame) const {
    if (video.ndim() != 4 || video.dim(1) != 3)
        throw ShapeError("frame_feature: expected [L,3,H,W] video");
    const int in_dim = 3 * video.dim(2) * video.dim(3);
    const auto w = projection_matrix(kFrameFeatureSeed, in_dim, dim_);
    const float* x = video.data() + static_cast<std::size_t>(frame) * in_dim;
    std::vector<double> out(static_cast<std::size_t>(dim_), 0.0);
    for (int i = 0; i < in_dim; ++i) {
        const double xv = x[i];
        if (xv == 0.0) continue;
        for (int j = 0; j < dim_; ++j) out[static_cast<std::size_t>(j)] += xv * w[static_cast<std::size_t>(i) * dim_ + j];
    }
    for (auto& v : out) v = std::tanh(v);
    return out;
}

std::vector<double> FrameFeatures::clip_feature(const Tensor& video) const {
    if (video.ndim() != 4 || video.dim(1) != 3)
        throw ShapeError("clip_feature: expected [L,3,H,W] video");
    const int L = video.dim(0);
    const int blocks = L / 4;
    if (blocks < 1) throw UsageError("clip_feature: need at least 4 frames");
    const int frame_elems = 3 * video.dim(2) * video.dim(3);
    const int in_dim = 4 * frame_elems;
    const auto w = projection_matrix(kClipFeatureSeed, in_dim, dim_);
    std::vector<double> acc(static_cast<std::size_t>(dim_), 0.0);
    for (int b = 0; b < blocks; ++b) {
        std::vector<double> out(static_cast<std::size_t>(dim_), 0.0);
        const float* x = video.data() + static_cast<std::size_t>(b) * in_dim;
        for (int i = 0; i < in_dim; ++i) {
            const double xv = x[i];
            if (xv == 0.0) continue;
            for (int j = 0; j < dim_; ++j) out[static_cast<std::size_t>(j)] += xv * w[static_cast<std::size_t>(i) * dim_ + j];
        }
        for (int j = 0; j < dim_; ++j) acc[static_cast<std::size_t>(j)] += std::tanh(out[static_cast<std::size_t>(j)]);
    }
    for (auto& v : acc) v /= blocks;
    return acc;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ShapeError("cosine: dimension mismatch");
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    if (aa == 0.0 || bb == 0.0) return 0.0;
    return ab / (std::sqrt(aa) * std::sqrt(bb));
}

double frame_consistency(const Tensor& video, const FrameFeatures& feats) {
    const int L = video.dim(0);
    if (L < 2) throw UsageError("frame_consistency: need at least two frames");
    std::vector<std::vector<double>> fs;
    fs.reserve(static_cast<std::size_t>(L));
    for (int i = 0; i < L; ++i) fs.push_back(feats.frame_feature(video, i));
    double total = 0.0;
    int pairs = 0;
    for (int i = 0; i < L; ++i)
        for (int j = i + 1; j < L; ++j) {
            total += cosine(fs[static_cast<std::size_t>(i)], fs[static_cast<std::size_t>(j)]);
            ++pairs;
        }
    return total / pairs;
}

std::vector<double> TextVideoScorer::caption_embedding(const std::vector<int>& ids) const {
    const int e = text_table.dim(1);
    std::vector<double> pooled(static_cast<std::size_t>(e), 0.0);
    int live = 0;
    for (int id : ids) {
        if (id == 0) continue; // padding
        if (id < 0 || id >= text_table.dim(0)) throw VocabError("caption id out of vocabulary");
        for (int j = 0; j < e; ++j) pooled[static_cast<std::size_t>(j)] += text_table[id * e + j];
        ++live;
    }
    if (live > 0)
        for (auto& v : pooled) v /= live;
    return pooled;
}

double TextVideoScorer::score(const std::vector<int>& caption_ids, const Tensor& video,
                              const FrameFeatures& feats) const {
    const auto pooled = caption_embedding(caption_ids);
    const int e = sim_head_w.dim(1);
    const int fdim = sim_head_w.dim(0);
    if (fdim != feats.dim()) throw ShapeError("text_video_similarity: head/feature dim mismatch");
    const int L = video.dim(0);
    double total = 0.0;
    for (int i = 0; i < L; ++i) {
        const auto ff = feats.frame_feature(video, i);
        std::vector<double> h(static_cast<std::size_t>(e), 0.0);
        for (int j = 0; j < e; ++j) {
            double acc = sim_head_b[j];
            for (int k = 0; k < fdim; ++k) acc += ff[static_cast<std::size_t>(k)] * sim_head_w[k * e + j];
            h[static_cast<std::size_t>(j)] = acc;
        }
        total += cosine(h, pooled);
    }
    return total / L;
}

// ---------------------------------------------------------------------------
// Attention micro-benchmark
// ---------------------------------------------------------------------------

namespace {

// Plain (untaped) scaled dot-product attention on raw buffers.
void dense_attention_raw(const float* q, const float* kv, float* out, int nq, int nk, int d,
                         std::vector<float>& scores) {
    scores.resize(static_cast<std::size_t>(nq) * nk);
    gemm_nt(q, kv, scores.data(), nq, d, nk, false);
    const float sc = static_cast<float>(1.0 / std::sqrt(static_cast<double>(d)));
    for (int i = 0; i < nq; ++i) {
        float* row = scores.data() + static_cast<std::size_t>(i) * nk;
        float mx = row[0] * sc;
        for (int j = 0; j < nk; ++j) {
            row[j] *= sc;
            mx = std::max(mx, row[j]);
        }
        float z = 0.0f;
        for (int j = 0; j < nk; ++j) {
            row[j] = std::exp(row[j] - mx);
            z += row[j];
        }
        const float inv = 1.0f / z;
        for (int j = 0; j < nk; ++j) row[j] *= inv;
    }
    gemm_nn(scores.data(), kv, out, nq, nk, d, false);
}

} // namespace

std::vector<BenchRow> bench_attention(const std::vector<int>& frame_counts, int tokens, int dim,
                                      int repeats, std::uint64_t seed) {
    if (repeats < 1) throw ConfigError("bench_attention: repeats must be >= 1");
    std::vector<BenchRow> rows;
    std::vector<float> scores;
    for (int L : frame_counts) {
        Rng rng(Rng::mix(seed, static_cast<std::uint64_t>(L)));
        const int total_tokens = L * tokens;
        std::vector<float> x(static_cast<std::size_t>(total_tokens) * dim);
        for (auto& v : x) v = static_cast<float>(rng.normal());
        std::vector<float> out(x.size());
        ShiftSpec spec{2};

        auto time_variant = [&](AttentionVariant v) {
            std::vector<double> times;
            times.reserve(static_cast<std::size_t>(repeats));
            for (int r = 0; r < repeats; ++r) {
                const auto t0 = std::chrono::steady_clock::now();
                switch (v) {
                case AttentionVariant::global_st:
                    dense_attention_raw(x.data(), x.data(), out.data(), total_tokens,
                                        total_tokens, dim, scores);
                    break;
                case AttentionVariant::framewise:
                    for (int i = 0; i < L; ++i)
                        dense_attention_raw(x.data() + static_cast<std::size_t>(i) * tokens * dim,
                                            x.data() + static_cast<std::size_t>(i) * tokens * dim,
                                            out.data() + static_cast<std::size_t>(i) * tokens * dim,
                                            tokens, tokens, dim, scores);
                    break;
                case AttentionVariant::lsa: {
                    std::vector<float> kv(static_cast<std::size_t>(2 * tokens) * dim);
                    for (int i = 0; i < L; ++i) {
                        const float* frame = x.data() + static_cast<std::size_t>(i) * tokens * dim;
                        std::memcpy(kv.data(), frame, sizeof(float) * tokens * dim);
                        for (int p = 0; p < tokens; ++p) {
                            const int src = std::max(i - spec.offset(p), 0);
                            std::memcpy(kv.data() + static_cast<std::size_t>(tokens + p) * dim,
                                        x.data() + (static_cast<std::size_t>(src) * tokens + p) * dim,
                                        sizeof(float) * dim);
                        }
                        dense_attention_raw(frame, kv.data(), out.data() + static_cast<std::size_t>(i) * tokens * dim,
                                            tokens, 2 * tokens, dim, scores);
                    }
                    break;
                }
                }
                const auto t1 = std::chrono::steady_clock::now();
                times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
            }
            std::sort(times.begin(), times.end());
            return times[times.size() / 2];
        };

        for (auto [name, variant] :
             {std::pair<const char*, AttentionVariant>{"global_st", AttentionVariant::global_st},
              {"framewise", AttentionVariant::framewise},
              {"lsa", AttentionVariant::lsa}}) {
            const auto cost = attention_cost(L, tokens, dim, variant);
            BenchRow row;
            row.variant = name;
            row.frames = L;
            row.score_macs = cost.score_macs;
            row.total_macs = cost.total_macs;
            row.median_ms = time_variant(variant);
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

// ---------------------------------------------------------------------------
// JSON report
// ---------------------------------------------------------------------------

std::string metric_report_json(const std::string& metric, double value,
                               const std::map<std::string, std::string>& config,
                               std::uint64_t seed) {
    nlohmann::json j;
    j["metric"] = metric;
    j["value"] = value;
    j["config"] = config;
    j["commit"] = SIMDA_GIT_COMMIT;
    j["seed"] = seed;
    return j.dump(2);
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw IoError("write_text_file: cannot open " + path);
    out << content;
    if (!out) throw IoError("write_text_file: short write to " + path);
}

} // namespace simda
