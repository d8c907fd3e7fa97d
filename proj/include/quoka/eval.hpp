#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "quoka/attention.hpp"
#include "quoka/prefill.hpp"
#include "quoka/random.hpp"
#include "quoka/selectors.hpp"

namespace quoka {

// ---- workloads -----------------------------------------------------------------

// Q [n_q x T x d], K/V [n_kv x T x d] of i.i.d. standard Gaussians.
QkvChunk gen_random_qkv(const HeadLayout& layout, std::size_t T, std::uint64_t seed);

// `layers` independent random layers; layer l uses mix_seed(seed, l).
TensorQkvStream gen_random_stream(const HeadLayout& layout, std::size_t T, std::size_t layers, std::uint64_t seed);

// Small random instance for exactness checks: n_q in {4, 8}, n_kv in
// {1, 2, 4}, d in {8, 16}, T uniform in [1, max_T].
struct SmallInstance {
    HeadLayout layout;
    std::size_t T = 0;
    QkvChunk qkv;
};
SmallInstance gen_small_instance(std::uint64_t seed, std::size_t max_T = 64);

struct NeedleWorkload {
    std::size_t T = 1024;
    std::vector<std::size_t> needle_positions;
    float alignment = 0.9f;       // cosine between each planted query and its needle key
    float noise_scale = 0.3f;     // std of the non-needle keys
    std::uint64_t seed = 0;
    std::size_t final_chunk = 128;  // planted queries live in [T - final_chunk, T)
    float query_jitter = 0.3f;    // relative spread of background queries around the query mean
    std::size_t planted_per_needle = 1;

    // Throws SpecError on an infeasible request.
    void validate(const HeadLayout& layout) const;
};

struct NeedleInstance {
    QkvChunk qkv;
    std::vector<std::size_t> needles;          // sorted positions, shared by all kv heads
    std::vector<std::size_t> planted_queries;  // absolute positions, planted_queries[n * per + r] -> needle n
    float query_scale = 0.0f;

    bool recall_defined() const { return !needles.empty(); }
};

// Per kv head: orthonormal needle directions u_n and a query-mean direction
// mu. Needle keys are exactly u_n; other keys are noise_scale * N(0, I) with
// every u_n component removed. Background queries are s * (mu + jitter * r)
// for random unit r; planted queries are s * (a u_n + sqrt(1 - a^2) mu).
NeedleInstance gen_needle_workload(const NeedleWorkload& spec, const HeadLayout& layout);

// Draws `needles` distinct positions before the final chunk from `seed`.
NeedleWorkload needle_family(std::size_t T, std::size_t needles, float alignment, float noise_scale,
                             std::uint64_t seed, std::size_t final_chunk);

// ---- metrics ---------------------------------------------------------------

// ||dense - sparse||_F / max(||dense||_F, eps), accumulated in double.
double attention_error(const Tensor& dense, const Tensor& sparse, double eps = 1e-12);

// Top-`budget` cached positions per kv head by attention mass summed over the
// group's heads and queries. weights: [n_q x t_q x t_k] with the first
// `cached` key columns being the cache.
std::vector<std::vector<std::size_t>> oracle_kv_set(const Tensor& weights, std::size_t cached, std::size_t budget,
                                                    const HeadLayout& layout);

// |selection ∩ oracle| / |oracle|, averaged over kv heads. Rows of `weights`
// must sum to 1 within 1e-4.
double kv_recall(const Selection& selection, const Tensor& weights, std::size_t cached, std::size_t budget,
                 const HeadLayout& layout);

// Fraction of needles contained in the selection, averaged over kv heads.
// Throws DegenerateError when there are no needles.
double needle_recall(const Selection& selection, std::span<const std::size_t> needles);

inline constexpr const char* kMetricsSchema = "quoka.metrics.v1";

struct Metrics {
    std::string selector;
    std::size_t T = 0;
    std::size_t B_CP = 0;
    std::size_t B_SA = 0;
    std::size_t N_Q = 0;
    std::uint64_t seed = 0;
    double output_l2_error = 0.0;
    double kv_recall = 0.0;
    std::optional<double> needle_recall;
    std::size_t theorem_violations = 0;
    std::map<std::string, double> timings;   // label -> seconds
};

std::vector<std::string> metrics_csv_columns();
std::string metrics_csv_header();                          // schema comment line + column line
// time_ms comes from timings["run"], 0 when absent.
std::string metrics_csv_row(const Metrics& m);
// One JSON object; timings only when requested.
std::string metrics_json_line(const Metrics& m, bool with_timings);

// ---- theorem check ---------------------------------------------------------

double theorem_bound(double alpha, double beta);

struct TheoremSample {
    double alpha = 0.0;
    double beta = 0.0;
    double cosine = 0.0;   // CosSim(M_Q, q*)
    double bound = 0.0;
};

// Builds unit k, M_Q with CosSim(M_Q, k) = alpha and q* with
// CosSim(k, q*) = beta in R^d, in double.
TheoremSample theorem_trial(double alpha, double beta, std::size_t d, Rng& rng);

struct TheoremReport {
    std::size_t trials = 0;
    std::size_t d = 0;
    std::size_t violations = 0;
    double max_excess = 0.0;              // largest cosine - bound observed
    std::vector<TheoremSample> samples;   // first few trials plus every violation (capped)
};

// alpha ~ U[-1, 0), beta ~ U(0, 1]; a trial violates when cosine > bound + tol.
TheoremReport check_theorem_bound(std::size_t trials, std::size_t d, std::uint64_t seed, double tol = 1e-5);

// ---- complexity probe ------------------------------------------------------

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
};

// Least squares of log(y) on log(x).
LinearFit fit_loglog_slope(std::span<const double> x, std::span<const double> y);

struct ProbeConfig {
    HeadLayout layout{2, 1, 32};
    std::size_t B_CP = 128;
    SelectorSpec selector = QuokaSelector{SelectorConfig::quoka(1024, 16)};
    std::size_t repeats = 3;
    std::size_t warmup = 1;
    std::uint64_t seed = 0;
    bool whole_prefill = true;
    bool per_step = true;
};

struct ProbePoint {
    std::size_t T = 0;
    double step_median_s = 0.0;       // one chunk against a cache of T positions
    double prefill_median_s = 0.0;    // full chunked prefill of T positions
    std::uint64_t step_scoring_ops = 0;
    double step_predicted_ops = 0.0;
};

struct ProbeResult {
    std::string selector;
    std::vector<ProbePoint> points;
    double step_slope = 0.0;
    double prefill_slope = 0.0;
    // max / min over T of measured / predicted scoring ops per step; 0 when
    // the selector does no scoring.
    double ops_ratio_spread = 0.0;
    double clock_granularity_s = 0.0;
};

// Smallest observable nonzero steady_clock step.
double clock_granularity();

// Slopes are fitted over the upper half of T_list. Throws MeasurementError
// when a median is below 10x the clock granularity.
ProbeResult complexity_probe(std::span<const std::size_t> T_list, const ProbeConfig& cfg);

// ---- ablations ------------------------------------------------------------------

struct AblationArm {
    SelectorSpec selector;
    std::string name;
};

struct AblationConfig {
    HeadLayout layout{4, 2, 64};
    std::size_t T = 1024;
    std::size_t B_CP = 128;
    std::vector<AblationArm> arms;
    std::vector<std::size_t> B_SA_grid{112};
    std::vector<std::size_t> N_Q_grid{16};
    std::size_t seeds = 20;
    std::uint64_t seed = 0;
    std::string workload = "needle";   // "needle" | "random"
    std::size_t needles = 4;
    float alignment = 0.9f;
    float noise_scale = 0.3f;
    float query_jitter = 0.3f;
    bool record_timings = false;

    void validate() const;   // ConfigError, e.g. on an empty grid
};

// The four {cosine, dot} x {max, mean} arms with otherwise canonical settings.
std::vector<AblationArm> scoring_aggregation_arms();

// Scores the final chunk of each seeded workload against the cache of all
// earlier positions, for every arm x B_SA x N_Q. Rows are ordered by
// (seed, B_SA, N_Q, arm) regardless of `threads`.
std::vector<Metrics> run_ablation(const AblationConfig& cfg, std::size_t threads);

// Single-layer selection dispatch for any variant against a cache.
Selection run_selector(const SelectorSpec& spec, const Tensor& q, const LayerKVCache& cache, const HeadLayout& layout,
                       std::uint64_t seed, ScoringCost* cost = nullptr);

} // namespace quoka
