// Acceptance run: one PASS/FAIL line per criterion, exit 1 on any failure.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>

#include "quoka/cli.hpp"
#include "quoka/invariants.hpp"
#include "quoka/linalg.hpp"
#include "quoka/parallel.hpp"

using namespace quoka;

namespace {

constexpr std::uint64_t kSeed = 0;

constexpr double kExactTol = 1e-5;
constexpr double kLinearityTol = 1e-6;
constexpr double kTheoremTol = 1e-5;
constexpr double kMinWinRate = 0.75;
constexpr double kMaxBudgetViolations = 0.05;
constexpr double kDenseSlopeLo = 1.6;
constexpr double kDenseSlopeHi = 2.4;
constexpr double kQuokaSlopeLo = 0.8;
constexpr double kQuokaSlopeHi = 1.4;
constexpr double kMinSpeedup = 2.0;

constexpr double kLimitExactS = 30.0;
constexpr double kLimitOracleS = 60.0;
constexpr double kLimitTheoremS = 60.0;
constexpr double kLimitBenchS = 600.0;

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double x)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4g", x);
    return buf;
}

int failures = 0;

void report(int id, const std::string& name, bool ok, const std::string& detail)
{
    std::cout << (ok ? "PASS" : "FAIL") << " " << id << " " << name << ": " << detail << std::endl;
    failures += ok ? 0 : 1;
}

std::string describe(const InvariantResult& r)
{
    std::string s = std::to_string(r.checks) + " checks, " + std::to_string(r.failures) + " failures, worst " +
                    fmt(r.worst);
    if (r.failing_seed) {
        s += ", seed " + std::to_string(*r.failing_seed);
    }
    return s;
}

// An instance where scaling one cached key changes the dot-product arm's
// selection: a key with positive score outside the top-B_SA set is scaled by
// 100. Returns true when such an instance is found.
bool dot_scale_violation(std::string& where)
{
    const HeadLayout layout{4, 2, 16};
    for (std::uint64_t s = 0; s < 100; ++s) {
        const QkvChunk c = gen_random_qkv(layout, 40, mix_seed(kSeed, 0xd07, s));
        const Tensor q = slice_positions(c.q, 32, 8);
        Tensor k = slice_positions(c.k, 0, 32);
        SelectorConfig dot = SelectorConfig::quoka(4, 16);
        dot.scoring = Scoring::dot;
        const Selection before = ablation_select(q, k, dot, layout, 0);
        for (std::size_t j = 0; j < 32; ++j) {
            const auto& chosen = before.indices[0];
            if (std::find(chosen.begin(), chosen.end(), j) != chosen.end()) {
                continue;
            }
            Tensor scaled = k;
            for (std::size_t ch = 0; ch < layout.d; ++ch) {
                scaled.at(0, j, ch) *= 100.0f;
            }
            if (!(ablation_select(q, scaled, dot, layout, 0) == before)) {
                where = "instance " + std::to_string(s) + ", key " + std::to_string(j);
                return true;
            }
        }
    }
    return false;
}

void criterion_exactness(std::size_t threads)
{
    auto t0 = Clock::now();
    const InvariantResult chunked = check_chunked_equals_dense(100, kSeed, kExactTol, threads);
    const double t_chunked = since(t0);
    report(1, "chunked prefill equals dense", chunked.passed() && t_chunked < kLimitExactS,
           describe(chunked) + ", " + fmt(t_chunked) + " s");

    const InvariantResult full = check_full_budget_identity(100, kSeed, kExactTol, threads);
    report(2, "full budget reproduces dense", full.passed(), describe(full));

    t0 = Clock::now();
    const InvariantResult oracle = check_oracle_equivalence(500, kSeed, threads);
    const double t_oracle = since(t0);
    report(3, "selection matches the 64-bit oracle", oracle.passed() && t_oracle < kLimitOracleS,
           describe(oracle) + ", " + fmt(t_oracle) + " s");

    t0 = Clock::now();
    const std::vector<std::size_t> dims{2, 8, 64};
    const InvariantResult theorem = check_theorem(100000, dims, kSeed, kTheoremTol);
    const double t_theorem = since(t0);
    report(4, "theorem bound holds", theorem.passed() && t_theorem < kLimitTheoremS,
           describe(theorem) + ", " + fmt(t_theorem) + " s");

    const InvariantResult lin = check_preaggregation_linearity(1000, kSeed, kLinearityTol);
    report(5, "pre-aggregation linearity", lin.passed(), describe(lin));

    const InvariantResult scale = check_selection_scale_invariance(200, kSeed, threads);
    std::string where;
    const bool dot_moves = dot_scale_violation(where);
    report(6, "cosine selection is scale invariant", scale.passed() && dot_moves,
           describe(scale) + "; dot arm " + (dot_moves ? "changes at " + where : "never changed"));
}

void criterion_ablation(std::size_t threads)
{
    AblationConfig cfg;
    cfg.layout = {4, 2, 64};
    cfg.T = 1024;
    cfg.B_CP = 128;
    cfg.arms = scoring_aggregation_arms();
    cfg.B_SA_grid = {(cfg.T - cfg.B_CP) / 8};
    cfg.N_Q_grid = {16};
    cfg.seeds = 100;
    cfg.seed = kSeed;
    cfg.workload = "needle";
    cfg.needles = 4;
    cfg.alignment = 0.9f;
    const std::vector<Metrics> rows = run_ablation(cfg, threads);
    const std::size_t arms = cfg.arms.size();
    std::vector<double> mean(arms, 0.0);
    std::size_t wins = 0;
    for (std::size_t base = 0; base < rows.size(); base += arms) {
        bool win = true;
        for (std::size_t a = 0; a < arms; ++a) {
            mean[a] += *rows[base + a].needle_recall / static_cast<double>(cfg.seeds);
            win = win && *rows[base].needle_recall >= *rows[base + a].needle_recall;
        }
        wins += win ? 1 : 0;
    }
    bool best = true;
    std::string detail;
    for (std::size_t a = 0; a < arms; ++a) {
        best = best && (a == 0 || mean[0] > mean[a]);
        detail += cfg.arms[a].name + " " + fmt(mean[a]) + (a + 1 < arms ? ", " : "");
    }
    const double rate = static_cast<double>(wins) / static_cast<double>(cfg.seeds);
    report(7, "cosine+max has the best needle recall", best && rate >= kMinWinRate,
           "mean recall " + detail + "; win rate " + fmt(rate));
}

void criterion_budget(std::size_t threads)
{
    AblationConfig cfg;
    cfg.layout = {4, 2, 64};
    cfg.T = 1024;
    cfg.B_CP = 128;
    cfg.arms = {{QuokaSelector{SelectorConfig::quoka(1, 16)}, "quoka"}};
    const std::size_t t_k = cfg.T - cfg.B_CP;
    cfg.B_SA_grid = {t_k / 8, t_k / 4, t_k / 2, t_k};
    cfg.seeds = 100;
    cfg.seed = kSeed;
    cfg.workload = "random";
    const std::vector<Metrics> rows = run_ablation(cfg, threads);
    const std::size_t steps = cfg.B_SA_grid.size();
    std::vector<double> mean(steps, 0.0);
    std::vector<std::size_t> violations(steps - 1, 0);
    for (std::size_t s = 0; s < cfg.seeds; ++s) {
        for (std::size_t b = 0; b < steps; ++b) {
            mean[b] += rows[s * steps + b].output_l2_error / static_cast<double>(cfg.seeds);
            if (b > 0 && rows[s * steps + b].output_l2_error > rows[s * steps + b - 1].output_l2_error) {
                ++violations[b - 1];
            }
        }
    }
    bool ok = true;
    std::string detail = "mean error";
    for (std::size_t b = 0; b < steps; ++b) {
        detail += " " + fmt(mean[b]);
        ok = ok && (b == 0 || mean[b] <= mean[b - 1]);
    }
    detail += "; violations per step";
    for (std::size_t v : violations) {
        detail += " " + std::to_string(v);
        ok = ok && static_cast<double>(v) / static_cast<double>(cfg.seeds) <= kMaxBudgetViolations;
    }
    report(8, "error shrinks as the budget doubles", ok, detail);
}

void criterion_asymptotics()
{
    const auto t0 = Clock::now();
    const std::vector<std::size_t> T{2048, 4096, 8192, 16384, 32768};
    ProbeConfig cfg;
    cfg.layout = {2, 1, 32};
    cfg.B_CP = 128;
    cfg.per_step = false;
    cfg.whole_prefill = true;
    cfg.seed = kSeed;
    try {
        cfg.selector = DenseSelector{};
        const ProbeResult dense = complexity_probe(T, cfg);
        cfg.selector = QuokaSelector{SelectorConfig::quoka(1024, 16)};
        const ProbeResult sparse = complexity_probe(T, cfg);
        const double speedup = dense.points.back().prefill_median_s / sparse.points.back().prefill_median_s;
        const double elapsed = since(t0);
        const bool ok = dense.prefill_slope >= kDenseSlopeLo && dense.prefill_slope <= kDenseSlopeHi &&
                        sparse.prefill_slope >= kQuokaSlopeLo && sparse.prefill_slope <= kQuokaSlopeHi &&
                        speedup >= kMinSpeedup && elapsed < kLimitBenchS;
        report(9, "whole-prefill scaling", ok,
               "dense slope " + fmt(dense.prefill_slope) + ", quoka slope " + fmt(sparse.prefill_slope) +
                   ", speedup " + fmt(speedup) + "x at T=32768, " + fmt(elapsed) + " s");
    } catch (const MeasurementError& e) {
        report(9, "whole-prefill scaling", false, e.what());
    }
}

void criterion_determinism()
{
    auto capture = [](auto cmd, CommandOptions opts) {
        std::ostringstream out;
        std::ostringstream err;
        const int code = cmd(opts, out, err);
        return std::to_string(code) + "\n" + out.str();
    };
    CommandOptions verify;
    verify.jsonl = true;
    CommandOptions ablate;
    ablate.overrides = {"seeds=10"};
    bool ok = true;
    std::string detail;
    for (std::size_t threads : {1, 4}) {
        verify.threads = threads;
        ablate.threads = threads;
        const std::string v1 = capture(cmd_verify, verify);
        const std::string v2 = capture(cmd_verify, verify);
        const std::string a1 = capture(cmd_ablate, ablate);
        const std::string a2 = capture(cmd_ablate, ablate);
        ok = ok && v1 == v2 && a1 == a2 && v1.rfind("0\n", 0) == 0 && a1.rfind("0\n", 0) == 0;
        detail += "threads " + std::to_string(threads) + ": verify " + std::to_string(v1.size()) + " bytes, ablate " +
                  std::to_string(a1.size()) + " bytes; ";
    }
    report(10, "verify and ablate are byte identical across runs", ok, detail + (ok ? "identical" : "differ"));
}

} // namespace

int main()
{
    const std::size_t threads = resolve_threads(std::nullopt);
    criterion_exactness(threads);
    criterion_ablation(threads);
    criterion_budget(threads);
    criterion_asymptotics();
    criterion_determinism();
    return failures == 0 ? 0 : 1;
}
