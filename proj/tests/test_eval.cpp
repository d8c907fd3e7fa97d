#include <doctest.h>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <numeric>

#include "quoka/errors.hpp"
#include "quoka/eval.hpp"
#include "quoka/linalg.hpp"
#include "quoka/parallel.hpp"
#include "quoka/serialization.hpp"
#include "support.hpp"

using namespace quoka;
using testing::random_tensor;

namespace {

double cosine(std::span<const float> a, std::span<const float> b)
{
    double ab = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += static_cast<double>(a[i]) * b[i];
    }
    return ab / (testing::row_norm(a) * testing::row_norm(b));
}

std::span<const float> row(const Tensor& t, std::size_t h, std::size_t i)
{
    return t.head(h).row(i);
}

} // namespace

TEST_CASE("random workloads are reproducible")
{
    const HeadLayout layout{4, 2, 8};
    const QkvChunk a = gen_random_qkv(layout, 33, 7);
    const QkvChunk b = gen_random_qkv(layout, 33, 7);
    CHECK(a.q == b.q);
    CHECK(a.k == b.k);
    CHECK(a.v == b.v);
    CHECK_FALSE(gen_random_qkv(layout, 33, 8).q == a.q);
    const QkvChunk one = gen_random_qkv(layout, 1, 7);
    CHECK(one.q.shape() == Shape{4, 1, 8});
    CHECK(one.k.shape() == Shape{2, 1, 8});

    for (std::uint64_t s = 0; s < 200; ++s) {
        const SmallInstance inst = gen_small_instance(s);
        CHECK((inst.layout.n_q == 4 || inst.layout.n_q == 8));
        CHECK((inst.layout.n_kv == 1 || inst.layout.n_kv == 2 || inst.layout.n_kv == 4));
        CHECK((inst.layout.d == 8 || inst.layout.d == 16));
        CHECK(inst.T >= 1);
        CHECK(inst.T <= 64);
        CHECK(inst.qkv.q.dim(1) == inst.T);
    }
}

TEST_CASE("needle workload with perfect alignment plants the key direction")
{
    NeedleWorkload spec;
    spec.T = 256;
    spec.final_chunk = 32;
    spec.needle_positions = {40};
    spec.alignment = 1.0f;
    const HeadLayout layout{4, 2, 16};
    const NeedleInstance inst = gen_needle_workload(spec, layout);
    REQUIRE(inst.planted_queries.size() == 1);
    for (std::size_t h = 0; h < layout.n_q; ++h) {
        const std::size_t g = group_of(h, layout);
        CHECK(cosine(row(inst.qkv.q, h, inst.planted_queries[0]), row(inst.qkv.k, g, 40)) >= 1.0 - 1e-6);
    }
    CHECK(testing::row_norm(row(inst.qkv.k, 0, 40)) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("needle workload alignment and orthogonality")
{
    const HeadLayout layout{4, 2, 64};
    const NeedleWorkload spec = needle_family(1024, 4, 0.9f, 0.3f, 3, 128);
    CHECK(spec.needle_positions.size() == 4);
    const NeedleInstance inst = gen_needle_workload(spec, layout);
    CHECK(std::is_sorted(inst.needles.begin(), inst.needles.end()));
    CHECK(inst.recall_defined());
    for (std::size_t n = 0; n < 4; ++n) {
        CHECK(inst.needles[n] < 1024 - 128);
        const std::size_t pos = inst.planted_queries[n];
        CHECK(pos >= 1024 - 128);
        const std::size_t needle = spec.needle_positions[n];
        for (std::size_t h = 0; h < layout.n_q; ++h) {
            const std::size_t g = group_of(h, layout);
            CHECK(cosine(row(inst.qkv.q, h, pos), row(inst.qkv.k, g, needle)) == doctest::Approx(0.9).epsilon(1e-4));
            // Noise keys carry no needle component.
            CHECK(std::abs(cosine(row(inst.qkv.k, g, needle), row(inst.qkv.k, g, (needle + 1) % 896))) <= 1e-4);
        }
    }
}

TEST_CASE("dense attention of planted queries concentrates on the needles")
{
    const HeadLayout layout{4, 2, 64};
    const NeedleInstance inst = gen_needle_workload(needle_family(1024, 4, 0.9f, 0.3f, 11, 128), layout);
    const std::size_t start = 1024 - 128;
    const Tensor q = slice_positions(inst.qkv.q, start, 128);
    const Tensor w = attention_weights({q, inst.qkv.k, inst.qkv.v, layout, start});
    double mass = 0.0;
    std::size_t count = 0;
    for (std::size_t h = 0; h < layout.n_q; ++h) {
        for (std::size_t p : inst.planted_queries) {
            for (std::size_t n : inst.needles) {
                mass += w.at(h, p - start, n);
            }
            ++count;
        }
    }
    CHECK(mass / static_cast<double>(count) >= 0.5);
}

TEST_CASE("needle workload degenerate and infeasible specs")
{
    NeedleWorkload none;
    none.T = 64;
    none.final_chunk = 16;
    const NeedleInstance inst = gen_needle_workload(none, {2, 1, 8});
    CHECK_FALSE(inst.recall_defined());
    CHECK_THROWS_AS(needle_recall(Selection::full(1, 48), inst.needles), DegenerateError);

    NeedleWorkload crowded = needle_family(1024, 8, 0.9f, 0.3f, 1, 128);
    CHECK_THROWS_AS(gen_needle_workload(crowded, {2, 1, 8}), SpecError);
    NeedleWorkload late;
    late.needle_positions = {1000};
    CHECK_THROWS_AS(late.validate({2, 1, 64}), SpecError);
    NeedleWorkload dup;
    dup.needle_positions = {5, 5};
    CHECK_THROWS_AS(dup.validate({2, 1, 64}), SpecError);
}

TEST_CASE("attention error examples")
{
    Rng rng(51);
    const Tensor a = random_tensor(rng, {2, 5, 4});
    CHECK(attention_error(a, a) == 0.0);
    CHECK(attention_error(a, Tensor({2, 5, 4})) == doctest::Approx(1.0));
    CHECK_THROWS_AS(attention_error(a, Tensor({2, 4, 4})), DimensionError);

    const HeadLayout layout{4, 2, 8};
    const QkvChunk c = gen_random_qkv(layout, 40, 3);
    const TensorQkvStream s({c}, layout);
    PrefillConfig cfg;
    cfg.B_CP = 8;
    cfg.layout = layout;
    cfg.selector = QuokaSelector{SelectorConfig::quoka(40, 4)};
    CHECK(attention_error(dense_attention({c.q, c.k, c.v, layout, 0}), prefill(s, cfg).outputs[0]) <= 1e-5);
}

TEST_CASE("kv recall examples")
{
    const HeadLayout layout{2, 1, 4};
    // Weights for one query per head over 4 cached columns plus itself.
    Tensor w({2, 1, 5}, {0.5f, 0.05f, 0.3f, 0.05f, 0.1f, 0.4f, 0.1f, 0.2f, 0.1f, 0.2f});
    CHECK(oracle_kv_set(w, 4, 2, layout) == std::vector<std::vector<std::size_t>>{{0, 2}});
    CHECK(kv_recall(Selection{{{0, 2}}, 2}, w, 4, 2, layout) == 1.0);
    CHECK(kv_recall(Selection{{{1, 3}}, 2}, w, 4, 2, layout) == 0.0);
    CHECK(kv_recall(Selection{{{0, 1}}, 2}, w, 4, 2, layout) == 0.5);
    Tensor bad({2, 1, 5}, {0.5f, 0.5f, 0.5f, 0.0f, 0.0f, 0.2f, 0.2f, 0.2f, 0.2f, 0.2f});
    CHECK_THROWS_AS(kv_recall(Selection{{{0, 1}}, 2}, bad, 4, 2, layout), Error);
}

TEST_CASE("QuoKA recovers more attention mass than uniform selection")
{
    // Few queries per chunk, so every query takes part in scoring.
    const HeadLayout layout{4, 1, 16};
    const std::size_t cached = 128;
    const std::size_t budget = cached / 4;
    std::size_t wins = 0;
    for (std::uint64_t s = 0; s < 100; ++s) {
        const QkvChunk c = gen_random_qkv(layout, cached + 8, mix_seed(77, s));
        const Tensor q = slice_positions(c.q, cached, 8);
        const Tensor w = attention_weights({q, c.k, c.v, layout, cached});
        const Tensor kc = slice_positions(c.k, 0, cached);
        const Selection sel = quoka_select(q, kc, SelectorConfig::quoka(budget, 16), layout);
        wins += kv_recall(sel, w, cached, budget, layout) > static_cast<double>(budget) / cached ? 1 : 0;
    }
    CHECK(wins >= 95);
}

TEST_CASE("metrics serialization")
{
    Metrics m;
    m.selector = "quoka";
    m.T = 1024;
    m.B_CP = 128;
    m.B_SA = 112;
    m.N_Q = 16;
    m.seed = 3;
    m.output_l2_error = 0.125;
    m.kv_recall = 0.5;
    m.needle_recall = 1.0;
    m.timings["run"] = 0.002;
    const std::string header = metrics_csv_header();
    CHECK(header.rfind("# schema: quoka.metrics.v1\n", 0) == 0);
    CHECK(header.find("selector,T,B_CP,B_SA,N_Q,seed,output_l2_error,kv_recall,needle_recall,time_ms") !=
          std::string::npos);
    CHECK(metrics_csv_row(m) == "quoka,1024,128,112,16,3,0.125,0.5,1,2\n");
    const json j = json::parse(metrics_json_line(m, false));
    CHECK(j.at("schema") == kMetricsSchema);
    CHECK(j.at("needle_recall") == 1.0);
    CHECK_FALSE(j.contains("timings"));
    CHECK(json::parse(metrics_json_line(m, true)).at("timings").at("run") == 0.002);
    m.needle_recall.reset();
    CHECK(json::parse(metrics_json_line(m, false)).at("needle_recall").is_null());
}

TEST_CASE("theorem bound examples")
{
    CHECK(theorem_bound(-1.0, 1.0) == -1.0);
    CHECK(theorem_bound(-0.5, 0.5) == 0.5);
    Rng rng(52);
    for (std::size_t d : {2, 8, 64}) {
        const TheoremSample s = theorem_trial(-1.0, 1.0, d, rng);
        CHECK(s.cosine == doctest::Approx(-1.0).epsilon(1e-12));
        CHECK(s.bound == -1.0);
    }
}

TEST_CASE("theorem trials respect the bound")
{
    for (std::size_t d : {2, 3, 8, 64}) {
        const TheoremReport r = check_theorem_bound(5000, d, 9);
        CHECK(r.trials == 5000);
        CHECK(r.violations == 0);
        CHECK(r.max_excess <= 1e-5);
        CHECK_FALSE(r.samples.empty());
        for (const auto& s : r.samples) {
            CHECK(s.alpha < 0.0);
            CHECK(s.beta > 0.0);
            CHECK(s.cosine <= s.bound + 1e-5);
        }
        const TheoremReport again = check_theorem_bound(5000, d, 9);
        CHECK(again.max_excess == r.max_excess);
    }
}

TEST_CASE("log-log slope fit")
{
    const std::vector<double> x{2, 4, 8, 16};
    std::vector<double> y;
    for (double v : x) {
        y.push_back(3.0 * v * v);
    }
    const LinearFit f = fit_loglog_slope(x, y);
    CHECK(f.slope == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(f.intercept == doctest::Approx(std::log(3.0)).epsilon(1e-12));
    CHECK_THROWS_AS(fit_loglog_slope(std::vector<double>{1}, std::vector<double>{1}), Error);
}

TEST_CASE("complexity probe on a small grid")
{
    CHECK(clock_granularity() > 0.0);
    ProbeConfig cfg;
    cfg.layout = {2, 1, 16};
    cfg.B_CP = 32;
    cfg.selector = QuokaSelector{SelectorConfig::quoka(64, 8)};
    const std::vector<std::size_t> T{256, 512, 1024, 2048};
    const ProbeResult r = complexity_probe(T, cfg);
    REQUIRE(r.points.size() == 4);
    for (const auto& p : r.points) {
        CHECK(p.step_median_s > 0.0);
        CHECK(p.prefill_median_s > 0.0);
        CHECK(p.step_scoring_ops > 0);
    }
    CHECK(r.ops_ratio_spread >= 1.0);
    CHECK(r.ops_ratio_spread <= 1.5);
}

TEST_CASE("ablation rows are deterministic and ordered")
{
    AblationConfig cfg;
    cfg.layout = {4, 2, 32};
    cfg.T = 256;
    cfg.B_CP = 32;
    cfg.arms = scoring_aggregation_arms();
    cfg.B_SA_grid = {16, 32};
    cfg.N_Q_grid = {4, 8};
    cfg.seeds = 3;
    cfg.needles = 3;
    CHECK(cfg.arms.size() == 4);
    const auto a = run_ablation(cfg, 1);
    const auto b = run_ablation(cfg, 3);
    REQUIRE(a.size() == 4 * 2 * 2 * 3);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(metrics_json_line(a[i], false) == metrics_json_line(b[i], false));
        CHECK(a[i].selector == cfg.arms[i % 4].name);
        CHECK(a[i].needle_recall.has_value());
    }
    CHECK(a[0].B_SA == 16);
    CHECK(a[4].N_Q == 8);
    CHECK(a[8].B_SA == 32);

    AblationConfig empty = cfg;
    empty.B_SA_grid.clear();
    CHECK_THROWS_AS(empty.validate(), ConfigError);
    AblationConfig noarms = cfg;
    noarms.arms.clear();
    CHECK_THROWS_AS(noarms.validate(), ConfigError);
}

TEST_CASE("parallel_for covers every index and rethrows")
{
    std::vector<std::atomic<int>> hits(100);
    parallel_for(100, 4, [&](std::size_t i) { hits[i]++; });
    for (const auto& h : hits) {
        CHECK(h.load() == 1);
    }
    CHECK_THROWS_AS(parallel_for(10, 3,
                                 [](std::size_t i) {
                                     if (i == 7) {
                                         throw DegenerateError("boom");
                                     }
                                 }),
                    DegenerateError);
    CHECK(resolve_threads(5) == 5);
    setenv("QUOKA_THREADS", "3", 1);
    CHECK(resolve_threads(std::nullopt) == 3);
    setenv("QUOKA_THREADS", "lots", 1);
    CHECK_THROWS_AS(resolve_threads(std::nullopt), ConfigError);
    unsetenv("QUOKA_THREADS");
    CHECK(resolve_threads(std::nullopt) >= 1);
}
