#include <chrono>
#include <string>

#include "quoka/eval.hpp"
#include "quoka/parallel.hpp"

namespace quoka {

Selection run_selector(const SelectorSpec& spec, const Tensor& q, const LayerKVCache& cache, const HeadLayout& layout,
                       std::uint64_t seed, ScoringCost* cost)
{
    if (cache.length() == 0) {
        return Selection{std::vector<std::vector<std::size_t>>(layout.n_kv), 0};
    }
    const auto keys = cache.key_views();
    struct Visitor {
        const Tensor& q;
        const std::vector<MatrixView>& keys;
        const HeadLayout& layout;
        std::size_t cached;
        std::uint64_t seed;
        ScoringCost* cost;

        Selection operator()(const DenseSelector&) const { return Selection::full(layout.n_kv, cached); }
        Selection operator()(const QuokaSelector& s) const { return select_kv(q, keys, s.config, layout, seed, cost); }
        Selection operator()(const SparqSelector& s) const { return sparq_select(q, keys, s.d_l, s.B_SA, layout, cost); }
        Selection operator()(const LokiSelector& s) const
        {
            const Tensor p = random_orthonormal(layout.d, s.d_l, mix_seed(seed, 0));
            return loki_select(q, keys, p, s.B_SA, layout, cost);
        }
        Selection operator()(const LessIsMoreSelector& s) const
        {
            if (less_is_more_gate(0, s.scoring_layers)) {
                return select_kv(q, keys, s.inner, layout, seed, cost);
            }
            return Selection::full(layout.n_kv, cached);
        }
    };
    return std::visit(Visitor{q, keys, layout, cache.length(), seed, cost}, spec);
}

void AblationConfig::validate() const
{
    try {
        layout.validate();
    } catch (const DimensionError& e) {
        throw ConfigError(std::string("ablation: ") + e.what());
    }
    if (arms.empty()) {
        throw ConfigError("ablation: no selector arms");
    }
    if (B_SA_grid.empty() || N_Q_grid.empty()) {
        throw ConfigError("ablation: empty B_SA or N_Q grid");
    }
    for (std::size_t b : B_SA_grid) {
        if (b < 1) {
            throw ConfigError("ablation: B_SA grid values must be >= 1");
        }
    }
    for (std::size_t n : N_Q_grid) {
        if (n < 1) {
            throw ConfigError("ablation: N_Q grid values must be >= 1");
        }
    }
    if (seeds < 1) {
        throw ConfigError("ablation: seeds must be >= 1");
    }
    if (B_CP < 1 || B_CP >= T) {
        throw ConfigError("ablation: need 1 <= B_CP < T so the final chunk has a cache");
    }
    if (workload != "needle" && workload != "random") {
        throw ConfigError("ablation: workload must be \"needle\" or \"random\"");
    }
}

std::vector<AblationArm> scoring_aggregation_arms()
{
    std::vector<AblationArm> arms;
    for (Scoring s : {Scoring::cosine, Scoring::dot}) {
        for (QueryAggregation a : {QueryAggregation::max, QueryAggregation::mean}) {
            SelectorConfig cfg;
            cfg.scoring = s;
            cfg.query_aggregation = a;
            const SelectorSpec spec = QuokaSelector{cfg};
            arms.push_back({spec, selector_name(spec)});
        }
    }
    return arms;
}

std::vector<Metrics> run_ablation(const AblationConfig& cfg, std::size_t threads)
{
    cfg.validate();
    const std::size_t cached = cfg.T - cfg.B_CP;
    const std::size_t per_seed = cfg.B_SA_grid.size() * cfg.N_Q_grid.size() * cfg.arms.size();
    std::vector<std::vector<Metrics>> rows(cfg.seeds);

    parallel_for(cfg.seeds, threads, [&](std::size_t s) {
        const std::uint64_t seed = cfg.seed + s;
        QkvChunk data;
        std::vector<std::size_t> needles;
        if (cfg.workload == "needle") {
            NeedleWorkload w = needle_family(cfg.T, cfg.needles, cfg.alignment, cfg.noise_scale, seed, cfg.B_CP);
            w.query_jitter = cfg.query_jitter;
            NeedleInstance inst = gen_needle_workload(w, cfg.layout);
            data = std::move(inst.qkv);
            needles = std::move(inst.needles);
        } else {
            data = gen_random_qkv(cfg.layout, cfg.T, seed);
        }
        LayerKVCache cache(cfg.layout.n_kv, cfg.layout.d);
        cache.append(slice_positions(data.k, 0, cached), slice_positions(data.v, 0, cached));
        const Tensor q = slice_positions(data.q, cached, cfg.B_CP);
        const Tensor k = slice_positions(data.k, cached, cfg.B_CP);
        const Tensor v = slice_positions(data.v, cached, cfg.B_CP);
        const Tensor dense = attend_chunk(q, k, v, cache, nullptr, cfg.layout);
        const Tensor weights = attention_weights(AttentionBatch{q, data.k, data.v, cfg.layout, cached});

        auto& out = rows[s];
        out.reserve(per_seed);
        for (std::size_t budget : cfg.B_SA_grid) {
            for (std::size_t max_queries : cfg.N_Q_grid) {
                for (const auto& arm : cfg.arms) {
                    const SelectorSpec spec = with_max_queries(with_budget(arm.selector, budget), max_queries);
                    const auto t0 = std::chrono::steady_clock::now();
                    const Selection sel = run_selector(spec, q, cache, cfg.layout, mix_seed(seed, 1));
                    const Tensor sparse = attend_chunk(q, k, v, cache, &sel, cfg.layout);
                    const double elapsed =
                        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                    Metrics m;
                    m.selector = arm.name;
                    m.T = cfg.T;
                    m.B_CP = cfg.B_CP;
                    m.B_SA = budget;
                    m.N_Q = max_queries;
                    m.seed = seed;
                    m.output_l2_error = attention_error(dense, sparse);
                    m.kv_recall = kv_recall(sel, weights, cached, budget, cfg.layout);
                    if (!needles.empty()) {
                        m.needle_recall = needle_recall(sel, needles);
                    }
                    if (cfg.record_timings) {
                        m.timings["run"] = elapsed;
                    }
                    out.push_back(std::move(m));
                }
            }
        }
    });

    std::vector<Metrics> flat;
    flat.reserve(cfg.seeds * per_seed);
    for (auto& r : rows) {
        for (auto& m : r) {
            flat.push_back(std::move(m));
        }
    }
    return flat;
}

} // namespace quoka
