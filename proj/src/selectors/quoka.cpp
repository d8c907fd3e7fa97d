#include <algorithm>
#include <numeric>
#include <string>

#include "quoka/random.hpp"
#include "quoka/selectors.hpp"
#include "selectors/scoring.hpp"

namespace quoka {

void SelectorConfig::validate() const
{
    if (B_SA < 1) {
        throw ValidationError("selector config: B_SA must be >= 1");
    }
    if (N_Q < 1) {
        throw ValidationError("selector config: N_Q must be >= 1");
    }
    if (!(eps > 0.0f)) {
        throw ValidationError("selector config: eps must be positive");
    }
}

bool SelectorConfig::is_canonical() const
{
    return scoring == Scoring::cosine && query_aggregation == QueryAggregation::max &&
           query_subselection == QuerySubselection::keydiff && gqa_preaggregate;
}

SelectorConfig SelectorConfig::quoka(std::size_t budget, std::size_t max_queries)
{
    SelectorConfig c;
    c.B_SA = budget;
    c.N_Q = max_queries;
    return c;
}

SelectorConfig SelectorConfig::sample_attention(std::size_t budget, std::size_t max_queries)
{
    SelectorConfig c = quoka(budget, max_queries);
    c.scoring = Scoring::dot;
    c.query_aggregation = QueryAggregation::mean;
    c.query_subselection = QuerySubselection::uniform;
    c.gqa_preaggregate = false;
    return c;
}

std::vector<std::vector<std::size_t>> keydiff_query_positions(const Tensor& q, std::size_t max_queries,
                                                              float eps, ScoringCost* cost)
{
    if (q.rank() != 3) {
        throw DimensionError("subselect_queries: Q must be [n_q x t_q x d]");
    }
    const std::size_t heads = q.dim(0);
    const std::size_t t_q = q.dim(1);
    const std::size_t d = q.dim(2);
    std::vector<std::vector<std::size_t>> out(heads);
    if (t_q <= max_queries) {
        for (auto& p : out) {
            p.resize(t_q);
            std::iota(p.begin(), p.end(), std::size_t{0});
        }
        return out;
    }
    std::vector<float> mean(d);
    std::vector<float> mean_norm(d);
    std::vector<float> q_norm(t_q * d);
    std::vector<float> sim(t_q);
    for (std::size_t h = 0; h < heads; ++h) {
        const MatrixView qh = q.head(h);
        std::fill(mean.begin(), mean.end(), 0.0f);
        for (std::size_t i = 0; i < t_q; ++i) {
            const auto row = qh.row(i);
            for (std::size_t c = 0; c < d; ++c) {
                mean[c] += row[c];
            }
        }
        for (float& m : mean) {
            m /= static_cast<float>(t_q);
        }
        l2_normalize_rows_into(MatrixView(mean, 1, d), eps, mean_norm);
        l2_normalize_rows_into(qh, eps, q_norm);
        matmul_into(MatrixView(q_norm, t_q, d), MatrixView(mean_norm, 1, d), sim);
        // Rank by -CosSim(q, M_Q): queries far from the mean come first.
        for (float& s : sim) {
            s = -s;
        }
        out[h] = topk_indices(sim, max_queries);
    }
    if (cost != nullptr) {
        cost->ops += heads * (3 * t_q * d + d + t_q);
    }
    return out;
}

Tensor subselect_queries(const Tensor& q, std::size_t max_queries, float eps)
{
    const auto positions = keydiff_query_positions(q, max_queries, eps);
    return detail::gather_query_rows(q, positions);
}

Tensor preaggregate_queries(const Tensor& q_norm, const HeadLayout& layout)
{
    layout.validate();
    if (q_norm.rank() != 3 || q_norm.dim(0) != layout.n_q || q_norm.dim(2) != layout.d) {
        throw DimensionError("preaggregate_queries: expected [n_q x m x d] for n_q=" + std::to_string(layout.n_q) +
                             ", d=" + std::to_string(layout.d));
    }
    const std::size_t m = q_norm.dim(1);
    Tensor out({layout.n_kv, m, layout.d});
    for (std::size_t kv = 0; kv < layout.n_kv; ++kv) {
        std::vector<MatrixView> group;
        for (std::size_t g = 0; g < layout.group_size(); ++g) {
            group.push_back(q_norm.head(kv * layout.group_size() + g));
        }
        const auto mean = detail::mean_of_heads(group);
        std::copy(mean.begin(), mean.end(), out.head_data(kv).begin());
    }
    return out;
}

Selection select_kv(const Tensor& q, std::span<const MatrixView> k_cache, const SelectorConfig& cfg,
                    const HeadLayout& layout, std::uint64_t seed, ScoringCost* cost)
{
    cfg.validate();
    detail::check_inputs(q, k_cache, layout);
    const std::size_t t_k = k_cache.front().rows;
    if (t_k == 0) {
        return Selection{std::vector<std::vector<std::size_t>>(layout.n_kv), 0};
    }
    const std::size_t t_q = q.dim(1);

    std::vector<std::vector<std::size_t>> positions;
    if (t_q > cfg.N_Q && cfg.query_subselection == QuerySubselection::keydiff) {
        positions = keydiff_query_positions(q, cfg.N_Q, cfg.eps, cost);
    } else if (t_q > cfg.N_Q && cfg.query_subselection == QuerySubselection::uniform) {
        Rng rng(mix_seed(seed));
        positions.assign(layout.n_q, sample_without_replacement(rng, t_q, cfg.N_Q));
    } else {
        positions.assign(layout.n_q, std::vector<std::size_t>(t_q));
        for (auto& p : positions) {
            std::iota(p.begin(), p.end(), std::size_t{0});
        }
    }
    const Tensor q_sub = detail::gather_query_rows(q, positions);

    Selection sel;
    sel.indices.resize(layout.n_kv);
    for (std::size_t kv = 0; kv < layout.n_kv; ++kv) {
        std::vector<MatrixView> group;
        for (std::size_t g = 0; g < layout.group_size(); ++g) {
            group.push_back(q_sub.head(kv * layout.group_size() + g));
        }
        const auto scores = detail::score_group(group, k_cache[kv], cfg.scoring, cfg.query_aggregation,
                                                cfg.gqa_preaggregate, cfg.eps, cost);
        sel.indices[kv] = topk_indices(scores, cfg.B_SA);
        if (cost != nullptr) {
            cost->ops += t_k;
        }
    }
    sel.budget_used = std::min(cfg.B_SA, t_k);
    return sel;
}

Selection ablation_select(const Tensor& q, const Tensor& k_cache, const SelectorConfig& cfg,
                          const HeadLayout& layout, std::uint64_t seed, ScoringCost* cost)
{
    const auto views = detail::head_views(k_cache);
    return select_kv(q, views, cfg, layout, seed, cost);
}

Selection quoka_select(const Tensor& q, const Tensor& k_cache, const SelectorConfig& cfg,
                       const HeadLayout& layout, ScoringCost* cost)
{
    return ablation_select(q, k_cache, cfg, layout, 0, cost);
}

std::string to_string(Scoring s)
{
    return s == Scoring::cosine ? "cosine" : "dot";
}

std::string to_string(QueryAggregation a)
{
    return a == QueryAggregation::max ? "max" : "mean";
}

std::string to_string(QuerySubselection s)
{
    switch (s) {
    case QuerySubselection::keydiff:
        return "keydiff";
    case QuerySubselection::uniform:
        return "uniform";
    case QuerySubselection::none:
        return "none";
    }
    return "?";
}

} // namespace quoka
