#include "selectors/scoring.hpp"

#include <string>

namespace quoka::detail {

void check_inputs(const Tensor& q, std::span<const MatrixView> k_cache, const HeadLayout& layout)
{
    layout.validate();
    if (q.rank() != 3 || q.dim(0) != layout.n_q || q.dim(2) != layout.d) {
        throw DimensionError("selector: Q must be [" + std::to_string(layout.n_q) + " x t_q x " +
                             std::to_string(layout.d) + "]");
    }
    if (k_cache.size() != layout.n_kv) {
        throw DimensionError("selector: cache has " + std::to_string(k_cache.size()) + " heads, layout has " +
                             std::to_string(layout.n_kv));
    }
    for (const auto& k : k_cache) {
        if (k.cols != layout.d || k.rows != k_cache.front().rows) {
            throw DimensionError("selector: cache heads must share length and head dim");
        }
    }
}

std::vector<MatrixView> head_views(const Tensor& stacked)
{
    if (stacked.rank() != 3) {
        throw DimensionError("selector: key cache must be [n_kv x t_k x d]");
    }
    std::vector<MatrixView> views;
    for (std::size_t h = 0; h < stacked.dim(0); ++h) {
        views.push_back(stacked.head(h));
    }
    return views;
}

Tensor gather_query_rows(const Tensor& q, const std::vector<std::vector<std::size_t>>& positions)
{
    const std::size_t heads = q.dim(0);
    const std::size_t d = q.dim(2);
    const std::size_t m = positions.front().size();
    std::vector<float> data(heads * m * d);
    for (std::size_t h = 0; h < heads; ++h) {
        if (positions[h].size() != m) {
            throw DimensionError("selector: heads kept different query counts");
        }
        gather_rows_into(q.head(h), positions[h], std::span<float>(data).subspan(h * m * d, m * d));
    }
    return Tensor({heads, m, d}, std::move(data));
}

std::vector<float> mean_of_heads(std::span<const MatrixView> heads)
{
    const std::size_t n = heads.front().data.size();
    std::vector<float> acc(heads.front().data.begin(), heads.front().data.end());
    for (std::size_t g = 1; g < heads.size(); ++g) {
        const auto src = heads[g].data;
        for (std::size_t i = 0; i < n; ++i) {
            acc[i] += src[i];
        }
    }
    const auto count = static_cast<float>(heads.size());
    for (float& v : acc) {
        v /= count;
    }
    return acc;
}

std::vector<float> score_group(std::span<const MatrixView> group_queries, MatrixView keys, Scoring scoring,
                               QueryAggregation aggregation, bool preaggregate, float eps, ScoringCost* cost)
{
    const std::size_t g = group_queries.size();
    const std::size_t m = group_queries.front().rows;
    const std::size_t c = group_queries.front().cols;
    const std::size_t t_k = keys.rows;
    std::uint64_t ops = 0;

    // Cosine scoring normalizes both sides; dot scoring uses raw vectors.
    std::vector<std::vector<float>> q_store;
    std::vector<MatrixView> queries(group_queries.begin(), group_queries.end());
    std::vector<float> k_store;
    MatrixView k_used = keys;
    if (scoring == Scoring::cosine) {
        q_store.resize(g);
        for (std::size_t h = 0; h < g; ++h) {
            q_store[h].resize(m * c);
            l2_normalize_rows_into(group_queries[h], eps, q_store[h]);
            queries[h] = MatrixView(q_store[h], m, c);
        }
        k_store.resize(t_k * c);
        l2_normalize_rows_into(keys, eps, k_store);
        k_used = MatrixView(k_store, t_k, c);
        ops += g * m * c + t_k * c;
    }

    std::vector<float> scores(m * t_k);
    if (preaggregate) {
        const auto q_bar = mean_of_heads(queries);
        matmul_into(MatrixView(q_bar, m, c), k_used, scores);
        ops += g * m * c + m * t_k * c;
    } else {
        std::vector<float> head_scores(m * t_k);
        std::fill(scores.begin(), scores.end(), 0.0f);
        for (std::size_t h = 0; h < g; ++h) {
            matmul_into(queries[h], k_used, head_scores);
            for (std::size_t i = 0; i < scores.size(); ++i) {
                scores[i] += head_scores[i];
            }
        }
        const auto count = static_cast<float>(g);
        for (float& s : scores) {
            s /= count;
        }
        ops += g * m * t_k * c + g * m * t_k;
    }

    std::vector<float> aggregated(scores.begin(), scores.begin() + static_cast<std::ptrdiff_t>(t_k));
    for (std::size_t i = 1; i < m; ++i) {
        const float* row = scores.data() + i * t_k;
        if (aggregation == QueryAggregation::max) {
            for (std::size_t j = 0; j < t_k; ++j) {
                aggregated[j] = row[j] > aggregated[j] ? row[j] : aggregated[j];
            }
        } else {
            for (std::size_t j = 0; j < t_k; ++j) {
                aggregated[j] += row[j];
            }
        }
    }
    if (aggregation == QueryAggregation::mean) {
        const auto count = static_cast<float>(m);
        for (float& s : aggregated) {
            s /= count;
        }
    }
    ops += m * t_k;
    if (cost != nullptr) {
        cost->ops += ops;
    }
    return aggregated;
}

} // namespace quoka::detail
