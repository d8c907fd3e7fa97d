#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "quoka/attention.hpp"
#include "quoka/linalg.hpp"
#include "quoka/selection.hpp"
#include "quoka/tensor.hpp"

namespace quoka {

enum class Scoring { cosine, dot };
enum class QueryAggregation { max, mean };
enum class QuerySubselection { keydiff, uniform, none };

// Scoring function configuration. The canonical QuoKA arm is
// {cosine, max, keydiff, gqa_preaggregate}; every other combination is an
// ablation.
struct SelectorConfig {
    std::size_t B_SA = 1024;
    std::size_t N_Q = 16;
    Scoring scoring = Scoring::cosine;
    QueryAggregation query_aggregation = QueryAggregation::max;
    QuerySubselection query_subselection = QuerySubselection::keydiff;
    bool gqa_preaggregate = true;
    float eps = kDefaultEps;

    void validate() const;
    bool is_canonical() const;
    bool operator==(const SelectorConfig&) const = default;

    static SelectorConfig quoka(std::size_t budget, std::size_t max_queries);
    // Uniform query sampling scored by logits, aggregated post hoc by mean.
    static SelectorConfig sample_attention(std::size_t budget, std::size_t max_queries);
};

// Multiply-add and comparison counter for the scoring path.
struct ScoringCost {
    std::uint64_t ops = 0;
};

// ---- query sub-selection -------------------------------------------------

// Per head, the positions of the N_Q queries least cosine-similar to the
// head's mean query, ascending. Heads with t_q <= N_Q keep every position.
std::vector<std::vector<std::size_t>> keydiff_query_positions(const Tensor& q, std::size_t max_queries,
                                                              float eps = kDefaultEps,
                                                              ScoringCost* cost = nullptr);

// Q: [n_q x t_q x d] -> [n_q x min(N_Q, t_q) x d].
Tensor subselect_queries(const Tensor& q, std::size_t max_queries, float eps = kDefaultEps);

// Mean of the normalized query heads inside each kv group:
// [n_q x m x d] -> [n_kv x m x d].
Tensor preaggregate_queries(const Tensor& q_norm, const HeadLayout& layout);

// ---- selectors -----------------------------------------------------------

// Full QuoKA pipeline against a [n_kv x t_k x d] key cache.
Selection quoka_select(const Tensor& q, const Tensor& k_cache, const SelectorConfig& cfg,
                       const HeadLayout& layout, ScoringCost* cost = nullptr);

// Same pipeline with any ablation substitution; `seed` drives uniform
// query sampling.
Selection ablation_select(const Tensor& q, const Tensor& k_cache, const SelectorConfig& cfg,
                          const HeadLayout& layout, std::uint64_t seed, ScoringCost* cost = nullptr);

// View form used by the prefill engine; an empty cache yields an empty
// Selection.
Selection select_kv(const Tensor& q, std::span<const MatrixView> k_cache, const SelectorConfig& cfg,
                    const HeadLayout& layout, std::uint64_t seed, ScoringCost* cost = nullptr);

// Dot-product scoring restricted to the given channels of each kv group,
// mean over all queries and group heads.
Selection channel_select(const Tensor& q, std::span<const MatrixView> k_cache,
                         const std::vector<std::vector<std::size_t>>& channels, std::size_t budget,
                         const HeadLayout& layout, ScoringCost* cost = nullptr);

// Simplified SparQ: per kv group keep the d_l channels with the largest mean
// |q|, then channel_select.
std::vector<std::vector<std::size_t>> sparq_channels(const Tensor& q, std::size_t d_l, const HeadLayout& layout);
Selection sparq_select(const Tensor& q, std::span<const MatrixView> k_cache, std::size_t d_l, std::size_t budget,
                       const HeadLayout& layout, ScoringCost* cost = nullptr);
Selection sparq_select(const Tensor& q, const Tensor& k_cache, std::size_t d_l, std::size_t budget,
                       const HeadLayout& layout, ScoringCost* cost = nullptr);

// Simplified Loki: score (Q P)(K P)^T with a caller-supplied d x d_l
// projection with orthonormal columns, mean over queries.
Selection loki_select(const Tensor& q, std::span<const MatrixView> k_cache, const Tensor& projection,
                      std::size_t budget, const HeadLayout& layout, ScoringCost* cost = nullptr);
Selection loki_select(const Tensor& q, const Tensor& k_cache, const Tensor& projection, std::size_t budget,
                      const HeadLayout& layout, ScoringCost* cost = nullptr);

// d x d_l matrix with orthonormal columns: QR (modified Gram-Schmidt) of a
// seeded Gaussian.
Tensor random_orthonormal(std::size_t d, std::size_t d_l, std::uint64_t seed);

// Throws ValidationError unless P^T P == I within tol.
void validate_orthonormal(const Tensor& projection, double tol = 1e-5);

// LessIsMore layer gate: true iff scores are computed at this layer.
bool less_is_more_gate(std::size_t layer_index, std::span<const std::size_t> scoring_layers);

// ---- selector variants for the engine -------------------------------------

struct DenseSelector {
    bool operator==(const DenseSelector&) const = default;
};

struct QuokaSelector {
    SelectorConfig config;
    bool operator==(const QuokaSelector&) const = default;
};

struct SparqSelector {
    std::size_t d_l = 64;
    std::size_t B_SA = 1024;
    bool operator==(const SparqSelector&) const = default;
};

// Projection per layer from random_orthonormal(d, d_l, mix_seed(run seed, layer)).
struct LokiSelector {
    std::size_t d_l = 64;
    std::size_t B_SA = 1024;
    bool operator==(const LokiSelector&) const = default;
};

// Scores with `inner` only at `scoring_layers`; other layers reuse the most
// recent scoring layer's Selection in the same chunk, or attend the full
// cache when none has fired yet.
struct LessIsMoreSelector {
    SelectorConfig inner;
    std::vector<std::size_t> scoring_layers;
    bool operator==(const LessIsMoreSelector&) const = default;
};

using SelectorSpec = std::variant<DenseSelector, QuokaSelector, SparqSelector, LokiSelector, LessIsMoreSelector>;

std::string selector_name(const SelectorSpec& spec);
std::string to_string(Scoring s);
std::string to_string(QueryAggregation a);
std::string to_string(QuerySubselection s);

// Selection budget of a variant; 0 for dense.
std::size_t selector_budget(const SelectorSpec& spec);
// Returns a copy with the budget (and, where meaningful, N_Q) replaced.
SelectorSpec with_budget(const SelectorSpec& spec, std::size_t budget);
SelectorSpec with_max_queries(const SelectorSpec& spec, std::size_t max_queries);

} // namespace quoka
