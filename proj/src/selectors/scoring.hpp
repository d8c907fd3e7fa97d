#pragma once

#include <span>
#include <vector>

#include "quoka/selectors.hpp"

namespace quoka::detail {

void check_inputs(const Tensor& q, std::span<const MatrixView> k_cache, const HeadLayout& layout);

std::vector<MatrixView> head_views(const Tensor& stacked);

// Per head, copies rows at `positions[h]` into a [n_q x m x d] tensor. All
// heads must keep the same number of rows.
Tensor gather_query_rows(const Tensor& q, const std::vector<std::vector<std::size_t>>& positions);

// Elementwise mean of equally shaped matrices, summed in order then divided.
std::vector<float> mean_of_heads(std::span<const MatrixView> heads);

// Scores every key of one kv head against the (sub-selected) queries of its
// group and aggregates over query slots. Returns t_k scores.
std::vector<float> score_group(std::span<const MatrixView> group_queries, MatrixView keys, Scoring scoring,
                               QueryAggregation aggregation, bool preaggregate, float eps, ScoringCost* cost);

} // namespace quoka::detail
