#pragma once

// Brute-force 64-bit reference implementations. They share no kernels with
// the float32 engine; every loop is written out directly.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "quoka/attention.hpp"
#include "quoka/selection.hpp"
#include "quoka/selectors.hpp"
#include "quoka/tensor.hpp"

namespace quoka::oracle {

// Row-major m x n result of a [m x k] times b_transposed [n x k].
std::vector<double> matmul(const Tensor& a, const Tensor& b_transposed);

std::vector<double> softmax(std::span<const double> logits);

// Indices of the k largest values (ties: lower index first), by full sort,
// returned ascending.
std::vector<std::size_t> top_k(std::span<const double> scores, std::size_t k);

// [n_q x t_q x d] flattened. Query i sees keys j < offset + i + 1.
std::vector<double> dense_attention(const Tensor& q, const Tensor& k, const Tensor& v, const HeadLayout& layout,
                                    std::size_t causal_offset);

// Per query head, the N_Q positions with the smallest cosine to the raw mean
// query; every position when t_q <= N_Q.
std::vector<std::vector<std::size_t>> keydiff_positions(const Tensor& q, std::size_t max_queries, double eps);

// The full selector pipeline for any SelectorConfig, aggregating heads after
// scoring (mean of per-head scores) rather than before.
Selection select(const Tensor& q, const Tensor& k_cache, const SelectorConfig& cfg, const HeadLayout& layout,
                 std::uint64_t seed);

// Mean over queries and group heads of dot products restricted to channels.
Selection channel_select(const Tensor& q, const Tensor& k_cache, const std::vector<std::vector<std::size_t>>& channels,
                         std::size_t budget, const HeadLayout& layout);

Selection sparq_select(const Tensor& q, const Tensor& k_cache, std::size_t d_l, std::size_t budget,
                       const HeadLayout& layout);

// Mean over queries and group heads of (qP).(kP).
Selection loki_select(const Tensor& q, const Tensor& k_cache, const Tensor& projection, std::size_t budget,
                      const HeadLayout& layout);

} // namespace quoka::oracle
