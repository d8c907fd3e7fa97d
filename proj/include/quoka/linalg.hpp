#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "quoka/tensor.hpp"

namespace quoka {

// Additive mask value marking an excluded logit. Finite on purpose so masks
// are ordinary tensors; softmax_rows treats it as "not attended".
inline constexpr float kMaskSentinel = std::numeric_limits<float>::lowest();

inline constexpr float kDefaultEps = 1e-12f;

enum class ReduceKind { mean, max };

// out[i][j] = sum_t a[i][t] * b_transposed[j][t], accumulated in float32
// left to right over t.
Tensor matmul(const Tensor& a, const Tensor& b_transposed);

// Kernel form of matmul writing into a caller-owned a.rows x bt.rows buffer.
void matmul_into(MatrixView a, MatrixView b_transposed, std::span<float> out);

Tensor softmax_rows(const Tensor& scores);
Tensor softmax_rows(const Tensor& scores, const Tensor& mask);

// Softmax over row[0, valid) in place; row[valid, end) is set to 0.
// Requires valid >= 1.
void softmax_prefix_inplace(std::span<float> row, std::size_t valid);

// exp() for a contiguous block, vectorizable; relative error below 2 ulp
// for inputs in [-87, 88]. Inputs outside that range are clamped.
void exp_inplace(std::span<float> values);

// out[i] = x[i] / max(||x[i]||_2, eps)
Tensor l2_normalize_rows(const Tensor& x, float eps = kDefaultEps);
void l2_normalize_rows_into(MatrixView x, float eps, std::span<float> out);

Tensor cosine_sim(const Tensor& a, const Tensor& b, float eps = kDefaultEps);

// Indices of the min(k, n) largest scores, ties to the lower index, returned
// in ascending index order.
std::vector<std::size_t> topk_indices(std::span<const float> scores, std::size_t k);

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> indices);
void gather_rows_into(MatrixView x, std::span<const std::size_t> indices, std::span<float> out);

// Drops `axis` from the shape. Reducing the only axis of a rank-1 tensor
// yields shape {1}.
Tensor reduce(const Tensor& x, std::size_t axis, ReduceKind kind);

} // namespace quoka
