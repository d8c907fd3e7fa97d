#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "quoka/kv_cache.hpp"
#include "quoka/selection.hpp"
#include "quoka/tensor.hpp"

namespace quoka {

// Grouped-query layout: n_q query heads share n_kv key/value heads in
// contiguous groups of n_q / n_kv.
struct HeadLayout {
    std::size_t n_q = 1;
    std::size_t n_kv = 1;
    std::size_t d = 1;

    void validate() const;
    std::size_t group_size() const { return n_q / n_kv; }
    bool operator==(const HeadLayout&) const = default;
};

std::size_t group_of(std::size_t query_head, const HeadLayout& layout);

// Q: [n_q x t_q x d], K/V: [n_kv x t_k x d]. Query i may attend key j iff
// j < causal_offset + i + 1.
struct AttentionBatch {
    Tensor q;
    Tensor k;
    Tensor v;
    HeadLayout layout;
    std::size_t causal_offset = 0;

    void validate() const;
};

Tensor dense_attention(const AttentionBatch& batch);

// Post-softmax weights [n_q x t_q x t_k]; masked entries are exactly 0.
Tensor attention_weights(const AttentionBatch& batch);

// Single-head causal attention kernel. q: t_q x d, k/v: t_k x d, out: t_q x d.
// Scores are scaled by 1/sqrt(d) and never materialized beyond one block of
// queries against the keys that block can see.
void attend_head(MatrixView q, MatrixView k, MatrixView v, std::size_t causal_offset, std::span<float> out);

// Positions [start, start + len) of a [H x T x d] tensor.
Tensor slice_positions(const Tensor& x, std::size_t start, std::size_t len);

// Attends q_chunk to [selected cache rows | current chunk] per kv head. When
// `selection` is null the whole cache is used.
Tensor attend_chunk(const Tensor& q_chunk, const Tensor& k_chunk, const Tensor& v_chunk,
                    const LayerKVCache& cache, const Selection* selection, const HeadLayout& layout);

// Called once per chunk with a non-empty cache; chooses which cached
// positions the chunk attends to. The current chunk is always attended.
using SelectionHook = std::function<Selection(const Tensor& q_chunk, const LayerKVCache& cache)>;

struct ChunkedResult {
    Tensor output;                       // [n_q x T x d]
    LayerKVCache cache;                  // all T positions, never reduced
    std::vector<std::size_t> selected;   // cached positions attended, per chunk
};

ChunkedResult chunked_attention(const Tensor& q_all, const Tensor& k_all, const Tensor& v_all,
                                const HeadLayout& layout, std::size_t chunk_size,
                                const SelectionHook& hook = {});

} // namespace quoka
