#pragma once

#include <cstddef>
#include <vector>

#include "quoka/tensor.hpp"

namespace quoka {

// Append-only key/value store for one attention layer. Positions are never
// removed; sparsity is applied per attention call through a Selection.
class LayerKVCache {
public:
    LayerKVCache() = default;
    LayerKVCache(std::size_t n_kv, std::size_t d);

    // k_chunk, v_chunk: [n_kv x t x d].
    void append(const Tensor& k_chunk, const Tensor& v_chunk);

    std::size_t length() const { return length_; }
    std::size_t n_kv() const { return keys_.size(); }
    std::size_t dim() const { return d_; }

    MatrixView keys(std::size_t head) const;
    MatrixView values(std::size_t head) const;
    std::vector<MatrixView> key_views() const;

    // Materializes head-stacked [n_kv x length x d] copies.
    Tensor keys_tensor() const;
    Tensor values_tensor() const;

private:
    std::size_t d_ = 0;
    std::size_t length_ = 0;
    std::vector<std::vector<float>> keys_;
    std::vector<std::vector<float>> values_;
};

class KVCache {
public:
    KVCache() = default;
    KVCache(std::size_t layers, std::size_t n_kv, std::size_t d);

    LayerKVCache& layer(std::size_t i) { return layers_.at(i); }
    const LayerKVCache& layer(std::size_t i) const { return layers_.at(i); }
    std::size_t layers() const { return layers_.size(); }
    // Common cached length; every layer advances together.
    std::size_t length() const { return layers_.empty() ? 0 : layers_.front().length(); }

private:
    std::vector<LayerKVCache> layers_;
};

} // namespace quoka
