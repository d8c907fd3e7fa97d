#include "quoka/kv_cache.hpp"

#include <string>

namespace quoka {

LayerKVCache::LayerKVCache(std::size_t n_kv, std::size_t d) : d_(d), keys_(n_kv), values_(n_kv) {}

void LayerKVCache::append(const Tensor& k_chunk, const Tensor& v_chunk)
{
    if (k_chunk.rank() != 3 || k_chunk.shape() != v_chunk.shape()) {
        throw DimensionError("kv cache: K and V chunks must share a [n_kv x t x d] shape");
    }
    if (k_chunk.dim(0) != keys_.size() || k_chunk.dim(2) != d_) {
        throw DimensionError("kv cache: chunk has " + std::to_string(k_chunk.dim(0)) + " heads of dim " +
                             std::to_string(k_chunk.dim(2)) + ", cache expects " +
                             std::to_string(keys_.size()) + " of dim " + std::to_string(d_));
    }
    for (std::size_t h = 0; h < keys_.size(); ++h) {
        const auto kd = k_chunk.head(h).data;
        const auto vd = v_chunk.head(h).data;
        keys_[h].insert(keys_[h].end(), kd.begin(), kd.end());
        values_[h].insert(values_[h].end(), vd.begin(), vd.end());
    }
    length_ += k_chunk.dim(1);
}

MatrixView LayerKVCache::keys(std::size_t head) const
{
    return {keys_.at(head), length_, d_};
}

MatrixView LayerKVCache::values(std::size_t head) const
{
    return {values_.at(head), length_, d_};
}

std::vector<MatrixView> LayerKVCache::key_views() const
{
    std::vector<MatrixView> out;
    out.reserve(keys_.size());
    for (std::size_t h = 0; h < keys_.size(); ++h) {
        out.push_back(keys(h));
    }
    return out;
}

namespace {

Tensor stack(const std::vector<std::vector<float>>& heads, std::size_t length, std::size_t d)
{
    if (length == 0) {
        throw DegenerateError("kv cache: cannot materialize an empty cache");
    }
    std::vector<float> data;
    data.reserve(heads.size() * length * d);
    for (const auto& h : heads) {
        data.insert(data.end(), h.begin(), h.end());
    }
    return Tensor({heads.size(), length, d}, std::move(data));
}

} // namespace

Tensor LayerKVCache::keys_tensor() const
{
    return stack(keys_, length_, d_);
}

Tensor LayerKVCache::values_tensor() const
{
    return stack(values_, length_, d_);
}

KVCache::KVCache(std::size_t layers, std::size_t n_kv, std::size_t d) : layers_(layers, LayerKVCache(n_kv, d)) {}

} // namespace quoka
