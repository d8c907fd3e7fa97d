#include "quoka/attention.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "quoka/linalg.hpp"

namespace quoka {

namespace {

constexpr std::size_t kQueryBlock = 64;

std::string shape_str(const Shape& s)
{
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        out += (i ? "x" : "") + std::to_string(s[i]);
    }
    return out + "]";
}

void require_heads(const Tensor& t, std::size_t heads, std::size_t d, const char* what)
{
    if (t.rank() != 3 || t.dim(0) != heads || t.dim(2) != d) {
        throw DimensionError(std::string(what) + ": expected [" + std::to_string(heads) + " x t x " +
                             std::to_string(d) + "], got " + shape_str(t.shape()));
    }
}

} // namespace

void HeadLayout::validate() const
{
    if (n_q == 0 || n_kv == 0 || d == 0) {
        throw DimensionError("head layout: counts and head dim must be positive");
    }
    if (n_q % n_kv != 0) {
        throw DimensionError("head layout: n_q=" + std::to_string(n_q) + " is not a multiple of n_kv=" +
                             std::to_string(n_kv));
    }
}

std::size_t group_of(std::size_t query_head, const HeadLayout& layout)
{
    layout.validate();
    if (query_head >= layout.n_q) {
        throw BoundsError("group_of: query head " + std::to_string(query_head) + " >= n_q=" +
                          std::to_string(layout.n_q));
    }
    return query_head / layout.group_size();
}

void AttentionBatch::validate() const
{
    layout.validate();
    require_heads(q, layout.n_q, layout.d, "attention Q");
    require_heads(k, layout.n_kv, layout.d, "attention K");
    if (v.shape() != k.shape()) {
        throw DimensionError("attention: V shape " + shape_str(v.shape()) + " != K shape " + shape_str(k.shape()));
    }
    if (k.dim(1) < causal_offset) {
        throw DimensionError("attention: t_k=" + std::to_string(k.dim(1)) + " < causal_offset=" +
                             std::to_string(causal_offset));
    }
}

void attend_head(MatrixView q, MatrixView k, MatrixView v, std::size_t causal_offset, std::span<float> out)
{
    const std::size_t d = q.cols;
    if (k.cols != d || v.cols != d || v.rows != k.rows) {
        throw DimensionError("attend_head: Q/K/V widths or K/V lengths disagree");
    }
    if (out.size() != q.rows * d) {
        throw DimensionError("attend_head: output buffer has wrong size");
    }
    if (k.rows == 0) {
        throw DegenerateError("attend_head: no keys");
    }
    const float scale = 1.0f / std::sqrt(static_cast<float>(d));
    std::vector<float> scores;
    for (std::size_t i0 = 0; i0 < q.rows; i0 += kQueryBlock) {
        const std::size_t rows = std::min(kQueryBlock, q.rows - i0);
        const std::size_t limit = std::min(k.rows, causal_offset + i0 + rows);
        scores.resize(rows * limit);
        matmul_into(MatrixView(q.data.subspan(i0 * d, rows * d), rows, d),
                    MatrixView(k.data.first(limit * d), limit, d), scores);
        for (std::size_t r = 0; r < rows; ++r) {
            const std::span<float> row(scores.data() + r * limit, limit);
            const std::size_t valid = std::min(limit, causal_offset + i0 + r + 1);
            for (std::size_t j = 0; j < valid; ++j) {
                row[j] *= scale;
            }
            softmax_prefix_inplace(row, valid);
            float* o = out.data() + (i0 + r) * d;
            std::fill(o, o + d, 0.0f);
            for (std::size_t j = 0; j < valid; ++j) {
                const float p = row[j];
                const float* vr = v.data.data() + j * d;
                for (std::size_t c = 0; c < d; ++c) {
                    o[c] += p * vr[c];
                }
            }
        }
    }
}

Tensor dense_attention(const AttentionBatch& batch)
{
    batch.validate();
    const HeadLayout& L = batch.layout;
    const std::size_t t_q = batch.q.dim(1);
    Tensor out({L.n_q, t_q, L.d});
    for (std::size_t h = 0; h < L.n_q; ++h) {
        const std::size_t kv = h / L.group_size();
        attend_head(batch.q.head(h), batch.k.head(kv), batch.v.head(kv), batch.causal_offset, out.head_data(h));
    }
    return out;
}

Tensor attention_weights(const AttentionBatch& batch)
{
    batch.validate();
    const HeadLayout& L = batch.layout;
    const std::size_t t_q = batch.q.dim(1);
    const std::size_t t_k = batch.k.dim(1);
    const float scale = 1.0f / std::sqrt(static_cast<float>(L.d));
    Tensor out({L.n_q, t_q, t_k});
    for (std::size_t h = 0; h < L.n_q; ++h) {
        const std::size_t kv = h / L.group_size();
        auto dst = out.head_data(h);
        matmul_into(batch.q.head(h), batch.k.head(kv), dst);
        for (std::size_t i = 0; i < t_q; ++i) {
            const std::span<float> row = dst.subspan(i * t_k, t_k);
            const std::size_t valid = std::min(t_k, batch.causal_offset + i + 1);
            for (std::size_t j = 0; j < valid; ++j) {
                row[j] *= scale;
            }
            softmax_prefix_inplace(row, valid);
        }
    }
    return out;
}

Tensor slice_positions(const Tensor& x, std::size_t start, std::size_t len)
{
    if (x.rank() != 3) {
        throw DimensionError("slice_positions: expected a rank-3 tensor");
    }
    if (len == 0 || start + len > x.dim(1)) {
        throw BoundsError("slice_positions: [" + std::to_string(start) + ", " + std::to_string(start + len) +
                          ") outside length " + std::to_string(x.dim(1)));
    }
    const std::size_t heads = x.dim(0);
    const std::size_t d = x.dim(2);
    std::vector<float> data;
    data.reserve(heads * len * d);
    for (std::size_t h = 0; h < heads; ++h) {
        const auto src = x.head(h).data.subspan(start * d, len * d);
        data.insert(data.end(), src.begin(), src.end());
    }
    return Tensor({heads, len, d}, std::move(data));
}

Tensor attend_chunk(const Tensor& q_chunk, const Tensor& k_chunk, const Tensor& v_chunk,
                    const LayerKVCache& cache, const Selection* selection, const HeadLayout& layout)
{
    layout.validate();
    require_heads(q_chunk, layout.n_q, layout.d, "chunk Q");
    require_heads(k_chunk, layout.n_kv, layout.d, "chunk K");
    if (v_chunk.shape() != k_chunk.shape() || k_chunk.dim(1) != q_chunk.dim(1)) {
        throw DimensionError("chunk: Q/K/V chunk lengths disagree");
    }
    if (cache.length() > 0 && (cache.n_kv() != layout.n_kv || cache.dim() != layout.d)) {
        throw DimensionError("chunk: cache layout does not match head layout");
    }
    if (selection != nullptr) {
        if (selection->indices.size() != layout.n_kv) {
            throw DimensionError("chunk: selection has " + std::to_string(selection->indices.size()) +
                                 " heads, layout has " + std::to_string(layout.n_kv));
        }
        selection->validate(cache.length());
    }

    const std::size_t t = q_chunk.dim(1);
    const std::size_t d = layout.d;
    Tensor out({layout.n_q, t, d});
    std::vector<float> keys;
    std::vector<float> values;
    for (std::size_t kv = 0; kv < layout.n_kv; ++kv) {
        std::size_t prefix = 0;
        if (cache.length() > 0) {
            const MatrixView ck = cache.keys(kv);
            const MatrixView cv = cache.values(kv);
            if (selection == nullptr) {
                prefix = cache.length();
                keys.assign(ck.data.begin(), ck.data.end());
                values.assign(cv.data.begin(), cv.data.end());
            } else {
                const auto& idx = selection->indices[kv];
                prefix = idx.size();
                keys.resize(prefix * d);
                values.resize(prefix * d);
                gather_rows_into(ck, idx, keys);
                gather_rows_into(cv, idx, values);
            }
        } else {
            keys.clear();
            values.clear();
        }
        const auto kc = k_chunk.head(kv).data;
        const auto vc = v_chunk.head(kv).data;
        keys.insert(keys.end(), kc.begin(), kc.end());
        values.insert(values.end(), vc.begin(), vc.end());
        const MatrixView kview(keys, prefix + t, d);
        const MatrixView vview(values, prefix + t, d);
        for (std::size_t g = 0; g < layout.group_size(); ++g) {
            const std::size_t h = kv * layout.group_size() + g;
            attend_head(q_chunk.head(h), kview, vview, prefix, out.head_data(h));
        }
    }
    return out;
}

ChunkedResult chunked_attention(const Tensor& q_all, const Tensor& k_all, const Tensor& v_all,
                                const HeadLayout& layout, std::size_t chunk_size, const SelectionHook& hook)
{
    layout.validate();
    if (chunk_size == 0) {
        throw ValidationError("chunked_attention: chunk size must be at least 1");
    }
    require_heads(q_all, layout.n_q, layout.d, "chunked Q");
    require_heads(k_all, layout.n_kv, layout.d, "chunked K");
    if (v_all.shape() != k_all.shape() || k_all.dim(1) != q_all.dim(1)) {
        throw DimensionError("chunked_attention: Q/K/V sequence lengths disagree");
    }
    const std::size_t T = q_all.dim(1);
    const std::size_t d = layout.d;

    ChunkedResult result{Tensor({layout.n_q, T, d}), LayerKVCache(layout.n_kv, d), {}};
    for (std::size_t start = 0; start < T; start += chunk_size) {
        const std::size_t len = std::min(chunk_size, T - start);
        const Tensor q = slice_positions(q_all, start, len);
        const Tensor k = slice_positions(k_all, start, len);
        const Tensor v = slice_positions(v_all, start, len);

        Tensor out;
        if (hook && result.cache.length() > 0) {
            const Selection sel = hook(q, result.cache);
            out = attend_chunk(q, k, v, result.cache, &sel, layout);
            result.selected.push_back(sel.budget_used);
        } else {
            out = attend_chunk(q, k, v, result.cache, nullptr, layout);
            result.selected.push_back(result.cache.length());
        }
        for (std::size_t h = 0; h < layout.n_q; ++h) {
            const auto src = out.head(h).data;
            std::copy(src.begin(), src.end(), result.output.head_data(h).begin() +
                                                  static_cast<std::ptrdiff_t>(start * d));
        }
        result.cache.append(k, v);
    }
    return result;
}

} // namespace quoka
