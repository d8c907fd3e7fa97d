#include "quoka/linalg.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>

namespace quoka {

namespace {

constexpr std::size_t kPanel = 24;

std::string dims(std::size_t r, std::size_t c)
{
    return std::to_string(r) + "x" + std::to_string(c);
}

} // namespace

void matmul_into(MatrixView a, MatrixView bt, std::span<float> out)
{
    if (a.cols != bt.cols) {
        throw DimensionError("matmul: inner dimensions differ (" + dims(a.rows, a.cols) + " vs " +
                             dims(bt.rows, bt.cols) + ")");
    }
    const std::size_t m = a.rows;
    const std::size_t n = bt.rows;
    const std::size_t k = a.cols;
    if (out.size() != m * n) {
        throw DimensionError("matmul: output buffer has wrong size");
    }

    // Transposed panel of kPanel rows of bt so that the inner loop runs across
    // output columns. Each output element is still a single left-to-right sum.
    std::vector<float> panel(k * kPanel);
    for (std::size_t j0 = 0; j0 < n; j0 += kPanel) {
        const std::size_t w = std::min(kPanel, n - j0);
        if (w < kPanel) {
            std::fill(panel.begin(), panel.end(), 0.0f);
        }
        for (std::size_t jj = 0; jj < w; ++jj) {
            const float* src = bt.data.data() + (j0 + jj) * k;
            for (std::size_t t = 0; t < k; ++t) {
                panel[t * kPanel + jj] = src[t];
            }
        }
        // Two rows of a share each panel load.
        std::size_t i = 0;
        for (; i + 2 <= m; i += 2) {
            std::array<float, kPanel> acc0{};
            std::array<float, kPanel> acc1{};
            const float* arow0 = a.data.data() + i * k;
            const float* arow1 = arow0 + k;
            for (std::size_t t = 0; t < k; ++t) {
                const float av0 = arow0[t];
                const float av1 = arow1[t];
                const float* p = panel.data() + t * kPanel;
                for (std::size_t jj = 0; jj < kPanel; ++jj) {
                    acc0[jj] += av0 * p[jj];
                    acc1[jj] += av1 * p[jj];
                }
            }
            std::copy_n(acc0.begin(), w, out.begin() + static_cast<std::ptrdiff_t>(i * n + j0));
            std::copy_n(acc1.begin(), w, out.begin() + static_cast<std::ptrdiff_t>((i + 1) * n + j0));
        }
        for (; i < m; ++i) {
            std::array<float, kPanel> acc{};
            const float* arow = a.data.data() + i * k;
            for (std::size_t t = 0; t < k; ++t) {
                const float av = arow[t];
                const float* p = panel.data() + t * kPanel;
                for (std::size_t jj = 0; jj < kPanel; ++jj) {
                    acc[jj] += av * p[jj];
                }
            }
            std::copy_n(acc.begin(), w, out.begin() + static_cast<std::ptrdiff_t>(i * n + j0));
        }
    }
}

Tensor matmul(const Tensor& a, const Tensor& b_transposed)
{
    const MatrixView av = a.as_matrix();
    const MatrixView bv = b_transposed.as_matrix();
    std::vector<float> out(av.rows * bv.rows);
    matmul_into(av, bv, out);
    require_finite(out, "matmul");
    return Tensor({av.rows, bv.rows}, std::move(out));
}

void exp_inplace(std::span<float> values)
{
    // Cephes-style range reduction: x = n ln2 + r, |r| <= ln2/2.
    constexpr float kLog2e = 1.44269504088896341f;
    constexpr float kLn2Hi = 0.693359375f;
    constexpr float kLn2Lo = -2.12194440e-4f;
    constexpr float kRound = 12582912.0f; // 1.5 * 2^23
    float* v = values.data();
    const std::size_t n = values.size();
    for (std::size_t i = 0; i < n; ++i) {
        float x = v[i];
        x = x < -87.0f ? -87.0f : x;
        x = x > 88.0f ? 88.0f : x;
        const float fn = (x * kLog2e + kRound) - kRound;
        float r = x - fn * kLn2Hi;
        r = r - fn * kLn2Lo;
        float p = 1.9875691500e-4f;
        p = p * r + 1.3981999507e-3f;
        p = p * r + 8.3334519073e-3f;
        p = p * r + 4.1665795894e-2f;
        p = p * r + 1.6666665459e-1f;
        p = p * r + 5.0000001201e-1f;
        p = p * (r * r) + r + 1.0f;
        const auto e = static_cast<std::int32_t>(fn);
        const auto scale = std::bit_cast<float>(static_cast<std::uint32_t>(e + 127) << 23);
        v[i] = p * scale;
    }
}

void softmax_prefix_inplace(std::span<float> row, std::size_t valid)
{
    if (valid == 0 || valid > row.size()) {
        throw DegenerateError("softmax: row has no attended entries");
    }
    float mx = row[0];
    for (std::size_t j = 1; j < valid; ++j) {
        mx = row[j] > mx ? row[j] : mx;
    }
    for (std::size_t j = 0; j < valid; ++j) {
        row[j] -= mx;
    }
    exp_inplace(row.first(valid));
    float sum = 0.0f;
    for (std::size_t j = 0; j < valid; ++j) {
        sum += row[j];
    }
    const float inv = 1.0f / sum;
    for (std::size_t j = 0; j < valid; ++j) {
        row[j] *= inv;
    }
    std::fill(row.begin() + static_cast<std::ptrdiff_t>(valid), row.end(), 0.0f);
}

Tensor softmax_rows(const Tensor& scores)
{
    const MatrixView s = scores.as_matrix();
    std::vector<float> out(scores.values());
    for (std::size_t i = 0; i < s.rows; ++i) {
        softmax_prefix_inplace(std::span<float>(out).subspan(i * s.cols, s.cols), s.cols);
    }
    return Tensor(scores.shape(), std::move(out));
}

Tensor softmax_rows(const Tensor& scores, const Tensor& mask)
{
    const MatrixView s = scores.as_matrix();
    const MatrixView m = mask.as_matrix();
    if (m.rows != s.rows || m.cols != s.cols) {
        throw DimensionError("softmax: mask shape " + dims(m.rows, m.cols) + " != scores " +
                             dims(s.rows, s.cols));
    }
    std::vector<float> out(s.rows * s.cols, 0.0f);
    std::vector<float> packed(s.cols);
    std::vector<std::size_t> where(s.cols);
    for (std::size_t i = 0; i < s.rows; ++i) {
        std::size_t live = 0;
        for (std::size_t j = 0; j < s.cols; ++j) {
            const float mv = m(i, j);
            if (mv == kMaskSentinel) {
                continue;
            }
            if (mv != 0.0f) {
                throw ValidationError("softmax: mask entries must be 0 or the sentinel");
            }
            packed[live] = s(i, j);
            where[live] = j;
            ++live;
        }
        if (live == 0) {
            throw DegenerateError("softmax: row " + std::to_string(i) + " is fully masked");
        }
        softmax_prefix_inplace(std::span<float>(packed).first(live), live);
        for (std::size_t t = 0; t < live; ++t) {
            out[i * s.cols + where[t]] = packed[t];
        }
    }
    return Tensor(scores.shape(), std::move(out));
}

void l2_normalize_rows_into(MatrixView x, float eps, std::span<float> out)
{
    if (!(eps > 0.0f)) {
        throw ValidationError("l2_normalize_rows: eps must be positive");
    }
    if (out.size() != x.rows * x.cols) {
        throw DimensionError("l2_normalize_rows: output buffer has wrong size");
    }
    for (std::size_t i = 0; i < x.rows; ++i) {
        const auto row = x.row(i);
        float ss = 0.0f;
        for (float v : row) {
            ss += v * v;
        }
        const float norm = std::max(std::sqrt(ss), eps);
        float* o = out.data() + i * x.cols;
        for (std::size_t j = 0; j < x.cols; ++j) {
            o[j] = row[j] / norm;
        }
    }
}

Tensor l2_normalize_rows(const Tensor& x, float eps)
{
    const MatrixView v = x.as_matrix();
    std::vector<float> out(x.size());
    l2_normalize_rows_into(v, eps, out);
    return Tensor(x.shape(), std::move(out));
}

Tensor cosine_sim(const Tensor& a, const Tensor& b, float eps)
{
    if (a.as_matrix().cols != b.as_matrix().cols) {
        throw DimensionError("cosine_sim: inner dimensions differ");
    }
    return matmul(l2_normalize_rows(a, eps), l2_normalize_rows(b, eps));
}

std::vector<std::size_t> topk_indices(std::span<const float> scores, std::size_t k)
{
    if (scores.empty()) {
        throw DegenerateError("topk_indices: empty input");
    }
    if (k == 0) {
        throw ValidationError("topk_indices: k must be positive");
    }
    require_finite(scores, "topk_indices");
    const std::size_t n = scores.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (k >= n) {
        return idx;
    }
    // Strict total order: larger score first, lower index on ties.
    const auto before = [&](std::size_t a, std::size_t b) {
        return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
    };
    std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), before);
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

void gather_rows_into(MatrixView x, std::span<const std::size_t> indices, std::span<float> out)
{
    if (out.size() != indices.size() * x.cols) {
        throw DimensionError("gather_rows: output buffer has wrong size");
    }
    for (std::size_t j = 0; j < indices.size(); ++j) {
        if (indices[j] >= x.rows) {
            throw BoundsError("gather_rows: index " + std::to_string(indices[j]) + " >= " +
                              std::to_string(x.rows));
        }
        const auto row = x.row(indices[j]);
        std::copy(row.begin(), row.end(), out.begin() + static_cast<std::ptrdiff_t>(j * x.cols));
    }
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> indices)
{
    const MatrixView v = x.as_matrix();
    if (indices.empty()) {
        throw DegenerateError("gather_rows: empty index list");
    }
    std::vector<float> out(indices.size() * v.cols);
    gather_rows_into(v, indices, out);
    return Tensor({indices.size(), v.cols}, std::move(out));
}

Tensor reduce(const Tensor& x, std::size_t axis, ReduceKind kind)
{
    if (axis >= x.rank()) {
        throw BoundsError("reduce: axis " + std::to_string(axis) + " invalid for rank " +
                          std::to_string(x.rank()));
    }
    const Shape& shape = x.shape();
    const std::size_t len = shape[axis];
    if (len == 0) {
        throw DegenerateError("reduce: zero-length axis");
    }
    std::size_t outer = 1;
    for (std::size_t i = 0; i < axis; ++i) {
        outer *= shape[i];
    }
    std::size_t inner = 1;
    for (std::size_t i = axis + 1; i < shape.size(); ++i) {
        inner *= shape[i];
    }
    Shape out_shape;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i != axis) {
            out_shape.push_back(shape[i]);
        }
    }
    if (out_shape.empty()) {
        out_shape.push_back(1);
    }

    const auto in = x.data();
    std::vector<float> out(outer * inner);
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t j = 0; j < inner; ++j) {
            const float* base = in.data() + o * len * inner + j;
            float acc = base[0];
            for (std::size_t a = 1; a < len; ++a) {
                const float v = base[a * inner];
                acc = kind == ReduceKind::max ? (v > acc ? v : acc) : acc + v;
            }
            out[o * inner + j] = kind == ReduceKind::mean ? acc / static_cast<float>(len) : acc;
        }
    }
    return Tensor(std::move(out_shape), std::move(out));
}

} // namespace quoka
