#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "quoka/attention.hpp"
#include "quoka/random.hpp"
#include "quoka/tensor.hpp"

namespace testing {

inline quoka::Tensor random_tensor(quoka::Rng& rng, quoka::Shape shape, float scale = 1.0f)
{
    const std::size_t n = quoka::shape_product(shape);
    return quoka::Tensor(std::move(shape), quoka::gaussian_vector(rng, n, scale));
}

inline std::size_t pick(quoka::Rng& rng, std::size_t lo, std::size_t hi)
{
    return lo + static_cast<std::size_t>(quoka::uniform_below(rng, hi - lo + 1));
}

template <typename T>
const T& pick_from(quoka::Rng& rng, const std::vector<T>& xs)
{
    return xs[static_cast<std::size_t>(quoka::uniform_below(rng, xs.size()))];
}

inline double unit_uniform(quoka::Rng& rng)
{
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline quoka::HeadLayout random_layout(quoka::Rng& rng, std::size_t max_d = 16)
{
    const std::size_t n_kv = pick_from(rng, std::vector<std::size_t>{1, 2, 4});
    const std::size_t g = pick_from(rng, std::vector<std::size_t>{1, 2, 4});
    return {n_kv * g, n_kv, pick(rng, 1, max_d)};
}

inline double max_abs_diff(const std::vector<double>& expected, const quoka::Tensor& actual)
{
    double worst = 0.0;
    for (std::size_t i = 0; i < expected.size(); ++i) {
        worst = std::max(worst, std::abs(expected[i] - static_cast<double>(actual.data()[i])));
    }
    return worst;
}

inline double max_abs_diff(const quoka::Tensor& a, const quoka::Tensor& b)
{
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, std::abs(static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i])));
    }
    return worst;
}

inline double row_norm(std::span<const float> row)
{
    double s = 0.0;
    for (float x : row) {
        s += static_cast<double>(x) * x;
    }
    return std::sqrt(s);
}

} // namespace testing
