#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "quoka/errors.hpp"

namespace quoka {

using Shape = std::vector<std::size_t>;

std::size_t shape_product(const Shape& shape);

// Non-owning row-major matrix view. Rows are contiguous with stride `cols`.
struct MatrixView {
    std::span<const float> data;
    std::size_t rows = 0;
    std::size_t cols = 0;

    MatrixView() = default;
    MatrixView(std::span<const float> d, std::size_t r, std::size_t c);

    std::span<const float> row(std::size_t i) const { return data.subspan(i * cols, cols); }
    float operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

// Dense row-major float32 array with an explicit shape.
//
// Every dimension is positive and every element is finite; constructors
// enforce both, so any Tensor in flight satisfies them.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape);
    Tensor(Shape shape, std::vector<float> data);

    // Convenience for literals in tests: a rank-2 tensor from rows.
    static Tensor matrix(std::initializer_list<std::initializer_list<float>> rows);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::span<const float> data() const { return data_; }
    std::span<float> data() { return data_; }
    const std::vector<float>& values() const { return data_; }

    float& at(std::size_t i, std::size_t j);
    float at(std::size_t i, std::size_t j) const;
    float& at(std::size_t h, std::size_t i, std::size_t j);
    float at(std::size_t h, std::size_t i, std::size_t j) const;

    // Rank-2 tensor as a matrix view.
    MatrixView as_matrix() const;
    // Slice h of a rank-3 tensor [H x R x C] as an R x C view.
    MatrixView head(std::size_t h) const;
    std::span<float> head_data(std::size_t h);

    bool operator==(const Tensor& other) const = default;

private:
    Shape shape_;
    std::vector<float> data_;
};

// Throws NonFiniteError when any element is NaN or infinite.
void require_finite(std::span<const float> values, const char* what);

} // namespace quoka
