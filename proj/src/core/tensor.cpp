#include "quoka/tensor.hpp"

#include <cmath>
#include <string>

namespace quoka {

std::size_t shape_product(const Shape& shape)
{
    std::size_t n = 1;
    for (std::size_t d : shape) {
        n *= d;
    }
    return n;
}

MatrixView::MatrixView(std::span<const float> d, std::size_t r, std::size_t c)
    : data(d), rows(r), cols(c)
{
    if (d.size() != r * c) {
        throw DimensionError("matrix view: span length " + std::to_string(d.size()) + " != " +
                             std::to_string(r) + "x" + std::to_string(c));
    }
}

namespace {

void check_shape(const Shape& shape)
{
    if (shape.empty()) {
        throw DimensionError("tensor: rank must be at least 1");
    }
    for (std::size_t d : shape) {
        if (d == 0) {
            throw DimensionError("tensor: dimensions must be positive");
        }
    }
}

} // namespace

void require_finite(std::span<const float> values, const char* what)
{
    for (float v : values) {
        if (!std::isfinite(v)) {
            throw NonFiniteError(std::string(what) + ": non-finite value");
        }
    }
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape))
{
    check_shape(shape_);
    data_.assign(shape_product(shape_), 0.0f);
}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data))
{
    check_shape(shape_);
    if (data_.size() != shape_product(shape_)) {
        throw DimensionError("tensor: data length " + std::to_string(data_.size()) +
                             " does not match shape product " + std::to_string(shape_product(shape_)));
    }
    require_finite(data_, "tensor");
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<float>> rows)
{
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<float> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) {
            throw DimensionError("tensor: ragged rows");
        }
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(data));
}

std::size_t Tensor::dim(std::size_t axis) const
{
    if (axis >= shape_.size()) {
        throw BoundsError("tensor: axis " + std::to_string(axis) + " out of range");
    }
    return shape_[axis];
}

namespace {

void check_index(const Shape& shape, std::initializer_list<std::size_t> index)
{
    if (shape.size() != index.size()) {
        throw DimensionError("tensor: index rank " + std::to_string(index.size()) + " != rank " +
                             std::to_string(shape.size()));
    }
    std::size_t axis = 0;
    for (std::size_t i : index) {
        if (i >= shape[axis]) {
            throw BoundsError("tensor: index " + std::to_string(i) + " out of range on axis " + std::to_string(axis));
        }
        ++axis;
    }
}

} // namespace

float& Tensor::at(std::size_t i, std::size_t j)
{
    check_index(shape_, {i, j});
    return data_[i * shape_[1] + j];
}

float Tensor::at(std::size_t i, std::size_t j) const
{
    check_index(shape_, {i, j});
    return data_[i * shape_[1] + j];
}

float& Tensor::at(std::size_t h, std::size_t i, std::size_t j)
{
    check_index(shape_, {h, i, j});
    return data_[(h * shape_[1] + i) * shape_[2] + j];
}

float Tensor::at(std::size_t h, std::size_t i, std::size_t j) const
{
    check_index(shape_, {h, i, j});
    return data_[(h * shape_[1] + i) * shape_[2] + j];
}

MatrixView Tensor::as_matrix() const
{
    if (rank() != 2) {
        throw DimensionError("tensor: expected rank 2, got rank " + std::to_string(rank()));
    }
    return {data_, shape_[0], shape_[1]};
}

MatrixView Tensor::head(std::size_t h) const
{
    if (rank() != 3) {
        throw DimensionError("tensor: expected rank 3, got rank " + std::to_string(rank()));
    }
    if (h >= shape_[0]) {
        throw BoundsError("tensor: head " + std::to_string(h) + " out of range");
    }
    const std::size_t stride = shape_[1] * shape_[2];
    return {std::span<const float>(data_).subspan(h * stride, stride), shape_[1], shape_[2]};
}

std::span<float> Tensor::head_data(std::size_t h)
{
    if (rank() != 3 || h >= shape_[0]) {
        throw BoundsError("tensor: head " + std::to_string(h) + " out of range");
    }
    const std::size_t stride = shape_[1] * shape_[2];
    return std::span<float>(data_).subspan(h * stride, stride);
}

} // namespace quoka
