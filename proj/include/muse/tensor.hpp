#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace muse {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape) noexcept;
std::string shape_to_string(const Shape& shape);

/// Dense row-major array of doubles. Rank 0 is a scalar holding one value.
class Tensor {
public:
    Tensor() : Tensor(Shape{}, 0.0) {}
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor scalar(double v) { return Tensor(Shape{}, v); }
    /// 2-D tensor from nested rows; all rows must have equal length.
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
    /// Single-row [1, n] tensor.
    static Tensor row(std::span<const double> values);
    static Tensor zeros(std::size_t rows, std::size_t cols) { return Tensor({rows, cols}, 0.0); }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t size() const noexcept { return data_.size(); }

    /// Rows/cols of a rank-2 tensor.
    std::size_t rows() const { return dim(0); }
    std::size_t cols() const { return dim(1); }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    std::vector<double>& storage() noexcept { return data_; }
    const std::vector<double>& storage() const noexcept { return data_; }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }
    double& at(std::size_t r, std::size_t c) noexcept { return data_[r * shape_[1] + c]; }
    double at(std::size_t r, std::size_t c) const noexcept { return data_[r * shape_[1] + c]; }

    std::span<double> row_span(std::size_t r) { return {data_.data() + r * shape_[1], shape_[1]}; }
    std::span<const double> row_span(std::size_t r) const { return {data_.data() + r * shape_[1], shape_[1]}; }

    /// Same data, new shape of equal size.
    Tensor reshaped(Shape shape) const;
    /// Rows [begin, end) of a rank-2 tensor.
    Tensor slice_rows(std::size_t begin, std::size_t end) const;
    /// Rows gathered by index from a rank-2 tensor.
    Tensor gather_rows(std::span<const std::size_t> indices) const;

    bool all_finite() const noexcept;
    bool operator==(const Tensor& other) const noexcept = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

}  // namespace muse
