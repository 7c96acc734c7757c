#include "muse/tensor.hpp"

#include <cmath>
#include <sstream>

#include "muse/errors.hpp"

namespace muse {

std::size_t shape_size(const Shape& shape) noexcept {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
    for (auto d : shape_)
        if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_to_string(shape_));
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    for (auto d : shape_)
        if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_to_string(shape_));
    if (data_.size() != shape_size(shape_))
        throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_to_string(shape_));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
    if (rows.size() == 0) throw ShapeError("matrix needs at least one row");
    const std::size_t cols = rows.begin()->size();
    std::vector<double> data;
    data.reserve(rows.size() * cols);
    for (const auto& r : rows) {
        if (r.size() != cols) throw ShapeError("ragged matrix rows");
        data.insert(data.end(), r.begin(), r.end());
    }
    return Tensor({rows.size(), cols}, std::move(data));
}

Tensor Tensor::row(std::span<const double> values) {
    return Tensor({1, values.size()}, std::vector<double>(values.begin(), values.end()));
}

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= shape_.size())
        throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_to_string(shape_));
    return shape_[axis];
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_size(shape) != data_.size())
        throw ShapeError("cannot reshape " + shape_to_string(shape_) + " to " + shape_to_string(shape));
    return Tensor(std::move(shape), data_);
}

Tensor Tensor::slice_rows(std::size_t begin, std::size_t end) const {
    if (rank() != 2 || begin >= end || end > shape_[0])
        throw ShapeError("bad row slice of " + shape_to_string(shape_));
    const std::size_t c = shape_[1];
    return Tensor({end - begin, c}, std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(begin * c),
                                                        data_.begin() + static_cast<std::ptrdiff_t>(end * c)));
}

Tensor Tensor::gather_rows(std::span<const std::size_t> indices) const {
    if (rank() != 2 || indices.empty()) throw ShapeError("gather_rows needs a rank-2 tensor and indices");
    const std::size_t c = shape_[1];
    std::vector<double> out;
    out.reserve(indices.size() * c);
    for (auto i : indices) {
        if (i >= shape_[0]) throw ShapeError("gather index out of range");
        out.insert(out.end(), data_.begin() + static_cast<std::ptrdiff_t>(i * c),
                   data_.begin() + static_cast<std::ptrdiff_t>((i + 1) * c));
    }
    return Tensor({indices.size(), c}, std::move(out));
}

bool Tensor::all_finite() const noexcept {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace muse
