#pragma once

#include <concepts>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace lanecast {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array with an immutable, shareable value buffer.
///
/// Every extent is positive and every value finite; both are checked on
/// construction. Copies share storage, so tensors are cheap to pass around
/// and safe to read from several threads.
template <std::floating_point T>
class BasicTensor {
public:
    using value_type = T;

    BasicTensor();
    BasicTensor(Shape shape, std::vector<T> values);

    static BasicTensor zeros(Shape shape);
    static BasicTensor full(Shape shape, T value);
    static BasicTensor scalar(T value);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return values_->size(); }
    std::span<const T> values() const noexcept { return *values_; }

    T operator[](std::size_t i) const { return (*values_)[i]; }
    /// Element (r, c) of a rank-2 tensor.
    T at(std::size_t r, std::size_t c) const { return (*values_)[r * shape_[1] + c]; }

    /// Product of all extents but the last.
    std::size_t rows() const noexcept;
    /// Last extent.
    std::size_t cols() const noexcept { return shape_.back(); }

    BasicTensor reshaped(Shape shape) const;

    template <std::floating_point U>
    BasicTensor<U> cast() const {
        std::vector<U> out(values_->begin(), values_->end());
        return BasicTensor<U>(shape_, std::move(out));
    }

    /// Bitwise equality of shape and values.
    bool operator==(const BasicTensor& other) const;

private:
    Shape shape_;
    std::shared_ptr<const std::vector<T>> values_;
};

using Tensor = BasicTensor<double>;
using TensorF = BasicTensor<float>;

extern template class BasicTensor<float>;
extern template class BasicTensor<double>;

} // namespace lanecast
