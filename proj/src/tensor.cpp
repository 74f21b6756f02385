#include "lanecast/tensor.hpp"

#include "lanecast/errors.hpp"

#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>

namespace lanecast {

std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

template <std::floating_point T>
BasicTensor<T>::BasicTensor() : BasicTensor(Shape{1}, std::vector<T>{T(0)}) {}

template <std::floating_point T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)) {
    if (shape_.empty()) throw ShapeError("tensor shape must have at least one extent");
    for (std::size_t e : shape_) {
        if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_string(shape_));
    }
    if (values.size() != shape_size(shape_)) {
        throw ShapeError("tensor of shape " + shape_string(shape_) + " given " +
                         std::to_string(values.size()) + " values");
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) {
            throw NonFiniteError("non-finite tensor value at flat index " + std::to_string(i));
        }
    }
    values_ = std::make_shared<const std::vector<T>>(std::move(values));
}

template <std::floating_point T>
BasicTensor<T> BasicTensor<T>::zeros(Shape shape) {
    return full(std::move(shape), T(0));
}

template <std::floating_point T>
BasicTensor<T> BasicTensor<T>::full(Shape shape, T value) {
    std::vector<T> v(shape_size(shape), value);
    return BasicTensor(std::move(shape), std::move(v));
}

template <std::floating_point T>
BasicTensor<T> BasicTensor<T>::scalar(T value) {
    return BasicTensor(Shape{1}, std::vector<T>{value});
}

template <std::floating_point T>
std::size_t BasicTensor<T>::rows() const noexcept {
    return values_->size() / shape_.back();
}

template <std::floating_point T>
BasicTensor<T> BasicTensor<T>::reshaped(Shape shape) const {
    if (shape_size(shape) != size()) {
        throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    BasicTensor out = *this;
    out.shape_ = std::move(shape);
    return out;
}

template <std::floating_point T>
bool BasicTensor<T>::operator==(const BasicTensor& other) const {
    if (shape_ != other.shape_) return false;
    if (values_ == other.values_) return true;
    return std::memcmp(values_->data(), other.values_->data(), size() * sizeof(T)) == 0;
}

template class BasicTensor<float>;
template class BasicTensor<double>;

} // namespace lanecast
