#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <new>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ser {

using Shape = std::vector<std::size_t>;

// Fixed 64-byte alignment keeps vectorized reductions on the same summation
// order regardless of where the allocator places a buffer.
template <typename T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t kAlignment{64};

    AlignedAllocator() = default;
    template <typename U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept
    {
    }

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlignment); }

    template <typename U>
    bool operator==(const AlignedAllocator<U>&) const noexcept
    {
        return true;
    }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

inline std::size_t shape_size(const Shape& shape)
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

std::string shape_to_string(const Shape& shape);

// Dense row-major n-dimensional array. Every extent is >= 1 and the flat
// buffer always holds exactly shape_size(shape) elements.
template <typename T>
class BasicTensor {
public:
    using value_type = T;

    BasicTensor() = default;

    explicit BasicTensor(Shape shape, T fill = T{0}) : shape_(std::move(shape))
    {
        check_shape();
        data_.assign(shape_size(shape_), fill);
    }

    BasicTensor(Shape shape, AlignedVector<T> data) : shape_(std::move(shape)), data_(std::move(data))
    {
        check_length();
    }

    BasicTensor(Shape shape, const std::vector<T>& data)
        : shape_(std::move(shape)), data_(data.begin(), data.end())
    {
        check_length();
    }

    static BasicTensor vector(std::initializer_list<T> values)
    {
        return BasicTensor({values.size()}, AlignedVector<T>(values));
    }


    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::span<T> span() { return data_; }
    std::span<const T> span() const { return data_; }
    AlignedVector<T>& values() { return data_; }
    const AlignedVector<T>& values() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    T& operator()(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    const T& operator()(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

    T& operator()(std::size_t i, std::size_t j, std::size_t k)
    {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    const T& operator()(std::size_t i, std::size_t j, std::size_t k) const
    {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }

    std::span<T> row(std::size_t i)
    {
        const std::size_t width = size() / shape_[0];
        return std::span<T>(data_).subspan(i * width, width);
    }
    std::span<const T> row(std::size_t i) const
    {
        const std::size_t width = size() / shape_[0];
        return std::span<const T>(data_).subspan(i * width, width);
    }

    BasicTensor reshaped(Shape shape) const
    {
        return BasicTensor(std::move(shape), data_);
    }

    void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

    template <typename U>
    BasicTensor<U> cast() const
    {
        AlignedVector<U> out(data_.begin(), data_.end());
        return BasicTensor<U>(shape_, std::move(out));
    }

    bool operator==(const BasicTensor& other) const = default;

private:
    void check_length() const
    {
        check_shape();
        if (data_.size() != shape_size(shape_)) {
            throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) +
                                        " does not match shape " + shape_to_string(shape_));
        }
    }

    void check_shape() const
    {
        if (shape_.empty()) {
            throw std::invalid_argument("tensor shape must have at least one extent");
        }
        for (std::size_t extent : shape_) {
            if (extent == 0) {
                throw std::invalid_argument("tensor extents must be >= 1, got " + shape_to_string(shape_));
            }
        }
    }

    Shape shape_;
    AlignedVector<T> data_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

} // namespace ser
