#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <new>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ssae {

/// Raised when tensor shapes are inconsistent with an operation.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// 64-byte aligned storage. Vectorized kernels choose their peeling by
/// pointer alignment, so unaligned buffers would make floating-point results
/// depend on where the allocator happened to place them.
template <typename T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t kAlign{64};

    AlignedAllocator() = default;
    template <typename U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

    template <typename U>
    bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

/// NCHW shape. Feature matrices use h == w == 1.
struct Shape {
    int n = 0;
    int c = 0;
    int h = 0;
    int w = 0;

    std::size_t numel() const {
        return static_cast<std::size_t>(n) * c * h * w;
    }
    std::size_t per_item() const { return static_cast<std::size_t>(c) * h * w; }
    std::size_t plane() const { return static_cast<std::size_t>(h) * w; }

    bool operator==(const Shape&) const = default;

    std::string str() const {
        return std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(h) + "x" +
               std::to_string(w);
    }
};

/// Dense contiguous 4-D array in NCHW order.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T(0)) : shape_(shape), data_(shape.numel(), fill) {
        if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0)
            throw ShapeError("negative tensor dimension in " + shape.str());
    }
    Tensor(Shape shape, const std::vector<T>& values) : Tensor(shape, AlignedVector<T>(values.begin(), values.end())) {}
    Tensor(Shape shape, AlignedVector<T> values) : shape_(shape), data_(std::move(values)) {
        if (data_.size() != shape.numel())
            throw ShapeError("tensor of shape " + shape.str() + " needs " +
                             std::to_string(shape.numel()) + " values, got " +
                             std::to_string(data_.size()));
    }

    const Shape& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::span<T> span() { return data_; }
    std::span<const T> span() const { return data_; }
    AlignedVector<T>& vec() { return data_; }
    const AlignedVector<T>& vec() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    T& at(int n, int c, int h, int w) { return data_[offset(n, c, h, w)]; }
    const T& at(int n, int c, int h, int w) const { return data_[offset(n, c, h, w)]; }

    /// Pointer to the start of item `n`.
    T* item(int n) { return data_.data() + static_cast<std::size_t>(n) * shape_.per_item(); }
    const T* item(int n) const {
        return data_.data() + static_cast<std::size_t>(n) * shape_.per_item();
    }

    /// Copies items [first, first + count) into a new tensor.
    Tensor slice(int first, int count) const {
        if (first < 0 || count < 0 || first + count > shape_.n)
            throw ShapeError("slice [" + std::to_string(first) + ", " +
                             std::to_string(first + count) + ") out of range for " + shape_.str());
        Shape s = shape_;
        s.n = count;
        Tensor out(s);
        std::copy_n(item(first), s.numel(), out.data());
        return out;
    }

    Tensor reshaped(Shape s) const {
        if (s.numel() != shape_.numel())
            throw ShapeError("cannot reshape " + shape_.str() + " to " + s.str());
        return Tensor(s, data_);
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    T max_abs() const {
        T m = T(0);
        for (T v : data_) m = std::max(m, std::abs(v));
        return m;
    }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(shape_);
        std::transform(data_.begin(), data_.end(), out.data(),
                       [](T v) { return static_cast<U>(v); });
        return out;
    }

    Tensor& operator+=(const Tensor& o) {
        require_same(o, "+=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }
    Tensor& operator-=(const Tensor& o) {
        require_same(o, "-=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }
    Tensor& operator*=(T s) {
        for (T& v : data_) v *= s;
        return *this;
    }

    friend Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
    friend Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }

    bool operator==(const Tensor&) const = default;

private:
    std::size_t offset(int n, int c, int h, int w) const {
        return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) * shape_.w + w;
    }
    void require_same(const Tensor& o, const char* op) const {
        if (!(o.shape_ == shape_))
            throw ShapeError(std::string("shape mismatch in ") + op + ": " + shape_.str() +
                             " vs " + o.shape_.str());
    }

    Shape shape_{};
    AlignedVector<T> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

/// Concatenates tensors along the batch axis.
template <typename T>
Tensor<T> concat_batch(std::span<const Tensor<T>> parts) {
    if (parts.empty()) return {};
    Shape s = parts.front().shape();
    s.n = 0;
    for (const auto& p : parts) {
        Shape q = p.shape();
        if (q.c != s.c || q.h != s.h || q.w != s.w)
            throw ShapeError("concat_batch: " + q.str() + " incompatible with " + s.str());
        s.n += q.n;
    }
    Tensor<T> out(s);
    std::size_t off = 0;
    for (const auto& p : parts) {
        std::copy(p.vec().begin(), p.vec().end(), out.data() + off);
        off += p.size();
    }
    return out;
}

}  // namespace ssae
