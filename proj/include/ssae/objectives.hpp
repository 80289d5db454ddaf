#pragma once

#include <cmath>
#include <string>

#include "ssae/tensor.hpp"

namespace ssae {

/// Target-model embeddings, one row per image (N x D stored as N x D x 1 x 1).
template <typename T>
class FeatureBatch {
public:
    FeatureBatch() = default;
    explicit FeatureBatch(Tensor<T> values) : values_(std::move(values)) {
        if (values_.shape().n > 0 && values_.shape().per_item() < 1)
            throw ShapeError("feature batch needs at least one dimension");
        if (!values_.all_finite()) throw std::invalid_argument("feature batch contains non-finite values");
    }
    FeatureBatch(int rows, int dim, std::vector<T> v)
        : FeatureBatch(Tensor<T>(Shape{rows, dim, 1, 1}, std::move(v))) {}

    int rows() const { return values_.shape().n; }
    int dim() const { return static_cast<int>(values_.shape().per_item()); }
    const T* row(int i) const { return values_.item(i); }
    const Tensor<T>& values() const { return values_; }

private:
    Tensor<T> values_;
};

/// Per-step objective values. `total` is always angular + alpha * (norm + frobenius).
struct LossBreakdown {
    double angular = 0.0;
    double norm = 0.0;
    double frobenius = 0.0;
    double total = 0.0;
    double alpha = 0.0;

    /// Same values divided by the batch size, for logging across batches.
    LossBreakdown per_sample(int batch) const {
        const double k = 1.0 / batch;
        return {angular * k, norm * k, frobenius * k, total * k, alpha};
    }
};

/// Gradients of a two-argument feature loss.
template <typename T>
struct FeatureGrads {
    Tensor<T> d_orig;
    Tensor<T> d_pert;
};

namespace detail {

inline void require_pair(const Shape& a, const Shape& b, const char* what) {
    if (!(a == b))
        throw ShapeError(std::string(what) + ": feature shapes differ, " + a.str() + " vs " + b.str());
}

template <typename T>
T dot(const T* a, const T* b, int d) {
    T s = T(0);
    for (int k = 0; k < d; ++k) s += a[k] * b[k];
    return s;
}

}  // namespace detail

/// Sum over rows of 1 + cos(f_i, g_i), the cosine denominator guarded by
/// max(|f||g|, eps). Each term lies in [0, 2].
template <typename T>
T angular_loss(const FeatureBatch<T>& f, const FeatureBatch<T>& g, T eps = T(1e-12)) {
    detail::require_pair(f.values().shape(), g.values().shape(), "angular_loss");
    const int d = f.dim();
    T total = T(0);
    for (int i = 0; i < f.rows(); ++i) {
        const T* a = f.row(i);
        const T* b = g.row(i);
        const T denom = std::max(std::sqrt(detail::dot(a, a, d)) * std::sqrt(detail::dot(b, b, d)), eps);
        total += T(1) + detail::dot(a, b, d) / denom;
    }
    return total;
}

/// Analytic gradient of angular_loss. When the guard is active the
/// denominator is treated as the constant eps.
template <typename T>
FeatureGrads<T> angular_loss_grad(const FeatureBatch<T>& f, const FeatureBatch<T>& g,
                                  T eps = T(1e-12)) {
    detail::require_pair(f.values().shape(), g.values().shape(), "angular_loss_grad");
    const int d = f.dim();
    FeatureGrads<T> out{Tensor<T>(f.values().shape()), Tensor<T>(g.values().shape())};
    for (int i = 0; i < f.rows(); ++i) {
        const T* a = f.row(i);
        const T* b = g.row(i);
        T* da = out.d_orig.item(i);
        T* db = out.d_pert.item(i);
        const T na = std::sqrt(detail::dot(a, a, d));
        const T nb = std::sqrt(detail::dot(b, b, d));
        const T ab = detail::dot(a, b, d);
        if (na * nb < eps) {
            for (int k = 0; k < d; ++k) {
                da[k] = b[k] / eps;
                db[k] = a[k] / eps;
            }
            continue;
        }
        const T inv = T(1) / (na * nb);
        const T cos = ab * inv;
        for (int k = 0; k < d; ++k) {
            da[k] = b[k] * inv - cos * a[k] / (na * na);
            db[k] = a[k] * inv - cos * b[k] / (nb * nb);
        }
    }
    return out;
}

/// Sum over rows of (|f_i| - |g_i|)^2.
template <typename T>
T norm_loss(const FeatureBatch<T>& f, const FeatureBatch<T>& g) {
    detail::require_pair(f.values().shape(), g.values().shape(), "norm_loss");
    const int d = f.dim();
    T total = T(0);
    for (int i = 0; i < f.rows(); ++i) {
        const T diff = std::sqrt(detail::dot(f.row(i), f.row(i), d)) -
                       std::sqrt(detail::dot(g.row(i), g.row(i), d));
        total += diff * diff;
    }
    return total;
}

/// Gradient of norm_loss; zero-norm rows contribute a zero subgradient.
template <typename T>
FeatureGrads<T> norm_loss_grad(const FeatureBatch<T>& f, const FeatureBatch<T>& g) {
    detail::require_pair(f.values().shape(), g.values().shape(), "norm_loss_grad");
    const int d = f.dim();
    FeatureGrads<T> out{Tensor<T>(f.values().shape()), Tensor<T>(g.values().shape())};
    for (int i = 0; i < f.rows(); ++i) {
        const T* a = f.row(i);
        const T* b = g.row(i);
        const T na = std::sqrt(detail::dot(a, a, d));
        const T nb = std::sqrt(detail::dot(b, b, d));
        const T diff = na - nb;
        T* da = out.d_orig.item(i);
        T* db = out.d_pert.item(i);
        for (int k = 0; k < d; ++k) {
            da[k] = na > T(0) ? T(2) * diff * a[k] / na : T(0);
            db[k] = nb > T(0) ? -T(2) * diff * b[k] / nb : T(0);
        }
    }
    return out;
}

/// Sum over images of the Frobenius norm of each N x 1 x H x W mask.
template <typename T>
T frobenius_loss(const Tensor<T>& mask) {
    const Shape s = mask.shape();
    const std::size_t per = s.per_item();
    T total = T(0);
    for (int n = 0; n < s.n; ++n) {
        const T* m = mask.item(n);
        T sq = T(0);
        for (std::size_t i = 0; i < per; ++i) {
            if (m[i] < T(0)) throw std::invalid_argument("frobenius_loss: mask values must be non-negative");
            sq += m[i] * m[i];
        }
        total += std::sqrt(sq);
    }
    return total;
}

/// M / |M|_F per image; all-zero masks get a zero subgradient.
template <typename T>
Tensor<T> frobenius_loss_grad(const Tensor<T>& mask) {
    const Shape s = mask.shape();
    const std::size_t per = s.per_item();
    Tensor<T> out(s);
    for (int n = 0; n < s.n; ++n) {
        const T* m = mask.item(n);
        T sq = T(0);
        for (std::size_t i = 0; i < per; ++i) sq += m[i] * m[i];
        if (sq <= T(0)) continue;
        const T inv = T(1) / std::sqrt(sq);
        T* d = out.item(n);
        for (std::size_t i = 0; i < per; ++i) d[i] = m[i] * inv;
    }
    return out;
}

/// angular + alpha * (norm + frobenius).
inline LossBreakdown total_loss(double angular, double norm, double frobenius, double alpha) {
    if (!std::isfinite(angular) || !std::isfinite(norm) || !std::isfinite(frobenius) ||
        !std::isfinite(alpha))
        throw std::invalid_argument("total_loss: non-finite component");
    return {angular, norm, frobenius, angular + alpha * (norm + frobenius), alpha};
}

}  // namespace ssae
