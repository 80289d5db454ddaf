#include "ssae/nn/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace ssae::nn {

Adam::Adam(std::vector<Param<float>*> params, AdamOptions opts)
    : params_(std::move(params)), opts_(opts) {
    if (opts_.lr < 0.0) throw std::invalid_argument("Adam learning rate must be non-negative");
    for (auto* p : params_) {
        m_.emplace_back(p->value.shape());
        v_.emplace_back(p->value.shape());
    }
}

void Adam::zero_grad() { nn::zero_grad(params_); }

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
    const float b1 = static_cast<float>(opts_.beta1);
    const float b2 = static_cast<float>(opts_.beta2);
    const float step = static_cast<float>(opts_.lr / bc1);
    const float inv_bc2_sqrt = static_cast<float>(1.0 / std::sqrt(bc2));
    const float eps = static_cast<float>(opts_.eps);
    for (std::size_t k = 0; k < params_.size(); ++k) {
        float* w = params_[k]->value.data();
        const float* g = params_[k]->grad.data();
        float* m = m_[k].data();
        float* v = v_[k].data();
        const std::size_t n = params_[k]->value.size();
        for (std::size_t i = 0; i < n; ++i) {
            m[i] = b1 * m[i] + (1.0f - b1) * g[i];
            v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
            const float denom = std::sqrt(v[i]) * inv_bc2_sqrt + eps;
            w[i] -= step * m[i] / denom;
        }
    }
}

template <typename T>
double softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels,
                             Tensor<T>* grad) {
    const Shape s = logits.shape();
    const int classes = static_cast<int>(s.per_item());
    if (static_cast<int>(labels.size()) != s.n)
        throw ShapeError("cross entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(s.n) + " rows");
    if (grad) *grad = Tensor<T>(s);
    double total = 0.0;
    std::vector<double> p(classes);
    for (int n = 0; n < s.n; ++n) {
        const T* z = logits.item(n);
        const int y = labels[n];
        if (y < 0 || y >= classes)
            throw std::out_of_range("label " + std::to_string(y) + " outside [0, " +
                                    std::to_string(classes) + ")");
        double mx = z[0];
        for (int k = 1; k < classes; ++k) mx = std::max(mx, static_cast<double>(z[k]));
        double sum = 0.0;
        for (int k = 0; k < classes; ++k) {
            p[k] = std::exp(static_cast<double>(z[k]) - mx);
            sum += p[k];
        }
        total += -(static_cast<double>(z[y]) - mx - std::log(sum));
        if (grad) {
            T* g = grad->item(n);
            for (int k = 0; k < classes; ++k)
                g[k] = static_cast<T>((p[k] / sum - (k == y ? 1.0 : 0.0)) / s.n);
        }
    }
    return total / s.n;
}

template <typename T>
std::vector<int> argmax_rows(const Tensor<T>& logits) {
    const Shape s = logits.shape();
    const int classes = static_cast<int>(s.per_item());
    std::vector<int> out(s.n);
    for (int n = 0; n < s.n; ++n) {
        const T* z = logits.item(n);
        int best = 0;
        for (int k = 1; k < classes; ++k)
            if (z[k] > z[best]) best = k;
        out[n] = best;
    }
    return out;
}

template double softmax_cross_entropy<float>(const TensorF&, const std::vector<int>&, TensorF*);
template double softmax_cross_entropy<double>(const TensorD&, const std::vector<int>&, TensorD*);
template std::vector<int> argmax_rows<float>(const TensorF&);
template std::vector<int> argmax_rows<double>(const TensorD&);

}  // namespace ssae::nn
