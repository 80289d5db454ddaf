#pragma once

#include <string>
#include <vector>

#include "ssae/nn/layers.hpp"

namespace ssae::nn {

struct AdamOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with bias correction. Moment buffers follow the order of the
/// parameter list given at construction.
class Adam {
public:
    Adam(std::vector<Param<float>*> params, AdamOptions opts);

    void step();
    void zero_grad();

    const AdamOptions& options() const { return opts_; }
    long steps() const { return t_; }
    const std::vector<TensorF>& first_moments() const { return m_; }
    const std::vector<TensorF>& second_moments() const { return v_; }

private:
    std::vector<Param<float>*> params_;
    AdamOptions opts_;
    std::vector<TensorF> m_;
    std::vector<TensorF> v_;
    long t_ = 0;
};

/// Mean softmax cross-entropy over the batch. Writes dL/dlogits into `grad`
/// when non-null.
template <typename T>
double softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels,
                             Tensor<T>* grad);

/// Index of the largest logit per row; ties resolve to the lowest index.
template <typename T>
std::vector<int> argmax_rows(const Tensor<T>& logits);

}  // namespace ssae::nn
