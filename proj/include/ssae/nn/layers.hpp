#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ssae/tensor.hpp"

namespace ssae::nn {

/// Trainable tensor and its accumulated gradient.
template <typename T>
struct Param {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;

    Param(std::string n, Shape s) : name(std::move(n)), value(s), grad(s) {}
};

/// splitmix64 generator used for weight initialization, data generation and
/// shuffling. Produces the same stream on every platform, unlike the
/// standard distributions.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
    std::uint64_t next();
    /// Uniform in [lo, hi).
    double uniform(double lo = 0.0, double hi = 1.0);
    /// Standard normal via Box-Muller.
    double normal();
    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) { return next() % n; }

private:
    std::uint64_t state_;
};

/// Base class for differentiable layers. forward() caches whatever backward()
/// needs; backward() must be called at most once per forward().
template <typename T>
class Layer {
public:
    virtual ~Layer() = default;

    /// Training-mode pass; caches activations for backward().
    virtual Tensor<T> forward(const Tensor<T>& x) = 0;
    /// Evaluation pass. Touches no layer state, so concurrent calls on a
    /// shared layer are safe.
    virtual Tensor<T> infer(const Tensor<T>& x) const = 0;
    /// Returns dL/dx and, when parameter gradients are enabled, accumulates
    /// dL/dθ into each Param::grad.
    virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;
    virtual void collect_params(std::vector<Param<T>*>& /*out*/) {}
    virtual void set_param_grad(bool enabled) { param_grad_ = enabled; }
    virtual std::string describe() const = 0;

    std::vector<Param<T>*> params() {
        std::vector<Param<T>*> out;
        collect_params(out);
        return out;
    }

protected:
    bool param_grad_ = true;
};

template <typename T>
using LayerPtr = std::unique_ptr<Layer<T>>;

/// Geometry shared by convolution and transposed convolution. `channels`,
/// `height`, `width` describe the dense image side; out_h/out_w the column side.
struct ConvGeom {
    int channels = 0;
    int height = 0;
    int width = 0;
    int kernel = 1;
    int stride = 1;
    int pad = 0;
    int out_h = 0;
    int out_w = 0;

    int col_rows() const { return channels * kernel * kernel; }
    int col_cols() const { return out_h * out_w; }
};

/// Unfolds one image into a (C*k*k) x (out_h*out_w) block whose rows start
/// at `col` with leading dimension `ld`.
template <typename T>
void im2col(const T* img, const ConvGeom& g, T* col, std::size_t ld);

/// Adjoint of im2col: accumulates columns back into `img`.
template <typename T>
void col2im(const T* col, const ConvGeom& g, T* img, std::size_t ld);

template <typename T>
class Conv2d : public Layer<T> {
public:
    Conv2d(int in_ch, int out_ch, int kernel, int stride, int pad, SplitMix64& rng);

    Tensor<T> forward(const Tensor<T>& x) override;
    Tensor<T> infer(const Tensor<T>& x) const override;
    Tensor<T> backward(const Tensor<T>& grad_out) override;
    void collect_params(std::vector<Param<T>*>& out) override;
    std::string describe() const override;

    Param<T>& weight() { return weight_; }
    Param<T>& bias() { return bias_; }

private:
    Tensor<T> run(const Tensor<T>& x, ConvGeom& geom, AlignedVector<T>& cols) const;

    int in_ch_, out_ch_, kernel_, stride_, pad_;
    Param<T> weight_;
    Param<T> bias_;
    ConvGeom geom_{};
    Shape in_shape_{};
    AlignedVector<T> cols_;
};

/// Transposed convolution; weight layout (in, out, k, k). Output size is
/// (in - 1) * stride - 2 * pad + kernel + output_pad.
template <typename T>
class ConvTranspose2d : public Layer<T> {
public:
    ConvTranspose2d(int in_ch, int out_ch, int kernel, int stride, int pad, int output_pad,
                    SplitMix64& rng);

    Tensor<T> forward(const Tensor<T>& x) override;
    Tensor<T> infer(const Tensor<T>& x) const override;
    Tensor<T> backward(const Tensor<T>& grad_out) override;
    void collect_params(std::vector<Param<T>*>& out) override;
    std::string describe() const override;

    Param<T>& weight() { return weight_; }
    Param<T>& bias() { return bias_; }

private:
    Tensor<T> run(const Tensor<T>& x, ConvGeom& geom) const;

    int in_ch_, out_ch_, kernel_, stride_, pad_, output_pad_;
    Param<T> weight_;
    Param<T> bias_;
    ConvGeom geom_{};
    Tensor<T> input_;
};

/// Per-instance, per-channel normalization with learned scale and shift.
template <typename T>
class InstanceNorm2d : public Layer<T> {
public:
    explicit InstanceNorm2d(int channels, double eps = 1e-5);

    Tensor<T> forward(const Tensor<T>& x) override;
    Tensor<T> infer(const Tensor<T>& x) const override;
    Tensor<T> backward(const Tensor<T>& grad_out) override;
    void collect_params(std::vector<Param<T>*>& out) override;
    std::string describe() const override;

private:
    Tensor<T> run(const Tensor<T>& x, Tensor<T>* xhat, std::vector<T>* inv_std) const;

    int channels_;
    double eps_;
    Param<T> gamma_;
    Param<T> beta_;
    Tensor<T> xhat_;
    std::vector<T> inv_std_;
};

template <typename T>
class ReLU : public Layer<T> {
public:
    Tensor<T> forward(const Tensor<T>& x) override;
    Tensor<T> infer(const Tensor<T>& x) const override;
    Tensor<T> backward(const Tensor<T>& grad_out) override;
    std::string describe() const override { return "ReLU"; }

private:
    Tensor<T> out_;
};

/// 2x2 max pooling with stride 2. Ties resolve to the first element in
/// row-major window order.
template <typename T>
class MaxPool2x2 : public Layer<T> {
public:
    Tensor<T> forward(const Tensor<T>& x) override;
    Tensor<T> infer(const Tensor<T>& x) const override;
    Tensor<T> backward(const Tensor<T>& grad_out) override;
    std::string describe() const override { return "MaxPool2x2"; }

private:
    Tensor<T> run(const Tensor<T>& x, std::vector<std::uint32_t>* argmax) const;

    Shape in_shape_{};
    std::vector<std::uint32_t> argmax_;
};

/// N x C x H x W -> N x C x 1 x 1.
template <typename T>
class GlobalAvgPool : public Layer<T> {
public:
    Tensor<T> forward(const Tensor<T>& x) override;
    Tensor<T> infer(const Tensor<T>& x) const override;
    Tensor<T> backward(const Tensor<T>& grad_out) override;
    std::string describe() const override { return "GlobalAvgPool"; }

private:
    Shape in_shape_{};
};

/// Fully connected layer over the flattened per-item features.
template <typename T>
class Linear : public Layer<T> {
public:
    Linear(int in_features, int out_features, SplitMix64& rng);

    Tensor<T> forward(const Tensor<T>& x) override;
    Tensor<T> infer(const Tensor<T>& x) const override;
    Tensor<T> backward(const Tensor<T>& grad_out) override;
    void collect_params(std::vector<Param<T>*>& out) override;
    std::string describe() const override;

    Param<T>& weight() { return weight_; }
    Param<T>& bias() { return bias_; }

private:
    int in_, out_;
    Param<T> weight_;
    Param<T> bias_;
    Tensor<T> input_;
};

template <typename T>
class Sequential : public Layer<T> {
public:
    Sequential() = default;

    template <typename L, typename... Args>
    L& emplace(Args&&... args) {
        auto layer = std::make_unique<L>(std::forward<Args>(args)...);
        L& ref = *layer;
        layers_.push_back(std::move(layer));
        return ref;
    }
    void push(LayerPtr<T> layer) { layers_.push_back(std::move(layer)); }

    Tensor<T> forward(const Tensor<T>& x) override;
    Tensor<T> infer(const Tensor<T>& x) const override;
    Tensor<T> backward(const Tensor<T>& grad_out) override;
    void collect_params(std::vector<Param<T>*>& out) override;
    void set_param_grad(bool enabled) override;
    std::string describe() const override;

    std::size_t size() const { return layers_.size(); }
    Layer<T>& operator[](std::size_t i) { return *layers_[i]; }

private:
    std::vector<LayerPtr<T>> layers_;
};

/// x + IN(conv(ReLU(IN(conv(x))))) with 3x3 convolutions.
template <typename T>
class ResBlock : public Layer<T> {
public:
    ResBlock(int channels, SplitMix64& rng);

    Tensor<T> forward(const Tensor<T>& x) override;
    Tensor<T> infer(const Tensor<T>& x) const override;
    Tensor<T> backward(const Tensor<T>& grad_out) override;
    void collect_params(std::vector<Param<T>*>& out) override { body_.collect_params(out); }
    void set_param_grad(bool enabled) override { body_.set_param_grad(enabled); }
    std::string describe() const override;

private:
    int channels_;
    Sequential<T> body_;
};

/// Sets every gradient in `params` to zero.
template <typename T>
void zero_grad(const std::vector<Param<T>*>& params);

}  // namespace ssae::nn
