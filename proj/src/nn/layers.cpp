#include "ssae/nn/layers.hpp"

#include <Eigen/Core>
#include <cmath>
#include <limits>

namespace ssae::nn {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <typename T>
void init_uniform(Tensor<T>& t, double bound, SplitMix64& rng) {
    for (auto& v : t.vec()) v = static_cast<T>(rng.uniform(-bound, bound));
}

void require_channels(const Shape& s, int expected, const char* layer) {
    if (s.c != expected)
        throw ShapeError(std::string(layer) + " expects " + std::to_string(expected) +
                         " input channels, got " + s.str());
}

}  // namespace

std::uint64_t SplitMix64::next() {
    // splitmix64
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

double SplitMix64::uniform(double lo, double hi) {
    const double u = static_cast<double>(next() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u;
}

double SplitMix64::normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

template <typename T>
void im2col(const T* img, const ConvGeom& g, T* col, std::size_t ld) {
    const int k = g.kernel;
    for (int c = 0; c < g.channels; ++c) {
        const T* plane = img + static_cast<std::size_t>(c) * g.height * g.width;
        for (int ki = 0; ki < k; ++ki)
            for (int kj = 0; kj < k; ++kj) {
                T* row = col + static_cast<std::size_t>((c * k + ki) * k + kj) * ld;
                for (int oh = 0; oh < g.out_h; ++oh) {
                    const int ih = oh * g.stride - g.pad + ki;
                    T* dst = row + oh * g.out_w;
                    if (ih < 0 || ih >= g.height) {
                        std::fill_n(dst, g.out_w, T(0));
                        continue;
                    }
                    const T* src = plane + static_cast<std::size_t>(ih) * g.width;
                    for (int ow = 0; ow < g.out_w; ++ow) {
                        const int iw = ow * g.stride - g.pad + kj;
                        dst[ow] = (iw >= 0 && iw < g.width) ? src[iw] : T(0);
                    }
                }
            }
    }
}

template <typename T>
void col2im(const T* col, const ConvGeom& g, T* img, std::size_t ld) {
    const int k = g.kernel;
    for (int c = 0; c < g.channels; ++c) {
        T* plane = img + static_cast<std::size_t>(c) * g.height * g.width;
        for (int ki = 0; ki < k; ++ki)
            for (int kj = 0; kj < k; ++kj) {
                const T* row = col + static_cast<std::size_t>((c * k + ki) * k + kj) * ld;
                for (int oh = 0; oh < g.out_h; ++oh) {
                    const int ih = oh * g.stride - g.pad + ki;
                    if (ih < 0 || ih >= g.height) continue;
                    const T* src = row + oh * g.out_w;
                    T* dst = plane + static_cast<std::size_t>(ih) * g.width;
                    for (int ow = 0; ow < g.out_w; ++ow) {
                        const int iw = ow * g.stride - g.pad + kj;
                        if (iw >= 0 && iw < g.width) dst[iw] += src[ow];
                    }
                }
            }
    }
}

// ---------------------------------------------------------------- Conv2d

template <typename T>
Conv2d<T>::Conv2d(int in_ch, int out_ch, int kernel, int stride, int pad, SplitMix64& rng)
    : in_ch_(in_ch),
      out_ch_(out_ch),
      kernel_(kernel),
      stride_(stride),
      pad_(pad),
      weight_("weight", Shape{out_ch, in_ch, kernel, kernel}),
      bias_("bias", Shape{out_ch, 1, 1, 1}) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_ch * kernel * kernel));
    init_uniform(weight_.value, bound, rng);
    init_uniform(bias_.value, bound, rng);
}

template <typename T>
Tensor<T> Conv2d<T>::run(const Tensor<T>& x, ConvGeom& geom, AlignedVector<T>& cols) const {
    const Shape s = x.shape();
    require_channels(s, in_ch_, "Conv2d");
    geom = ConvGeom{in_ch_, s.h, s.w, kernel_, stride_, pad_,
                    (s.h + 2 * pad_ - kernel_) / stride_ + 1,
                    (s.w + 2 * pad_ - kernel_) / stride_ + 1};
    if (geom.out_h <= 0 || geom.out_w <= 0)
        throw ShapeError("Conv2d input " + s.str() + " smaller than kernel");

    // One GEMM per image keeps results independent of the batch size.
    const std::size_t P = geom.col_cols();
    const int K = geom.col_rows();
    const std::size_t block = static_cast<std::size_t>(K) * P;
    cols.resize(block * s.n);
    Tensor<T> out(Shape{s.n, out_ch_, geom.out_h, geom.out_w});
    ConstMatMap<T> W(weight_.value.data(), out_ch_, K);
    for (int n = 0; n < s.n; ++n) {
        T* col = cols.data() + n * block;
        im2col(x.item(n), geom, col, P);
        MatMap<T> Y(out.item(n), out_ch_, P);
        Y.noalias() = W * ConstMatMap<T>(col, K, P);
        for (int c = 0; c < out_ch_; ++c) Y.row(c).array() += bias_.value[c];
    }
    return out;
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x) {
    in_shape_ = x.shape();
    return run(x, geom_, cols_);
}

template <typename T>
Tensor<T> Conv2d<T>::infer(const Tensor<T>& x) const {
    ConvGeom geom;
    AlignedVector<T> cols;
    return run(x, geom, cols);
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& grad_out) {
    const Shape s = in_shape_;
    const std::size_t P = geom_.col_cols();
    const int K = geom_.col_rows();
    const std::size_t block = static_cast<std::size_t>(K) * P;
    if (!(grad_out.shape() == Shape{s.n, out_ch_, geom_.out_h, geom_.out_w}))
        throw ShapeError("Conv2d backward got " + grad_out.shape().str());

    ConstMatMap<T> W(weight_.value.data(), out_ch_, K);
    MatMap<T> dW(weight_.grad.data(), out_ch_, K);
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> db(bias_.grad.data(), out_ch_);
    AlignedVector<T> dcol(block);
    Tensor<T> dx(s);
    for (int n = 0; n < s.n; ++n) {
        ConstMatMap<T> G(grad_out.item(n), out_ch_, P);
        if (this->param_grad_) {
            dW.noalias() += G * ConstMatMap<T>(cols_.data() + n * block, K, P).transpose();
            db += G.rowwise().sum();
        }
        MatMap<T>(dcol.data(), K, P).noalias() = W.transpose() * G;
        col2im(dcol.data(), geom_, dx.item(n), P);
    }
    return dx;
}

template <typename T>
void Conv2d<T>::collect_params(std::vector<Param<T>*>& out) {
    out.push_back(&weight_);
    out.push_back(&bias_);
}

template <typename T>
std::string Conv2d<T>::describe() const {
    return "Conv2d(" + std::to_string(in_ch_) + "->" + std::to_string(out_ch_) + ", k" +
           std::to_string(kernel_) + " s" + std::to_string(stride_) + " p" + std::to_string(pad_) +
           ")";
}

// ------------------------------------------------------- ConvTranspose2d

template <typename T>
ConvTranspose2d<T>::ConvTranspose2d(int in_ch, int out_ch, int kernel, int stride, int pad,
                                    int output_pad, SplitMix64& rng)
    : in_ch_(in_ch),
      out_ch_(out_ch),
      kernel_(kernel),
      stride_(stride),
      pad_(pad),
      output_pad_(output_pad),
      weight_("weight", Shape{in_ch, out_ch, kernel, kernel}),
      bias_("bias", Shape{out_ch, 1, 1, 1}) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(out_ch * kernel * kernel));
    init_uniform(weight_.value, bound, rng);
    init_uniform(bias_.value, bound, rng);
}

template <typename T>
Tensor<T> ConvTranspose2d<T>::run(const Tensor<T>& x, ConvGeom& geom) const {
    const Shape s = x.shape();
    require_channels(s, in_ch_, "ConvTranspose2d");
    const int oh = (s.h - 1) * stride_ - 2 * pad_ + kernel_ + output_pad_;
    const int ow = (s.w - 1) * stride_ - 2 * pad_ + kernel_ + output_pad_;
    geom = ConvGeom{out_ch_, oh, ow, kernel_, stride_, pad_, s.h, s.w};

    const std::size_t P = geom.col_cols();
    const int K = geom.col_rows();
    AlignedVector<T> col(static_cast<std::size_t>(K) * P);
    ConstMatMap<T> W(weight_.value.data(), in_ch_, K);
    Tensor<T> out(Shape{s.n, out_ch_, oh, ow});
    const std::size_t plane = out.shape().plane();
    for (int n = 0; n < s.n; ++n) {
        MatMap<T>(col.data(), K, P).noalias() = W.transpose() * ConstMatMap<T>(x.item(n), in_ch_, P);
        T* dst = out.item(n);
        col2im(col.data(), geom, dst, P);
        for (int c = 0; c < out_ch_; ++c) {
            const T b = bias_.value[c];
            for (std::size_t i = 0; i < plane; ++i) dst[c * plane + i] += b;
        }
    }
    return out;
}

template <typename T>
Tensor<T> ConvTranspose2d<T>::forward(const Tensor<T>& x) {
    input_ = x;
    return run(x, geom_);
}

template <typename T>
Tensor<T> ConvTranspose2d<T>::infer(const Tensor<T>& x) const {
    ConvGeom geom;
    return run(x, geom);
}

template <typename T>
Tensor<T> ConvTranspose2d<T>::backward(const Tensor<T>& grad_out) {
    const Shape s = input_.shape();
    const std::size_t P = geom_.col_cols();
    const int K = geom_.col_rows();
    if (!(grad_out.shape() == Shape{s.n, out_ch_, geom_.height, geom_.width}))
        throw ShapeError("ConvTranspose2d backward got " + grad_out.shape().str());

    ConstMatMap<T> W(weight_.value.data(), in_ch_, K);
    MatMap<T> dW(weight_.grad.data(), in_ch_, K);
    AlignedVector<T> dcol(static_cast<std::size_t>(K) * P);
    Tensor<T> dx(s);
    const std::size_t plane = grad_out.shape().plane();
    for (int n = 0; n < s.n; ++n) {
        im2col(grad_out.item(n), geom_, dcol.data(), P);
        ConstMatMap<T> dC(dcol.data(), K, P);
        if (this->param_grad_) {
            dW.noalias() += ConstMatMap<T>(input_.item(n), in_ch_, P) * dC.transpose();
            for (int c = 0; c < out_ch_; ++c) {
                const T* g = grad_out.item(n) + c * plane;
                T acc = T(0);
                for (std::size_t i = 0; i < plane; ++i) acc += g[i];
                bias_.grad[c] += acc;
            }
        }
        MatMap<T>(dx.item(n), in_ch_, P).noalias() = W * dC;
    }
    return dx;
}

template <typename T>
void ConvTranspose2d<T>::collect_params(std::vector<Param<T>*>& out) {
    out.push_back(&weight_);
    out.push_back(&bias_);
}

template <typename T>
std::string ConvTranspose2d<T>::describe() const {
    return "ConvTranspose2d(" + std::to_string(in_ch_) + "->" + std::to_string(out_ch_) + ", k" +
           std::to_string(kernel_) + " s" + std::to_string(stride_) + " p" + std::to_string(pad_) +
           " op" + std::to_string(output_pad_) + ")";
}

// -------------------------------------------------------- InstanceNorm2d

template <typename T>
InstanceNorm2d<T>::InstanceNorm2d(int channels, double eps)
    : channels_(channels),
      eps_(eps),
      gamma_("gamma", Shape{channels, 1, 1, 1}),
      beta_("beta", Shape{channels, 1, 1, 1}) {
    gamma_.value.fill(T(1));
}

template <typename T>
Tensor<T> InstanceNorm2d<T>::run(const Tensor<T>& x, Tensor<T>* xhat,
                                 std::vector<T>* inv_std) const {
    const Shape s = x.shape();
    require_channels(s, channels_, "InstanceNorm2d");
    const std::size_t plane = s.plane();
    if (xhat) *xhat = Tensor<T>(s);
    if (inv_std) inv_std->assign(static_cast<std::size_t>(s.n) * s.c, T(0));
    Tensor<T> out(s);
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
            const T* src = x.item(n) + c * plane;
            double mean = 0.0;
            for (std::size_t i = 0; i < plane; ++i) mean += src[i];
            mean /= static_cast<double>(plane);
            double var = 0.0;
            for (std::size_t i = 0; i < plane; ++i) {
                const double d = src[i] - mean;
                var += d * d;
            }
            var /= static_cast<double>(plane);
            const T inv = static_cast<T>(1.0 / std::sqrt(var + eps_));
            if (inv_std) (*inv_std)[n * s.c + c] = inv;
            T* xh = xhat ? xhat->item(n) + c * plane : nullptr;
            T* dst = out.item(n) + c * plane;
            const T g = gamma_.value[c];
            const T b = beta_.value[c];
            const T m = static_cast<T>(mean);
            for (std::size_t i = 0; i < plane; ++i) {
                const T v = (src[i] - m) * inv;
                if (xh) xh[i] = v;
                dst[i] = g * v + b;
            }
        }
    return out;
}

template <typename T>
Tensor<T> InstanceNorm2d<T>::forward(const Tensor<T>& x) {
    return run(x, &xhat_, &inv_std_);
}

template <typename T>
Tensor<T> InstanceNorm2d<T>::infer(const Tensor<T>& x) const {
    return run(x, nullptr, nullptr);
}

template <typename T>
Tensor<T> InstanceNorm2d<T>::backward(const Tensor<T>& grad_out) {
    const Shape s = xhat_.shape();
    if (!(grad_out.shape() == s)) throw ShapeError("InstanceNorm2d backward got " + grad_out.shape().str());
    const std::size_t plane = s.plane();
    const T M = static_cast<T>(plane);
    Tensor<T> dx(s);
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
            const T* g = grad_out.item(n) + c * plane;
            const T* xh = xhat_.item(n) + c * plane;
            T sum_g = T(0), sum_gx = T(0);
            for (std::size_t i = 0; i < plane; ++i) {
                sum_g += g[i];
                sum_gx += g[i] * xh[i];
            }
            if (this->param_grad_) {
                gamma_.grad[c] += sum_gx;
                beta_.grad[c] += sum_g;
            }
            const T gm = gamma_.value[c];
            const T scale = gm * inv_std_[n * s.c + c] / M;
            T* d = dx.item(n) + c * plane;
            for (std::size_t i = 0; i < plane; ++i)
                d[i] = scale * (M * g[i] - sum_g - xh[i] * sum_gx);
        }
    return dx;
}

template <typename T>
void InstanceNorm2d<T>::collect_params(std::vector<Param<T>*>& out) {
    out.push_back(&gamma_);
    out.push_back(&beta_);
}

template <typename T>
std::string InstanceNorm2d<T>::describe() const {
    return "InstanceNorm2d(" + std::to_string(channels_) + ")";
}

// ------------------------------------------------------------------ ReLU

template <typename T>
Tensor<T> ReLU<T>::infer(const Tensor<T>& x) const {
    Tensor<T> out = x;
    for (T& v : out.vec()) v = v > T(0) ? v : T(0);
    return out;
}

template <typename T>
Tensor<T> ReLU<T>::forward(const Tensor<T>& x) {
    out_ = infer(x);
    return out_;
}

template <typename T>
Tensor<T> ReLU<T>::backward(const Tensor<T>& grad_out) {
    if (!(grad_out.shape() == out_.shape())) throw ShapeError("ReLU backward shape mismatch");
    Tensor<T> dx(grad_out.shape());
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = out_[i] > T(0) ? grad_out[i] : T(0);
    return dx;
}

// ------------------------------------------------------------ MaxPool2x2

template <typename T>
Tensor<T> MaxPool2x2<T>::run(const Tensor<T>& x, std::vector<std::uint32_t>* argmax) const {
    const Shape s = x.shape();
    if (s.h % 2 != 0 || s.w % 2 != 0) throw ShapeError("MaxPool2x2 needs even spatial dims, got " + s.str());
    Tensor<T> out(Shape{s.n, s.c, s.h / 2, s.w / 2});
    if (argmax) argmax->resize(out.size());
    std::size_t o = 0;
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
            const T* src = x.item(n) + c * s.plane();
            for (int i = 0; i < s.h / 2; ++i)
                for (int j = 0; j < s.w / 2; ++j, ++o) {
                    std::uint32_t best = static_cast<std::uint32_t>(2 * i * s.w + 2 * j);
                    for (int di = 0; di < 2; ++di)
                        for (int dj = 0; dj < 2; ++dj) {
                            const auto idx = static_cast<std::uint32_t>((2 * i + di) * s.w + 2 * j + dj);
                            if (src[idx] > src[best]) best = idx;
                        }
                    if (argmax) (*argmax)[o] = best;
                    out[o] = src[best];
                }
        }
    return out;
}

template <typename T>
Tensor<T> MaxPool2x2<T>::forward(const Tensor<T>& x) {
    in_shape_ = x.shape();
    return run(x, &argmax_);
}

template <typename T>
Tensor<T> MaxPool2x2<T>::infer(const Tensor<T>& x) const {
    return run(x, nullptr);
}

template <typename T>
Tensor<T> MaxPool2x2<T>::backward(const Tensor<T>& grad_out) {
    const Shape s = in_shape_;
    Tensor<T> dx(s);
    const std::size_t out_plane = static_cast<std::size_t>(s.h / 2) * (s.w / 2);
    std::size_t o = 0;
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
            T* d = dx.item(n) + c * s.plane();
            for (std::size_t k = 0; k < out_plane; ++k, ++o) d[argmax_[o]] += grad_out[o];
        }
    return dx;
}

// --------------------------------------------------------- GlobalAvgPool

template <typename T>
Tensor<T> GlobalAvgPool<T>::forward(const Tensor<T>& x) {
    in_shape_ = x.shape();
    return infer(x);
}

template <typename T>
Tensor<T> GlobalAvgPool<T>::infer(const Tensor<T>& x) const {
    const Shape s = x.shape();
    Tensor<T> out(Shape{s.n, s.c, 1, 1});
    const std::size_t plane = s.plane();
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
            const T* src = x.item(n) + c * plane;
            T acc = T(0);
            for (std::size_t i = 0; i < plane; ++i) acc += src[i];
            out.at(n, c, 0, 0) = acc / static_cast<T>(plane);
        }
    return out;
}

template <typename T>
Tensor<T> GlobalAvgPool<T>::backward(const Tensor<T>& grad_out) {
    const Shape s = in_shape_;
    Tensor<T> dx(s);
    const std::size_t plane = s.plane();
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
            const T g = grad_out.at(n, c, 0, 0) / static_cast<T>(plane);
            std::fill_n(dx.item(n) + c * plane, plane, g);
        }
    return dx;
}

// ---------------------------------------------------------------- Linear

template <typename T>
Linear<T>::Linear(int in_features, int out_features, SplitMix64& rng)
    : in_(in_features),
      out_(out_features),
      weight_("weight", Shape{out_features, in_features, 1, 1}),
      bias_("bias", Shape{out_features, 1, 1, 1}) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_features));
    init_uniform(weight_.value, bound, rng);
    init_uniform(bias_.value, bound, rng);
}

template <typename T>
Tensor<T> Linear<T>::forward(const Tensor<T>& x) {
    Tensor<T> out = infer(x);
    input_ = x;
    return out;
}

template <typename T>
Tensor<T> Linear<T>::infer(const Tensor<T>& x) const {
    const Shape s = x.shape();
    if (static_cast<int>(s.per_item()) != in_)
        throw ShapeError("Linear expects " + std::to_string(in_) + " features, got " + s.str());
    Tensor<T> out(Shape{s.n, out_, 1, 1});
    ConstMatMap<T> X(x.data(), s.n, in_);
    ConstMatMap<T> W(weight_.value.data(), out_, in_);
    MatMap<T> Y(out.data(), s.n, out_);
    Y.noalias() = X * W.transpose();
    for (int n = 0; n < s.n; ++n)
        for (int o = 0; o < out_; ++o) Y(n, o) += bias_.value[o];
    return out;
}

template <typename T>
Tensor<T> Linear<T>::backward(const Tensor<T>& grad_out) {
    const Shape s = input_.shape();
    ConstMatMap<T> G(grad_out.data(), s.n, out_);
    ConstMatMap<T> W(weight_.value.data(), out_, in_);
    if (this->param_grad_) {
        ConstMatMap<T> X(input_.data(), s.n, in_);
        MatMap<T> dW(weight_.grad.data(), out_, in_);
        dW.noalias() += G.transpose() * X;
        for (int n = 0; n < s.n; ++n)
            for (int o = 0; o < out_; ++o) bias_.grad[o] += G(n, o);
    }
    Tensor<T> dx(s);
    MatMap<T> dX(dx.data(), s.n, in_);
    dX.noalias() = G * W;
    return dx;
}

template <typename T>
void Linear<T>::collect_params(std::vector<Param<T>*>& out) {
    out.push_back(&weight_);
    out.push_back(&bias_);
}

template <typename T>
std::string Linear<T>::describe() const {
    return "Linear(" + std::to_string(in_) + "->" + std::to_string(out_) + ")";
}

// ------------------------------------------------------------ Sequential

template <typename T>
Tensor<T> Sequential<T>::forward(const Tensor<T>& x) {
    Tensor<T> h = x;
    for (auto& layer : layers_) h = layer->forward(h);
    return h;
}

template <typename T>
Tensor<T> Sequential<T>::infer(const Tensor<T>& x) const {
    Tensor<T> h = x;
    for (const auto& layer : layers_) h = layer->infer(h);
    return h;
}

template <typename T>
Tensor<T> Sequential<T>::backward(const Tensor<T>& grad_out) {
    Tensor<T> g = grad_out;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
    return g;
}

template <typename T>
void Sequential<T>::collect_params(std::vector<Param<T>*>& out) {
    for (auto& layer : layers_) layer->collect_params(out);
}

template <typename T>
void Sequential<T>::set_param_grad(bool enabled) {
    this->param_grad_ = enabled;
    for (auto& layer : layers_) layer->set_param_grad(enabled);
}

template <typename T>
std::string Sequential<T>::describe() const {
    std::string s = "Sequential[";
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        if (i) s += ", ";
        s += layers_[i]->describe();
    }
    return s + "]";
}

// -------------------------------------------------------------- ResBlock

template <typename T>
ResBlock<T>::ResBlock(int channels, SplitMix64& rng) : channels_(channels) {
    body_.template emplace<Conv2d<T>>(channels, channels, 3, 1, 1, rng);
    body_.template emplace<InstanceNorm2d<T>>(channels);
    body_.template emplace<ReLU<T>>();
    body_.template emplace<Conv2d<T>>(channels, channels, 3, 1, 1, rng);
    body_.template emplace<InstanceNorm2d<T>>(channels);
}

template <typename T>
Tensor<T> ResBlock<T>::forward(const Tensor<T>& x) {
    Tensor<T> y = body_.forward(x);
    y += x;
    return y;
}

template <typename T>
Tensor<T> ResBlock<T>::infer(const Tensor<T>& x) const {
    Tensor<T> y = body_.infer(x);
    y += x;
    return y;
}

template <typename T>
Tensor<T> ResBlock<T>::backward(const Tensor<T>& grad_out) {
    Tensor<T> g = body_.backward(grad_out);
    g += grad_out;
    return g;
}

template <typename T>
std::string ResBlock<T>::describe() const {
    return "ResBlock(" + std::to_string(channels_) + ")";
}

template <typename T>
void zero_grad(const std::vector<Param<T>*>& params) {
    for (auto* p : params) p->grad.fill(T(0));
}

#define SSAE_INSTANTIATE_LAYERS(T)                                                \
    template void im2col<T>(const T*, const ConvGeom&, T*, std::size_t);         \
    template void col2im<T>(const T*, const ConvGeom&, T*, std::size_t);         \
    template class Conv2d<T>;                                                     \
    template class ConvTranspose2d<T>;                                            \
    template class InstanceNorm2d<T>;                                             \
    template class ReLU<T>;                                                       \
    template class MaxPool2x2<T>;                                                 \
    template class GlobalAvgPool<T>;                                              \
    template class Linear<T>;                                                     \
    template class Sequential<T>;                                                 \
    template class ResBlock<T>;                                                   \
    template void zero_grad<T>(const std::vector<Param<T>*>&);

SSAE_INSTANTIATE_LAYERS(float)
SSAE_INSTANTIATE_LAYERS(double)

#undef SSAE_INSTANTIATE_LAYERS

}  // namespace ssae::nn
