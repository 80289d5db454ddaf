#include "ssae/image.hpp"

#include <cmath>
#include <string>

namespace ssae {

NormalizationSpec::NormalizationSpec(std::vector<float> mean, std::vector<float> std)
    : mean_(std::move(mean)), std_(std::move(std)) {
    if (mean_.empty() || mean_.size() != std_.size())
        throw ShapeError("normalization spec needs matching non-empty mean/std, got " +
                         std::to_string(mean_.size()) + " and " + std::to_string(std_.size()));
    for (std::size_t c = 0; c < std_.size(); ++c) {
        if (!(std_[c] > 0.0f) || !std::isfinite(std_[c]))
            throw std::invalid_argument("normalization std[" + std::to_string(c) +
                                        "] must be positive, got " + std::to_string(std_[c]));
        if (!std::isfinite(mean_[c]))
            throw std::invalid_argument("normalization mean[" + std::to_string(c) +
                                        "] is not finite");
    }
}

NormalizationSpec NormalizationSpec::half(int channels) {
    return {std::vector<float>(channels, 0.5f), std::vector<float>(channels, 0.5f)};
}

NormalizationSpec NormalizationSpec::identity(int channels) {
    return {std::vector<float>(channels, 0.0f), std::vector<float>(channels, 1.0f)};
}

AttackBudget::AttackBudget(double delta) : delta_(delta) {
    if (!(delta > 0.0) || !std::isfinite(delta))
        throw std::invalid_argument("attack budget delta must be positive, got " +
                                    std::to_string(delta));
}

ImageBatch::ImageBatch(TensorF data, NormalizationSpec norm)
    : data_(std::move(data)), norm_(std::move(norm)) {
    if (data_.shape().c != norm_.channels())
        throw ShapeError("image batch " + data_.shape().str() + " has " +
                         std::to_string(data_.shape().c) + " channels but normalization has " +
                         std::to_string(norm_.channels()));
    if (!data_.all_finite()) throw std::invalid_argument("image batch contains non-finite values");
}

LabelBatch::LabelBatch(std::vector<int> labels) : labels_(std::move(labels)) {
    for (int v : labels_)
        if (v < 0) throw std::invalid_argument("labels must be non-negative, got " + std::to_string(v));
}

ImageBatch to_normalized(const TensorF& pixels, const NormalizationSpec& spec) {
    const Shape s = pixels.shape();
    if (s.c != spec.channels())
        throw ShapeError("pixels " + s.str() + " do not match " + std::to_string(spec.channels()) +
                         "-channel normalization");
    TensorF out(s);
    const std::size_t plane = s.plane();
    for (int n = 0; n < s.n; ++n) {
        for (int c = 0; c < s.c; ++c) {
            const float m = spec.mean()[c];
            const float sd = spec.std()[c];
            const float* src = pixels.item(n) + c * plane;
            float* dst = out.item(n) + c * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                if (!(src[i] >= 0.0f && src[i] <= 1.0f))
                    throw std::invalid_argument("pixel value " + std::to_string(src[i]) +
                                                " outside [0, 1]");
                dst[i] = (src[i] - m) / sd;
            }
        }
    }
    return ImageBatch(std::move(out), spec);
}

TensorF denormalize(const TensorF& data, const NormalizationSpec& spec) {
    const Shape s = data.shape();
    if (s.c != spec.channels())
        throw ShapeError("tensor " + s.str() + " does not match normalization channels");
    TensorF out(s);
    const std::size_t plane = s.plane();
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
            const float m = spec.mean()[c];
            const float sd = spec.std()[c];
            const float* src = data.item(n) + c * plane;
            float* dst = out.item(n) + c * plane;
            for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i] * sd + m;
        }
    return out;
}

TensorF tensor2img(const ImageBatch& batch) {
    TensorF out = denormalize(batch.data(), batch.norm());
    for (float& v : out.vec()) v = std::clamp(v, 0.0f, 1.0f);
    return out;
}

std::vector<std::uint8_t> to_bytes(std::span<const float> pixels) {
    std::vector<std::uint8_t> out(pixels.size());
    for (std::size_t i = 0; i < pixels.size(); ++i)
        out[i] = static_cast<std::uint8_t>(std::lround(std::clamp(pixels[i], 0.0f, 1.0f) * 255.0f));
    return out;
}

}  // namespace ssae
