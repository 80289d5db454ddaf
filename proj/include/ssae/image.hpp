#pragma once

#include <cstdint>
#include <vector>

#include "ssae/tensor.hpp"

namespace ssae {

/// Per-channel affine normalization applied before images reach any network.
class NormalizationSpec {
public:
    NormalizationSpec(std::vector<float> mean, std::vector<float> std);

    /// mean = std = 0.5 on every channel.
    static NormalizationSpec half(int channels = 3);
    static NormalizationSpec identity(int channels = 3);

    int channels() const { return static_cast<int>(mean_.size()); }
    const std::vector<float>& mean() const { return mean_; }
    const std::vector<float>& std() const { return std_; }

    bool operator==(const NormalizationSpec&) const = default;

private:
    std::vector<float> mean_;
    std::vector<float> std_;
};

/// L-infinity perturbation bound in normalized space.
class AttackBudget {
public:
    explicit AttackBudget(double delta);
    double delta() const { return delta_; }

private:
    double delta_;
};

/// Images in normalized space together with the spec that produced them.
class ImageBatch {
public:
    ImageBatch(TensorF data, NormalizationSpec norm);

    const TensorF& data() const { return data_; }
    const NormalizationSpec& norm() const { return norm_; }
    const Shape& shape() const { return data_.shape(); }
    int size() const { return data_.shape().n; }

    ImageBatch slice(int first, int count) const {
        return ImageBatch(data_.slice(first, count), norm_);
    }

private:
    TensorF data_;
    NormalizationSpec norm_;
};

/// Class ids (classification) or identity ids (retrieval).
class LabelBatch {
public:
    LabelBatch() = default;
    explicit LabelBatch(std::vector<int> labels);

    const std::vector<int>& values() const { return labels_; }
    int size() const { return static_cast<int>(labels_.size()); }
    int operator[](std::size_t i) const { return labels_[i]; }

private:
    std::vector<int> labels_;
};

/// (pixels - mean) / std per channel. Pixels must lie in [0, 1].
ImageBatch to_normalized(const TensorF& pixels, const NormalizationSpec& spec);

/// Inverse normalization followed by clipping to [0, 1].
TensorF tensor2img(const ImageBatch& batch);

/// Inverse normalization without clipping.
TensorF denormalize(const TensorF& data, const NormalizationSpec& spec);

/// Quantizes [0,1] pixels to 8-bit, rounding to nearest.
std::vector<std::uint8_t> to_bytes(std::span<const float> pixels);

}  // namespace ssae
