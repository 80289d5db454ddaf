#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "ssae/dataset.hpp"
#include "ssae/image.hpp"
#include "ssae/nn/layers.hpp"
#include "ssae/objectives.hpp"

namespace ssae {

enum class Task { classification, retrieval };

std::string to_string(Task t);
Task task_from_string(const std::string& s);

/// Desk-scale reference CNN: four 3x3 conv + ReLU stages (the first three
/// followed by 2x2 max pooling) with widths w, 2w, 4w, feature_dim, then
/// global average pooling. The pooled vector is the feature T(x); a linear
/// head maps it to class (or identity) logits. With `signed_features` the
/// last ReLU is dropped, so features can take either sign.
struct TargetArch {
    int in_channels = 3;
    int image_size = 32;
    int width = 16;
    int feature_dim = 128;
    int num_classes = 10;
    bool signed_features = false;

    void validate() const;
    bool operator==(const TargetArch&) const = default;
};

/// Trainable network. Frozen copies live behind TargetModelHandle.
class TargetNet {
public:
    TargetNet(TargetArch arch, std::uint64_t seed);

    const TargetArch& arch() const { return arch_; }
    std::uint64_t seed() const { return seed_; }

    TensorF features(const TensorF& x) const { return backbone_.infer(x); }
    TensorF logits(const TensorF& x) const { return head_.infer(backbone_.infer(x)); }

    // Training-mode passes (cache activations).
    TensorF forward_features(const TensorF& x) { return backbone_.forward(x); }
    TensorF forward_logits(const TensorF& x) { return head_.forward(backbone_.forward(x)); }
    /// Backpropagates dL/dfeatures; returns dL/dx.
    TensorF backward_features(const TensorF& g) { return backbone_.backward(g); }
    /// Backpropagates dL/dlogits; returns dL/dx.
    TensorF backward_logits(const TensorF& g) { return backbone_.backward(head_.backward(g)); }

    void set_param_grad(bool enabled);
    std::vector<nn::Param<float>*> params();
    std::vector<const nn::Param<float>*> params() const;
    /// Copies parameter values from `other` (same architecture).
    void copy_from(const TargetNet& other);
    std::string describe() const;

private:
    TargetArch arch_;
    std::uint64_t seed_;
    nn::Sequential<float> backbone_;
    nn::Sequential<float> head_;
};

struct TargetTrainConfig {
    int epochs = 12;
    int batch_size = 32;
    double learning_rate = 2e-3;
    std::uint64_t seed = 1;
    bool verbose = false;
};

/// Cross-entropy training with Adam on the `train` split. Returns the final
/// epoch's mean training loss.
double train_target(TargetNet& net, const Dataset& data, const NormalizationSpec& norm,
                    const TargetTrainConfig& cfg);

/// Frozen, shareable view of a target model. All queries run the
/// stateless inference path; the parameters are never touched.
class TargetModelHandle {
public:
    TargetModelHandle(std::string id, Task task, const TargetNet& net, NormalizationSpec norm);

    const std::string& id() const { return id_; }
    Task task() const { return task_; }
    int feature_dim() const { return net_->arch().feature_dim; }
    int num_classes() const { return net_->arch().num_classes; }
    const TargetArch& arch() const { return net_->arch(); }
    const NormalizationSpec& norm() const { return norm_; }
    /// Digest recorded when the handle was frozen.
    const std::string& digest() const { return digest_; }
    /// Digest of the parameters as they are now.
    std::string current_digest() const;
    const TargetNet& net() const { return *net_; }

    FeatureBatch<float> extract_features(const ImageBatch& batch) const;
    TensorF logits(const ImageBatch& batch) const;
    LabelBatch classify(const ImageBatch& batch) const;

    /// Number of forward queries served so far.
    std::uint64_t queries() const { return queries_->load(); }

    /// Throws unless `batch` matches the input spec (C, H, W, normalization).
    void check_input(const ImageBatch& batch) const;

private:
    std::string id_;
    Task task_;
    std::shared_ptr<const TargetNet> net_;
    NormalizationSpec norm_;
    std::string digest_;
    std::shared_ptr<std::atomic<std::uint64_t>> queries_;
};

/// Differentiable access to a frozen target for attackers: a private copy
/// of the network with parameter gradients disabled, so backpropagation
/// yields input gradients only. Counts backward passes.
class TargetProbe {
public:
    explicit TargetProbe(const TargetModelHandle& target);

    const TargetModelHandle& target() const { return *target_; }

    TensorF forward_features(const ImageBatch& batch);
    TensorF backward_features(const TensorF& grad);
    TensorF forward_logits(const ImageBatch& batch);
    TensorF backward_logits(const TensorF& grad);

    /// Mean cross-entropy and its gradient w.r.t. the input (one backward pass).
    double ce_input_grad(const ImageBatch& batch, const LabelBatch& labels, TensorF& grad);

    std::uint64_t backward_passes() const { return backward_passes_; }

private:
    const TargetModelHandle* target_;
    TargetNet net_;
    std::uint64_t backward_passes_ = 0;
};

/// Gallery features with identity (and optional camera) ids.
class RetrievalIndex {
public:
    RetrievalIndex(FeatureBatch<float> features, LabelBatch ids, std::vector<int> cameras = {});

    const FeatureBatch<float>& features() const { return features_; }
    const LabelBatch& ids() const { return ids_; }
    const std::vector<int>& cameras() const { return cameras_; }
    int size() const { return features_.rows(); }

private:
    FeatureBatch<float> features_;
    LabelBatch ids_;
    std::vector<int> cameras_;
};

/// Gallery indices per query, by descending cosine similarity; equal
/// similarities keep ascending gallery index. Zero vectors have similarity 0.
std::vector<std::vector<int>> rank_gallery(const FeatureBatch<float>& query, const RetrievalIndex& index);

/// `<stem>.json` manifest (id, task, architecture, normalization, digest)
/// plus `<stem>.bin` parameters.
std::filesystem::path save_target(const TargetModelHandle& target, const std::filesystem::path& stem);
TargetModelHandle load_target(const std::filesystem::path& manifest);

}  // namespace ssae
