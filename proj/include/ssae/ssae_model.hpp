#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "ssae/image.hpp"
#include "ssae/nn/layers.hpp"

namespace ssae {

struct SSAEConfig {
    int in_channels = 3;
    int base_width = 16;
    int num_resblocks = 6;
    double delta = 0.1;

    /// Throws std::invalid_argument naming the offending field.
    void validate() const;
    bool operator==(const SSAEConfig&) const = default;
};

/// Unbounded noise-decoder output, N x C x H x W.
struct RawNoiseField {
    TensorF values;
};

/// Noise clamped to [-delta, delta].
struct BoundedNoiseField {
    TensorF values;
};

/// Per-pixel weights in [0, 1], N x 1 x H x W.
struct SaliencyField {
    TensorF values;
};

/// noise * saliency, bounded by delta.
struct PerturbationField {
    TensorF values;
};

/// Largest float not exceeding `delta`. Clamping to this value keeps
/// |p| <= delta exact when compared in double precision.
float float_budget(double delta);

/// Sign-preserving clamp: sign(raw) * min(|raw|, delta).
BoundedNoiseField bound_noise(const RawNoiseField& raw, const AttackBudget& budget);

/// Per-image min-max normalization of an N x 1 x H x W map. Constant maps
/// become all zeros; otherwise each image spans exactly [0, 1].
SaliencyField normalize_saliency(const TensorF& raw);

/// Backward pass of normalize_saliency. The argmin/argmax positions are held
/// fixed; constant maps get a zero gradient.
TensorF normalize_saliency_backward(const TensorF& raw, const TensorF& grad_out);

/// out[n,c,h,w] = noise[n,c,h,w] * mask[n,0,h,w].
PerturbationField compose_perturbation(const BoundedNoiseField& noise, const SaliencyField& mask);

/// x + p in normalized space, nudged by at most one ulp so that the realized
/// difference |(x + p) - x| never exceeds `delta`.
TensorF apply_perturbation(const TensorF& x, const PerturbationField& p, double delta);

struct AttackResult {
    ImageBatch perturbed;
    PerturbationField perturbation;
    SaliencyField saliency;
};

/// Everything the backward pass needs from a training forward pass.
struct AttackTrace {
    TensorF raw_noise;
    TensorF raw_saliency;
    BoundedNoiseField noise;
    SaliencyField saliency;
    PerturbationField perturbation;
    TensorF perturbed;
};

/// Symmetric saliency-based auto-encoder: a shared encoder feeding a noise
/// decoder and a single-channel saliency decoder.
///
/// Encoder: 7x7 conv, two stride-2 3x3 convs (each followed by instance norm
/// and ReLU), then `num_resblocks` residual blocks at H/4 x W/4. Each decoder
/// mirrors it with two stride-2 3x3 transposed convs and a final 7x7
/// transposed conv without activation.
class SSAE {
public:
    SSAE(SSAEConfig config, std::uint64_t seed);

    const SSAEConfig& config() const { return config_; }
    std::uint64_t seed() const { return seed_; }
    AttackBudget budget() const { return AttackBudget(config_.delta); }

    /// Latent of shape N x 4*base_width x H/4 x W/4.
    TensorF encode(const ImageBatch& batch) const;
    RawNoiseField decode_noise(const TensorF& latent) const;
    /// Raw (unnormalized) saliency scores, N x 1 x H x W.
    TensorF decode_saliency(const TensorF& latent) const;

    /// Single forward pass producing the perturbed batch, P and M.
    AttackResult attack_batch(const ImageBatch& batch) const;

    /// Training-mode forward; caches activations inside the layers.
    AttackTrace forward_train(const ImageBatch& batch);
    /// Accumulates parameter gradients given dL/dP and an optional extra
    /// gradient on the normalized saliency map.
    void backward_train(const AttackTrace& trace, const TensorF& grad_perturbation,
                        const TensorF* grad_saliency);

    std::vector<nn::Param<float>*> params();
    std::vector<nn::Param<float>*> noise_decoder_params() { return noise_decoder_.params(); }
    std::vector<const nn::Param<float>*> params() const;

    std::string describe() const;

private:
    void check_input(const Shape& s) const;

    SSAEConfig config_;
    std::uint64_t seed_;
    nn::Sequential<float> encoder_;
    nn::Sequential<float> noise_decoder_;
    nn::Sequential<float> saliency_decoder_;
};

/// Checkpoint = `<stem>.json` manifest (config, seed, epoch, blob name,
/// digest) next to `<stem>.bin` holding the raw parameters.
struct CheckpointInfo {
    SSAEConfig config;
    std::uint64_t seed = 0;
    int epoch = 0;
    std::string digest;
};

/// Writes `<stem>.json` and `<stem>.bin`; returns the manifest path.
std::filesystem::path save_checkpoint(const SSAE& model, int epoch,
                                      const std::filesystem::path& stem);

/// Loads a checkpoint from its manifest path (or stem).
SSAE load_checkpoint(const std::filesystem::path& manifest, CheckpointInfo* info = nullptr);

/// SHA-256 over all SSAE parameters.
std::string weights_digest(const SSAE& model);

}  // namespace ssae
