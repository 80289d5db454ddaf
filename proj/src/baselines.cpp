#include "ssae/baselines.hpp"

#include <cmath>
#include <stdexcept>

#include "ssae/ssae_model.hpp"

namespace ssae {

PGDConfig PGDConfig::defaults(double delta) {
    PGDConfig c;
    c.delta = delta;
    c.step_size = delta / 10.0;
    return c;
}

void PGDConfig::validate() const {
    if (!(delta > 0.0) || !std::isfinite(delta)) throw std::invalid_argument("pgd.delta must be finite and > 0");
    if (steps < 1) throw std::invalid_argument("pgd.steps must be >= 1");
    if (!(step_size > 0.0) || !std::isfinite(step_size))
        throw std::invalid_argument("pgd.step_size must be finite and > 0");
}

namespace {

TensorF input_grad(TargetProbe& probe, const ImageBatch& x, const LabelBatch& labels) {
    if (labels.size() != x.size())
        throw std::invalid_argument("attack: " + std::to_string(labels.size()) + " labels for " +
                                    std::to_string(x.size()) + " images");
    TensorF grad;
    probe.ce_input_grad(x, labels, grad);
    if (!grad.all_finite()) throw std::runtime_error("attack: non-finite input gradient");
    return grad;
}

float sign(float v) { return v > 0.0f ? 1.0f : (v < 0.0f ? -1.0f : 0.0f); }

}  // namespace

ImageBatch fgsm(TargetProbe& probe, const ImageBatch& batch, const LabelBatch& labels, double delta) {
    if (delta < 0.0 || !std::isfinite(delta)) throw std::invalid_argument("fgsm: delta must be finite and >= 0");
    if (delta == 0.0) return batch;
    const TensorF grad = input_grad(probe, batch, labels);
    const float b = float_budget(delta);
    PerturbationField eta{TensorF(batch.shape())};
    for (std::size_t i = 0; i < grad.size(); ++i) eta.values[i] = b * sign(grad[i]);
    return ImageBatch(apply_perturbation(batch.data(), eta, delta), batch.norm());
}

ImageBatch pgd(TargetProbe& probe, const ImageBatch& batch, const LabelBatch& labels, const PGDConfig& cfg) {
    cfg.validate();
    const float b = float_budget(cfg.delta);
    const float step = static_cast<float>(cfg.step_size);
    PerturbationField eta{TensorF(batch.shape())};
    if (cfg.random_start) {
        nn::SplitMix64 rng(cfg.seed);
        for (std::size_t i = 0; i < eta.values.size(); ++i)
            eta.values[i] = static_cast<float>(rng.uniform(-b, b));
    }
    for (int s = 0; s < cfg.steps; ++s) {
        const ImageBatch x(apply_perturbation(batch.data(), eta, cfg.delta), batch.norm());
        const TensorF grad = input_grad(probe, x, labels);
        for (std::size_t i = 0; i < grad.size(); ++i)
            eta.values[i] = std::clamp(eta.values[i] + step * sign(grad[i]), -b, b);
    }
    return ImageBatch(apply_perturbation(batch.data(), eta, cfg.delta), batch.norm());
}

}  // namespace ssae
