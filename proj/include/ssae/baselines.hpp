#pragma once

#include <cstdint>

#include "ssae/image.hpp"
#include "ssae/target_zoo.hpp"

namespace ssae {

struct PGDConfig {
    double delta = 0.1;
    int steps = 40;
    double step_size = 0.01;
    bool random_start = true;
    std::uint64_t seed = 0;

    /// steps 40, step size delta / 10, random start.
    static PGDConfig defaults(double delta);
    void validate() const;
};

/// One signed-gradient step of size delta on the cross-entropy loss:
/// x + delta * sign(dL/dx), sign(0) = 0. Exactly one backward pass.
/// delta = 0 returns the input unchanged.
ImageBatch fgsm(TargetProbe& probe, const ImageBatch& batch, const LabelBatch& labels, double delta);

/// Projected gradient descent on the L-infinity ball around the input.
/// The perturbation is kept as its own tensor and clamped after every step,
/// so the output satisfies |x~ - x| <= delta exactly. `steps` backward passes.
ImageBatch pgd(TargetProbe& probe, const ImageBatch& batch, const LabelBatch& labels, const PGDConfig& cfg);

}  // namespace ssae
