#pragma once

#include <memory>
#include <string>

#include "ssae/baselines.hpp"
#include "ssae/ssae_model.hpp"
#include "ssae/target_zoo.hpp"

namespace ssae {

/// Common face of everything that perturbs a batch: the trained SSAE, the
/// gradient baselines, and the identity (no-op) attacker.
class Attacker {
public:
    virtual ~Attacker() = default;
    virtual std::string name() const = 0;
    /// `labels` are only consulted by label-driven attacks.
    virtual ImageBatch attack(const ImageBatch& batch, const LabelBatch& labels) = 0;
    /// Budget the attack was configured with (0 for the identity attacker).
    virtual double delta() const = 0;
};

/// Generator forward pass only; never queries a target.
class SSAEAttacker : public Attacker {
public:
    explicit SSAEAttacker(const SSAE& model, std::string name = "ssae") : model_(&model), name_(std::move(name)) {}
    std::string name() const override { return name_; }
    ImageBatch attack(const ImageBatch& batch, const LabelBatch&) override {
        return model_->attack_batch(batch).perturbed;
    }
    double delta() const override { return model_->config().delta; }

private:
    const SSAE* model_;
    std::string name_;
};

class IdentityAttacker : public Attacker {
public:
    std::string name() const override { return "none"; }
    ImageBatch attack(const ImageBatch& batch, const LabelBatch&) override { return batch; }
    double delta() const override { return 0.0; }
};

class FGSMAttacker : public Attacker {
public:
    FGSMAttacker(const TargetModelHandle& target, double delta) : probe_(target), delta_(delta) {}
    std::string name() const override { return "fgsm"; }
    ImageBatch attack(const ImageBatch& batch, const LabelBatch& labels) override {
        return fgsm(probe_, batch, labels, delta_);
    }
    double delta() const override { return delta_; }
    const TargetProbe& probe() const { return probe_; }

private:
    TargetProbe probe_;
    double delta_;
};

class PGDAttacker : public Attacker {
public:
    PGDAttacker(const TargetModelHandle& target, PGDConfig cfg) : probe_(target), cfg_(cfg) { cfg_.validate(); }
    std::string name() const override { return "pgd-" + std::to_string(cfg_.steps); }
    ImageBatch attack(const ImageBatch& batch, const LabelBatch& labels) override {
        return pgd(probe_, batch, labels, cfg_);
    }
    double delta() const override { return cfg_.delta; }
    const TargetProbe& probe() const { return probe_; }

private:
    TargetProbe probe_;
    PGDConfig cfg_;
};

}  // namespace ssae
