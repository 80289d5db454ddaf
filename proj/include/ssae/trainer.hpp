#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ssae/dataset.hpp"
#include "ssae/nn/optim.hpp"
#include "ssae/objectives.hpp"
#include "ssae/ssae_model.hpp"
#include "ssae/target_zoo.hpp"

namespace ssae {

struct TrainConfig {
    int epochs_phase1 = 20;
    int epochs_phase2 = 20;
    int batch_size = 16;
    double learning_rate = 1e-5;
    double alpha = 1e-4;
    double delta = 0.1;
    std::uint64_t seed = 0;

    void validate() const;
    int total_epochs() const { return epochs_phase1 + epochs_phase2; }
};

enum class Phase { angular_only, full };

std::string to_string(Phase p);

/// Epochs [0, phase1) optimize the angular loss alone; the next phase2
/// epochs optimize the full objective.
Phase phase_for_epoch(int epoch, const TrainConfig& cfg);

/// Raised when any loss component turns non-finite; `component` names it.
class NonFiniteLoss : public std::runtime_error {
public:
    NonFiniteLoss(std::string component, double value, long step);
    const std::string& component() const { return component_; }

private:
    std::string component_;
};

struct LossRecord {
    int epoch = 0;
    long step = 0;
    Phase phase = Phase::angular_only;
    LossBreakdown loss;  // per-sample values
};

/// Attacker weights, optimizer moments and loss history.
struct TrainState {
    TrainState(SSAE model, const TrainConfig& cfg);

    SSAE model;
    nn::Adam optimizer;
    int epoch = 0;
    long step = 0;
    std::vector<LossRecord> history;
};

/// One optimizer update of the attacker on `batch`. The target is only
/// queried through `probe`, whose parameter gradients are disabled.
/// Phase angular_only uses L_angular alone; norm and frobenius are reported
/// as zero and contribute nothing to the gradient.
LossBreakdown train_step(TrainState& state, TargetProbe& probe, const ImageBatch& batch, Phase phase,
                         double alpha);

struct EpochSummary {
    int epoch = 0;
    Phase phase = Phase::angular_only;
    LossBreakdown mean;  // per-sample means over the epoch
    double seconds = 0.0;
};

struct TrainResult {
    std::filesystem::path final_checkpoint;
    std::vector<std::filesystem::path> checkpoints;
    std::filesystem::path loss_csv;
    std::vector<LossRecord> history;
};

/// Full two-phase run on the dataset's `train` split. Writes
/// `<out>/ssae_phase1.{json,bin}` at the phase boundary, `<out>/ssae_final`
/// at the end and `<out>/loss.csv`. Deterministic for a given seed.
TrainResult train(const TrainConfig& cfg, const SSAEConfig& arch, const TargetModelHandle& target,
                  const Dataset& data, const std::filesystem::path& out_dir,
                  const std::function<void(const EpochSummary&)>& on_epoch = {});

/// Loss history as CSV: epoch,step,angular,norm,frobenius,total.
void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRecord>& history);

}  // namespace ssae
