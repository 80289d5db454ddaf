#include "ssae/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace ssae {

void TrainConfig::validate() const {
    if (epochs_phase1 < 0) throw std::invalid_argument("train.epochs_phase1 must be >= 0");
    if (epochs_phase2 < 0) throw std::invalid_argument("train.epochs_phase2 must be >= 0");
    if (total_epochs() < 1) throw std::invalid_argument("train: schedule has no epochs");
    if (batch_size < 1) throw std::invalid_argument("train.batch_size must be >= 1");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
        throw std::invalid_argument("train.learning_rate must be finite and >= 0");
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw std::invalid_argument("train.alpha must be finite and >= 0");
    if (!(delta > 0.0) || !std::isfinite(delta)) throw std::invalid_argument("train.delta must be finite and > 0");
}

std::string to_string(Phase p) { return p == Phase::angular_only ? "angular_only" : "full"; }

Phase phase_for_epoch(int epoch, const TrainConfig& cfg) {
    if (epoch < 0) throw std::out_of_range("phase_for_epoch: negative epoch");
    if (epoch >= cfg.total_epochs())
        throw std::out_of_range("phase_for_epoch: epoch " + std::to_string(epoch) + " beyond the " +
                                std::to_string(cfg.total_epochs()) + "-epoch schedule");
    return epoch < cfg.epochs_phase1 ? Phase::angular_only : Phase::full;
}

NonFiniteLoss::NonFiniteLoss(std::string component, double value, long step)
    : std::runtime_error("non-finite " + component + " loss (" + std::to_string(value) + ") at step " +
                         std::to_string(step)),
      component_(std::move(component)) {}

TrainState::TrainState(SSAE m, const TrainConfig& cfg)
    : model(std::move(m)), optimizer(model.params(), {cfg.learning_rate}) {}

namespace {

void require_finite(const char* name, double v, long step) {
    if (!std::isfinite(v)) throw NonFiniteLoss(name, v, step);
}

}  // namespace

LossBreakdown train_step(TrainState& state, TargetProbe& probe, const ImageBatch& batch, Phase phase,
                         double alpha) {
    const TargetModelHandle& target = probe.target();
    const int n = batch.size();

    AttackTrace trace = state.model.forward_train(batch);
    if (!trace.perturbed.all_finite()) throw NonFiniteLoss("perturbation", NAN, state.step);
    const ImageBatch perturbed(trace.perturbed, batch.norm());

    const TensorF g_raw = probe.forward_features(perturbed);
    if (!g_raw.all_finite()) throw NonFiniteLoss("perturbed-features", NAN, state.step);
    const FeatureBatch<double> f(target.extract_features(batch).values().cast<double>());
    const FeatureBatch<double> g(g_raw.cast<double>());

    const double angular = angular_loss(f, g);
    require_finite("angular", angular, state.step);
    TensorD dg = angular_loss_grad(f, g).d_pert;

    double norm = 0.0, frob = 0.0;
    TensorF dmask;
    if (phase == Phase::full) {
        norm = norm_loss(f, g);
        require_finite("norm", norm, state.step);
        const TensorD mask = trace.saliency.values.cast<double>();
        frob = frobenius_loss(mask);
        require_finite("frobenius", frob, state.step);
        TensorD dn = norm_loss_grad(f, g).d_pert;
        dn *= alpha;
        dg += dn;
        TensorD dm = frobenius_loss_grad(mask);
        dm *= alpha;
        dmask = dm.cast<float>();
    }
    const LossBreakdown loss = total_loss(angular, norm, frob, phase == Phase::full ? alpha : 0.0);
    require_finite("total", loss.total, state.step);

    // perturbed = x + P, so dL/dP is the input gradient of the target.
    const TensorF grad_p = probe.backward_features(dg.cast<float>());
    if (!grad_p.all_finite()) throw NonFiniteLoss("input-gradient", NAN, state.step);

    state.optimizer.zero_grad();
    state.model.backward_train(trace, grad_p, phase == Phase::full ? &dmask : nullptr);
    state.optimizer.step();

    const LossBreakdown per = loss.per_sample(n);
    state.history.push_back({state.epoch, state.step, phase, per});
    ++state.step;
    return per;
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRecord>& history) {
    if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write loss history " + path.string());
    out << "epoch,step,angular,norm,frobenius,total\n";
    char buf[256];
    for (const auto& r : history) {
        std::snprintf(buf, sizeof buf, "%d,%ld,%.9g,%.9g,%.9g,%.9g\n", r.epoch, r.step, r.loss.angular, r.loss.norm,
                      r.loss.frobenius, r.loss.total);
        out << buf;
    }
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

TrainResult train(const TrainConfig& cfg, const SSAEConfig& arch, const TargetModelHandle& target,
                  const Dataset& data, const std::filesystem::path& out_dir,
                  const std::function<void(const EpochSummary&)>& on_epoch) {
    cfg.validate();
    SSAEConfig model_cfg = arch;
    model_cfg.delta = cfg.delta;
    std::vector<int> order = data.indices(Split::train);
    if (order.empty()) throw std::invalid_argument("train: dataset '" + data.name + "' has no training images");

    const std::string digest_before = target.current_digest();
    TrainState state(SSAE(model_cfg, cfg.seed), cfg);
    TargetProbe probe(target);
    nn::SplitMix64 shuffle_rng(cfg.seed ^ 0x9E3779B97F4A7C15ULL);
    const float budget = float_budget(cfg.delta);

    TrainResult result;
    for (int epoch = 0; epoch < cfg.total_epochs(); ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const Phase phase = phase_for_epoch(epoch, cfg);
        state.epoch = epoch;
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);

        LossBreakdown sum;
        int batches = 0;
        for (std::size_t first = 0; first < order.size(); first += cfg.batch_size) {
            const int count = static_cast<int>(std::min<std::size_t>(cfg.batch_size, order.size() - first));
            const ImageBatch batch = data.batch(order, static_cast<int>(first), count, target.norm());
            const LossBreakdown l = train_step(state, probe, batch, phase, cfg.alpha);
            sum.angular += l.angular;
            sum.norm += l.norm;
            sum.frobenius += l.frobenius;
            sum.total += l.total;
            sum.alpha = l.alpha;
            ++batches;
        }

        // budget spot check on the first batch of the epoch order
        {
            const int count = static_cast<int>(std::min<std::size_t>(cfg.batch_size, order.size()));
            const ImageBatch probe_batch = data.batch(order, 0, count, target.norm());
            const AttackResult r = state.model.attack_batch(probe_batch);
            if (r.perturbation.values.max_abs() > budget)
                throw std::logic_error("budget violated after epoch " + std::to_string(epoch));
        }

        if (epoch + 1 == cfg.epochs_phase1 && cfg.epochs_phase2 > 0)
            result.checkpoints.push_back(save_checkpoint(state.model, epoch + 1, out_dir / "ssae_phase1"));

        if (on_epoch) {
            const double k = 1.0 / batches;
            EpochSummary s{epoch, phase,
                           {sum.angular * k, sum.norm * k, sum.frobenius * k, sum.total * k, sum.alpha},
                           std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()};
            on_epoch(s);
        }
    }

    if (target.current_digest() != digest_before)
        throw std::logic_error("target '" + target.id() + "' parameters changed during training");

    result.final_checkpoint = save_checkpoint(state.model, cfg.total_epochs(), out_dir / "ssae_final");
    result.checkpoints.push_back(result.final_checkpoint);
    result.loss_csv = out_dir / "loss.csv";
    write_loss_csv(result.loss_csv, state.history);
    result.history = std::move(state.history);
    return result;
}

}  // namespace ssae
