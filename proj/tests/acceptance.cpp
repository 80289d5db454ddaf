// Acceptance suite: one PASS/FAIL line per criterion A1-A10.
//
//   ssae_acceptance [--work DIR] [A1 A6 ...]
//
// With no ids every criterion runs. Desk experiments (A6-A9) share one
// trained target and attacker, built on first use under the work directory.
// The result lines are also written to <work>/acceptance_results.txt.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>

#include "grad_check.hpp"
#include "oracles.hpp"
#include "ssae/cli.hpp"
#include "ssae/metrics.hpp"
#include "ssae/trainer.hpp"

using namespace ssae;
using namespace ssae::testing;
namespace fs = std::filesystem;

namespace {

// ------------------------------------------------------------ desk settings

constexpr double kDelta = 0.1;

// A6/A8/A9: 10-class 32x32 synthetic shapes, 5k train / 1k test
constexpr std::uint64_t kShapesSeed = 7;
constexpr int kShapesTrain = 5000, kShapesTest = 1000;

// A7: 20-identity retrieval set
constexpr std::uint64_t kIdentitySeed = 21;
constexpr int kIdentities = 20, kTrainPerId = 200, kQueryPerId = 4, kGalleryPerId = 8;

TargetArch cnn_a_arch() { return TargetArch{3, 32, 16, 128, 10, false}; }
TargetArch cnn_b_arch() { return TargetArch{3, 32, 24, 128, 10, false}; }
TargetArch embed_arch() { return TargetArch{3, 32, 16, 128, kIdentities, false}; }
constexpr std::uint64_t kSeedA = 11, kSeedB = 23, kSeedEmbed = 31;

TargetTrainConfig target_training(int epochs, std::uint64_t seed) {
    TargetTrainConfig c;
    c.epochs = epochs;
    c.seed = seed;
    return c;
}

SSAEConfig desk_ssae() {
    SSAEConfig c;
    c.base_width = 8;
    c.num_resblocks = 6;
    c.delta = kDelta;
    return c;
}

TrainConfig desk_schedule(std::uint64_t seed) {
    TrainConfig c;  // 20 + 20 epochs, batch 16, alpha 1e-4, delta 0.1
    c.learning_rate = 1e-4;
    c.seed = seed;
    return c;
}

// ------------------------------------------------------------------ helpers

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

void note(const std::string& s) { std::cerr << "  .. " << s << std::endl; }

/// Lazily built desk artifacts shared by A6-A9.
class Desk {
public:
    explicit Desk(fs::path work) : work_(std::move(work)) { fs::create_directories(work_); }

    const fs::path& work() const { return work_; }

    const Dataset& shapes() {
        if (!shapes_) shapes_ = synthetic_shapes(kShapesSeed, kShapesTrain + kShapesTest, kShapesTest);
        return *shapes_;
    }

    const TargetModelHandle& cnn_a() { return fitted(cnn_a_, "cnn-A", cnn_a_arch(), kSeedA, shapes(), 6); }
    const TargetModelHandle& cnn_b() { return fitted(cnn_b_, "cnn-B", cnn_b_arch(), kSeedB, shapes(), 6); }

    const SSAE& attacker_a() {
        if (!attacker_a_) attacker_a_ = trained_attacker("ssae-A", cnn_a(), shapes(), 3);
        return *attacker_a_;
    }

    const Dataset& identities() {
        if (!identities_)
            identities_ = synthetic_identities(kIdentitySeed, kIdentities, kTrainPerId, kQueryPerId, kGalleryPerId);
        return *identities_;
    }

    const TargetModelHandle& embedder() {
        return fitted(embedder_, "embed", embed_arch(), kSeedEmbed, identities(), 15, Task::retrieval);
    }

    const SSAE& attacker_embed() {
        if (!attacker_embed_) attacker_embed_ = trained_attacker("ssae-embed", embedder(), identities(), 5);
        return *attacker_embed_;
    }

private:
    const TargetModelHandle& fitted(std::unique_ptr<TargetModelHandle>& slot, const std::string& id,
                                    const TargetArch& arch, std::uint64_t seed, const Dataset& data, int epochs,
                                    Task task = Task::classification) {
        if (slot) return *slot;
        const fs::path stem = work_ / id;
        if (fs::exists(fs::path(stem).replace_extension(".json"))) {
            TargetModelHandle t = load_target(stem);
            if (t.arch() == arch && t.task() == task && t.net().seed() == seed) {
                note("reusing " + stem.string());
                slot = std::make_unique<TargetModelHandle>(std::move(t));
                return *slot;
            }
        }
        note("training target " + id);
        TargetNet net(arch, seed);
        train_target(net, data, NormalizationSpec::half(), target_training(epochs, seed));
        slot = std::make_unique<TargetModelHandle>(id, task, net, NormalizationSpec::half());
        save_target(*slot, stem);
        return *slot;
    }

    std::unique_ptr<SSAE> trained_attacker(const std::string& id, const TargetModelHandle& target,
                                           const Dataset& data, std::uint64_t seed) {
        note("training attacker " + id + " against " + target.id());
        const auto t0 = std::chrono::steady_clock::now();
        const TrainResult r = train(desk_schedule(seed), desk_ssae(), target, data, work_ / id,
                                    [&](const EpochSummary& s) {
                                        note(fmt("%s epoch %2d angular %.4f norm %.2f frob %.2f (%.0fs)", id.c_str(),
                                                 s.epoch, s.mean.angular, s.mean.norm, s.mean.frobenius, s.seconds));
                                    });
        note(fmt("%s trained in %.0fs", id.c_str(),
                 std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()));
        return std::make_unique<SSAE>(load_checkpoint(r.final_checkpoint));
    }

    fs::path work_;
    std::optional<Dataset> shapes_, identities_;
    std::unique_ptr<TargetModelHandle> cnn_a_, cnn_b_, embedder_;
    std::unique_ptr<SSAE> attacker_a_, attacker_embed_;
};

ImageBatch random_inputs(int n, int size, std::uint64_t seed) {
    nn::SplitMix64 rng(seed);
    TensorF px(Shape{n, 3, size, size});
    for (auto& v : px.vec()) v = static_cast<float>(rng.uniform());
    return to_normalized(px, NormalizationSpec::half());
}

// ---------------------------------------------------------------- criteria

Outcome a1_budget(Desk&) {
    // Five initializations; the last layer of the noise decoder is scaled up
    // progressively so that more and more raw noise exceeds the budget.
    const ImageBatch x = random_inputs(100, 32, 101);
    const float gains[5] = {1.0f, 10.0f, 100.0f, 1e3f, 1e4f};
    double worst_ratio = 0.0, worst_linf_ratio = 0.0;
    std::size_t clamped = 0, total = 0;
    bool ok = true;
    for (double delta : {0.01, 0.1, 0.5}) {
        for (int init = 0; init < 5; ++init) {
            SSAEConfig cfg;
            cfg.delta = delta;
            SSAE model(cfg, 1000 + init);
            auto params = model.noise_decoder_params();
            for (auto& v : params[params.size() - 2]->value.vec()) v *= gains[init];
            const AttackResult r = model.attack_batch(x);
            const TensorF& p = r.perturbation.values;
            for (std::size_t i = 0; i < p.size(); ++i) {
                const double a = std::abs(static_cast<double>(p[i]));
                const double linf = std::abs(static_cast<double>(r.perturbed.data()[i]) - x.data()[i]);
                ok = ok && a <= delta && linf <= delta;
                worst_ratio = std::max(worst_ratio, a / delta);
                worst_linf_ratio = std::max(worst_linf_ratio, linf / delta);
                clamped += a > 0.5 * delta;
            }
            total += p.size();
        }
    }
    return {ok, fmt("max|P|/delta = %.9f, max L-inf/delta = %.9f over 100 inputs x 5 inits x 3 budgets "
                    "(%.1f%% of elements above delta/2)",
                    worst_ratio, worst_linf_ratio, 100.0 * clamped / total)};
}

Outcome a2_saliency(Desk&) {
    bool ok = true;
    int maps = 0, constant = 0;
    // maps produced by randomly initialized attackers
    const ImageBatch x = random_inputs(50, 32, 202);
    for (int init = 0; init < 5; ++init) {
        SSAE model(SSAEConfig{}, 2000 + init);
        const TensorF m = model.attack_batch(x).saliency.values;
        for (int n = 0; n < m.shape().n; ++n) {
            const auto [lo, hi] = std::minmax_element(m.item(n), m.item(n) + m.shape().plane());
            ok = ok && *lo == 0.0f && *hi == 1.0f;
            ++maps;
        }
    }
    // raw maps across magnitudes, including constant ones
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        const double scale = std::pow(10.0, static_cast<int>(trial % 13) - 6);
        std::uniform_real_distribution<double> u(-scale, scale);
        TensorF raw(Shape{2, 1, 16, 16});
        for (auto& v : raw.vec()) v = static_cast<float>(u(rng));
        const bool flat = trial % 5 == 0;
        if (flat) std::fill(raw.item(1), raw.item(1) + raw.shape().plane(), static_cast<float>(u(rng)));
        const TensorF m = normalize_saliency(raw).values;
        for (float v : m.vec()) ok = ok && v >= 0.0f && v <= 1.0f;
        const auto [lo, hi] = std::minmax_element(m.item(0), m.item(0) + m.shape().plane());
        ok = ok && *lo == 0.0f && *hi == 1.0f;
        const auto [lo1, hi1] = std::minmax_element(m.item(1), m.item(1) + m.shape().plane());
        ok = ok && (flat ? (*lo1 == 0.0f && *hi1 == 0.0f) : (*lo1 == 0.0f && *hi1 == 1.0f));
        maps += 2;
        constant += flat;
    }
    return {ok, fmt("%d maps in [0,1] with min 0 / max 1; %d constant maps all zero", maps, constant)};
}

Outcome a3_losses(Desk&) {
    auto fb = [](std::vector<double> v) {
        const int d = static_cast<int>(v.size());
        return FeatureBatch<double>(1, d, std::move(v));
    };
    auto m22 = [](std::vector<double> v) { return TensorD(Shape{1, 1, 2, 2}, std::move(v)); };
    const std::vector<std::pair<double, double>> got_want{
        {angular_loss(fb({1, 0}), fb({1, 0})), 2.0},
        {angular_loss(fb({1, 0}), fb({-1, 0})), 0.0},
        {angular_loss(fb({1, 0}), fb({0, 1})), 1.0},
        {angular_loss(fb({1, 0}), fb({0, 0})), 1.0},
        {norm_loss(fb({3, 4}), fb({5, 0})), 0.0},
        {norm_loss(fb({3, 0}), fb({0, 0})), 9.0},
        {norm_loss(fb({3, 4}), fb({6, 8})), 25.0},
        {frobenius_loss(m22({0, 0, 0, 0})), 0.0},
        {frobenius_loss(m22({1, 1, 1, 1})), 2.0},
        {frobenius_loss(m22({1, 0, 0, 1})), std::sqrt(2.0)},
        {total_loss(1.0, 2.0, 3.0, 1e-4).total, 1.0005},
    };
    double worst = 0.0;
    for (const auto& [g, w] : got_want) worst = std::max(worst, std::abs(g - w));
    return {worst <= 1e-6, fmt("%zu exact cases, worst |error| = %.3g", got_want.size(), worst)};
}

Outcome a4_gradients(Desk&) {
    std::mt19937_64 rng(4040);
    const double h = 1e-5;
    double worst_ang = 0.0, worst_norm = 0.0, worst_frob = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 1 + trial % 4, d = 2 + trial % 15;
        TensorD f = random_tensor(Shape{n, d, 1, 1}, rng);
        TensorD g = random_tensor(Shape{n, d, 1, 1}, rng);
        const auto ga = angular_loss_grad(FeatureBatch<double>(f), FeatureBatch<double>(g));
        const auto gn = norm_loss_grad(FeatureBatch<double>(f), FeatureBatch<double>(g));
        auto ang = [&] { return angular_loss(FeatureBatch<double>(f), FeatureBatch<double>(g)); };
        auto nrm = [&] { return norm_loss(FeatureBatch<double>(f), FeatureBatch<double>(g)); };
        for (std::size_t i = 0; i < f.size(); ++i) {
            worst_ang = std::max({worst_ang, rel_error(ga.d_orig[i], central_diff(f, i, ang, h)),
                                  rel_error(ga.d_pert[i], central_diff(g, i, ang, h))});
            worst_norm = std::max({worst_norm, rel_error(gn.d_orig[i], central_diff(f, i, nrm, h)),
                                   rel_error(gn.d_pert[i], central_diff(g, i, nrm, h))});
        }
        TensorD m = random_tensor(Shape{n, 1, 4 + trial % 5, 3 + trial % 4}, rng, 0.05, 1.0);
        const TensorD gm = frobenius_loss_grad(m);
        auto frob = [&] { return frobenius_loss(m); };
        for (std::size_t i = 0; i < m.size(); ++i)
            worst_frob = std::max(worst_frob, rel_error(gm[i], central_diff(m, i, frob, h)));
    }
    const bool ok = worst_ang <= 1e-4 && worst_norm <= 1e-4 && worst_frob <= 1e-4;
    return {ok, fmt("worst relative error over 20 instances: angular %.2e, norm %.2e, frobenius %.2e", worst_ang,
                    worst_norm, worst_frob)};
}

Outcome a5_metrics(Desk&) {
    double worst_ssim = 0.0, worst_ms = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const TensorF a = random_image(500 + seed, 3, 64, 64);
        const TensorF b = noisy(a, 600 + seed, 0.05 + 0.05 * seed);
        worst_ssim = std::max(worst_ssim, std::abs(ssim(a, b) - oracle_ssim(a, b)));
        worst_ms = std::max(worst_ms, std::abs(ms_ssim(a, b) - oracle_ms_ssim(a, b, ms_ssim_scales(64))));
    }
    std::vector<float> x(400, 0.5f), y(400, 0.5f);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += i % 2 ? 0.1f : -0.1f;
    const PSNR p = psnr(x, y);
    const bool psnr_ok = std::abs(p.standard_db - 20.0) <= 1e-4 && std::abs(p.doubled_db - 40.0) <= 1e-4;

    nn::SplitMix64 rng(55);
    double worst_ret = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const int g = 2 + static_cast<int>(rng.below(19));
        const int q = 1 + static_cast<int>(rng.below(8));
        std::vector<int> gids(g), qids(q);
        for (auto& v : gids) v = static_cast<int>(rng.below(5));
        for (auto& v : qids) v = gids[rng.below(g)];
        std::vector<std::vector<int>> rankings(q, std::vector<int>(g));
        for (auto& r : rankings) {
            std::iota(r.begin(), r.end(), 0);
            for (int i = g - 1; i > 0; --i) std::swap(r[i], r[rng.below(i + 1)]);
        }
        double r1 = 0, ap = 0;
        for (int i = 0; i < q; ++i) {
            r1 += gids[rankings[i][0]] == qids[i];
            ap += brute_ap(rankings[i], qids[i], gids);
        }
        worst_ret = std::max({worst_ret, std::abs(cmc_rank1(rankings, qids, gids) - 100.0 * r1 / q),
                              std::abs(mean_average_precision(rankings, qids, gids) - 100.0 * ap / q)});
    }
    const bool ok = worst_ssim <= 1e-6 && worst_ms <= 1e-6 && psnr_ok && worst_ret <= 1e-9;
    return {ok, fmt("SSIM |diff| %.2e, MS-SSIM |diff| %.2e, PSNR %.6f / %.6f dB, retrieval |diff| %.2e", worst_ssim,
                    worst_ms, p.standard_db, p.doubled_db, worst_ret)};
}

Outcome a6_classification(Desk& desk) {
    const TargetModelHandle& target = desk.cnn_a();
    IdentityAttacker none;
    const double clean = evaluate_attack(none, target, desk.shapes()).metric("accuracy").clean;
    SSAEAttacker attacker(desk.attacker_a());
    const AttackReport r = evaluate_attack(attacker, target, desk.shapes());
    const double attacked = r.metric("accuracy").attacked;
    return {clean >= 85.0 && attacked <= 30.0,
            fmt("desk CNN clean %.1f%% (>= 85), attacked %.1f%% (<= 30), drop %.1f points; ssim %.3f, psnr %.1f dB",
                clean, attacked, clean - attacked, r.iqa.ssim, r.iqa.psnr_doubled_db)};
}

Outcome a7_retrieval(Desk& desk) {
    const TargetModelHandle& target = desk.embedder();
    SSAEAttacker attacker(desk.attacker_embed());
    const AttackReport r = evaluate_attack(attacker, target, desk.identities());
    const auto& r1 = r.metric("rank1");
    const auto& map = r.metric("mAP");
    return {r1.degradation >= 40.0 && map.degradation >= 30.0,
            fmt("rank-1 %.1f -> %.1f (drop %.1f, >= 40), mAP %.1f -> %.1f (drop %.1f, >= 30)", r1.clean,
                r1.attacked, r1.degradation, map.clean, map.attacked, map.degradation)};
}

Outcome a8_transfer(Desk& desk) {
    SSAEAttacker attacker(desk.attacker_a());
    const auto cells = transfer_matrix(attacker, desk.cnn_a(), desk.shapes().name, {&desk.cnn_a(), &desk.cnn_b()},
                                       {&desk.shapes()}, TransferMode::cross_model);
    const TransferCell& b = cells.at(1);
    return {b.degradation >= 20.0, fmt("attacker trained on cnn-A (w=16) vs cnn-B (w=24, other seed): %.1f -> %.1f "
                                       "(drop %.1f, >= 20); on cnn-A drop %.1f",
                                       b.clean, b.attacked, b.degradation, cells.at(0).degradation)};
}

Outcome a9_throughput(Desk& desk) {
    const TargetModelHandle& target = desk.cnn_a();
    SSAEAttacker ssae_attacker(desk.attacker_a());
    PGDAttacker pgd_attacker(target, PGDConfig::defaults(kDelta));
    double ssae_fps = 0.0, pgd_fps = 0.0;
    for (int run = 0; run < 3; ++run) {
        ssae_fps += throughput(ssae_attacker, desk.shapes(), target.norm(), {100, 10, 1}) / 3;
        pgd_fps += throughput(pgd_attacker, desk.shapes(), target.norm(), {10, 2, 1}) / 3;
    }
    const double ratio = ssae_fps / pgd_fps;
    return {ratio >= 10.0, fmt("batch 1, mean of 3 runs: SSAE %.1f img/s, PGD-40 %.2f img/s, ratio %.1fx (>= 10)",
                               ssae_fps, pgd_fps, ratio)};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome a10_determinism(Desk& desk) {
    const fs::path dir = desk.work() / "a10";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const nlohmann::json cfg{
        {"dataset", {{"source", "synthetic-shapes"}, {"seed", 3}, {"count", 400}, {"test_count", 100}}},
        {"targets", nlohmann::json::array({{{"id", "t"}, {"path", "target/t"}}})},
        {"fit_target", {{"id", "t"}, {"width", 8}, {"feature_dim", 32}, {"epochs", 2}}},
        {"ssae", {{"base_width", 8}, {"num_resblocks", 2}}},
        {"train", {{"epochs_phase1", 1}, {"epochs_phase2", 1}, {"learning_rate", 1e-4}, {"seed", 5}}},
        {"output", "run1"}};
    std::ofstream(dir / "config.json") << cfg.dump(2);
    CommandOptions o;
    o.config = dir / "config.json";
    o.quiet = true;
    o.out = dir / "target";
    if (run_command("fit-target", o) != kExitOk) return {false, "fit-target failed"};
    o.out = dir / "run1";
    if (run_command("train", o) != kExitOk) return {false, "first train run failed"};
    o.out = dir / "run2";
    if (run_command("train", o) != kExitOk) return {false, "second train run failed"};

    const std::string csv1 = slurp(dir / "run1" / "loss.csv"), csv2 = slurp(dir / "run2" / "loss.csv");
    const bool same_csv = !csv1.empty() && csv1 == csv2;

    const SSAE m1 = load_checkpoint(dir / "run1" / "ssae_final.json");
    const SSAE m2 = load_checkpoint(dir / "run2" / "ssae_final.json");
    save_checkpoint(m1, 2, dir / "resaved");
    const SSAE m3 = load_checkpoint(dir / "resaved.json");
    const ImageBatch x = random_inputs(16, 32, 77);
    const AttackResult r1 = m1.attack_batch(x), r2 = m2.attack_batch(x), r3 = m3.attack_batch(x);
    const bool same_out = r1.perturbed.data() == r2.perturbed.data() && r1.perturbed.data() == r3.perturbed.data() &&
                          r1.saliency.values == r3.saliency.values;
    return {same_csv && same_out,
            fmt("loss CSVs %s (%zu bytes); reloaded checkpoints give %s attack outputs",
                same_csv ? "byte-identical" : "DIFFER", csv1.size(), same_out ? "bit-identical" : "DIFFERENT")};
}

}  // namespace

int main(int argc, char** argv) {
    fs::path work = fs::temp_directory_path() / "ssae_acceptance";
    std::set<std::string> only;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--work" && i + 1 < argc)
            work = argv[++i];
        else
            only.insert(a);
    }

    const std::vector<std::pair<std::string, std::pair<std::string, Outcome (*)(Desk&)>>> criteria{
        {"A1", {"budget invariant", a1_budget}},
        {"A2", {"saliency invariant", a2_saliency}},
        {"A3", {"loss exactness", a3_losses}},
        {"A4", {"gradient checks", a4_gradients}},
        {"A5", {"metric oracles", a5_metrics}},
        {"A6", {"desk classification attack", a6_classification}},
        {"A7", {"desk retrieval attack", a7_retrieval}},
        {"A8", {"desk cross-model transfer", a8_transfer}},
        {"A9", {"throughput ordering", a9_throughput}},
        {"A10", {"determinism", a10_determinism}},
    };

    Desk desk(work);
    std::ofstream results(work / "acceptance_results.txt", std::ios::trunc);
    int failed = 0;
    for (const auto& [id, c] : criteria) {
        if (!only.empty() && !only.count(id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.second(desk);
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        failed += !o.pass;
        const std::string line = fmt("%-3s %s  %s: %s [%.1fs]", id.c_str(), o.pass ? "PASS" : "FAIL",
                                     c.first.c_str(), o.detail.c_str(), secs);
        std::printf("%s\n", line.c_str());
        std::fflush(stdout);
        results << line << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
