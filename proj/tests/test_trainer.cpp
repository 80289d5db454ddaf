#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "ssae/trainer.hpp"

using namespace ssae;
namespace fs = std::filesystem;

namespace {

TargetArch toy_arch(bool signed_features = false) {
    TargetArch a;
    a.image_size = 16;
    a.width = 4;
    a.feature_dim = 8;
    a.signed_features = signed_features;
    return a;
}

SSAEConfig toy_ssae(double delta) {
    SSAEConfig c;
    c.base_width = 8;
    c.num_resblocks = 1;
    c.delta = delta;
    return c;
}

TrainConfig toy_train(int e1, int e2) {
    TrainConfig c;
    c.epochs_phase1 = e1;
    c.epochs_phase2 = e2;
    c.batch_size = 4;
    c.learning_rate = 1e-3;
    c.seed = 17;
    return c;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("ssae_test_trainer_" + name);
    fs::remove_all(p);
    return p;
}

}  // namespace

TEST_CASE("phase schedule") {
    TrainConfig c;
    CHECK(phase_for_epoch(0, c) == Phase::angular_only);
    CHECK(phase_for_epoch(19, c) == Phase::angular_only);
    CHECK(phase_for_epoch(20, c) == Phase::full);
    CHECK(phase_for_epoch(39, c) == Phase::full);
    CHECK_THROWS_AS(phase_for_epoch(40, c), std::out_of_range);
    CHECK_THROWS_AS(phase_for_epoch(-1, c), std::out_of_range);
    c.epochs_phase1 = 0;
    CHECK(phase_for_epoch(0, c) == Phase::full);
}

TEST_CASE("config validation") {
    TrainConfig c;
    CHECK(c.batch_size == 16);
    CHECK(c.learning_rate == 1e-5);
    CHECK(c.alpha == 1e-4);
    CHECK(c.delta == 0.1);
    CHECK_NOTHROW(c.validate());
    c.batch_size = 0;
    CHECK_THROWS_WITH(c.validate(), doctest::Contains("batch_size"));
    c = TrainConfig{};
    c.epochs_phase1 = c.epochs_phase2 = 0;
    CHECK_THROWS(c.validate());
}

TEST_CASE("train_step leaves the target untouched and honours lr = 0") {
    const TargetModelHandle target("toy", Task::classification, TargetNet(toy_arch(), 2), NormalizationSpec::half());
    TargetProbe probe(target);
    TrainConfig cfg = toy_train(1, 1);
    cfg.learning_rate = 0.0;
    TrainState state(SSAE(toy_ssae(0.1), 3), cfg);
    const std::string w0 = weights_digest(state.model);
    const Dataset d = synthetic_shapes(1, 8, 0, 16);
    const ImageBatch batch = d.batch({0, 1, 2, 3}, 0, 4, target.norm());
    const LossBreakdown l1 = train_step(state, probe, batch, Phase::full, cfg.alpha);
    CHECK(weights_digest(state.model) == w0);
    CHECK(target.current_digest() == target.digest());
    CHECK(l1.angular > 0.0);
    CHECK(l1.total == doctest::Approx(l1.angular + cfg.alpha * (l1.norm + l1.frobenius)));
    CHECK(state.history.size() == 1);
}

TEST_CASE("angular_only phase reports and applies no norm/frobenius terms") {
    const TargetModelHandle target("toy", Task::classification, TargetNet(toy_arch(), 2), NormalizationSpec::half());
    const Dataset d = synthetic_shapes(1, 8, 0, 16);
    const ImageBatch batch = d.batch({0, 1, 2, 3}, 0, 4, target.norm());
    TrainConfig cfg = toy_train(1, 0);

    // identical updates with alpha = 0 and with a huge alpha
    TargetProbe p1(target), p2(target);
    TrainState s1(SSAE(toy_ssae(0.1), 3), cfg), s2(SSAE(toy_ssae(0.1), 3), cfg);
    const auto l = train_step(s1, p1, batch, Phase::angular_only, 0.0);
    train_step(s2, p2, batch, Phase::angular_only, 1e6);
    CHECK(weights_digest(s1.model) == weights_digest(s2.model));
    CHECK(l.norm == 0.0);
    CHECK(l.frobenius == 0.0);
    CHECK(l.total == l.angular);
}

TEST_CASE("200 angular-only steps on a fixed toy batch halve the angular loss") {
    const TargetModelHandle target("toy", Task::retrieval, TargetNet(toy_arch(true), 2), NormalizationSpec::half());
    TargetProbe probe(target);
    const Dataset d = synthetic_shapes(5, 8, 0, 16);
    const ImageBatch batch = d.batch({0, 1, 2, 3}, 0, 4, target.norm());
    TrainConfig cfg = toy_train(1, 0);
    cfg.learning_rate = 1e-3;
    TrainState state(SSAE(toy_ssae(2.0), 4), cfg);
    const double first = train_step(state, probe, batch, Phase::angular_only, 0.0).angular;
    double last = first;
    for (int i = 1; i < 200; ++i) last = train_step(state, probe, batch, Phase::angular_only, 0.0).angular;
    MESSAGE("angular ", first, " -> ", last);
    CHECK(last <= 0.5 * first);
}

TEST_CASE("non-finite values abort naming the component") {
    const TargetModelHandle target("toy", Task::classification, TargetNet(toy_arch(), 2), NormalizationSpec::half());
    TargetProbe probe(target);
    SSAE model(toy_ssae(0.1), 3);
    for (auto* p : model.noise_decoder_params()) p->value.fill(NAN);
    TrainState state(std::move(model), toy_train(1, 0));
    const Dataset d = synthetic_shapes(1, 4, 0, 16);
    try {
        train_step(state, probe, d.batch({0, 1}, 0, 2, target.norm()), Phase::full, 1e-4);
        FAIL("expected NonFiniteLoss");
    } catch (const NonFiniteLoss& e) {
        CHECK(e.component() == "perturbation");
        CHECK(std::string(e.what()).find("perturbation") != std::string::npos);
    }
}

TEST_CASE("train is deterministic and writes checkpoints at the phase boundary") {
    const TargetModelHandle target("toy", Task::classification, TargetNet(toy_arch(), 2), NormalizationSpec::half());
    const Dataset d = synthetic_shapes(9, 12, 4, 16);
    const TrainConfig cfg = toy_train(1, 1);
    const auto a = train(cfg, toy_ssae(0.1), target, d, scratch("a"));
    const auto b = train(cfg, toy_ssae(0.1), target, d, scratch("b"));
    CHECK(slurp(a.loss_csv) == slurp(b.loss_csv));
    CHECK(a.checkpoints.size() == 2);
    CHECK(fs::exists(a.checkpoints[0]));
    CHECK(a.checkpoints[0].filename() == "ssae_phase1.json");
    CHECK(a.history.size() == 4);  // 8 train images / batch 4 x 2 epochs
    CHECK(slurp(a.loss_csv).rfind("epoch,step,angular,norm,frobenius,total\n", 0) == 0);
    // phase 1 rows carry zero norm/frobenius, phase 2 rows do not
    CHECK(a.history[0].loss.norm == 0.0);
    CHECK(a.history[3].loss.frobenius > 0.0);
    CHECK(target.current_digest() == target.digest());
    CheckpointInfo info;
    const SSAE m = load_checkpoint(a.final_checkpoint, &info);
    CHECK(info.epoch == 2);
    CHECK(info.config.delta == 0.1);
}

TEST_CASE("train rejects datasets without training images") {
    const TargetModelHandle target("toy", Task::classification, TargetNet(toy_arch(), 2), NormalizationSpec::half());
    const Dataset d = synthetic_shapes(9, 4, 4, 16);
    CHECK_THROWS_AS(train(toy_train(1, 0), toy_ssae(0.1), target, d, scratch("c")), std::invalid_argument);
}
