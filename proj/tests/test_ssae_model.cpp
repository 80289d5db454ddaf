#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <random>

#include "ssae/ssae_model.hpp"

using namespace ssae;

namespace {

ImageBatch random_images(int n, int h, int w, std::uint32_t seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    TensorF p(Shape{n, 3, h, w});
    for (auto& v : p.vec()) v = u(rng);
    return to_normalized(p, NormalizationSpec::half());
}

SSAEConfig small_config(double delta = 0.1) {
    SSAEConfig c;
    c.base_width = 8;
    c.num_resblocks = 1;
    c.delta = delta;
    return c;
}

}  // namespace

TEST_CASE("bound_noise examples") {
    const AttackBudget b(0.1);
    TensorF raw(Shape{1, 1, 1, 3}, std::vector<float>{0.25f, -0.25f, 0.05f});
    const auto out = bound_noise(RawNoiseField{raw}, b).values;
    CHECK(out[0] == doctest::Approx(0.1));
    CHECK(out[1] == doctest::Approx(-0.1));
    CHECK(out[2] == 0.05f);
}

TEST_CASE("bound_noise brute force: magnitude bounded, sign preserved") {
    std::mt19937 rng(1);
    std::normal_distribution<float> g(0.0f, 1.0f);
    for (double delta : {0.01, 0.1, 0.5}) {
        TensorF raw(Shape{4, 3, 8, 8});
        for (auto& v : raw.vec()) v = g(rng);
        const auto out = bound_noise(RawNoiseField{raw}, AttackBudget(delta)).values;
        for (std::size_t i = 0; i < raw.size(); ++i) {
            REQUIRE(std::abs(static_cast<double>(out[i])) <= delta);
            REQUIRE((out[i] > 0) == (raw[i] > 0));
            REQUIRE((out[i] < 0) == (raw[i] < 0));
            if (std::abs(raw[i]) < float_budget(delta)) REQUIRE(out[i] == raw[i]);
        }
    }
}

TEST_CASE("normalize_saliency examples") {
    TensorF raw(Shape{1, 1, 2, 2}, std::vector<float>{0, 2, 4, 8});
    CHECK(normalize_saliency(raw).values.vec() == AlignedVector<float>{0.0f, 0.25f, 0.5f, 1.0f});
    TensorF constant(Shape{1, 1, 2, 2}, 3.5f);
    CHECK(normalize_saliency(constant).values.max_abs() == 0.0f);
    TensorF unit(Shape{1, 1, 2, 2}, std::vector<float>{0, 0.3f, 1, 0.7f});
    const auto again = normalize_saliency(unit).values;
    for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(again[i] - unit[i]) <= 1e-8f);
    CHECK_THROWS_AS(normalize_saliency(TensorF(Shape{1, 2, 2, 2})), ShapeError);
}

TEST_CASE("normalize_saliency backward matches finite differences") {
    std::mt19937 rng(3);
    std::uniform_real_distribution<float> u(-2.0f, 2.0f);
    TensorF raw(Shape{2, 1, 3, 3});
    for (auto& v : raw.vec()) v = u(rng);
    TensorF r(raw.shape());
    for (auto& v : r.vec()) v = u(rng);
    const TensorF grad = normalize_saliency_backward(raw, r);
    auto objective = [&](const TensorF& x) {
        const auto m = normalize_saliency(x).values;
        double s = 0;
        for (std::size_t i = 0; i < m.size(); ++i) s += static_cast<double>(m[i]) * r[i];
        return s;
    };
    for (std::size_t i = 0; i < raw.size(); ++i) {
        TensorF p = raw, m = raw;
        p[i] += 1e-3f;
        m[i] -= 1e-3f;
        const double fd = (objective(p) - objective(m)) / 2e-3;
        CHECK(grad[i] == doctest::Approx(fd).epsilon(1e-2).scale(1.0));
    }
}

TEST_CASE("compose_perturbation examples") {
    TensorF noise(Shape{1, 1, 1, 2}, std::vector<float>{0.1f, -0.1f});
    TensorF half(Shape{1, 1, 1, 2}, 0.5f);
    const auto p = compose_perturbation(BoundedNoiseField{noise}, SaliencyField{half}).values;
    CHECK(p[0] == doctest::Approx(0.05));
    CHECK(p[1] == doctest::Approx(-0.05));
    CHECK(compose_perturbation(BoundedNoiseField{noise}, SaliencyField{TensorF(half.shape(), 0.0f)})
              .values.max_abs() == 0.0f);
    CHECK(compose_perturbation(BoundedNoiseField{noise}, SaliencyField{TensorF(half.shape(), 1.0f)})
              .values == noise);
    // mask broadcasts over channels
    TensorF rgb(Shape{1, 3, 1, 2}, 0.1f);
    const auto q = compose_perturbation(BoundedNoiseField{rgb}, SaliencyField{half}).values;
    CHECK(q.at(0, 2, 0, 1) == doctest::Approx(0.05));
    CHECK_THROWS_AS(compose_perturbation(BoundedNoiseField{rgb}, SaliencyField{TensorF(Shape{1, 1, 2, 2})}),
                    ShapeError);
}

TEST_CASE("architecture shapes") {
    SSAEConfig cfg;
    cfg.base_width = 16;
    SSAE model(cfg, 1);
    const ImageBatch x = random_images(2, 32, 32, 5);
    const TensorF latent = model.encode(x);
    CHECK(latent.shape() == Shape{2, 64, 8, 8});
    CHECK(model.decode_noise(latent).values.shape() == Shape{2, 3, 32, 32});
    CHECK(model.decode_saliency(latent).shape() == Shape{2, 1, 32, 32});
    CHECK(model.decode_noise(latent).values.all_finite());
    CHECK_THROWS_AS(model.encode(random_images(1, 30, 32, 1)), ShapeError);
    CHECK_THROWS_AS(SSAE(SSAEConfig{3, 4, 6, 0.1}, 1), std::invalid_argument);
    CHECK_THROWS_AS(SSAE(SSAEConfig{3, 8, 0, 0.1}, 1), std::invalid_argument);
}

TEST_CASE("full-resolution shapes at 224") {
    SSAE model(small_config(), 2);
    const auto r = model.attack_batch(random_images(1, 224, 224, 9));
    CHECK(r.perturbed.shape() == Shape{1, 3, 224, 224});
    CHECK(r.saliency.values.shape() == Shape{1, 1, 224, 224});
}

TEST_CASE("shape preservation across sizes") {
    SSAE model(small_config(), 4);
    for (auto [h, w] : {std::pair{32, 32}, {36, 48}, {64, 40}, {96, 96}}) {
        const auto r = model.attack_batch(random_images(1, h, w, h * w));
        CHECK(r.perturbation.values.shape() == Shape{1, 3, h, w});
        CHECK(r.saliency.values.shape() == Shape{1, 1, h, w});
    }
}

TEST_CASE("zero input gives finite latent") {
    SSAE model(small_config(), 3);
    ImageBatch zeros(TensorF(Shape{1, 3, 32, 32}), NormalizationSpec::half());
    CHECK(model.encode(zeros).all_finite());
}

TEST_CASE("determinism and batch independence") {
    SSAE a(small_config(), 77), b(small_config(), 77);
    CHECK(weights_digest(a) == weights_digest(b));
    const ImageBatch x = random_images(2, 32, 32, 11);
    const auto ra = a.attack_batch(x), rb = b.attack_batch(x);
    CHECK(ra.perturbed.data() == rb.perturbed.data());

    const auto single = a.attack_batch(x.slice(0, 1));
    CHECK(single.perturbed.data() == ra.perturbed.data().slice(0, 1));
    CHECK(a.encode(x.slice(0, 1)) == a.encode(x).slice(0, 1));
}

TEST_CASE("budget holds for untrained weights") {
    for (double delta : {0.01, 0.1, 0.5}) {
        SSAE model(small_config(delta), 10);
        const ImageBatch x = random_images(3, 32, 32, 12);
        const auto r = model.attack_batch(x);
        CHECK(static_cast<double>(r.perturbation.values.max_abs()) <= delta);
        double linf = 0;
        for (std::size_t i = 0; i < x.data().size(); ++i)
            linf = std::max(linf, std::abs(static_cast<double>(r.perturbed.data()[i]) - x.data()[i]));
        CHECK(linf <= delta);
        const auto& m = r.saliency.values;
        for (int n = 0; n < 3; ++n) {
            const auto [lo, hi] = std::minmax_element(m.item(n), m.item(n) + m.shape().plane());
            CHECK(*lo == 0.0f);
            CHECK(*hi == 1.0f);
        }
    }
}

TEST_CASE("zero noise decoder leaves images unchanged") {
    SSAE model(small_config(), 5);
    for (auto* p : model.noise_decoder_params()) p->value.fill(0.0f);
    const ImageBatch x = random_images(2, 32, 32, 13);
    CHECK(model.attack_batch(x).perturbed.data() == x.data());
}

TEST_CASE("training forward matches evaluation forward") {
    SSAE model(small_config(), 6);
    const ImageBatch x = random_images(2, 32, 32, 14);
    const auto trace = model.forward_train(x);
    const auto eval = model.attack_batch(x);
    CHECK(trace.perturbed == eval.perturbed.data());
    CHECK(trace.saliency.values == eval.saliency.values);
}

TEST_CASE("backward_train matches a directional finite difference") {
    // Large delta keeps the clamp inactive so the objective is smooth.
    SSAE model(small_config(50.0), 8);
    const ImageBatch x = random_images(2, 16, 16, 15);
    std::mt19937 rng(21);
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    const auto trace = model.forward_train(x);
    TensorF r(trace.perturbation.values.shape()), q(trace.saliency.values.shape());
    for (auto& v : r.vec()) v = u(rng);
    for (auto& v : q.vec()) v = u(rng);

    auto params = model.params();
    nn::zero_grad(params);
    model.backward_train(trace, r, &q);

    auto objective = [&] {
        const auto res = model.attack_batch(x);
        double s = 0;
        for (std::size_t i = 0; i < r.size(); ++i) s += static_cast<double>(res.perturbation.values[i]) * r[i];
        for (std::size_t i = 0; i < q.size(); ++i) s += static_cast<double>(res.saliency.values[i]) * q[i];
        return s;
    };
    // random direction over every parameter
    std::vector<TensorF> dir;
    double analytic = 0;
    for (auto* p : params) {
        TensorF d(p->value.shape());
        for (std::size_t i = 0; i < d.size(); ++i) {
            d[i] = u(rng);
            analytic += static_cast<double>(d[i]) * p->grad[i];
        }
        dir.push_back(std::move(d));
    }
    // Float forward passes need a small step; ReLU and instance-norm
    // curvature dominates above ~1e-4.
    const float h = 3e-5f;
    std::vector<TensorF> saved;
    for (auto* p : params) saved.push_back(p->value);
    auto set = [&](float s) {
        for (std::size_t k = 0; k < params.size(); ++k)
            for (std::size_t i = 0; i < dir[k].size(); ++i)
                params[k]->value[i] = saved[k][i] + s * dir[k][i];
    };
    set(h);
    const double fp = objective();
    set(-h);
    const double fm = objective();
    set(0.0f);
    const double numeric = (fp - fm) / (2 * h);
    // float round-off limits agreement to a few percent; the components are
    // checked tightly on their own above.
    CHECK(analytic == doctest::Approx(numeric).epsilon(0.10));
}

TEST_CASE("checkpoint round trip is bit exact") {
    const auto dir = std::filesystem::temp_directory_path() / "ssae_ckpt_test";
    std::filesystem::remove_all(dir);
    SSAE model(small_config(), 99);
    const ImageBatch x = random_images(2, 32, 32, 16);
    const auto manifest = save_checkpoint(model, 3, dir / "attacker");
    CheckpointInfo info;
    const SSAE loaded = load_checkpoint(manifest, &info);
    CHECK(info.epoch == 3);
    CHECK(info.seed == 99);
    CHECK(info.config == model.config());
    CHECK(weights_digest(loaded) == weights_digest(model));
    CHECK(loaded.attack_batch(x).perturbed.data() == model.attack_batch(x).perturbed.data());

    CHECK_THROWS(load_checkpoint(dir / "missing.json"));
    // corrupt the blob
    std::filesystem::resize_file(dir / "attacker.bin", 100);
    CHECK_THROWS(load_checkpoint(manifest));
    std::filesystem::remove_all(dir);
}
