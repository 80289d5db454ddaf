#include "ssae/ssae_model.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include "json.hpp"

#include "ssae/nn/serialize.hpp"

namespace ssae {

using nlohmann::json;

void SSAEConfig::validate() const {
    if (in_channels < 1) throw std::invalid_argument("ssae.in_channels must be >= 1");
    if (base_width < 8) throw std::invalid_argument("ssae.base_width must be >= 8");
    if (num_resblocks < 1) throw std::invalid_argument("ssae.num_resblocks must be >= 1");
    if (!(delta > 0.0) || !std::isfinite(delta)) throw std::invalid_argument("ssae.delta must be > 0");
}

float float_budget(double delta) {
    float b = static_cast<float>(delta);
    while (static_cast<double>(b) > delta) b = std::nextafter(b, 0.0f);
    return b;
}

BoundedNoiseField bound_noise(const RawNoiseField& raw, const AttackBudget& budget) {
    const float d = float_budget(budget.delta());
    TensorF out = raw.values;
    for (float& v : out.vec()) v = std::clamp(v, -d, d);
    return {std::move(out)};
}

SaliencyField normalize_saliency(const TensorF& raw) {
    const Shape s = raw.shape();
    if (s.c != 1) throw ShapeError("saliency map must have one channel, got " + s.str());
    if (!raw.all_finite()) throw std::invalid_argument("saliency map contains non-finite values");
    TensorF out(s);
    const std::size_t plane = s.plane();
    for (int n = 0; n < s.n; ++n) {
        const float* src = raw.item(n);
        const auto [lo, hi] = std::minmax_element(src, src + plane);
        const float mn = *lo;
        const float range = *hi - mn;
        if (!(range > 0.0f)) continue;  // constant map stays zero
        float* dst = out.item(n);
        for (std::size_t i = 0; i < plane; ++i) dst[i] = (src[i] - mn) / range;
    }
    return {std::move(out)};
}

TensorF normalize_saliency_backward(const TensorF& raw, const TensorF& grad_out) {
    const Shape s = raw.shape();
    if (!(grad_out.shape() == s)) throw ShapeError("saliency gradient shape mismatch");
    TensorF dx(s);
    const std::size_t plane = s.plane();
    for (int n = 0; n < s.n; ++n) {
        const float* x = raw.item(n);
        const float* g = grad_out.item(n);
        const auto [lo, hi] = std::minmax_element(x, x + plane);
        const float mn = *lo;
        const double range = static_cast<double>(*hi) - mn;
        if (!(range > 0.0)) continue;
        const std::size_t imin = lo - x;
        const std::size_t imax = hi - x;
        // m_j = (x_j - x_min) / range
        double sum_g = 0.0, sum_gm = 0.0;
        for (std::size_t i = 0; i < plane; ++i) {
            sum_g += g[i];
            sum_gm += g[i] * ((x[i] - mn) / range);
        }
        float* d = dx.item(n);
        for (std::size_t i = 0; i < plane; ++i) d[i] = static_cast<float>(g[i] / range);
        d[imin] += static_cast<float>((-sum_g + sum_gm) / range);
        d[imax] += static_cast<float>(-sum_gm / range);
    }
    return dx;
}

PerturbationField compose_perturbation(const BoundedNoiseField& noise, const SaliencyField& mask) {
    const Shape ns = noise.values.shape();
    const Shape ms = mask.values.shape();
    if (ms.c != 1 || ns.n != ms.n || ns.h != ms.h || ns.w != ms.w)
        throw ShapeError("noise " + ns.str() + " and saliency " + ms.str() + " are incompatible");
    TensorF out(ns);
    const std::size_t plane = ns.plane();
    for (int n = 0; n < ns.n; ++n) {
        const float* m = mask.values.item(n);
        for (int c = 0; c < ns.c; ++c) {
            const float* src = noise.values.item(n) + c * plane;
            float* dst = out.item(n) + c * plane;
            for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i] * m[i];
        }
    }
    return {std::move(out)};
}

TensorF apply_perturbation(const TensorF& x, const PerturbationField& p, double delta) {
    if (!(x.shape() == p.values.shape()))
        throw ShapeError("perturbation " + p.values.shape().str() + " does not match images " +
                         x.shape().str());
    TensorF out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        float y = x[i] + p.values[i];
        while (std::abs(static_cast<double>(y) - static_cast<double>(x[i])) > delta)
            y = std::nextafter(y, x[i]);
        out[i] = y;
    }
    return out;
}

// ------------------------------------------------------------------ SSAE

namespace {

void build_decoder(nn::Sequential<float>& dec, int width, int out_channels, nn::SplitMix64& rng) {
    dec.emplace<nn::ConvTranspose2d<float>>(4 * width, 2 * width, 3, 2, 1, 1, rng);
    dec.emplace<nn::InstanceNorm2d<float>>(2 * width);
    dec.emplace<nn::ReLU<float>>();
    dec.emplace<nn::ConvTranspose2d<float>>(2 * width, width, 3, 2, 1, 1, rng);
    dec.emplace<nn::InstanceNorm2d<float>>(width);
    dec.emplace<nn::ReLU<float>>();
    dec.emplace<nn::ConvTranspose2d<float>>(width, out_channels, 7, 1, 3, 0, rng);
}

}  // namespace

SSAE::SSAE(SSAEConfig config, std::uint64_t seed) : config_(config), seed_(seed) {
    config_.validate();
    nn::SplitMix64 rng(seed);
    const int w = config_.base_width;
    encoder_.emplace<nn::Conv2d<float>>(config_.in_channels, w, 7, 1, 3, rng);
    encoder_.emplace<nn::InstanceNorm2d<float>>(w);
    encoder_.emplace<nn::ReLU<float>>();
    encoder_.emplace<nn::Conv2d<float>>(w, 2 * w, 3, 2, 1, rng);
    encoder_.emplace<nn::InstanceNorm2d<float>>(2 * w);
    encoder_.emplace<nn::ReLU<float>>();
    encoder_.emplace<nn::Conv2d<float>>(2 * w, 4 * w, 3, 2, 1, rng);
    encoder_.emplace<nn::InstanceNorm2d<float>>(4 * w);
    encoder_.emplace<nn::ReLU<float>>();
    for (int i = 0; i < config_.num_resblocks; ++i) encoder_.emplace<nn::ResBlock<float>>(4 * w, rng);
    build_decoder(noise_decoder_, w, config_.in_channels, rng);
    build_decoder(saliency_decoder_, w, 1, rng);
}

void SSAE::check_input(const Shape& s) const {
    if (s.c != config_.in_channels)
        throw ShapeError("SSAE expects " + std::to_string(config_.in_channels) + " channels, got " +
                         s.str());
    if (s.h % 4 != 0 || s.w % 4 != 0 || s.h == 0 || s.w == 0)
        throw ShapeError("SSAE input height and width must be positive multiples of 4, got " +
                         s.str());
}

TensorF SSAE::encode(const ImageBatch& batch) const {
    check_input(batch.shape());
    return encoder_.infer(batch.data());
}

RawNoiseField SSAE::decode_noise(const TensorF& latent) const {
    if (latent.shape().c != 4 * config_.base_width)
        throw ShapeError("latent has " + latent.shape().str() + ", expected " +
                         std::to_string(4 * config_.base_width) + " channels");
    return {noise_decoder_.infer(latent)};
}

TensorF SSAE::decode_saliency(const TensorF& latent) const {
    if (latent.shape().c != 4 * config_.base_width)
        throw ShapeError("latent has " + latent.shape().str() + ", expected " +
                         std::to_string(4 * config_.base_width) + " channels");
    return saliency_decoder_.infer(latent);
}

AttackResult SSAE::attack_batch(const ImageBatch& batch) const {
    const TensorF latent = encode(batch);
    BoundedNoiseField noise = bound_noise(decode_noise(latent), budget());
    SaliencyField mask = normalize_saliency(decode_saliency(latent));
    PerturbationField p = compose_perturbation(noise, mask);
    TensorF perturbed = apply_perturbation(batch.data(), p, config_.delta);
    return {ImageBatch(std::move(perturbed), batch.norm()), std::move(p), std::move(mask)};
}

AttackTrace SSAE::forward_train(const ImageBatch& batch) {
    check_input(batch.shape());
    const TensorF latent = encoder_.forward(batch.data());
    AttackTrace t;
    t.raw_noise = noise_decoder_.forward(latent);
    t.raw_saliency = saliency_decoder_.forward(latent);
    t.noise = bound_noise(RawNoiseField{t.raw_noise}, budget());
    t.saliency = normalize_saliency(t.raw_saliency);
    t.perturbation = compose_perturbation(t.noise, t.saliency);
    t.perturbed = apply_perturbation(batch.data(), t.perturbation, config_.delta);
    return t;
}

void SSAE::backward_train(const AttackTrace& t, const TensorF& grad_p, const TensorF* grad_saliency) {
    const Shape s = t.raw_noise.shape();
    if (!(grad_p.shape() == s)) throw ShapeError("perturbation gradient shape mismatch");
    const float d = float_budget(config_.delta);
    const std::size_t plane = s.plane();

    TensorF d_noise(s);
    TensorF d_mask(t.saliency.values.shape());
    for (int n = 0; n < s.n; ++n) {
        const float* m = t.saliency.values.item(n);
        float* dm = d_mask.item(n);
        for (int c = 0; c < s.c; ++c) {
            const std::size_t off = c * plane;
            const float* g = grad_p.item(n) + off;
            const float* raw = t.raw_noise.item(n) + off;
            const float* nz = t.noise.values.item(n) + off;
            float* dn = d_noise.item(n) + off;
            for (std::size_t i = 0; i < plane; ++i) {
                // clamp passes gradient only inside the budget
                dn[i] = std::abs(raw[i]) <= d ? g[i] * m[i] : 0.0f;
                dm[i] += g[i] * nz[i];
            }
        }
    }
    if (grad_saliency) d_mask += *grad_saliency;

    const TensorF d_raw_sal = normalize_saliency_backward(t.raw_saliency, d_mask);
    TensorF d_latent = noise_decoder_.backward(d_noise);
    d_latent += saliency_decoder_.backward(d_raw_sal);
    encoder_.backward(d_latent);
}

std::vector<nn::Param<float>*> SSAE::params() {
    std::vector<nn::Param<float>*> out;
    encoder_.collect_params(out);
    noise_decoder_.collect_params(out);
    saliency_decoder_.collect_params(out);
    return out;
}

std::vector<const nn::Param<float>*> SSAE::params() const {
    auto mut = const_cast<SSAE*>(this)->params();
    return {mut.begin(), mut.end()};
}

std::string SSAE::describe() const {
    return "encoder: " + encoder_.describe() + "\nnoise decoder: " + noise_decoder_.describe() +
           "\nsaliency decoder: " + saliency_decoder_.describe();
}

// ----------------------------------------------------------- checkpoints

namespace {

json config_to_json(const SSAEConfig& c) {
    return {{"in_channels", c.in_channels},
            {"base_width", c.base_width},
            {"num_resblocks", c.num_resblocks},
            {"delta", c.delta}};
}

SSAEConfig config_from_json(const json& j) {
    SSAEConfig c;
    c.in_channels = j.at("in_channels").get<int>();
    c.base_width = j.at("base_width").get<int>();
    c.num_resblocks = j.at("num_resblocks").get<int>();
    c.delta = j.at("delta").get<double>();
    return c;
}

std::vector<nn::Param<float>*> mutable_params(const SSAE& m) {
    return const_cast<SSAE&>(m).params();
}

}  // namespace

std::string weights_digest(const SSAE& model) { return nn::params_digest(mutable_params(model)); }

std::filesystem::path save_checkpoint(const SSAE& model, int epoch, const std::filesystem::path& stem) {
    const auto manifest = std::filesystem::path(stem).replace_extension(".json");
    const auto blob = std::filesystem::path(stem).replace_extension(".bin");
    if (!manifest.parent_path().empty()) std::filesystem::create_directories(manifest.parent_path());
    auto params = mutable_params(model);
    nn::save_params(blob, params);

    json shapes = json::array();
    for (const auto* p : params) {
        const Shape s = p->value.shape();
        shapes.push_back({{"name", p->name}, {"shape", {s.n, s.c, s.h, s.w}}});
    }
    json j = {{"format", "ssae-checkpoint/1"},
              {"config", config_to_json(model.config())},
              {"seed", model.seed()},
              {"epoch", epoch},
              {"blob", blob.filename().string()},
              {"digest", nn::params_digest(params)},
              {"parameters", shapes}};
    std::ofstream out(manifest, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint manifest " + manifest.string());
    out << j.dump(2) << '\n';
    if (!out) throw std::runtime_error("write failed for " + manifest.string());
    return manifest;
}

SSAE load_checkpoint(const std::filesystem::path& path, CheckpointInfo* info) {
    const auto manifest = std::filesystem::path(path).replace_extension(".json");
    std::ifstream in(manifest);
    if (!in) throw std::runtime_error("cannot open checkpoint manifest " + manifest.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error("corrupt checkpoint manifest " + manifest.string() + ": " + e.what());
    }
    if (j.value("format", "") != "ssae-checkpoint/1")
        throw std::runtime_error(manifest.string() + " is not an SSAE checkpoint");
    const SSAEConfig cfg = config_from_json(j.at("config"));
    const auto seed = j.at("seed").get<std::uint64_t>();
    SSAE model(cfg, seed);
    const auto blob = manifest.parent_path() / j.at("blob").get<std::string>();
    auto params = model.params();
    nn::load_params(blob, params);
    const std::string digest = nn::params_digest(params);
    if (digest != j.at("digest").get<std::string>())
        throw std::runtime_error("checkpoint digest mismatch for " + blob.string());
    if (info) *info = {cfg, seed, j.at("epoch").get<int>(), digest};
    return model;
}

}  // namespace ssae
