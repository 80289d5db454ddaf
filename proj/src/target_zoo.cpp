#include "ssae/target_zoo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>

#include "json.hpp"
#include "ssae/nn/optim.hpp"
#include "ssae/nn/serialize.hpp"

namespace ssae {

using nlohmann::json;

std::string to_string(Task t) { return t == Task::classification ? "classification" : "retrieval"; }

Task task_from_string(const std::string& s) {
    if (s == "classification") return Task::classification;
    if (s == "retrieval") return Task::retrieval;
    throw std::invalid_argument("unknown task '" + s + "' (expected classification|retrieval)");
}

void TargetArch::validate() const {
    if (in_channels < 1) throw std::invalid_argument("target.in_channels must be >= 1");
    if (image_size < 8 || image_size % 8 != 0)
        throw std::invalid_argument("target.image_size must be a multiple of 8 (>= 8)");
    if (width < 1) throw std::invalid_argument("target.width must be >= 1");
    if (feature_dim < 1) throw std::invalid_argument("target.feature_dim must be >= 1");
    if (num_classes < 2) throw std::invalid_argument("target.num_classes must be >= 2");
}

// --------------------------------------------------------------- TargetNet

TargetNet::TargetNet(TargetArch arch, std::uint64_t seed) : arch_(arch), seed_(seed) {
    arch_.validate();
    nn::SplitMix64 rng(seed);
    const int w = arch_.width;
    const int widths[4] = {w, 2 * w, 4 * w, arch_.feature_dim};
    int in = arch_.in_channels;
    for (int s = 0; s < 4; ++s) {
        backbone_.emplace<nn::Conv2d<float>>(in, widths[s], 3, 1, 1, rng);
        if (s < 3 || !arch_.signed_features) backbone_.emplace<nn::ReLU<float>>();
        if (s < 3) backbone_.emplace<nn::MaxPool2x2<float>>();
        in = widths[s];
    }
    backbone_.emplace<nn::GlobalAvgPool<float>>();
    head_.emplace<nn::Linear<float>>(arch_.feature_dim, arch_.num_classes, rng);
}

void TargetNet::set_param_grad(bool enabled) {
    backbone_.set_param_grad(enabled);
    head_.set_param_grad(enabled);
}

std::vector<nn::Param<float>*> TargetNet::params() {
    auto out = backbone_.params();
    for (auto* p : head_.params()) out.push_back(p);
    return out;
}

std::vector<const nn::Param<float>*> TargetNet::params() const {
    auto ps = const_cast<TargetNet*>(this)->params();
    return {ps.begin(), ps.end()};
}

void TargetNet::copy_from(const TargetNet& other) {
    if (!(arch_ == other.arch_)) throw std::invalid_argument("copy_from: architecture mismatch");
    auto dst = params();
    auto src = other.params();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i]->value = src[i]->value;
}

std::string TargetNet::describe() const {
    return "backbone: " + backbone_.describe() + "\nhead: " + head_.describe();
}

double train_target(TargetNet& net, const Dataset& data, const NormalizationSpec& norm,
                    const TargetTrainConfig& cfg) {
    std::vector<int> order = data.indices(Split::train);
    if (order.empty()) throw std::invalid_argument("train_target: dataset has no training entries");
    const auto labels = data.labels();
    net.set_param_grad(true);
    nn::Adam opt(net.params(), {cfg.learning_rate});
    nn::SplitMix64 rng(cfg.seed);
    double epoch_loss = 0.0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        epoch_loss = 0.0;
        int batches = 0;
        for (std::size_t first = 0; first < order.size(); first += cfg.batch_size) {
            const int count = static_cast<int>(std::min<std::size_t>(cfg.batch_size, order.size() - first));
            const ImageBatch batch = data.batch(order, static_cast<int>(first), count, norm);
            std::vector<int> y(count);
            for (int k = 0; k < count; ++k) y[k] = labels[order[first + k]];
            opt.zero_grad();
            const TensorF logits = net.forward_logits(batch.data());
            TensorF grad;
            epoch_loss += nn::softmax_cross_entropy(logits, y, &grad);
            net.backward_logits(grad);
            opt.step();
            ++batches;
        }
        epoch_loss /= batches;
        if (cfg.verbose)
            std::cerr << "target epoch " << epoch + 1 << "/" << cfg.epochs << " loss " << epoch_loss << '\n';
    }
    return epoch_loss;
}

// ------------------------------------------------------- TargetModelHandle

TargetModelHandle::TargetModelHandle(std::string id, Task task, const TargetNet& net, NormalizationSpec norm)
    : id_(std::move(id)),
      task_(task),
      norm_(std::move(norm)),
      queries_(std::make_shared<std::atomic<std::uint64_t>>(0)) {
    if (id_.empty()) throw std::invalid_argument("target id must be non-empty");
    if (norm_.channels() != net.arch().in_channels)
        throw std::invalid_argument("target '" + id_ + "': normalization has " +
                                    std::to_string(norm_.channels()) + " channels, network expects " +
                                    std::to_string(net.arch().in_channels));
    auto copy = std::make_shared<TargetNet>(net.arch(), net.seed());
    copy->copy_from(net);
    copy->set_param_grad(false);
    net_ = std::move(copy);
    digest_ = current_digest();
}

std::string TargetModelHandle::current_digest() const {
    return nn::params_digest(const_cast<TargetNet&>(*net_).params());
}

void TargetModelHandle::check_input(const ImageBatch& batch) const {
    const Shape s = batch.shape();
    const auto& a = net_->arch();
    if (s.c != a.in_channels || s.h != a.image_size || s.w != a.image_size)
        throw ShapeError("target '" + id_ + "' expects N x " + std::to_string(a.in_channels) + " x " +
                         std::to_string(a.image_size) + " x " + std::to_string(a.image_size) + ", got " + s.str());
    if (!(batch.norm() == norm_))
        throw std::invalid_argument("target '" + id_ + "': batch normalization differs from the target's input spec");
}

FeatureBatch<float> TargetModelHandle::extract_features(const ImageBatch& batch) const {
    check_input(batch);
    *queries_ += batch.size();
    return FeatureBatch<float>(net_->features(batch.data()));
}

TensorF TargetModelHandle::logits(const ImageBatch& batch) const {
    check_input(batch);
    *queries_ += batch.size();
    return net_->logits(batch.data());
}

LabelBatch TargetModelHandle::classify(const ImageBatch& batch) const {
    if (task_ != Task::classification)
        throw std::logic_error("classify: target '" + id_ + "' is a retrieval model");
    return LabelBatch(nn::argmax_rows(logits(batch)));
}

// ------------------------------------------------------------- TargetProbe

TargetProbe::TargetProbe(const TargetModelHandle& target)
    : target_(&target), net_(target.arch(), target.net().seed()) {
    net_.copy_from(target.net());
    net_.set_param_grad(false);
}

TensorF TargetProbe::forward_features(const ImageBatch& batch) {
    target_->check_input(batch);
    return net_.forward_features(batch.data());
}

TensorF TargetProbe::backward_features(const TensorF& grad) {
    ++backward_passes_;
    return net_.backward_features(grad);
}

TensorF TargetProbe::forward_logits(const ImageBatch& batch) {
    target_->check_input(batch);
    return net_.forward_logits(batch.data());
}

TensorF TargetProbe::backward_logits(const TensorF& grad) {
    ++backward_passes_;
    return net_.backward_logits(grad);
}

double TargetProbe::ce_input_grad(const ImageBatch& batch, const LabelBatch& labels, TensorF& grad) {
    if (target_->task() != Task::classification)
        throw std::logic_error("cross-entropy attack needs a classification target");
    const TensorF logits = forward_logits(batch);
    TensorF dlogits;
    const double loss = nn::softmax_cross_entropy(logits, labels.values(), &dlogits);
    grad = backward_logits(dlogits);
    return loss;
}

// ---------------------------------------------------------- RetrievalIndex

RetrievalIndex::RetrievalIndex(FeatureBatch<float> features, LabelBatch ids, std::vector<int> cameras)
    : features_(std::move(features)), ids_(std::move(ids)), cameras_(std::move(cameras)) {
    if (features_.rows() != ids_.size())
        throw std::invalid_argument("retrieval index: " + std::to_string(features_.rows()) + " feature rows but " +
                                    std::to_string(ids_.size()) + " ids");
    if (!cameras_.empty() && static_cast<int>(cameras_.size()) != ids_.size())
        throw std::invalid_argument("retrieval index: camera list length differs from id count");
}

std::vector<std::vector<int>> rank_gallery(const FeatureBatch<float>& query, const RetrievalIndex& index) {
    const auto& gallery = index.features();
    if (gallery.rows() == 0) throw std::invalid_argument("rank_gallery: empty gallery");
    if (query.rows() > 0 && query.dim() != gallery.dim())
        throw ShapeError("rank_gallery: query dim " + std::to_string(query.dim()) + " vs gallery dim " +
                         std::to_string(gallery.dim()));
    const int d = gallery.dim();
    auto norm = [d](const float* v) {
        double s = 0.0;
        for (int k = 0; k < d; ++k) s += static_cast<double>(v[k]) * v[k];
        return std::sqrt(s);
    };
    std::vector<double> gnorm(gallery.rows());
    for (int j = 0; j < gallery.rows(); ++j) gnorm[j] = norm(gallery.row(j));

    std::vector<std::vector<int>> out(query.rows());
    std::vector<double> sim(gallery.rows());
    for (int i = 0; i < query.rows(); ++i) {
        const float* q = query.row(i);
        const double qn = norm(q);
        for (int j = 0; j < gallery.rows(); ++j) {
            const float* g = gallery.row(j);
            double dot = 0.0;
            for (int k = 0; k < d; ++k) dot += static_cast<double>(q[k]) * g[k];
            const double den = qn * gnorm[j];
            sim[j] = den > 0.0 ? dot / den : 0.0;
        }
        auto& order = out[i];
        order.resize(gallery.rows());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return sim[a] > sim[b]; });
    }
    return out;
}

// ------------------------------------------------------------- persistence

std::filesystem::path save_target(const TargetModelHandle& target, const std::filesystem::path& stem) {
    const auto manifest = std::filesystem::path(stem).replace_extension(".json");
    const auto blob = std::filesystem::path(stem).replace_extension(".bin");
    if (!manifest.parent_path().empty()) std::filesystem::create_directories(manifest.parent_path());
    auto params = const_cast<TargetNet&>(target.net()).params();
    nn::save_params(blob, params);
    const auto& a = target.arch();
    json j = {{"format", "ssae-target/1"},
              {"id", target.id()},
              {"task", to_string(target.task())},
              {"arch",
               {{"in_channels", a.in_channels},
                {"image_size", a.image_size},
                {"width", a.width},
                {"feature_dim", a.feature_dim},
                {"num_classes", a.num_classes},
                {"signed_features", a.signed_features}}},
              {"seed", target.net().seed()},
              {"normalization", {{"mean", target.norm().mean()}, {"std", target.norm().std()}}},
              {"blob", blob.filename().string()},
              {"digest", target.digest()}};
    std::ofstream out(manifest, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write target manifest " + manifest.string());
    out << j.dump(2) << '\n';
    if (!out) throw std::runtime_error("write failed for " + manifest.string());
    return manifest;
}

TargetModelHandle load_target(const std::filesystem::path& path) {
    const auto manifest = std::filesystem::path(path).replace_extension(".json");
    std::ifstream in(manifest);
    if (!in) throw std::runtime_error("target weights manifest not found: " + manifest.string());
    json j;
    try {
        in >> j;
        if (j.value("format", "") != "ssae-target/1")
            throw std::runtime_error(manifest.string() + " is not a target manifest");
        const auto& ja = j.at("arch");
        TargetArch a;
        a.in_channels = ja.at("in_channels").get<int>();
        a.image_size = ja.at("image_size").get<int>();
        a.width = ja.at("width").get<int>();
        a.feature_dim = ja.at("feature_dim").get<int>();
        a.num_classes = ja.at("num_classes").get<int>();
        a.signed_features = ja.value("signed_features", false);
        TargetNet net(a, j.at("seed").get<std::uint64_t>());
        const auto blob = manifest.parent_path() / j.at("blob").get<std::string>();
        nn::load_params(blob, net.params());
        NormalizationSpec norm(j.at("normalization").at("mean").get<std::vector<float>>(),
                               j.at("normalization").at("std").get<std::vector<float>>());
        TargetModelHandle h(j.at("id").get<std::string>(), task_from_string(j.at("task").get<std::string>()), net,
                            norm);
        if (h.digest() != j.at("digest").get<std::string>())
            throw std::runtime_error("target weights digest mismatch for " + blob.string());
        return h;
    } catch (const json::exception& e) {
        throw std::runtime_error("corrupt target manifest " + manifest.string() + ": " + e.what());
    }
}

}  // namespace ssae
