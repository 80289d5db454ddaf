#include "ssae/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"

namespace ssae {

using nlohmann::json;

// ------------------------------------------------------------ image quality

PSNR psnr_from_mse(double mse, double max_val) {
    if (mse <= 0.0) {
        const double inf = std::numeric_limits<double>::infinity();
        return {inf, inf};
    }
    const double s = 10.0 * std::log10(max_val * max_val / mse);
    return {s, 2.0 * s};
}

PSNR psnr(std::span<const float> a, std::span<const float> b, double max_val) {
    if (a.size() != b.size()) throw ShapeError("psnr: inputs differ in size");
    if (a.empty()) throw ShapeError("psnr: empty input");
    double se = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - b[i];
        se += d * d;
    }
    return psnr_from_mse(se / static_cast<double>(a.size()), max_val);
}

namespace {

using Plane = std::vector<double>;

std::vector<double> gaussian_window(const SSIMOptions& opt) {
    std::vector<double> g(opt.window);
    const double r = (opt.window - 1) / 2.0;
    double sum = 0.0;
    for (int i = 0; i < opt.window; ++i) {
        g[i] = std::exp(-(i - r) * (i - r) / (2.0 * opt.sigma * opt.sigma));
        sum += g[i];
    }
    for (auto& v : g) v /= sum;
    return g;
}

/// Separable 'valid' filtering of an h x w plane.
Plane filter_valid(const Plane& x, int h, int w, const std::vector<double>& g) {
    const int k = static_cast<int>(g.size());
    const int oh = h - k + 1, ow = w - k + 1;
    Plane tmp(static_cast<std::size_t>(h) * ow, 0.0);
    for (int y = 0; y < h; ++y)
        for (int xo = 0; xo < ow; ++xo) {
            double s = 0.0;
            for (int i = 0; i < k; ++i) s += g[i] * x[static_cast<std::size_t>(y) * w + xo + i];
            tmp[static_cast<std::size_t>(y) * ow + xo] = s;
        }
    Plane out(static_cast<std::size_t>(oh) * ow, 0.0);
    for (int yo = 0; yo < oh; ++yo)
        for (int xo = 0; xo < ow; ++xo) {
            double s = 0.0;
            for (int i = 0; i < k; ++i) s += g[i] * tmp[static_cast<std::size_t>(yo + i) * ow + xo];
            out[static_cast<std::size_t>(yo) * ow + xo] = s;
        }
    return out;
}

struct SSIMPair {
    double ssim;
    double cs;
};

SSIMPair ssim_plane(const Plane& a, const Plane& b, int h, int w, const SSIMOptions& opt) {
    if (h < opt.window || w < opt.window)
        throw ShapeError("ssim: image " + std::to_string(h) + "x" + std::to_string(w) + " smaller than the " +
                         std::to_string(opt.window) + "-pixel window");
    const auto g = gaussian_window(opt);
    Plane aa(a.size()), bb(a.size()), ab(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        aa[i] = a[i] * a[i];
        bb[i] = b[i] * b[i];
        ab[i] = a[i] * b[i];
    }
    const Plane mu_a = filter_valid(a, h, w, g), mu_b = filter_valid(b, h, w, g);
    const Plane e_aa = filter_valid(aa, h, w, g), e_bb = filter_valid(bb, h, w, g), e_ab = filter_valid(ab, h, w, g);
    const double c1 = std::pow(opt.k1 * opt.data_range, 2), c2 = std::pow(opt.k2 * opt.data_range, 2);
    double s_sum = 0.0, cs_sum = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
        const double va = e_aa[i] - mu_a[i] * mu_a[i];
        const double vb = e_bb[i] - mu_b[i] * mu_b[i];
        const double cov = e_ab[i] - mu_a[i] * mu_b[i];
        const double cs = (2.0 * cov + c2) / (va + vb + c2);
        const double l = (2.0 * mu_a[i] * mu_b[i] + c1) / (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1);
        s_sum += l * cs;
        cs_sum += cs;
    }
    const double n = static_cast<double>(mu_a.size());
    return {s_sum / n, cs_sum / n};
}

Plane channel_plane(const TensorF& t, int n, int c) {
    const Shape s = t.shape();
    const float* p = t.item(n) + static_cast<std::size_t>(c) * s.plane();
    return Plane(p, p + s.plane());
}

/// 2x2 average pooling, dropping a trailing odd row/column.
Plane downsample(const Plane& x, int& h, int& w) {
    const int oh = h / 2, ow = w / 2;
    Plane out(static_cast<std::size_t>(oh) * ow);
    for (int y = 0; y < oh; ++y)
        for (int xo = 0; xo < ow; ++xo) {
            const std::size_t r0 = static_cast<std::size_t>(2 * y) * w + 2 * xo;
            out[static_cast<std::size_t>(y) * ow + xo] = 0.25 * (x[r0] + x[r0 + 1] + x[r0 + w] + x[r0 + w + 1]);
        }
    h = oh;
    w = ow;
    return out;
}

void require_pair(const TensorF& a, const TensorF& b, int n, const char* what) {
    if (!(a.shape() == b.shape())) throw ShapeError(std::string(what) + ": shapes differ, " + a.shape().str() + " vs " + b.shape().str());
    if (n < 0 || n >= a.shape().n) throw std::out_of_range(std::string(what) + ": item index out of range");
}

}  // namespace

double ssim(const TensorF& a, const TensorF& b, int n, const SSIMOptions& opt) {
    require_pair(a, b, n, "ssim");
    const Shape s = a.shape();
    double total = 0.0;
    for (int c = 0; c < s.c; ++c) total += ssim_plane(channel_plane(a, n, c), channel_plane(b, n, c), s.h, s.w, opt).ssim;
    return total / s.c;
}

int ms_ssim_scales(int min_side, const SSIMOptions& opt) {
    int scales = 0;
    while (scales < 5 && min_side > (opt.window - 1) * (1 << scales)) ++scales;
    if (scales == 0)
        throw ShapeError("ms_ssim: side " + std::to_string(min_side) + " too small for the " +
                         std::to_string(opt.window) + "-pixel window");
    return scales;
}

double ms_ssim(const TensorF& a, const TensorF& b, int n, int scales, const SSIMOptions& opt) {
    require_pair(a, b, n, "ms_ssim");
    static constexpr double kWeights[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
    const Shape s = a.shape();
    const int supported = ms_ssim_scales(std::min(s.h, s.w), opt);
    if (scales <= 0) scales = supported;
    if (scales > supported)
        throw ShapeError("ms_ssim: " + std::to_string(scales) + " scales need a side > " +
                         std::to_string((opt.window - 1) * (1 << (scales - 1))) + ", got " +
                         std::to_string(std::min(s.h, s.w)));
    double wsum = 0.0;
    for (int j = 0; j < scales; ++j) wsum += kWeights[j];

    double total = 0.0;
    for (int c = 0; c < s.c; ++c) {
        Plane pa = channel_plane(a, n, c), pb = channel_plane(b, n, c);
        int h = s.h, w = s.w;
        double value = 1.0;
        for (int j = 0; j < scales; ++j) {
            const SSIMPair r = ssim_plane(pa, pb, h, w, opt);
            const double term = std::max(j + 1 == scales ? r.ssim : r.cs, 0.0);
            value *= std::pow(term, kWeights[j] / wsum);
            if (j + 1 < scales) {
                int h2 = h, w2 = w;
                pa = downsample(pa, h, w);
                pb = downsample(pb, h2, w2);
            }
        }
        total += value;
    }
    return total / s.c;
}

// ------------------------------------------------------------- task metrics

double accuracy(const std::vector<int>& preds, const std::vector<int>& labels) {
    if (preds.size() != labels.size()) throw std::invalid_argument("accuracy: prediction/label counts differ");
    if (preds.empty()) throw std::invalid_argument("accuracy: no predictions");
    std::size_t ok = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) ok += preds[i] == labels[i];
    return 100.0 * static_cast<double>(ok) / static_cast<double>(preds.size());
}

double average_precision(const std::vector<bool>& relevant) {
    double sum = 0.0;
    int hits = 0;
    for (std::size_t k = 0; k < relevant.size(); ++k)
        if (relevant[k]) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(k + 1);
        }
    return hits ? sum / hits : 0.0;
}

RetrievalScores retrieval_scores(const std::vector<std::vector<int>>& rankings, const std::vector<int>& query_ids,
                                 const std::vector<int>& gallery_ids, const std::vector<int>& query_cams,
                                 const std::vector<int>& gallery_cams) {
    if (rankings.size() != query_ids.size()) throw std::invalid_argument("retrieval_scores: ranking/query counts differ");
    const bool cams = !query_cams.empty() && !gallery_cams.empty();
    if (cams && (query_cams.size() != query_ids.size() || gallery_cams.size() != gallery_ids.size()))
        throw std::invalid_argument("retrieval_scores: camera list lengths differ from id lists");
    RetrievalScores out;
    double r1 = 0.0, ap = 0.0;
    for (std::size_t q = 0; q < rankings.size(); ++q) {
        std::vector<bool> rel;
        rel.reserve(rankings[q].size());
        for (int j : rankings[q]) {
            const bool same_id = gallery_ids.at(j) == query_ids[q];
            if (cams && same_id && gallery_cams[j] == query_cams[q]) continue;
            rel.push_back(same_id);
        }
        if (std::find(rel.begin(), rel.end(), true) == rel.end()) {
            ++out.skipped_queries;
            continue;
        }
        ++out.valid_queries;
        r1 += rel.front() ? 1.0 : 0.0;
        ap += average_precision(rel);
    }
    if (out.valid_queries == 0) throw std::invalid_argument("retrieval_scores: no query has a relevant gallery item");
    out.rank1 = 100.0 * r1 / out.valid_queries;
    out.map = 100.0 * ap / out.valid_queries;
    return out;
}

double cmc_rank1(const std::vector<std::vector<int>>& rankings, const std::vector<int>& query_ids,
                 const std::vector<int>& gallery_ids) {
    return retrieval_scores(rankings, query_ids, gallery_ids).rank1;
}

double mean_average_precision(const std::vector<std::vector<int>>& rankings, const std::vector<int>& query_ids,
                              const std::vector<int>& gallery_ids) {
    return retrieval_scores(rankings, query_ids, gallery_ids).map;
}

// ------------------------------------------------------------ attack reports

const MetricPair& AttackReport::metric(const std::string& name) const {
    for (const auto& m : metrics)
        if (m.name == name) return m;
    throw std::out_of_range("report has no metric '" + name + "'");
}

namespace {

std::vector<int> iota_vec(int n) {
    std::vector<int> v(n);
    std::iota(v.begin(), v.end(), 0);
    return v;
}

/// Accumulates IQA over image pairs in pixel space.
struct IQAAccumulator {
    double ssim_sum = 0.0, ms_sum = 0.0, se = 0.0;
    std::size_t values = 0;
    int images = 0;
    int scales = 0;

    void add(const ImageBatch& clean, const ImageBatch& attacked) {
        const TensorF a = tensor2img(clean), b = tensor2img(attacked);
        const Shape s = a.shape();
        scales = ms_ssim_scales(std::min(s.h, s.w));
        for (int n = 0; n < s.n; ++n) {
            ssim_sum += ssim(a, b, n);
            ms_sum += ms_ssim(a, b, n, scales);
        }
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double d = static_cast<double>(a[i]) - b[i];
            se += d * d;
        }
        values += a.size();
        images += s.n;
    }

    IQAResult result() const {
        IQAResult r;
        if (images == 0) return r;
        r.ssim = ssim_sum / images;
        r.ms_ssim = ms_sum / images;
        const PSNR p = psnr_from_mse(se / static_cast<double>(values));
        r.psnr_standard_db = p.standard_db;
        r.psnr_doubled_db = p.doubled_db;
        r.ms_ssim_scales = scales;
        return r;
    }
};

void export_pairs(const EvalOptions& opt, int first, const ImageBatch& clean, const ImageBatch& attacked) {
    if (opt.export_dir.empty()) return;
    const TensorF a = tensor2img(clean), b = tensor2img(attacked);
    for (int n = 0; n < clean.size() && first + n < opt.export_images; ++n) {
        char name[64];
        std::snprintf(name, sizeof name, "%05d", first + n);
        write_png(opt.export_dir / (std::string(name) + "_clean.png"), a, n);
        write_png(opt.export_dir / (std::string(name) + "_attacked.png"), b, n);
    }
}

AttackReport eval_classification(Attacker& attacker, const TargetModelHandle& target, const Dataset& data,
                                 const EvalOptions& opt) {
    const Dataset test = data.subset(Split::test);
    if (test.size() == 0) throw std::invalid_argument("evaluate: dataset '" + data.name + "' has no test split");
    const auto labels = test.labels();
    const auto order = iota_vec(test.size());
    std::vector<int> clean_pred, attacked_pred;
    IQAAccumulator iqa;
    for (int first = 0; first < test.size(); first += opt.batch_size) {
        const int count = std::min(opt.batch_size, test.size() - first);
        const ImageBatch x = test.batch(order, first, count, target.norm());
        const LabelBatch y(std::vector<int>(labels.begin() + first, labels.begin() + first + count));
        const ImageBatch adv = attacker.attack(x, y);
        const auto pc = target.classify(x).values();
        const auto pa = target.classify(adv).values();
        clean_pred.insert(clean_pred.end(), pc.begin(), pc.end());
        attacked_pred.insert(attacked_pred.end(), pa.begin(), pa.end());
        iqa.add(x, adv);
        export_pairs(opt, first, x, adv);
    }
    AttackReport r;
    r.images = test.size();
    const double c = accuracy(clean_pred, labels), a = accuracy(attacked_pred, labels);
    r.metrics.push_back({"accuracy", c, a, c - a});
    r.iqa = iqa.result();
    return r;
}

AttackReport eval_retrieval(Attacker& attacker, const TargetModelHandle& target, const Dataset& data,
                            const EvalOptions& opt) {
    const Dataset query = data.subset(Split::query);
    const Dataset gallery = data.subset(Split::gallery);
    if (query.size() == 0 || gallery.size() == 0)
        throw std::invalid_argument("evaluate: dataset '" + data.name + "' needs query and gallery splits");

    auto features_of = [&](const Dataset& d, Attacker* atk, IQAAccumulator* iqa) {
        const auto order = iota_vec(d.size());
        const auto labels = d.labels();
        std::vector<TensorF> rows;
        for (int first = 0; first < d.size(); first += opt.batch_size) {
            const int count = std::min(opt.batch_size, d.size() - first);
            ImageBatch x = d.batch(order, first, count, target.norm());
            if (atk) {
                const LabelBatch y(std::vector<int>(labels.begin() + first, labels.begin() + first + count));
                ImageBatch adv = atk->attack(x, y);
                iqa->add(x, adv);
                export_pairs(opt, first, x, adv);
                x = std::move(adv);
            }
            rows.push_back(target.extract_features(x).values());
        }
        return FeatureBatch<float>(concat_batch<float>(rows));
    };

    const bool cams = query.has_cameras() && gallery.has_cameras();
    const RetrievalIndex index(features_of(gallery, nullptr, nullptr), LabelBatch(gallery.labels()),
                               cams ? gallery.cameras() : std::vector<int>{});
    IQAAccumulator iqa;
    const auto clean_rank = rank_gallery(features_of(query, nullptr, nullptr), index);
    const auto adv_rank = rank_gallery(features_of(query, &attacker, &iqa), index);
    const auto qc = cams ? query.cameras() : std::vector<int>{};
    const RetrievalScores c = retrieval_scores(clean_rank, query.labels(), gallery.labels(), qc, index.cameras());
    const RetrievalScores a = retrieval_scores(adv_rank, query.labels(), gallery.labels(), qc, index.cameras());

    AttackReport r;
    r.images = query.size();
    r.metrics.push_back({"rank1", c.rank1, a.rank1, c.rank1 - a.rank1});
    r.metrics.push_back({"mAP", c.map, a.map, c.map - a.map});
    r.iqa = iqa.result();
    return r;
}

}  // namespace

AttackReport evaluate_attack(Attacker& attacker, const TargetModelHandle& target, const Dataset& data,
                             const EvalOptions& opt) {
    if (opt.batch_size < 1) throw std::invalid_argument("evaluate: batch_size must be >= 1");
    AttackReport r = target.task() == Task::classification ? eval_classification(attacker, target, data, opt)
                                                           : eval_retrieval(attacker, target, data, opt);
    r.attacker = attacker.name();
    r.target = target.id();
    r.dataset = data.name;
    r.task = to_string(target.task());
    r.delta = attacker.delta();
    return r;
}

std::string to_string(TransferMode m) {
    switch (m) {
        case TransferMode::cross_model: return "cross_model";
        case TransferMode::cross_dataset: return "cross_dataset";
        case TransferMode::cross_both: return "cross_both";
        case TransferMode::cross_task: return "cross_task";
    }
    return "cross_model";
}

TransferMode transfer_mode_from_string(const std::string& s) {
    for (auto m : {TransferMode::cross_model, TransferMode::cross_dataset, TransferMode::cross_both,
                   TransferMode::cross_task})
        if (to_string(m) == s) return m;
    throw std::invalid_argument("unknown transfer mode '" + s +
                                "' (expected cross_model|cross_dataset|cross_both|cross_task)");
}

std::vector<TransferCell> transfer_matrix(Attacker& attacker, const TargetModelHandle& train_target,
                                          const std::string& train_dataset,
                                          const std::vector<const TargetModelHandle*>& targets,
                                          const std::vector<const Dataset*>& datasets, TransferMode mode,
                                          const EvalOptions& opt) {
    std::vector<TransferCell> cells;
    for (const auto* t : targets) {
        if (mode == TransferMode::cross_dataset && t->id() != train_target.id()) continue;
        if (mode == TransferMode::cross_task && t->task() == train_target.task()) continue;
        for (const auto* d : datasets) {
            if (mode == TransferMode::cross_model && d->name != train_dataset) continue;
            const AttackReport r = evaluate_attack(attacker, *t, *d, opt);
            const MetricPair& m = r.metrics.front();
            cells.push_back({attacker.name(), train_target.id(), t->id(), train_dataset, d->name, m.name, m.clean,
                             m.attacked, m.degradation});
        }
    }
    if (cells.empty())
        throw std::invalid_argument("transfer_matrix: mode " + to_string(mode) + " selects no (target, dataset) pair");
    return cells;
}

double throughput(Attacker& attacker, const Dataset& data, const NormalizationSpec& norm,
                  const ThroughputOptions& opt) {
    if (opt.images < 1 || opt.batch_size < 1 || opt.warmup < 0)
        throw std::invalid_argument("throughput: images and batch_size must be >= 1");
    if (data.size() == 0) throw std::invalid_argument("throughput: empty dataset");
    const auto labels = data.labels();
    const int bs = opt.batch_size;
    auto run = [&](int start, int count) {
        for (int done = 0; done < count; done += bs) {
            const int n = std::min(bs, count - done);
            std::vector<int> order(n);
            std::vector<int> y(n);
            for (int k = 0; k < n; ++k) {
                order[k] = (start + done + k) % data.size();
                y[k] = labels[order[k]];
            }
            const ImageBatch x = data.batch(order, 0, n, norm);
            attacker.attack(x, LabelBatch(y));
        }
    };
    run(0, opt.warmup);
    const auto t0 = std::chrono::steady_clock::now();
    run(opt.warmup, opt.images);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return opt.images / secs;
}

// ------------------------------------------------------------------ output

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
    if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    return out;
}

std::string num(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

json jnum(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

}  // namespace

void write_reports_csv(const std::filesystem::path& path, const std::vector<AttackReport>& reports) {
    auto out = open_out(path);
    out << "attacker,target,dataset,task,delta,images,metric,clean,attacked,degradation,ssim,ms_ssim,"
           "ms_ssim_scales,psnr_standard_db,psnr_doubled_db,fps\n";
    for (const auto& r : reports)
        for (const auto& m : r.metrics)
            out << r.attacker << ',' << r.target << ',' << r.dataset << ',' << r.task << ',' << num(r.delta) << ','
                << r.images << ',' << m.name << ',' << num(m.clean) << ',' << num(m.attacked) << ','
                << num(m.degradation) << ',' << num(r.iqa.ssim) << ',' << num(r.iqa.ms_ssim) << ','
                << r.iqa.ms_ssim_scales << ',' << num(r.iqa.psnr_standard_db) << ',' << num(r.iqa.psnr_doubled_db)
                << ',' << num(r.fps) << '\n';
}

void write_reports_json(const std::filesystem::path& path, const std::vector<AttackReport>& reports) {
    json arr = json::array();
    for (const auto& r : reports) {
        json metrics = json::array();
        for (const auto& m : r.metrics)
            metrics.push_back({{"metric", m.name},
                               {"clean", jnum(m.clean)},
                               {"attacked", jnum(m.attacked)},
                               {"degradation", jnum(m.degradation)}});
        arr.push_back({{"attacker", r.attacker},
                       {"target", r.target},
                       {"dataset", r.dataset},
                       {"task", r.task},
                       {"delta", jnum(r.delta)},
                       {"images", r.images},
                       {"metrics", metrics},
                       {"ssim", jnum(r.iqa.ssim)},
                       {"ms_ssim", jnum(r.iqa.ms_ssim)},
                       {"ms_ssim_scales", r.iqa.ms_ssim_scales},
                       {"psnr_standard_db", jnum(r.iqa.psnr_standard_db)},
                       {"psnr_doubled_db", jnum(r.iqa.psnr_doubled_db)},
                       {"fps", jnum(r.fps)}});
    }
    open_out(path) << arr.dump(2) << '\n';
}

void write_transfer_csv(const std::filesystem::path& path, const std::vector<TransferCell>& cells) {
    auto out = open_out(path);
    out << "attacker,train_target,eval_target,train_dataset,eval_dataset,metric,clean,attacked,degradation\n";
    for (const auto& c : cells)
        out << c.attacker << ',' << c.train_target << ',' << c.eval_target << ',' << c.train_dataset << ','
            << c.eval_dataset << ',' << c.metric << ',' << num(c.clean) << ',' << num(c.attacked) << ','
            << num(c.degradation) << '\n';
}

void write_transfer_json(const std::filesystem::path& path, const std::vector<TransferCell>& cells) {
    json arr = json::array();
    for (const auto& c : cells)
        arr.push_back({{"attacker", c.attacker},
                       {"train_target", c.train_target},
                       {"eval_target", c.eval_target},
                       {"train_dataset", c.train_dataset},
                       {"eval_dataset", c.eval_dataset},
                       {"metric", c.metric},
                       {"clean", jnum(c.clean)},
                       {"attacked", jnum(c.attacked)},
                       {"degradation", jnum(c.degradation)}});
    open_out(path) << arr.dump(2) << '\n';
}

std::string transfer_grid(const std::vector<TransferCell>& cells) {
    std::vector<std::string> rows, cols;
    std::map<std::pair<std::string, std::string>, std::string> text;
    for (const auto& c : cells) {
        if (std::find(rows.begin(), rows.end(), c.eval_target) == rows.end()) rows.push_back(c.eval_target);
        if (std::find(cols.begin(), cols.end(), c.eval_dataset) == cols.end()) cols.push_back(c.eval_dataset);
        char buf[96];
        std::snprintf(buf, sizeof buf, "%s %.1f->%.1f (-%.1f)", c.metric.c_str(), c.clean, c.attacked,
                      c.degradation);
        text[{c.eval_target, c.eval_dataset}] = buf;
    }
    std::size_t w0 = std::string("target \\ dataset").size();
    for (const auto& r : rows) w0 = std::max(w0, r.size());
    std::vector<std::size_t> widths;
    for (const auto& c : cols) {
        std::size_t w = c.size();
        for (const auto& r : rows) {
            auto it = text.find({r, c});
            if (it != text.end()) w = std::max(w, it->second.size());
        }
        widths.push_back(w);
    }
    auto pad = [](const std::string& s, std::size_t w) { return s + std::string(w - s.size(), ' '); };
    std::ostringstream os;
    os << pad("target \\ dataset", w0);
    for (std::size_t j = 0; j < cols.size(); ++j) os << " | " << pad(cols[j], widths[j]);
    os << '\n' << std::string(w0, '-');
    for (std::size_t j = 0; j < cols.size(); ++j) os << "-+-" << std::string(widths[j], '-');
    os << '\n';
    for (const auto& r : rows) {
        os << pad(r, w0);
        for (std::size_t j = 0; j < cols.size(); ++j) {
            auto it = text.find({r, cols[j]});
            os << " | " << pad(it == text.end() ? "-" : it->second, widths[j]);
        }
        os << '\n';
    }
    return os.str();
}

}  // namespace ssae
