#pragma once

#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "ssae/attackers.hpp"
#include "ssae/dataset.hpp"
#include "ssae/target_zoo.hpp"

namespace ssae {

// ------------------------------------------------------------ image quality

struct PSNR {
    double standard_db = 0.0;
    double doubled_db = 0.0;  // 2 x standard ("20 log" convention)
};

/// 10 log10(max^2 / MSE); identical inputs give +inf for both values.
PSNR psnr(std::span<const float> a, std::span<const float> b, double max_val = 1.0);
/// PSNR from a precomputed mean squared error.
PSNR psnr_from_mse(double mse, double max_val = 1.0);

struct SSIMOptions {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double data_range = 1.0;
};

/// Mean SSIM with a Gaussian window ('valid' positions only) for one
/// C x H x W image pair (item `n` of each tensor), averaged over channels.
double ssim(const TensorF& a, const TensorF& b, int n = 0, const SSIMOptions& opt = {});

/// Largest scale count (<= 5) the image supports: the smaller side must
/// exceed (window - 1) * 2^(scales - 1).
int ms_ssim_scales(int min_side, const SSIMOptions& opt = {});

/// Multi-scale SSIM with the standard five weights, renormalized when fewer
/// scales are used; `scales` <= 0 picks ms_ssim_scales(). Negative
/// per-scale terms are clamped to zero before exponentiation.
double ms_ssim(const TensorF& a, const TensorF& b, int n = 0, int scales = 0, const SSIMOptions& opt = {});

struct IQAResult {
    double ssim = 1.0;
    double ms_ssim = 1.0;
    double psnr_standard_db = std::numeric_limits<double>::infinity();
    double psnr_doubled_db = std::numeric_limits<double>::infinity();
    int ms_ssim_scales = 0;
};

// ------------------------------------------------------------- task metrics

/// Percentage of matching entries.
double accuracy(const std::vector<int>& preds, const std::vector<int>& labels);

/// Precision averaged over the positions of relevant items in a ranked
/// 0/1 relevance list. 0 when nothing is relevant.
double average_precision(const std::vector<bool>& relevant);

struct RetrievalScores {
    double rank1 = 0.0;  // percent
    double map = 0.0;    // percent
    int valid_queries = 0;
    int skipped_queries = 0;  // no relevant gallery item
};

/// CMC rank-1 and mAP. When both camera lists are given, gallery items
/// sharing identity and camera with the query are ignored.
RetrievalScores retrieval_scores(const std::vector<std::vector<int>>& rankings, const std::vector<int>& query_ids,
                                 const std::vector<int>& gallery_ids, const std::vector<int>& query_cams = {},
                                 const std::vector<int>& gallery_cams = {});
double cmc_rank1(const std::vector<std::vector<int>>& rankings, const std::vector<int>& query_ids,
                 const std::vector<int>& gallery_ids);
double mean_average_precision(const std::vector<std::vector<int>>& rankings, const std::vector<int>& query_ids,
                              const std::vector<int>& gallery_ids);

// ------------------------------------------------------------ attack reports

struct MetricPair {
    std::string name;  // accuracy | rank1 | mAP
    double clean = 0.0;
    double attacked = 0.0;
    double degradation = 0.0;  // clean - attacked
};

struct AttackReport {
    std::string attacker;
    std::string target;
    std::string dataset;
    std::string task;
    double delta = 0.0;
    int images = 0;
    std::vector<MetricPair> metrics;
    IQAResult iqa;
    double fps = 0.0;  // 0 when not measured

    const MetricPair& metric(const std::string& name) const;
};

struct EvalOptions {
    int batch_size = 100;
    /// Directory for lossless PNG pairs of the first `export_images` items.
    std::filesystem::path export_dir;
    int export_images = 0;
};

/// Clean and attacked passes with identical preprocessing. Classification
/// uses the `test` split; retrieval perturbs the `query` split and ranks it
/// against the clean `gallery` split. IQA compares tensor2img of the clean
/// and attacked images: SSIM/MS-SSIM averaged per image, PSNR from the
/// pooled MSE.
AttackReport evaluate_attack(Attacker& attacker, const TargetModelHandle& target, const Dataset& data,
                             const EvalOptions& opt = {});

enum class TransferMode { cross_model, cross_dataset, cross_both, cross_task };

std::string to_string(TransferMode m);
TransferMode transfer_mode_from_string(const std::string& s);

struct TransferCell {
    std::string attacker;
    std::string train_target;
    std::string eval_target;
    std::string train_dataset;
    std::string eval_dataset;
    std::string metric;
    double clean = 0.0;
    double attacked = 0.0;
    double degradation = 0.0;
};

/// Evaluates one fixed attacker over the (target, dataset) pairs selected
/// by `mode`:
///   cross_model   - every target on the training dataset
///   cross_dataset - the training target on every dataset
///   cross_both    - every target on every dataset
///   cross_task    - targets whose task differs from the training target's,
///                   on every dataset
std::vector<TransferCell> transfer_matrix(Attacker& attacker, const TargetModelHandle& train_target,
                                          const std::string& train_dataset,
                                          const std::vector<const TargetModelHandle*>& targets,
                                          const std::vector<const Dataset*>& datasets, TransferMode mode,
                                          const EvalOptions& opt = {});

struct ThroughputOptions {
    int images = 200;
    int warmup = 20;
    int batch_size = 1;
};

/// Images per second of `attacker` alone (for baselines this includes their
/// gradient queries) over `images` inputs after `warmup` untimed ones.
double throughput(Attacker& attacker, const Dataset& data, const NormalizationSpec& norm,
                  const ThroughputOptions& opt = {});

// ------------------------------------------------------------------ output

void write_reports_csv(const std::filesystem::path& path, const std::vector<AttackReport>& reports);
void write_reports_json(const std::filesystem::path& path, const std::vector<AttackReport>& reports);
void write_transfer_csv(const std::filesystem::path& path, const std::vector<TransferCell>& cells);
void write_transfer_json(const std::filesystem::path& path, const std::vector<TransferCell>& cells);
/// Plain-text grid: rows = eval target, columns = eval dataset, cells
/// "clean->attacked (degradation)".
std::string transfer_grid(const std::vector<TransferCell>& cells);

}  // namespace ssae
