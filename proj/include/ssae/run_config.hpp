#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "ssae/baselines.hpp"
#include "ssae/dataset.hpp"
#include "ssae/metrics.hpp"
#include "ssae/ssae_model.hpp"
#include "ssae/target_zoo.hpp"
#include "ssae/trainer.hpp"

namespace ssae {

/// Invalid or inconsistent run configuration; the message names the key.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Where images come from.
///   synthetic-shapes     - builtin 10-class generator (seed, count, test_count, size)
///   synthetic-identities - builtin retrieval set (seed, identities, *_per_id, size)
///   folder               - class-per-folder tree at `path`
///   manifest             - CSV manifest at `path`
struct DatasetSpec {
    std::string id;
    std::string source = "synthetic-shapes";
    std::filesystem::path path;
    std::uint64_t seed = 7;
    int count = 1000;
    int test_count = 200;
    int size = 32;
    int identities = 20;
    int train_per_id = 20;
    int query_per_id = 4;
    int gallery_per_id = 8;

    Dataset load() const;
};

struct TargetEntry {
    std::string id;
    std::filesystem::path path;  // save_target manifest
};

/// Recipe for `fit-target`: a desk CNN trained on the run's dataset.
struct FitTargetSpec {
    std::string id = "cnn";
    TargetArch arch;
    TargetTrainConfig train;
};

struct EvalSettings {
    int batch_size = 100;
    std::vector<std::string> baselines{"fgsm", "pgd"};
    int pgd_steps = 40;
    double pgd_step_size = 0.01;
    int export_images = 0;
    std::string transfer_mode = "cross_model";
    std::vector<std::string> transfer_targets;   // empty: all targets
    std::vector<std::string> transfer_datasets;  // empty: all datasets
    int bench_images = 200;
    int bench_warmup = 20;
    int bench_runs = 3;
};

struct AttackSettings {
    double amplify = 10.0;
    int max_images = 0;  // 0: every image of the split
    std::string split;   // empty: test (classification) or query (retrieval)
};

struct RunConfig {
    Task task = Task::classification;
    DatasetSpec dataset;
    std::vector<DatasetSpec> extra_datasets;
    std::vector<TargetEntry> targets;
    std::string attack_target;  // empty: first target
    FitTargetSpec fit_target;
    SSAEConfig ssae;
    TrainConfig train;
    EvalSettings eval;
    AttackSettings attack;
    std::filesystem::path checkpoint;
    std::filesystem::path output = "runs/default";

    /// Target the attacker is trained against.
    const TargetEntry& primary_target() const;
    const TargetEntry& target(const std::string& id) const;
    const DatasetSpec& dataset_by_id(const std::string& id) const;
};

/// Parses a config document. Relative paths resolve against `base_dir`.
/// Unknown keys, wrong types and out-of-range values throw ConfigError.
RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

/// Effective configuration with every default filled in and absolute paths.
nlohmann::json to_json(const RunConfig& cfg);

/// Checks invariants: ids unique and referenced paths present. With
/// `need_targets` at least one target entry must exist on disk.
void validate(const RunConfig& cfg, bool need_targets);

}  // namespace ssae
