#include "ssae/run_config.hpp"

#include <fstream>
#include <set>

namespace ssae {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Reads fields of one JSON object, rejecting unknown keys.
class Section {
public:
    Section(const json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
        if (!j_.is_object()) throw ConfigError(where("") + " must be an object");
    }

    template <typename T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError(where(key) + " has the wrong type");
        }
    }

    void get_path(const char* key, fs::path& out, const fs::path& base) {
        std::string s;
        get(key, s);
        if (!s.empty()) out = resolve(s, base);
    }

    const json* child(const char* key) {
        seen_.insert(key);
        return j_.contains(key) ? &j_.at(key) : nullptr;
    }

    void finish() const {
        for (const auto& [k, v] : j_.items())
            if (!seen_.count(k)) throw ConfigError("unknown key '" + where(k) + "'");
    }

    std::string where(const std::string& key) const {
        if (prefix_.empty()) return key;
        return key.empty() ? prefix_ : prefix_ + "." + key;
    }

    static fs::path resolve(const std::string& s, const fs::path& base) {
        const fs::path p(s);
        return p.is_absolute() ? p : fs::absolute(base / p).lexically_normal();
    }

private:
    const json& j_;
    std::string prefix_;
    std::set<std::string> seen_;
};

template <typename F>
void checked(const std::string& key, F&& f) {
    try {
        f();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        const std::string msg = e.what();
        throw ConfigError(msg.rfind(key, 0) == 0 ? msg : key + ": " + msg);
    }
}

void require(bool ok, const std::string& key, const std::string& what) {
    if (!ok) throw ConfigError(key + " " + what);
}

DatasetSpec parse_dataset(const json& j, const std::string& prefix, const fs::path& base) {
    DatasetSpec d;
    Section s(j, prefix);
    s.get("id", d.id);
    s.get("source", d.source);
    s.get_path("path", d.path, base);
    s.get("seed", d.seed);
    s.get("count", d.count);
    s.get("test_count", d.test_count);
    s.get("size", d.size);
    s.get("identities", d.identities);
    s.get("train_per_id", d.train_per_id);
    s.get("query_per_id", d.query_per_id);
    s.get("gallery_per_id", d.gallery_per_id);
    s.finish();
    static const std::set<std::string> sources{"synthetic-shapes", "synthetic-identities", "folder", "manifest"};
    require(sources.count(d.source) > 0, s.where("source"),
            "must be synthetic-shapes|synthetic-identities|folder|manifest, got '" + d.source + "'");
    if (d.source == "folder" || d.source == "manifest")
        require(!d.path.empty(), s.where("path"), "is required for source '" + d.source + "'");
    if (d.source == "synthetic-shapes") {
        require(d.count > 0, s.where("count"), "must be > 0");
        require(d.test_count >= 0 && d.test_count <= d.count, s.where("test_count"), "must lie in [0, count]");
    }
    if (d.source == "synthetic-identities") {
        require(d.identities >= 2, s.where("identities"), "must be >= 2");
        require(d.train_per_id >= 0, s.where("train_per_id"), "must be >= 0");
        require(d.query_per_id >= 1, s.where("query_per_id"), "must be >= 1");
        require(d.gallery_per_id >= 1, s.where("gallery_per_id"), "must be >= 1");
    }
    require(d.size >= 8 && d.size % 8 == 0, s.where("size"), "must be a multiple of 8");
    if (d.id.empty()) d.id = d.path.empty() ? d.source : d.path.stem().string();
    return d;
}

json dataset_json(const DatasetSpec& d) {
    json j{{"id", d.id}, {"source", d.source}};
    if (!d.path.empty()) j["path"] = d.path.string();
    if (d.source == "synthetic-shapes")
        j.update({{"seed", d.seed}, {"count", d.count}, {"test_count", d.test_count}, {"size", d.size}});
    if (d.source == "synthetic-identities")
        j.update({{"seed", d.seed},
                  {"identities", d.identities},
                  {"train_per_id", d.train_per_id},
                  {"query_per_id", d.query_per_id},
                  {"gallery_per_id", d.gallery_per_id},
                  {"size", d.size}});
    return j;
}

}  // namespace

Dataset DatasetSpec::load() const {
    Dataset d;
    if (source == "synthetic-shapes")
        d = synthetic_shapes(seed, count, test_count, size);
    else if (source == "synthetic-identities")
        d = synthetic_identities(seed, identities, train_per_id, query_per_id, gallery_per_id, size);
    else if (source == "folder")
        d = load_image_folder(path);
    else
        d = load_manifest_csv(path);
    if (d.size() == 0) throw std::runtime_error("dataset '" + id + "' is empty");
    if (d.num_classes() < 2) throw std::runtime_error("dataset '" + id + "' needs at least two classes");
    d.name = id;
    return d;
}

const TargetEntry& RunConfig::primary_target() const {
    if (targets.empty()) throw ConfigError("targets: no target configured");
    return attack_target.empty() ? targets.front() : target(attack_target);
}

const TargetEntry& RunConfig::target(const std::string& id) const {
    for (const auto& t : targets)
        if (t.id == id) return t;
    throw ConfigError("unknown target id '" + id + "'");
}

const DatasetSpec& RunConfig::dataset_by_id(const std::string& id) const {
    if (dataset.id == id) return dataset;
    for (const auto& d : extra_datasets)
        if (d.id == id) return d;
    throw ConfigError("unknown dataset id '" + id + "'");
}

RunConfig parse_run_config(const json& j, const fs::path& base_dir) {
    RunConfig c;
    Section top(j, "");

    std::string task = to_string(c.task);
    top.get("task", task);
    checked("task", [&] { c.task = task_from_string(task); });

    if (const json* d = top.child("dataset"))
        c.dataset = parse_dataset(*d, "dataset", base_dir);
    else
        throw ConfigError("missing key 'dataset'");
    if (const json* e = top.child("extra_datasets")) {
        require(e->is_array(), "extra_datasets", "must be an array");
        for (std::size_t i = 0; i < e->size(); ++i)
            c.extra_datasets.push_back(parse_dataset(e->at(i), "extra_datasets[" + std::to_string(i) + "]", base_dir));
    }

    if (const json* t = top.child("targets")) {
        require(t->is_array(), "targets", "must be an array");
        for (std::size_t i = 0; i < t->size(); ++i) {
            TargetEntry e;
            Section s(t->at(i), "targets[" + std::to_string(i) + "]");
            s.get("id", e.id);
            s.get_path("path", e.path, base_dir);
            s.finish();
            require(!e.id.empty(), s.where("id"), "is required");
            require(!e.path.empty(), s.where("path"), "is required");
            c.targets.push_back(e);
        }
    }
    top.get("attack_target", c.attack_target);

    if (const json* f = top.child("fit_target")) {
        Section s(*f, "fit_target");
        s.get("id", c.fit_target.id);
        auto& a = c.fit_target.arch;
        s.get("width", a.width);
        s.get("feature_dim", a.feature_dim);
        s.get("signed_features", a.signed_features);
        auto& t = c.fit_target.train;
        s.get("epochs", t.epochs);
        s.get("batch_size", t.batch_size);
        s.get("learning_rate", t.learning_rate);
        s.get("seed", t.seed);
        s.finish();
        require(!c.fit_target.id.empty(), "fit_target.id", "must be non-empty");
        require(t.epochs >= 1, "fit_target.epochs", "must be >= 1");
        require(t.batch_size >= 1, "fit_target.batch_size", "must be >= 1");
        require(t.learning_rate > 0.0, "fit_target.learning_rate", "must be > 0");
        checked("fit_target", [&] {
            TargetArch probe = a;
            probe.image_size = c.dataset.size;
            probe.validate();
        });
    }

    if (const json* m = top.child("ssae")) {
        Section s(*m, "ssae");
        s.get("base_width", c.ssae.base_width);
        s.get("num_resblocks", c.ssae.num_resblocks);
        s.finish();
    }

    if (const json* t = top.child("train")) {
        Section s(*t, "train");
        s.get("epochs_phase1", c.train.epochs_phase1);
        s.get("epochs_phase2", c.train.epochs_phase2);
        s.get("batch_size", c.train.batch_size);
        s.get("learning_rate", c.train.learning_rate);
        s.get("alpha", c.train.alpha);
        s.get("delta", c.train.delta);
        s.get("seed", c.train.seed);
        s.finish();
    }
    checked("train", [&] { c.train.validate(); });
    c.ssae.delta = c.train.delta;
    checked("ssae", [&] { c.ssae.validate(); });

    if (const json* e = top.child("eval")) {
        Section s(*e, "eval");
        auto& v = c.eval;
        s.get("batch_size", v.batch_size);
        s.get("baselines", v.baselines);
        s.get("pgd_steps", v.pgd_steps);
        s.get("pgd_step_size", v.pgd_step_size);
        s.get("export_images", v.export_images);
        s.get("transfer_mode", v.transfer_mode);
        s.get("transfer_targets", v.transfer_targets);
        s.get("transfer_datasets", v.transfer_datasets);
        s.get("bench_images", v.bench_images);
        s.get("bench_warmup", v.bench_warmup);
        s.get("bench_runs", v.bench_runs);
        s.finish();
    }
    require(c.eval.batch_size >= 1, "eval.batch_size", "must be >= 1");
    for (const auto& b : c.eval.baselines)
        require(b == "fgsm" || b == "pgd", "eval.baselines", "entries must be fgsm|pgd, got '" + b + "'");
    require(c.eval.pgd_steps >= 1, "eval.pgd_steps", "must be >= 1");
    require(c.eval.pgd_step_size > 0.0, "eval.pgd_step_size", "must be > 0");
    require(c.eval.export_images >= 0, "eval.export_images", "must be >= 0");
    checked("eval.transfer_mode", [&] { transfer_mode_from_string(c.eval.transfer_mode); });
    require(c.eval.bench_images >= 1, "eval.bench_images", "must be >= 1");
    require(c.eval.bench_warmup >= 0, "eval.bench_warmup", "must be >= 0");
    require(c.eval.bench_runs >= 1, "eval.bench_runs", "must be >= 1");

    if (const json* a = top.child("attack")) {
        Section s(*a, "attack");
        s.get("amplify", c.attack.amplify);
        s.get("max_images", c.attack.max_images);
        s.get("split", c.attack.split);
        s.finish();
    }
    require(c.attack.amplify > 0.0, "attack.amplify", "must be > 0");
    require(c.attack.max_images >= 0, "attack.max_images", "must be >= 0");
    if (!c.attack.split.empty()) checked("attack.split", [&] { split_from_string(c.attack.split); });

    top.get_path("checkpoint", c.checkpoint, base_dir);
    std::string out;
    top.get("output", out);
    c.output = Section::resolve(out.empty() ? c.output.string() : out, base_dir);
    top.finish();
    return c;
}

RunConfig load_run_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config file not found: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return parse_run_config(j, fs::absolute(path).parent_path());
}

json to_json(const RunConfig& c) {
    json j;
    j["task"] = to_string(c.task);
    j["dataset"] = dataset_json(c.dataset);
    j["extra_datasets"] = json::array();
    for (const auto& d : c.extra_datasets) j["extra_datasets"].push_back(dataset_json(d));
    j["targets"] = json::array();
    for (const auto& t : c.targets) j["targets"].push_back({{"id", t.id}, {"path", t.path.string()}});
    j["attack_target"] = c.attack_target;
    const auto& f = c.fit_target;
    j["fit_target"] = {{"id", f.id},
                       {"width", f.arch.width},
                       {"feature_dim", f.arch.feature_dim},
                       {"signed_features", f.arch.signed_features},
                       {"epochs", f.train.epochs},
                       {"batch_size", f.train.batch_size},
                       {"learning_rate", f.train.learning_rate},
                       {"seed", f.train.seed}};
    j["ssae"] = {{"base_width", c.ssae.base_width}, {"num_resblocks", c.ssae.num_resblocks}};
    const auto& t = c.train;
    j["train"] = {{"epochs_phase1", t.epochs_phase1}, {"epochs_phase2", t.epochs_phase2},
                  {"batch_size", t.batch_size},       {"learning_rate", t.learning_rate},
                  {"alpha", t.alpha},                 {"delta", t.delta},
                  {"seed", t.seed}};
    const auto& e = c.eval;
    j["eval"] = {{"batch_size", e.batch_size},
                 {"baselines", e.baselines},
                 {"pgd_steps", e.pgd_steps},
                 {"pgd_step_size", e.pgd_step_size},
                 {"export_images", e.export_images},
                 {"transfer_mode", e.transfer_mode},
                 {"transfer_targets", e.transfer_targets},
                 {"transfer_datasets", e.transfer_datasets},
                 {"bench_images", e.bench_images},
                 {"bench_warmup", e.bench_warmup},
                 {"bench_runs", e.bench_runs}};
    j["attack"] = {{"amplify", c.attack.amplify}, {"max_images", c.attack.max_images}, {"split", c.attack.split}};
    j["checkpoint"] = c.checkpoint.string();
    j["output"] = c.output.string();
    return j;
}

void validate(const RunConfig& c, bool need_targets) {
    std::set<std::string> ids{c.dataset.id};
    for (std::size_t i = 0; i < c.extra_datasets.size(); ++i)
        require(ids.insert(c.extra_datasets[i].id).second, "extra_datasets[" + std::to_string(i) + "].id",
                "duplicates dataset id '" + c.extra_datasets[i].id + "'");
    auto check_path = [](const DatasetSpec& d, const std::string& key) {
        if (!d.path.empty() && !fs::exists(d.path))
            throw ConfigError(key + ".path: no such file or directory: " + d.path.string());
    };
    check_path(c.dataset, "dataset");
    for (std::size_t i = 0; i < c.extra_datasets.size(); ++i)
        check_path(c.extra_datasets[i], "extra_datasets[" + std::to_string(i) + "]");

    std::set<std::string> tids;
    for (std::size_t i = 0; i < c.targets.size(); ++i) {
        const auto key = "targets[" + std::to_string(i) + "]";
        require(tids.insert(c.targets[i].id).second, key + ".id", "duplicates target id '" + c.targets[i].id + "'");
        const fs::path p = fs::path(c.targets[i].path).replace_extension(".json");
        if (need_targets && !fs::exists(p)) throw ConfigError(key + ".path: no such file: " + p.string());
    }
    if (need_targets) require(!c.targets.empty(), "targets", "must list at least one target");
    if (!c.attack_target.empty())
        require(tids.count(c.attack_target) > 0, "attack_target", "names unknown target '" + c.attack_target + "'");
    for (const auto& t : c.eval.transfer_targets)
        require(tids.count(t) > 0, "eval.transfer_targets", "names unknown target '" + t + "'");
    for (const auto& d : c.eval.transfer_datasets)
        require(ids.count(d) > 0, "eval.transfer_datasets", "names unknown dataset '" + d + "'");
}

}  // namespace ssae
