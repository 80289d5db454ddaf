#include "ssae/cli.hpp"

#include <unistd.h>

#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>

namespace ssae {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Refusal to clobber existing outputs; reported as a config error.
class OutputExists : public ConfigError {
public:
    using ConfigError::ConfigError;
};

std::string amplify_tag(double factor) {
    char buf[32];
    if (factor == std::floor(factor))
        std::snprintf(buf, sizeof buf, "x%.0f", factor);
    else
        std::snprintf(buf, sizeof buf, "x%g", factor);
    return buf;
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

struct Context {
    RunConfig cfg;
    CommandOptions opt;

    void log(const std::string& s) const {
        if (!opt.quiet) std::cout << s << std::endl;
    }
};

EvalOptions eval_options(const Context& c) {
    EvalOptions eo;
    eo.batch_size = c.cfg.eval.batch_size;
    return eo;
}

fs::path resolve_checkpoint(const Context& c) {
    fs::path p = !c.opt.checkpoint.empty() ? c.opt.checkpoint : c.cfg.checkpoint;
    if (p.empty()) p = c.cfg.output / "ssae_final.json";
    p.replace_extension(".json");
    if (!fs::exists(p)) throw ConfigError("checkpoint: no such file: " + p.string());
    return p;
}

TargetModelHandle load_checked_target(const TargetEntry& e, Task task) {
    TargetModelHandle t = load_target(e.path);
    if (t.id() != e.id)
        std::cerr << "warning: target entry '" << e.id << "' loads a model saved as '" << t.id() << "'\n";
    if (t.task() != task)
        throw ConfigError("targets: '" + e.id + "' is a " + to_string(t.task()) + " model but task is " +
                          to_string(task));
    return TargetModelHandle(e.id, t.task(), t.net(), t.norm());
}

void print_report(const Context& c, const AttackReport& r) {
    char buf[256];
    for (const auto& m : r.metrics) {
        std::snprintf(buf, sizeof buf, "%-8s %-10s %-6s %6.2f -> %6.2f (-%.2f)  ssim %.4f  ms-ssim %.4f  psnr %.2f dB",
                      r.attacker.c_str(), r.target.c_str(), m.name.c_str(), m.clean, m.attacked, m.degradation,
                      r.iqa.ssim, r.iqa.ms_ssim, r.iqa.psnr_doubled_db);
        c.log(buf);
    }
}

// ----------------------------------------------------------------- commands

void cmd_fit_target(const Context& c) {
    const Dataset data = c.cfg.dataset.load();
    const auto& f = c.cfg.fit_target;
    TargetArch arch = f.arch;
    arch.in_channels = data.pixels.shape().c;
    arch.image_size = data.pixels.shape().h;
    arch.num_classes = data.num_classes();
    TargetTrainConfig tc = f.train;
    tc.verbose = !c.opt.quiet;
    const NormalizationSpec norm = NormalizationSpec::half(arch.in_channels);
    TargetNet net(arch, tc.seed);
    c.log("fitting target '" + f.id + "': " + net.describe());
    const double loss = train_target(net, data, norm, tc);
    const TargetModelHandle handle(f.id, c.cfg.task, net, norm);
    const fs::path manifest = save_target(handle, c.cfg.output / f.id);
    IdentityAttacker none;
    const AttackReport r = evaluate_attack(none, handle, data, eval_options(c));
    char buf[160];
    std::snprintf(buf, sizeof buf, "final train loss %.4f; clean %s %.2f", loss, r.metrics.front().name.c_str(),
                  r.metrics.front().clean);
    c.log(buf);
    c.log("wrote " + manifest.string());
}

void cmd_train(const Context& c) {
    const TargetModelHandle target = load_checked_target(c.cfg.primary_target(), c.cfg.task);
    const Dataset data = c.cfg.dataset.load();
    const TrainResult r = train(c.cfg.train, c.cfg.ssae, target, data, c.cfg.output, [&](const EpochSummary& s) {
        char buf[200];
        std::snprintf(buf, sizeof buf, "epoch %3d %-12s angular %.6f norm %.6f frobenius %.6f total %.6f (%.1fs)",
                      s.epoch, to_string(s.phase).c_str(), s.mean.angular, s.mean.norm, s.mean.frobenius,
                      s.mean.total, s.seconds);
        c.log(buf);
    });
    c.log("wrote " + r.final_checkpoint.string() + " and " + r.loss_csv.string());
}

void cmd_attack(const Context& c) {
    const SSAE model = load_checkpoint(resolve_checkpoint(c));
    const TargetModelHandle target = load_checked_target(c.cfg.primary_target(), c.cfg.task);
    const Dataset data = c.cfg.dataset.load();
    const Split split = !c.cfg.attack.split.empty() ? split_from_string(c.cfg.attack.split)
                        : c.cfg.task == Task::retrieval ? Split::query
                                                        : Split::test;
    std::vector<int> rows = data.indices(split);
    if (rows.empty()) throw std::runtime_error("dataset '" + data.name + "' has no " + to_string(split) + " images");
    if (c.cfg.attack.max_images > 0 && static_cast<int>(rows.size()) > c.cfg.attack.max_images)
        rows.resize(c.cfg.attack.max_images);

    const fs::path dir = c.cfg.output / "attack";
    fs::create_directories(dir);
    const std::string tag = amplify_tag(c.cfg.attack.amplify);
    const auto& norm = target.norm();
    std::ofstream index(dir / "index.csv");
    index << "index,source,label,linf_normalized,linf_pixel\n";

    const int total = static_cast<int>(rows.size());
    for (int first = 0; first < total; first += c.cfg.eval.batch_size) {
        const int count = std::min(c.cfg.eval.batch_size, total - first);
        const ImageBatch batch = data.batch(rows, first, count, norm);
        const AttackResult r = model.attack_batch(batch);
        const TensorF perturbed = tensor2img(r.perturbed);
        const Shape s = perturbed.shape();
        // perturbation in pixel units: P * std, centered at mid-gray
        TensorF pmap(s), pamp(s);
        for (int n = 0; n < s.n; ++n)
            for (int ch = 0; ch < s.c; ++ch) {
                const double sd = norm.std()[ch];
                for (std::size_t i = 0; i < s.plane(); ++i) {
                    const std::size_t k = (static_cast<std::size_t>(n) * s.c + ch) * s.plane() + i;
                    const double d = r.perturbation.values.data()[k] * sd;
                    pmap.data()[k] = static_cast<float>(std::clamp(0.5 + d, 0.0, 1.0));
                    pamp.data()[k] = static_cast<float>(std::clamp(0.5 + c.cfg.attack.amplify * d, 0.0, 1.0));
                }
            }
        for (int n = 0; n < count; ++n) {
            char stem[32];
            std::snprintf(stem, sizeof stem, "%05d", first + n);
            write_png(dir / (std::string(stem) + "_perturbed.png"), perturbed, n);
            write_png(dir / (std::string(stem) + "_perturbation.png"), pmap, n);
            write_png(dir / (std::string(stem) + "_perturbation_" + tag + ".png"), pamp, n);
            write_png(dir / (std::string(stem) + "_saliency.png"), r.saliency.values, n);
            const auto& e = data.entries[rows[first + n]];
            double linf_n = 0.0, linf_p = 0.0;
            const std::size_t per = static_cast<std::size_t>(s.c) * s.plane();
            for (std::size_t i = 0; i < per; ++i) {
                const std::size_t k = n * per + i;
                linf_n = std::max(linf_n, static_cast<double>(std::abs(r.perturbation.values.data()[k])));
                linf_p = std::max(linf_p, std::abs(r.perturbation.values.data()[k] *
                                                   static_cast<double>(norm.std()[i / s.plane()])));
            }
            char line[512];
            std::snprintf(line, sizeof line, "%d,%s,%d,%.9g,%.9g\n", first + n, e.path.c_str(), e.label, linf_n,
                          linf_p);
            index << line;
        }
    }
    if (!index) throw std::runtime_error("write failed for " + (dir / "index.csv").string());
    c.log("wrote " + std::to_string(total) + " perturbed images with maps (" + tag + " amplified) to " +
          dir.string());
}

std::vector<std::unique_ptr<Attacker>> make_attackers(const Context& c, const SSAE& model,
                                                      const TargetModelHandle& target) {
    std::vector<std::unique_ptr<Attacker>> out;
    out.push_back(std::make_unique<SSAEAttacker>(model));
    const double delta = model.config().delta;
    for (const auto& b : c.cfg.eval.baselines) {
        if (target.task() != Task::classification) continue;
        if (b == "fgsm") out.push_back(std::make_unique<FGSMAttacker>(target, delta));
        if (b == "pgd") {
            PGDConfig p = PGDConfig::defaults(delta);
            p.steps = c.cfg.eval.pgd_steps;
            p.step_size = c.cfg.eval.pgd_step_size;
            p.seed = c.cfg.train.seed;
            out.push_back(std::make_unique<PGDAttacker>(target, p));
        }
    }
    return out;
}

void cmd_eval(const Context& c) {
    const SSAE model = load_checkpoint(resolve_checkpoint(c));
    const Dataset data = c.cfg.dataset.load();
    EvalOptions eo = eval_options(c);
    if (c.cfg.eval.export_images > 0) {
        eo.export_dir = c.cfg.output / "eval_images";
        eo.export_images = c.cfg.eval.export_images;
    }
    std::vector<AttackReport> reports;
    for (const auto& e : c.cfg.targets) {
        const TargetModelHandle target = load_target(e.path);
        const TargetModelHandle t(e.id, target.task(), target.net(), target.norm());
        if (t.task() != c.cfg.task) continue;
        for (auto& a : make_attackers(c, model, t)) {
            reports.push_back(evaluate_attack(*a, t, data, eo));
            print_report(c, reports.back());
        }
    }
    if (reports.empty()) throw std::runtime_error("no target matches task " + to_string(c.cfg.task));
    write_reports_csv(c.cfg.output / "reports.csv", reports);
    write_reports_json(c.cfg.output / "reports.json", reports);
    c.log("wrote " + (c.cfg.output / "reports.csv").string());
}

void cmd_transfer(const Context& c) {
    const SSAE model = load_checkpoint(resolve_checkpoint(c));
    const TransferMode mode = transfer_mode_from_string(c.opt.mode.empty() ? c.cfg.eval.transfer_mode : c.opt.mode);
    std::vector<TargetModelHandle> handles;
    handles.reserve(c.cfg.targets.size());
    for (const auto& e : c.cfg.targets) {
        const TargetModelHandle t = load_target(e.path);
        handles.emplace_back(e.id, t.task(), t.net(), t.norm());
    }
    std::vector<const TargetModelHandle*> targets;
    for (const auto& h : handles) {
        const auto& sel = c.cfg.eval.transfer_targets;
        if (sel.empty() || std::find(sel.begin(), sel.end(), h.id()) != sel.end()) targets.push_back(&h);
    }
    std::vector<Dataset> loaded;
    std::vector<const DatasetSpec*> specs{&c.cfg.dataset};
    for (const auto& d : c.cfg.extra_datasets) specs.push_back(&d);
    loaded.reserve(specs.size());
    std::vector<const Dataset*> datasets;
    for (const auto* s : specs) {
        const auto& sel = c.cfg.eval.transfer_datasets;
        if (!sel.empty() && std::find(sel.begin(), sel.end(), s->id) == sel.end() && s != specs.front()) continue;
        loaded.push_back(s->load());
        datasets.push_back(&loaded.back());
    }
    const std::string primary = c.cfg.primary_target().id;
    const TargetModelHandle* train_target = nullptr;
    for (const auto& h : handles)
        if (h.id() == primary) train_target = &h;
    SSAEAttacker attacker(model);
    const auto cells = transfer_matrix(attacker, *train_target, c.cfg.dataset.id, targets, datasets, mode,
                                       eval_options(c));
    write_transfer_csv(c.cfg.output / "transfer.csv", cells);
    write_transfer_json(c.cfg.output / "transfer.json", cells);
    const std::string grid = transfer_grid(cells);
    std::ofstream(c.cfg.output / "transfer.txt") << grid;
    c.log("transfer (" + to_string(mode) + ", " + std::to_string(cells.size()) + " cells)\n" + grid);
}

void cmd_bench(const Context& c) {
    const SSAE model = load_checkpoint(resolve_checkpoint(c));
    const TargetModelHandle target = load_checked_target(c.cfg.primary_target(), c.cfg.task);
    const Dataset data = c.cfg.dataset.load();
    const auto& e = c.cfg.eval;
    PGDConfig p = PGDConfig::defaults(model.config().delta);
    p.steps = e.pgd_steps;
    p.step_size = e.pgd_step_size;
    p.seed = c.cfg.train.seed;
    SSAEAttacker ssae_attacker(model);
    PGDAttacker pgd_attacker(target, p);
    std::vector<Attacker*> attackers{&ssae_attacker};
    if (target.task() == Task::classification) attackers.push_back(&pgd_attacker);

    json j = json::array();
    std::ofstream csv(c.cfg.output / "bench.csv");
    csv << "attacker,run,images,fps\n";
    std::map<std::string, double> mean;
    for (Attacker* a : attackers) {
        // PGD is ~steps x slower; scale its image count so runs stay short
        const int images = a == &pgd_attacker ? std::max(1, e.bench_images / 10) : e.bench_images;
        const int warmup = a == &pgd_attacker ? std::min(e.bench_warmup, 2) : e.bench_warmup;
        json runs = json::array();
        for (int run = 0; run < e.bench_runs; ++run) {
            const double fps = throughput(*a, data, target.norm(), {images, warmup, 1});
            runs.push_back(fps);
            mean[a->name()] += fps / e.bench_runs;
            csv << a->name() << "," << run << "," << images << "," << fps << "\n";
        }
        j.push_back({{"attacker", a->name()}, {"images", images}, {"fps_runs", runs}, {"fps_mean", mean[a->name()]}});
        char buf[128];
        std::snprintf(buf, sizeof buf, "%-8s %10.2f images/s (batch 1, mean of %d runs)", a->name().c_str(),
                      mean[a->name()], e.bench_runs);
        c.log(buf);
    }
    write_json(c.cfg.output / "bench.json", j);
}

using Handler = void (*)(const Context&);

const std::map<std::string, Handler>& handlers() {
    static const std::map<std::string, Handler> h{{"fit-target", cmd_fit_target}, {"train", cmd_train},
                                                  {"attack", cmd_attack},         {"eval", cmd_eval},
                                                  {"transfer", cmd_transfer},     {"bench", cmd_bench}};
    return h;
}

}  // namespace

fs::path effective_config_path(const std::string& command, const RunConfig& cfg) {
    const std::string suffix = command == "fit-target" ? "fit-target_" + cfg.fit_target.id : command;
    return cfg.output / ("effective_config_" + suffix + ".json");
}

std::vector<fs::path> command_outputs(const std::string& command, const RunConfig& cfg) {
    const fs::path& o = cfg.output;
    std::vector<fs::path> out{effective_config_path(command, cfg)};
    if (command == "fit-target") {
        out.push_back(o / (cfg.fit_target.id + ".json"));
        out.push_back(o / (cfg.fit_target.id + ".bin"));
    } else if (command == "train") {
        for (const char* f : {"ssae_final.json", "ssae_final.bin", "ssae_phase1.json", "ssae_phase1.bin", "loss.csv"})
            out.push_back(o / f);
    } else if (command == "attack") {
        out.push_back(o / "attack");
    } else if (command == "eval") {
        for (const char* f : {"reports.csv", "reports.json", "eval_images"}) out.push_back(o / f);
    } else if (command == "transfer") {
        for (const char* f : {"transfer.csv", "transfer.json", "transfer.txt"}) out.push_back(o / f);
    } else if (command == "bench") {
        for (const char* f : {"bench.csv", "bench.json"}) out.push_back(o / f);
    }
    return out;
}

OutputLock::OutputLock(const fs::path& dir) : path_(dir / ".ssae.lock") {
    fs::create_directories(dir);
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    if (!f)
        throw std::runtime_error("output directory " + dir.string() + " is locked by another run (" +
                                 path_.string() + "); remove the file if that run is gone");
    std::fprintf(f, "%ld\n", static_cast<long>(::getpid()));
    std::fclose(f);
}

OutputLock::~OutputLock() {
    std::error_code ec;
    fs::remove(path_, ec);
}

int run_command(const std::string& command, const CommandOptions& opt) {
    try {
        const auto it = handlers().find(command);
        if (it == handlers().end()) throw ConfigError("unknown command '" + command + "'");
        if (opt.device != "cpu") throw ConfigError("--device: only 'cpu' is available in this build");
        if (opt.config.empty()) throw ConfigError("--config is required");

        Context c{load_run_config(opt.config), opt};
        if (!opt.out.empty()) c.cfg.output = fs::absolute(opt.out).lexically_normal();
        if (opt.seed) {
            c.cfg.train.seed = *opt.seed;
            c.cfg.fit_target.train.seed = *opt.seed;
        }
        if (!opt.checkpoint.empty()) c.cfg.checkpoint = fs::absolute(opt.checkpoint).lexically_normal();
        validate(c.cfg, command != "fit-target");
        if (command != "fit-target" && command != "train") resolve_checkpoint(c);

        fs::create_directories(c.cfg.output);
        OutputLock lock(c.cfg.output);
        for (const auto& p : command_outputs(command, c.cfg)) {
            if (!fs::exists(p)) continue;
            if (!opt.overwrite)
                throw OutputExists("output " + p.string() + " already exists (pass --overwrite to replace it)");
            fs::remove_all(p);
        }
        write_json(effective_config_path(command, c.cfg), to_json(c.cfg));
        it->second(c);
        return kExitOk;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}

int run_cli(int argc, char** argv) {
    CLI::App app{"Saliency-based auto-encoder attack toolkit"};
    app.require_subcommand(1);
    CommandOptions opt;
    std::uint64_t seed = 0;
    std::string chosen;
    std::vector<CLI::Option*> seed_opts;
    for (const auto& [name, h] : handlers()) {
        (void)h;
        CLI::App* sub = app.add_subcommand(name);
        sub->add_option("--config", opt.config, "Run configuration (JSON)")->required();
        sub->add_option("--checkpoint", opt.checkpoint, "Attacker checkpoint manifest");
        sub->add_option("--out", opt.out, "Output directory (overrides the config)");
        sub->add_flag("--overwrite", opt.overwrite, "Replace existing outputs");
        seed_opts.push_back(sub->add_option("--seed", seed, "Seed override"));
        sub->add_option("--device", opt.device, "Compute device")->capture_default_str();
        sub->add_flag("--quiet", opt.quiet, "Suppress progress output");
        if (name == "transfer")
            sub->add_option("--mode", opt.mode, "cross_model | cross_dataset | cross_both | cross_task");
        sub->callback([&chosen, name = name] { chosen = name; });
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }
    for (const auto* o : seed_opts)
        if (o->count() > 0) opt.seed = seed;
    return run_command(chosen, opt);
}

}  // namespace ssae
