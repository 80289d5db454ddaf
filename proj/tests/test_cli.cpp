#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ssae/cli.hpp"

using namespace ssae;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / ("ssae_test_cli_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

json minimal_config() {
    return json{{"dataset", {{"source", "synthetic-shapes"}, {"seed", 7}, {"count", 120}, {"test_count", 40},
                             {"size", 16}}},
                {"targets", json::array({{{"id", "A"}, {"path", "out/A"}}})},
                {"fit_target", {{"id", "A"}, {"width", 4}, {"feature_dim", 8}, {"epochs", 1}}},
                {"ssae", {{"base_width", 8}, {"num_resblocks", 1}}},
                {"train", {{"epochs_phase1", 1}, {"epochs_phase2", 1}, {"batch_size", 8}, {"learning_rate", 1e-3}}},
                {"eval", {{"pgd_steps", 2}, {"bench_images", 4}, {"bench_warmup", 1}, {"bench_runs", 1}}},
                {"output", "out"}};
}

fs::path write_config(const fs::path& dir, const json& j, const std::string& name = "config.json") {
    const fs::path p = dir / name;
    std::ofstream(p) << j.dump(2);
    return p;
}

CommandOptions quiet(const fs::path& config) {
    CommandOptions o;
    o.config = config;
    o.quiet = true;
    return o;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string config_error(const json& j) {
    try {
        parse_run_config(j, fs::temp_directory_path());
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("a config naming only dataset and target gets the documented defaults") {
    const json j{{"dataset", {{"source", "synthetic-shapes"}}}, {"targets", json::array({{{"id", "A"}, {"path", "a"}}})}};
    const RunConfig c = parse_run_config(j, "/base");
    CHECK(c.train.epochs_phase1 == 20);
    CHECK(c.train.epochs_phase2 == 20);
    CHECK(c.train.batch_size == 16);
    CHECK(c.train.learning_rate == 1e-5);
    CHECK(c.train.alpha == 1e-4);
    CHECK(c.train.delta == 0.1);
    CHECK(c.ssae.delta == 0.1);
    CHECK(c.attack.amplify == 10.0);
    CHECK(c.targets[0].path == fs::path("/base/a"));
    CHECK(c.primary_target().id == "A");
}

TEST_CASE("invalid configs name the offending key") {
    json j = minimal_config();
    j["train"]["learning_rate"] = -1.0;
    CHECK(config_error(j).find("train.learning_rate") != std::string::npos);

    j = minimal_config();
    j["train"]["lerning_rate"] = 1e-4;
    CHECK(config_error(j).find("train.lerning_rate") != std::string::npos);

    j = minimal_config();
    j["train"]["batch_size"] = "sixteen";
    CHECK(config_error(j).find("train.batch_size") != std::string::npos);

    j = minimal_config();
    j["dataset"]["source"] = "imagenet";
    CHECK(config_error(j).find("dataset.source") != std::string::npos);

    j = minimal_config();
    j["eval"]["transfer_mode"] = "cross_everything";
    CHECK(config_error(j).find("eval.transfer_mode") != std::string::npos);

    j = minimal_config();
    j.erase("dataset");
    CHECK(config_error(j).find("dataset") != std::string::npos);
}

TEST_CASE("validation reports missing paths and duplicate ids") {
    const fs::path dir = fresh_dir("validate");
    json j = minimal_config();
    j["dataset"] = {{"source", "folder"}, {"path", "no/such/images"}};
    RunConfig c = parse_run_config(j, dir);
    try {
        validate(c, false);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find((dir / "no/such/images").string()) != std::string::npos);
    }

    c = parse_run_config(minimal_config(), dir);
    c.targets.push_back(c.targets.front());
    CHECK_THROWS_WITH_AS(validate(c, false), doctest::Contains("duplicates target id"), ConfigError);
    c.targets.pop_back();
    CHECK_THROWS_WITH_AS(validate(c, true), doctest::Contains("targets[0].path"), ConfigError);
}

TEST_CASE("effective config round-trips") {
    const RunConfig c = parse_run_config(minimal_config(), "/somewhere");
    const json e = to_json(c);
    const RunConfig again = parse_run_config(e, "/elsewhere");
    CHECK(to_json(again) == e);
}

TEST_CASE("builtin synthetic ingestion: seed 7, 1000 entries, 10 balanced classes") {
    const json j{{"dataset", {{"source", "synthetic-shapes"}, {"seed", 7}, {"count", 1000}, {"test_count", 0}}}};
    const Dataset d = parse_run_config(j, ".").dataset.load();
    CHECK(d.size() == 1000);
    CHECK(d.num_classes() == 10);
    std::vector<int> counts(10);
    for (int l : d.labels()) ++counts[l];
    for (int k : counts) CHECK(k == 100);
}

TEST_CASE("commands end to end: exit codes, refusal, overwrite, artifacts") {
    const fs::path dir = fresh_dir("e2e");
    json j = minimal_config();
    j["extra_datasets"] = json::array({{{"id", "shapes-b"}, {"source", "synthetic-shapes"}, {"seed", 9},
                                        {"count", 60}, {"test_count", 20}, {"size", 16}}});
    const fs::path cfg = write_config(dir, j);

    // fit two targets into the same output directory
    REQUIRE(run_command("fit-target", quiet(cfg)) == kExitOk);
    json jb = j;
    jb["fit_target"] = {{"id", "B"}, {"width", 6}, {"feature_dim", 8}, {"epochs", 1}, {"seed", 5}};
    REQUIRE(run_command("fit-target", quiet(write_config(dir, jb, "b.json"))) == kExitOk);
    j["targets"].push_back({{"id", "B"}, {"path", "out/B"}});
    write_config(dir, j);

    REQUIRE(run_command("train", quiet(cfg)) == kExitOk);
    const fs::path out = dir / "out";
    CHECK(fs::exists(out / "ssae_final.json"));
    CHECK(fs::exists(out / "ssae_phase1.json"));
    CHECK(fs::exists(out / "loss.csv"));
    CHECK(fs::exists(out / "effective_config_train.json"));
    CHECK_FALSE(fs::exists(out / ".ssae.lock"));

    // refuses to clobber, then overwrites reproducibly
    const std::string first = slurp(out / "loss.csv");
    CHECK(run_command("train", quiet(cfg)) == kExitConfig);
    CommandOptions ow = quiet(cfg);
    ow.overwrite = true;
    REQUIRE(run_command("train", ow) == kExitOk);
    CHECK(slurp(out / "loss.csv") == first);

    // rerunning from the effective config reproduces the loss curve
    CommandOptions eff = quiet(out / "effective_config_train.json");
    eff.out = dir / "rerun";
    REQUIRE(run_command("train", eff) == kExitOk);
    CHECK(slurp(dir / "rerun" / "loss.csv") == first);

    // a different seed changes the run
    CommandOptions seeded = quiet(cfg);
    seeded.out = dir / "seeded";
    seeded.seed = 99;
    REQUIRE(run_command("train", seeded) == kExitOk);
    CHECK(slurp(dir / "seeded" / "loss.csv") != first);

    // attack: one set of maps per input image
    REQUIRE(run_command("attack", quiet(cfg)) == kExitOk);
    int perturbed = 0, amplified = 0, saliency = 0, plain = 0;
    for (const auto& e : fs::directory_iterator(out / "attack")) {
        const std::string n = e.path().filename().string();
        perturbed += n.ends_with("_perturbed.png");
        amplified += n.ends_with("_perturbation_x10.png");
        plain += n.ends_with("_perturbation.png");
        saliency += n.ends_with("_saliency.png");
    }
    CHECK(perturbed == 40);
    CHECK(amplified == 40);
    CHECK(plain == 40);
    CHECK(saliency == 40);

    // saliency maps span the full gray range; pixel-space perturbation <= delta * std
    const TensorF s = read_png(out / "attack" / "00000_saliency.png");
    CHECK(*std::min_element(s.vec().begin(), s.vec().end()) == 0.0f);
    CHECK(*std::max_element(s.vec().begin(), s.vec().end()) == 1.0f);
    std::ifstream idx(out / "attack" / "index.csv");
    std::string line;
    std::getline(idx, line);
    int rows = 0;
    while (std::getline(idx, line)) {
        const double linf_px = std::stod(line.substr(line.rfind(',') + 1));
        CHECK(linf_px <= 0.1 * 0.5 + 1e-7);
        ++rows;
    }
    CHECK(rows == 40);

    // eval: CSV and JSON with one row per attacker and target
    REQUIRE(run_command("eval", quiet(cfg)) == kExitOk);
    json reports;
    std::ifstream(out / "reports.json") >> reports;
    CHECK(reports.size() == 2 * 3);  // {A, B} x {ssae, fgsm, pgd}
    std::ifstream csv(out / "reports.csv");
    std::getline(csv, line);
    for (const char* col : {"clean", "attacked", "ssim", "ms_ssim", "psnr_doubled_db"})
        CHECK(line.find(col) != std::string::npos);

    // transfer: cross_model over {A, B} gives two cells
    REQUIRE(run_command("transfer", quiet(cfg)) == kExitOk);
    json cells;
    std::ifstream(out / "transfer.json") >> cells;
    CHECK(cells.size() == 2);
    CommandOptions both = quiet(cfg);
    both.mode = "cross_both";
    both.overwrite = true;
    REQUIRE(run_command("transfer", both) == kExitOk);
    std::ifstream(out / "transfer.json") >> cells;
    CHECK(cells.size() == 4);

    REQUIRE(run_command("bench", quiet(cfg)) == kExitOk);
    json bench;
    std::ifstream(out / "bench.json") >> bench;
    CHECK(bench.size() == 2);
    CHECK(bench[0]["fps_mean"].get<double>() > 0.0);
}

TEST_CASE("runtime and usage failures map to exit codes") {
    const fs::path dir = fresh_dir("codes");
    const fs::path cfg = write_config(dir, minimal_config());
    CHECK(run_command("train", quiet(dir / "missing.json")) == kExitConfig);
    CHECK(run_command("frobnicate", quiet(cfg)) == kExitConfig);
    CommandOptions gpu = quiet(cfg);
    gpu.device = "cuda:0";
    CHECK(run_command("fit-target", gpu) == kExitConfig);

    // a present lock file blocks a second writer
    REQUIRE(run_command("fit-target", quiet(cfg)) == kExitOk);
    {
        OutputLock held(dir / "out");
        CommandOptions o = quiet(cfg);
        o.overwrite = true;
        CHECK(run_command("fit-target", o) == kExitRuntime);
    }
    // attack without a checkpoint
    CHECK(run_command("attack", quiet(cfg)) == kExitConfig);

    // corrupt target weights are a runtime failure
    std::ofstream(dir / "out" / "A.bin", std::ios::trunc) << "garbage";
    CHECK(run_command("train", quiet(cfg)) == kExitRuntime);
}

TEST_CASE("argv front end") {
    const fs::path dir = fresh_dir("argv");
    const fs::path cfg = write_config(dir, minimal_config());
    std::string a0 = "ssae", a1 = "fit-target", a2 = "--config", a3 = cfg.string(), a4 = "--quiet", a5 = "--seed",
                a6 = "3";
    char* argv[] = {a0.data(), a1.data(), a2.data(), a3.data(), a4.data(), a5.data(), a6.data()};
    CHECK(run_cli(7, argv) == kExitOk);
    json eff;
    std::ifstream(dir / "out" / "effective_config_fit-target_A.json") >> eff;
    CHECK(eff["fit_target"]["seed"] == 3);
    std::string bad = "--bogus";
    char* argv2[] = {a0.data(), a1.data(), bad.data()};
    CHECK(run_cli(3, argv2) == kExitConfig);
}
