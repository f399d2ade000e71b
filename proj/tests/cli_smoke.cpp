// Drives the installed binary end to end through std::system. The binary path
// arrives as the first program argument (wired up by the build).
#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

#include <json.hpp>

#include "hsproto/runconfig.hpp"

using namespace hsproto;
namespace fs = std::filesystem;

namespace {

std::string g_binary;

fs::path temp_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("hsproto_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(is), {});
}

struct RunResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

RunResult run(const std::string& args, const fs::path& scratch) {
    const fs::path out_file = scratch / "stdout.txt";
    const fs::path err_file = scratch / "stderr.txt";
    const std::string cmd =
        g_binary + " " + args + " >" + out_file.string() + " 2>" + err_file.string();
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out_file);
    r.err = slurp(err_file);
    return r;
}

// The small end-to-end configuration every case starts from.
RunConfig smoke_config(const fs::path& root) {
    RunConfig cfg;
    cfg.data_root = (root / "data").string();
    cfg.out_dir = (root / "out").string();
    cfg.synth.num_classes = 4;
    cfg.synth.cubes_per_class = 15;
    cfg.synth.per_class_train = 10;
    cfg.synth.height = 8;
    cfg.synth.width = 8;
    cfg.synth.channels = 8;
    cfg.synth.separation = 0.5;
    cfg.synth.noise_sigma = 0.02;
    cfg.synth.texture_scale = 0.05;
    cfg.c_out = 2;
    cfg.reduction_ratio = 4;
    cfg.stage_widths = {4, 6};
    cfg.blocks_per_stage = 1;
    cfg.k_shot = 2;
    cfg.q_query = 3;
    cfg.epochs = 4;
    cfg.lr = 0.01;
    cfg.repetitions = 3;
    cfg.seed = 5;
    return cfg;
}

std::string write_config(const RunConfig& cfg, const fs::path& root) {
    const std::string path = (root / "config.json").string();
    save_runconfig(cfg, path);
    return path;
}

nlohmann::json read_json(const fs::path& p) {
    std::ifstream is(p);
    REQUIRE(is.good());
    nlohmann::json j;
    is >> j;
    return j;
}

}  // namespace

TEST_CASE("--help exits cleanly and names every subcommand") {
    const fs::path root = temp_dir("help");
    const RunResult r = run("--help", root);
    CHECK(r.exit_code == 0);
    for (const char* cmd : {"synth", "prep", "train", "ccp", "eval", "report"})
        CHECK(r.out.find(cmd) != std::string::npos);

    // a bare invocation demands a subcommand
    CHECK(run("", root).exit_code != 0);
    CHECK(run("bogus", root).exit_code != 0);
    CHECK(run("eval --protocol nonsense", root).exit_code != 0);
}

TEST_CASE("the pipeline runs end to end and reruns byte-identically") {
    const fs::path root = temp_dir("pipeline");
    const RunConfig cfg = smoke_config(root);
    const std::string config = write_config(cfg, root);
    const std::string base = "--config " + config;

    const RunResult synth = run("synth " + base, root);
    CHECK(synth.exit_code == 0);
    CHECK(synth.out.rfind("synth:", 0) == 0);
    CHECK(fs::exists(fs::path(cfg.data_root) / "train.json"));
    CHECK(fs::exists(fs::path(cfg.data_root) / "test.json"));

    const RunResult train = run("train " + base, root);
    CHECK(train.exit_code == 0);
    CHECK(train.out.rfind("train:", 0) == 0);
    CHECK(fs::exists(cfg.checkpoint_path()));
    CHECK(fs::exists(cfg.trainlog_path()));
    const auto train_doc = read_json(fs::path(cfg.out_dir) / "train_result.json");
    CHECK(train_doc.at("way").get<int>() == 4);
    CHECK(train_doc.at("episodes_per_epoch").get<int>() == 2);
    CHECK(train_doc.at("best_epoch").get<int>() >= 0);

    const RunResult ccp = run("ccp " + base, root);
    CHECK(ccp.exit_code == 0);
    CHECK(fs::exists(cfg.ccp_path()));

    const RunResult eval = run("eval " + base, root);
    CHECK(eval.exit_code == 0);
    CHECK(eval.out.rfind("eval complete:", 0) == 0);
    const fs::path report_path = fs::path(cfg.out_dir) / "report_complete.json";
    REQUIRE(fs::exists(report_path));
    const auto eval_doc = read_json(fs::path(cfg.out_dir) / "eval_result.json");
    CHECK(eval_doc.at("accuracy").get<double>() >= 0.5);
    CHECK(eval_doc.at("total").get<int>() == 20);
    CHECK(eval_doc.contains("variability"));
    // result documents never carry timing; stdout does
    CHECK(eval_doc.dump().find("timing") == std::string::npos);
    CHECK(eval.out.find("ms]") != std::string::npos);

    const RunResult report = run("report " + base, root);
    CHECK(report.exit_code == 0);
    CHECK(fs::exists(fs::path(cfg.out_dir) / "embeddings_test.csv"));
    CHECK(fs::exists(fs::path(cfg.out_dir) / "heatmap_test.csv"));
    CHECK(fs::exists(fs::path(cfg.out_dir) / "embeddings_ccp.csv"));

    // a rerun of the same seed reproduces the report and bank byte for byte
    const std::string report_before = slurp(report_path);
    const std::string bank_before = slurp(cfg.ccp_path());
    const std::string var_before = slurp(fs::path(cfg.out_dir) / "variability_complete.json");
    CHECK(run("ccp " + base, root).exit_code == 0);
    CHECK(run("eval " + base, root).exit_code == 0);
    CHECK(slurp(report_path) == report_before);
    CHECK(slurp(cfg.ccp_path()) == bank_before);
    CHECK(slurp(fs::path(cfg.out_dir) / "variability_complete.json") == var_before);
}

TEST_CASE("prep windows and splits a raw pool") {
    const fs::path root = temp_dir("prep");
    RunConfig cfg = smoke_config(root);
    cfg.trim_head = 1;
    cfg.trim_tail = 1;
    cfg.reduce_factor = 2;
    cfg.window = 4;
    cfg.stride = 4;
    cfg.density_threshold = 0.2;
    cfg.per_class_train = 10;
    const std::string config = write_config(cfg, root);

    REQUIRE(run("synth --config " + config, root).exit_code == 0);
    const RunResult prep = run("prep --config " + config, root);
    CHECK(prep.exit_code == 0);
    CHECK(prep.out.rfind("prep:", 0) == 0);

    const fs::path prep_dir = fs::path(cfg.data_root) / "prepared";
    for (const char* m : {"pool.json", "train.json", "test.json"})
        CHECK(fs::exists(prep_dir / m));

    const auto doc = read_json(fs::path(cfg.out_dir) / "prep_result.json");
    const auto kept = doc.at("windows_kept").get<std::vector<int>>();
    REQUIRE(kept.size() == 4);
    // 15 cubes x four 4x4 windows per 8x8 cube, minus anything under-dense
    for (int k : kept) {
        CHECK(k >= 10);
        CHECK(k <= 60);
    }
    // prepared cubes decode: 8 channels, trimmed to 6, reduced to 3
    const auto pool = read_json(prep_dir / "pool.json");
    CHECK(pool.at("entries").size() >= 40);
}

TEST_CASE("out-of-order commands explain which step is missing") {
    const fs::path root = temp_dir("order");
    const RunConfig cfg = smoke_config(root);
    const std::string config = write_config(cfg, root);
    const std::string base = "--config " + config;

    // no data yet: train cannot load a manifest
    CHECK(run("train " + base, root).exit_code == 3);

    REQUIRE(run("synth " + base, root).exit_code == 0);
    const RunResult eval = run("eval " + base, root);
    CHECK(eval.exit_code == 6);
    CHECK(eval.err.find("run the train command first") != std::string::npos);

    REQUIRE(run("train " + base, root).exit_code == 0);
    const RunResult eval2 = run("eval " + base, root);
    CHECK(eval2.exit_code == 6);
    CHECK(eval2.err.find("run the ccp command first") != std::string::npos);
}

TEST_CASE("flag overrides take precedence over the config file") {
    const fs::path root = temp_dir("flags");
    const RunConfig cfg = smoke_config(root);
    const std::string config = write_config(cfg, root);
    const fs::path other_data = root / "elsewhere";

    const RunResult r = run("synth --config " + config + " --seed 99 --data " +
                                other_data.string(),
                            root);
    CHECK(r.exit_code == 0);
    CHECK(fs::exists(other_data / "train.json"));

    const auto doc = read_json(fs::path(cfg.out_dir) / "synth_result.json");
    CHECK(doc.at("config").at("seed").get<uint64_t>() == 99);
    CHECK(doc.at("config").at("paths").at("data_root").get<std::string>() ==
          other_data.string());

    // a complete protocol with exclusions is contradictory
    const RunResult bad = run("train --config " + config + " --exclude class1", root);
    CHECK(bad.exit_code == 2);
    CHECK(bad.err.find("partial protocol") != std::string::npos);
}

TEST_CASE("partial protocols run against held-out classes") {
    const fs::path root = temp_dir("partial");
    RunConfig cfg = smoke_config(root);
    cfg.protocol = "partial-s1";
    cfg.exclude = {"class1", "class3"};
    const std::string config = write_config(cfg, root);
    const std::string base = "--config " + config;

    REQUIRE(run("synth " + base, root).exit_code == 0);
    const RunResult train = run("train " + base, root);
    CHECK(train.exit_code == 0);
    const auto train_doc = read_json(fs::path(cfg.out_dir) / "train_result.json");
    // episodic training only ever saw the kept classes
    CHECK(train_doc.at("way").get<int>() == 2);
    CHECK(train_doc.at("classes").get<std::vector<std::string>>() ==
          std::vector<std::string>{"class0", "class2"});

    const RunResult eval = run("eval " + base, root);
    CHECK(eval.exit_code == 0);
    CHECK(eval.out.rfind("eval partial-s1:", 0) == 0);
    REQUIRE(fs::exists(fs::path(cfg.out_dir) / "report_partial.json"));
    const auto doc = read_json(fs::path(cfg.out_dir) / "eval_result.json");
    CHECK(doc.at("per_run_accuracies").size() == 3);
    CHECK(doc.at("excluded").get<std::vector<std::string>>() == cfg.exclude);
    const double mean = doc.at("mean").get<double>();
    CHECK(mean >= 0.0);
    CHECK(mean <= 1.0);

    // strategy 2 reuses the same checkpoint
    const RunResult s2 = run("eval " + base + " --protocol partial-s2", root);
    CHECK(s2.exit_code == 0);

    // a config drift is caught by the digest before anything is evaluated
    const RunResult drift = run("eval " + base + " --attention off", root);
    CHECK(drift.exit_code == 6);
    CHECK(drift.err.find("config digest") != std::string::npos);
}

int main(int argc, char** argv) {
    if (argc < 2) {
        std::fprintf(stderr, "usage: cli_smoke <path-to-hsproto-binary> [doctest args]\n");
        return 1;
    }
    g_binary = argv[1];
    doctest::Context ctx;
    ctx.applyCommandLine(argc - 1, argv + 1);
    return ctx.run();
}
