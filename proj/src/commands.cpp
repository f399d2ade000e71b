#include "hsproto/commands.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

#include "hsproto/checkpoint.hpp"
#include "hsproto/cube_io.hpp"
#include "hsproto/error.hpp"
#include "hsproto/evalsuite.hpp"
#include "hsproto/prep.hpp"
#include "hsproto/synth.hpp"
#include "hsproto/train.hpp"

namespace fs = std::filesystem;

namespace hsproto {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::string fmt_ms(double ms) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(0) << ms << " ms";
    return os.str();
}

void write_json(const nlohmann::json& j, const fs::path& path) {
    fs::create_directories(path.parent_path());
    std::ofstream os(path);
    if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
    os << j.dump(2) << "\n";
    if (!os) throw IoError("write failed for '" + path.string() + "'");
}

fs::path result_path(const RunConfig& cfg, const std::string& command) {
    return fs::path(cfg.out_dir) / (command + "_result.json");
}

// Registry order, minus the excluded classes. Every excluded name must exist.
std::vector<std::string> kept_classes(const std::vector<std::string>& registry,
                                      const std::vector<std::string>& exclude) {
    const std::set<std::string> drop(exclude.begin(), exclude.end());
    for (const auto& name : exclude)
        if (std::find(registry.begin(), registry.end(), name) == registry.end())
            throw ArgumentError("excluded class '" + name + "' is not in the dataset");
    std::vector<std::string> kept;
    for (const auto& name : registry)
        if (!drop.count(name)) kept.push_back(name);
    if (kept.size() < 2) throw ArgumentError("fewer than two classes left after exclusion");
    return kept;
}

// The manifest episodic training runs on: the train split, with the registry
// narrowed to the kept classes under a partial protocol.
DatasetManifest training_manifest(const RunConfig& cfg) {
    DatasetManifest m = load_manifest(fs::path(cfg.data_root) / "train.json");
    if (cfg.protocol == "complete") return m;
    return restrict_registry(m, kept_classes(m.classes, cfg.exclude));
}

ModelConfig model_config(const RunConfig& cfg, int data_channels) {
    ModelConfig mc;
    mc.channels = cfg.channels > 0 ? cfg.channels : data_channels;
    mc.c_out = cfg.c_out;
    mc.reduction_ratio = cfg.reduction_ratio;
    mc.stage_widths = cfg.stage_widths;
    mc.blocks_per_stage = cfg.blocks_per_stage;
    mc.residual = cfg.residual;
    mc.attention = cfg.attention;
    mc.init_seed = cfg.init_seed();
    mc.validate();
    return mc;
}

TrainHyper train_hyper(const RunConfig& cfg, int way) {
    TrainHyper h;
    h.way = way;
    h.k_shot = cfg.k_shot;
    h.q_query = cfg.q_query;
    h.epochs = cfg.epochs;
    h.lr = cfg.lr;
    h.momentum = cfg.momentum;
    h.seed = cfg.train_seed();
    h.attention = cfg.attention;
    h.plain_distance = cfg.plain_distance;
    h.reshuffle_partitions = cfg.reshuffle_partitions;
    h.ccp_window = cfg.ccp_window;
    h.validate();
    return h;
}

// The partition the best epoch trained on. Without reshuffling every epoch
// shares one partition; with it, epoch e > 0 drew its own.
std::vector<Episode> best_epoch_episodes(const RunConfig& cfg, const DatasetManifest& m,
                                         int way, int best_epoch) {
    uint64_t seed = mix_seed(cfg.train_seed(), "episodes");
    if (cfg.reshuffle_partitions && best_epoch > 0)
        seed = mix_seed(seed, static_cast<uint64_t>(best_epoch));
    return sample_episodes(m, way, cfg.k_shot, cfg.q_query, seed);
}

nlohmann::json read_train_result(const RunConfig& cfg, const std::string& consumer) {
    const fs::path path = result_path(cfg, "train");
    if (!fs::exists(path))
        throw ProtocolError(consumer + ": no training record at '" + path.string() +
                            "'; run the train command first");
    std::ifstream is(path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DecodeError(consumer + ": bad training record: " + std::string(e.what()));
    }
    return j;
}

EmbedModel<float> load_model(const RunConfig& cfg, const std::string& consumer) {
    const std::string path = cfg.checkpoint_path();
    if (!fs::exists(path))
        throw ProtocolError(consumer + ": no checkpoint at '" + path +
                            "'; run the train command first");
    return load_checkpoint(path);
}

// The loaded checkpoint must be the one this config would have trained.
void check_config_matches(const RunConfig& cfg, const EmbedModel<float>& model,
                          int data_channels, const std::string& consumer) {
    const ModelConfig expect = model_config(cfg, data_channels);
    if (expect.digest() != model.cfg.digest())
        throw ProtocolError(consumer + ": config digest " + std::to_string(expect.digest()) +
                            " does not match the checkpoint (" +
                            std::to_string(model.cfg.digest()) +
                            "); the config differs from the training run");
}

// Counts summed across runs; accuracy and per-class rates recomputed.
EvalReport pooled_report(const RepeatedPartialReport& rep, uint64_t seed,
                         uint64_t config_digest) {
    if (rep.runs.empty()) throw ArgumentError("pooled_report: no runs");
    EvalReport out = rep.runs.front();
    out.seed = seed;
    out.config_digest = config_digest;
    out.timing_ms = 0.0;
    const size_t n = out.classes.size();
    for (size_t r = 1; r < rep.runs.size(); ++r) {
        const EvalReport& er = rep.runs[r];
        for (size_t i = 0; i < n; ++i)
            for (size_t j = 0; j < n; ++j) out.counts[i][j] += er.counts[i][j];
        out.total += er.total;
    }
    int correct = 0;
    out.per_class_accuracy.assign(n, -1.0);
    for (size_t i = 0; i < n; ++i) {
        int row = 0;
        for (size_t j = 0; j < n; ++j) row += out.counts[i][j];
        correct += out.counts[i][i];
        if (row > 0)
            out.per_class_accuracy[i] =
                static_cast<double>(out.counts[i][i]) / static_cast<double>(row);
    }
    out.accuracy = out.total > 0 ? static_cast<double>(correct) / out.total : 0.0;
    return out;
}

}  // namespace

nlohmann::json cmd_synth(const RunConfig& cfg, std::ostream& out) {
    cfg.validate();
    const auto t0 = Clock::now();
    SynthConfig sc = cfg.synth;
    sc.seed = cfg.synth_seed();
    const SynthDataset ds = gen_dataset(sc, cfg.data_root);

    nlohmann::json j;
    j["command"] = "synth";
    j["config"] = cfg.to_json();
    j["classes"] = ds.all.classes;
    j["cubes"] = ds.all.entries.size();
    j["train_cubes"] = ds.train.entries.size();
    j["test_cubes"] = ds.test.entries.size();
    j["manifests"] = {{"pool", (fs::path(cfg.data_root) / "pool.json").string()},
                      {"train", (fs::path(cfg.data_root) / "train.json").string()},
                      {"test", (fs::path(cfg.data_root) / "test.json").string()}};
    write_json(j, result_path(cfg, "synth"));
    out << "synth: " << ds.all.entries.size() << " cubes in " << ds.all.classes.size()
        << " classes (" << ds.train.entries.size() << " train / " << ds.test.entries.size()
        << " test) -> " << cfg.data_root << " [" << fmt_ms(ms_since(t0)) << "]\n";
    return j;
}

nlohmann::json cmd_prep(const RunConfig& cfg, std::ostream& out) {
    cfg.validate();
    const auto t0 = Clock::now();
    const DatasetManifest pool = load_manifest(fs::path(cfg.data_root) / "pool.json");
    const fs::path prep_dir = fs::path(cfg.data_root) / "prepared";

    DatasetManifest prepped;
    prepped.classes = pool.classes;
    prepped.provenance = {{"source", "prep"},
                          {"trim_head", cfg.trim_head},
                          {"trim_tail", cfg.trim_tail},
                          {"reduce_factor", cfg.reduce_factor},
                          {"window", cfg.window},
                          {"stride", cfg.stride},
                          {"density_threshold", cfg.density_threshold}};
    std::vector<int> kept_per_class(pool.classes.size(), 0);
    std::vector<int> dropped_per_class(pool.classes.size(), 0);

    for (const auto& e : pool.entries) {
        HyperCube cube = load_cube(pool.resolve(e));
        if (cfg.trim_head + cfg.trim_tail > 0)
            cube = trim_channels(cube, cfg.trim_head, cfg.trim_tail);
        if (cfg.reduce_factor > 1) cube = average_reduce_channels(cube, cfg.reduce_factor);
        const auto crops = crop_windows(cube, cfg.window, cfg.stride);
        const auto kept = density_filter(crops, cfg.density_threshold);
        kept_per_class[static_cast<size_t>(e.label_index)] += static_cast<int>(kept.size());
        dropped_per_class[static_cast<size_t>(e.label_index)] +=
            static_cast<int>(crops.size() - kept.size());

        const std::string stem = fs::path(e.path).stem().string();
        const fs::path class_dir = prep_dir / e.label;
        fs::create_directories(class_dir);
        for (size_t w = 0; w < kept.size(); ++w) {
            const std::string name = stem + "_w" + std::to_string(w) + ".hsc";
            save_cube(kept[w], class_dir / name, e.label);
            prepped.entries.push_back(
                ManifestEntry{e.label + "/" + name, e.label, e.label_index});
        }
    }
    prepped.base_dir = prep_dir;
    save_manifest(prepped, prep_dir / "pool.json");
    auto [train, test] =
        split_manifest(prepped, cfg.per_class_train, mix_seed(cfg.seed, "prep-split"));
    save_manifest(train, prep_dir / "train.json");
    save_manifest(test, prep_dir / "test.json");

    nlohmann::json j;
    j["command"] = "prep";
    j["config"] = cfg.to_json();
    j["classes"] = prepped.classes;
    j["windows_kept"] = kept_per_class;
    j["windows_dropped"] = dropped_per_class;
    j["train_cubes"] = train.entries.size();
    j["test_cubes"] = test.entries.size();
    j["manifests"] = {{"pool", (prep_dir / "pool.json").string()},
                      {"train", (prep_dir / "train.json").string()},
                      {"test", (prep_dir / "test.json").string()}};
    write_json(j, result_path(cfg, "prep"));
    out << "prep: " << prepped.entries.size() << " windows kept ("
        << train.entries.size() << " train / " << test.entries.size() << " test) -> "
        << prep_dir.string() << " [" << fmt_ms(ms_since(t0)) << "]\n";
    return j;
}

nlohmann::json cmd_train(const RunConfig& cfg, std::ostream& out) {
    cfg.validate();
    const auto t0 = Clock::now();
    const DatasetManifest mtrain = training_manifest(cfg);
    const LoadedDataset data = load_dataset(mtrain);
    if (data.cubes.empty()) throw ArgumentError("train: the train manifest is empty");

    const ModelConfig mc = model_config(cfg, data.channels());
    EmbedModel<float> model = EmbedModel<float>::build(mc);
    model.init_weights();
    const TrainHyper hyper = train_hyper(cfg, static_cast<int>(mtrain.classes.size()));

    TrainResult tr = train(data, model, hyper);
    fs::create_directories(cfg.out_dir);
    save_checkpoint(tr.model, cfg.checkpoint_path());
    export_train_log(tr.log, cfg.trainlog_path());

    const int n_episodes =
        static_cast<int>(tr.log.records.size()) / std::max(1, cfg.epochs);
    nlohmann::json j;
    j["command"] = "train";
    j["config"] = cfg.to_json();
    j["model_config"] = mc.to_json();
    j["config_digest"] = std::to_string(mc.digest());
    j["classes"] = mtrain.classes;
    j["way"] = hyper.way;
    j["episodes_per_epoch"] = n_episodes;
    j["best_epoch"] = tr.log.best_epoch;
    j["best_loss"] = tr.log.epoch_loss[static_cast<size_t>(tr.log.best_epoch)];
    j["best_accuracy"] = tr.log.epoch_accuracy[static_cast<size_t>(tr.log.best_epoch)];
    j["epoch_loss"] = tr.log.epoch_loss;
    j["epoch_accuracy"] = tr.log.epoch_accuracy;
    j["clamped_total"] = tr.log.clamped_total;
    j["parameters"] = tr.model.num_params();
    j["artifacts"] = {{"checkpoint", cfg.checkpoint_path()},
                      {"trainlog", cfg.trainlog_path()}};
    write_json(j, result_path(cfg, "train"));
    out << "train: " << hyper.way << "-way, " << cfg.epochs << " epochs x " << n_episodes
        << " episodes, best epoch " << tr.log.best_epoch << " (loss " << std::setprecision(4)
        << tr.log.epoch_loss[static_cast<size_t>(tr.log.best_epoch)] << ", acc "
        << tr.log.epoch_accuracy[static_cast<size_t>(tr.log.best_epoch)] << ") -> "
        << cfg.checkpoint_path() << " [" << fmt_ms(ms_since(t0)) << "]\n";
    return j;
}

nlohmann::json cmd_ccp(const RunConfig& cfg, std::ostream& out) {
    cfg.validate();
    if (cfg.ccp_window != 1)
        throw ArgumentError(
            "ccp: only ccp_window=1 can be rebuilt from a checkpoint; wider windows "
            "average live snapshots that exist only inside a training run");
    const auto t0 = Clock::now();
    const EmbedModel<float> model = load_model(cfg, "ccp");
    const nlohmann::json trained = read_train_result(cfg, "ccp");

    const DatasetManifest mtrain = training_manifest(cfg);
    const LoadedDataset data = load_dataset(mtrain);
    check_config_matches(cfg, model, data.channels(), "ccp");
    if (trained.value("classes", std::vector<std::string>{}) != mtrain.classes)
        throw ProtocolError("ccp: class registry differs from the training run");
    const int best_epoch = trained.value("best_epoch", -1);
    if (best_epoch < 0) throw DecodeError("ccp: training record lacks a best epoch");

    const auto episodes = best_epoch_episodes(cfg, mtrain,
                                              static_cast<int>(mtrain.classes.size()),
                                              best_epoch);
    TrainLog log;
    log.best_epoch = best_epoch;
    log.best_prototypes = episode_prototypes(episodes, data, model, cfg.attention);
    const CCPBank bank = build_ccp(log, mtrain.classes, model.cfg.digest(), 1);
    fs::create_directories(cfg.out_dir);
    save_ccp(bank, cfg.ccp_path());

    nlohmann::json j;
    j["command"] = "ccp";
    j["config"] = cfg.to_json();
    j["config_digest"] = std::to_string(model.cfg.digest());
    j["classes"] = bank.classes;
    j["best_epoch"] = bank.best_epoch;
    j["episodes"] = bank.n_episodes;
    j["embed_dim"] = bank.protos.cols;
    j["artifacts"] = {{"bank", cfg.ccp_path()}};
    write_json(j, result_path(cfg, "ccp"));
    out << "ccp: " << bank.classes.size() << " prototypes from " << bank.n_episodes
        << " episodes of epoch " << bank.best_epoch << " -> " << cfg.ccp_path() << " ["
        << fmt_ms(ms_since(t0)) << "]\n";
    return j;
}

nlohmann::json cmd_eval(const RunConfig& cfg, std::ostream& out) {
    cfg.validate();
    const auto t0 = Clock::now();
    const EmbedModel<float> model = load_model(cfg, "eval");
    const LoadedDataset test = load_dataset(fs::path(cfg.data_root) / "test.json");

    nlohmann::json j;
    j["command"] = "eval";
    j["config"] = cfg.to_json();
    j["config_digest"] = std::to_string(model.cfg.digest());
    j["protocol"] = cfg.protocol;

    if (cfg.protocol == "complete") {
        if (!fs::exists(cfg.ccp_path()))
            throw ProtocolError("eval: no prototype bank at '" + cfg.ccp_path() +
                                "'; run the ccp command first");
        const CCPBank bank = load_ccp(cfg.ccp_path(), model.cfg.digest());
        EvalReport report = eval_complete(test, model, bank);
        report.seed = cfg.eval_seed();

        const fs::path report_path = fs::path(cfg.out_dir) / "report_complete.json";
        const fs::path confusion_path = fs::path(cfg.out_dir) / "confusion_complete.csv";
        fs::create_directories(cfg.out_dir);
        save_report(report, report_path.string());
        export_confusion(report, confusion_path.string());

        // Per-support-set spread around the collective prototypes, over the
        // best epoch's partition.
        const nlohmann::json trained = read_train_result(cfg, "eval");
        const int best_epoch = trained.value("best_epoch", -1);
        if (best_epoch < 0) throw DecodeError("eval: training record lacks a best epoch");
        const DatasetManifest mtrain = training_manifest(cfg);
        const LoadedDataset train_data = load_dataset(mtrain);
        check_config_matches(cfg, model, train_data.channels(), "eval");
        const auto episodes = best_epoch_episodes(
            cfg, mtrain, static_cast<int>(mtrain.classes.size()), best_epoch);
        const VariabilityReport vr =
            eval_with_support_sets(test, model, train_data, episodes);
        nlohmann::json vj = {{"per_set_accuracies", vr.per_set_accuracies},
                             {"mean", vr.mean},
                             {"stddev", vr.stddev},
                             {"ccp_accuracy", vr.ccp_accuracy}};
        const fs::path var_path = fs::path(cfg.out_dir) / "variability_complete.json";
        write_json(vj, var_path);

        j["accuracy"] = report.accuracy;
        j["total"] = report.total;
        j["per_class_accuracy"] = report.per_class_accuracy;
        j["variability"] = vj;
        j["artifacts"] = {{"report", report_path.string()},
                          {"confusion", confusion_path.string()},
                          {"variability", var_path.string()}};
        write_json(j, result_path(cfg, "eval"));
        out << "eval complete: accuracy " << std::setprecision(4) << report.accuracy << " ("
            << report.total << " queries), per-set mean " << vr.mean << " +- " << vr.stddev
            << " -> " << report_path.string() << " [" << fmt_ms(ms_since(t0)) << "]\n";
        return j;
    }

    // Partial protocols: the pool for support draws is the full train split;
    // the excluded classes never fed episodic training.
    const bool strategy2 = cfg.protocol == "partial-s2";
    const LoadedDataset pool = load_dataset(fs::path(cfg.data_root) / "train.json");
    check_config_matches(cfg, model, pool.channels(), "eval");
    kept_classes(test.manifest.classes, cfg.exclude);  // validates the exclusion list
    const RepeatedPartialReport rep =
        eval_partial_repeated(test, model, pool, cfg.exclude, cfg.k_shot, cfg.repetitions,
                              cfg.eval_seed(), strategy2);
    const EvalReport pooled = pooled_report(rep, cfg.eval_seed(), model.cfg.digest());

    const fs::path report_path = fs::path(cfg.out_dir) / "report_partial.json";
    const fs::path confusion_path = fs::path(cfg.out_dir) / "confusion_partial.csv";
    fs::create_directories(cfg.out_dir);
    save_report(pooled, report_path.string());
    export_confusion(pooled, confusion_path.string());

    j["accuracy"] = pooled.accuracy;
    j["total"] = pooled.total;
    j["repetitions"] = cfg.repetitions;
    j["per_run_accuracies"] = rep.accuracies;
    j["mean"] = rep.mean;
    j["stddev"] = rep.stddev;
    j["excluded"] = cfg.exclude;
    j["artifacts"] = {{"report", report_path.string()},
                      {"confusion", confusion_path.string()}};
    write_json(j, result_path(cfg, "eval"));
    out << "eval " << cfg.protocol << ": mean accuracy " << std::setprecision(4) << rep.mean
        << " +- " << rep.stddev << " over " << cfg.repetitions << " draws ("
        << pooled.total << " queries) -> " << report_path.string() << " ["
        << fmt_ms(ms_since(t0)) << "]\n";
    return j;
}

nlohmann::json cmd_report(const RunConfig& cfg, std::ostream& out) {
    cfg.validate();
    const auto t0 = Clock::now();
    const EmbedModel<float> model = load_model(cfg, "report");
    const LoadedDataset test = load_dataset(fs::path(cfg.data_root) / "test.json");
    check_config_matches(cfg, model, test.channels(), "report");
    fs::create_directories(cfg.out_dir);

    nlohmann::json artifacts;
    const fs::path emb_path = fs::path(cfg.out_dir) / "embeddings_test.csv";
    export_embeddings(test, model, emb_path.string());
    artifacts["embeddings_test"] = emb_path.string();

    if (model.cfg.attention) {
        const fs::path heat_path = fs::path(cfg.out_dir) / "heatmap_test.csv";
        export_attention_heatmap(test, model, heat_path.string());
        artifacts["heatmap_test"] = heat_path.string();
    }

    if (fs::exists(cfg.ccp_path())) {
        const CCPBank bank = load_ccp(cfg.ccp_path(), model.cfg.digest());
        const fs::path ccp_path = fs::path(cfg.out_dir) / "embeddings_ccp.csv";
        export_ccp_embeddings(bank, ccp_path.string());
        artifacts["embeddings_ccp"] = ccp_path.string();
    }

    const fs::path complete_path = fs::path(cfg.out_dir) / "report_complete.json";
    const fs::path partial_path = fs::path(cfg.out_dir) / "report_partial.json";
    if (fs::exists(complete_path) && fs::exists(partial_path)) {
        const EvalReport a = load_report(complete_path.string());
        const EvalReport b = load_report(partial_path.string());
        if (a.classes == b.classes) {
            const fs::path diff_path = fs::path(cfg.out_dir) / "confusion_diff.csv";
            export_confusion_diff(a, b, diff_path.string());
            artifacts["confusion_diff"] = diff_path.string();
        }
    }

    nlohmann::json j;
    j["command"] = "report";
    j["config"] = cfg.to_json();
    j["config_digest"] = std::to_string(model.cfg.digest());
    j["attention"] = model.cfg.attention;
    j["artifacts"] = artifacts;
    write_json(j, result_path(cfg, "report"));
    out << "report: " << artifacts.size() << " artifacts -> " << cfg.out_dir << " ["
        << fmt_ms(ms_since(t0)) << "]\n";
    return j;
}

}  // namespace hsproto
