// hsproto: few-shot hyperspectral cube classification with channel attention
// and collective class prototypes. One subcommand per pipeline stage.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hsproto/commands.hpp"
#include "hsproto/error.hpp"
#include "hsproto/kernels.hpp"

namespace {

// Exit codes, one per error family, documented in the README.
constexpr int kExitArgument = 2;
constexpr int kExitIo = 3;
constexpr int kExitDecode = 4;
constexpr int kExitDigest = 5;
constexpr int kExitProtocol = 6;
constexpr int kExitTraining = 7;

struct Flags {
    std::string config_path;
    std::string attention;  // "", "on", "off"
    std::string protocol;
    std::string out_dir;
    std::string data_root;
    std::vector<std::string> exclude;
    int64_t seed = -1;
    int channels = -1;
    int reduce_factor = -1;
    int threads = -1;
    bool serial = false;
};

void add_common_flags(CLI::App* cmd, Flags& f) {
    cmd->add_option("--config", f.config_path, "JSON run configuration")
        ->check(CLI::ExistingFile);
    cmd->add_option("--seed", f.seed, "master seed (overrides config)");
    cmd->add_option("--attention", f.attention, "channel attention on/off")
        ->check(CLI::IsMember({"on", "off"}));
    cmd->add_option("--channels", f.channels, "input channel count (0 = from data)");
    cmd->add_option("--reduce-factor", f.reduce_factor, "spectral reduction factor (1 = off)");
    cmd->add_option("--protocol", f.protocol, "evaluation protocol")
        ->check(CLI::IsMember({"complete", "partial-s1", "partial-s2"}));
    cmd->add_option("--exclude", f.exclude, "classes held out of training")
        ->delimiter(',');
    cmd->add_option("--out", f.out_dir, "output directory (overrides config)");
    cmd->add_option("--data", f.data_root, "data root (overrides config)");
    cmd->add_option("--threads", f.threads, "cap worker threads (0 = hardware)");
    cmd->add_flag("--serial", f.serial, "disable parallel kernels");
}

hsproto::RunConfig resolve(const Flags& f) {
    hsproto::RunConfig cfg;
    if (!f.config_path.empty()) cfg = hsproto::load_runconfig(f.config_path);
    if (f.seed >= 0) cfg.seed = static_cast<uint64_t>(f.seed);
    if (!f.attention.empty()) cfg.attention = f.attention == "on";
    if (f.channels >= 0) cfg.channels = f.channels;
    if (f.reduce_factor >= 0) cfg.reduce_factor = f.reduce_factor;
    if (!f.protocol.empty()) cfg.protocol = f.protocol;
    if (!f.exclude.empty()) cfg.exclude = f.exclude;
    if (!f.out_dir.empty()) cfg.out_dir = f.out_dir;
    if (!f.data_root.empty()) cfg.data_root = f.data_root;
    if (f.serial) hsproto::kernels::set_parallel_enabled(false);
    if (f.threads >= 0) hsproto::kernels::set_max_threads(f.threads);
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"few-shot hyperspectral cube classifier"};
    app.require_subcommand(1);
    Flags f;

    auto* synth = app.add_subcommand("synth", "generate a synthetic cube dataset");
    auto* prep = app.add_subcommand("prep", "trim, reduce, window, and split raw cubes");
    auto* train = app.add_subcommand("train", "episodic training of the embedding");
    auto* ccp = app.add_subcommand("ccp", "build the collective prototype bank");
    auto* eval = app.add_subcommand("eval", "evaluate under the configured protocol");
    auto* report = app.add_subcommand("report", "export confusion/heatmap/embedding artifacts");
    for (auto* cmd : {synth, prep, train, ccp, eval, report}) add_common_flags(cmd, f);

    CLI11_PARSE(app, argc, argv);

    try {
        const hsproto::RunConfig cfg = resolve(f);
        if (synth->parsed()) hsproto::cmd_synth(cfg, std::cout);
        if (prep->parsed()) hsproto::cmd_prep(cfg, std::cout);
        if (train->parsed()) hsproto::cmd_train(cfg, std::cout);
        if (ccp->parsed()) hsproto::cmd_ccp(cfg, std::cout);
        if (eval->parsed()) hsproto::cmd_eval(cfg, std::cout);
        if (report->parsed()) hsproto::cmd_report(cfg, std::cout);
    } catch (const hsproto::ArgumentError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitArgument;
    } catch (const hsproto::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const hsproto::DecodeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDecode;
    } catch (const hsproto::DigestError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDigest;
    } catch (const hsproto::ProtocolError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitProtocol;
    } catch (const hsproto::TrainingError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitTraining;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
