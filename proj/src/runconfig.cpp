#include "hsproto/runconfig.hpp"

#include <fstream>
#include <set>

#include "hsproto/error.hpp"

namespace hsproto {

void RunConfig::validate() const {
    synth.validate();
    if (trim_head < 0 || trim_tail < 0)
        throw ArgumentError("config: trim amounts must be >= 0");
    if (reduce_factor < 1) throw ArgumentError("config: reduce_factor must be >= 1");
    if (window < 1 || stride < 1) throw ArgumentError("config: window and stride must be >= 1");
    if (density_threshold < 0.0 || density_threshold > 1.0)
        throw ArgumentError("config: density_threshold must be in [0, 1]");
    if (per_class_train < 1) throw ArgumentError("config: per_class_train must be >= 1");
    if (channels < 0) throw ArgumentError("config: channels must be >= 0");
    if (c_out < 1) throw ArgumentError("config: c_out must be >= 1");
    if (reduction_ratio < 1) throw ArgumentError("config: reduction_ratio must be >= 1");
    if (stage_widths.empty()) throw ArgumentError("config: stage_widths must be non-empty");
    for (int w : stage_widths)
        if (w < 1) throw ArgumentError("config: stage widths must be >= 1");
    if (blocks_per_stage < 1) throw ArgumentError("config: blocks_per_stage must be >= 1");
    if (k_shot < 1 || q_query < 1) throw ArgumentError("config: K and Q must be >= 1");
    if (epochs < 1) throw ArgumentError("config: epochs must be >= 1");
    if (lr < 0.0) throw ArgumentError("config: lr must be >= 0");
    if (momentum < 0.0 || momentum >= 1.0)
        throw ArgumentError("config: momentum must be in [0, 1)");
    if (ccp_window < 1) throw ArgumentError("config: ccp_window must be >= 1");
    static const std::set<std::string> kProtocols{"complete", "partial-s1", "partial-s2"};
    if (!kProtocols.count(protocol))
        throw ArgumentError("config: protocol must be complete, partial-s1, or partial-s2");
    if (protocol != "complete" && exclude.empty())
        throw ArgumentError("config: partial protocols need at least one excluded class");
    if (protocol == "complete" && !exclude.empty())
        throw ArgumentError("config: excluded classes require a partial protocol");
    if (repetitions < 1) throw ArgumentError("config: repetitions must be >= 1");
    if (sup_epochs < 1 || sup_batch < 1 || sup_lr < 0.0)
        throw ArgumentError("config: invalid supervised baseline parameters");
}

nlohmann::json RunConfig::to_json() const {
    nlohmann::json j;
    j["paths"] = {{"data_root", data_root}, {"out_dir", out_dir}};
    j["synth"] = synth.to_json();
    j["prep"] = {{"trim_head", trim_head},
                 {"trim_tail", trim_tail},
                 {"reduce_factor", reduce_factor},
                 {"window", window},
                 {"stride", stride},
                 {"density_threshold", density_threshold},
                 {"per_class_train", per_class_train}};
    j["model"] = {{"channels", channels},
                  {"c_out", c_out},
                  {"reduction_ratio", reduction_ratio},
                  {"stage_widths", stage_widths},
                  {"blocks_per_stage", blocks_per_stage},
                  {"residual", residual},
                  {"attention", attention}};
    j["train"] = {{"k_shot", k_shot},
                  {"q_query", q_query},
                  {"epochs", epochs},
                  {"lr", lr},
                  {"momentum", momentum},
                  {"plain_distance", plain_distance},
                  {"reshuffle_partitions", reshuffle_partitions},
                  {"ccp_window", ccp_window}};
    j["eval"] = {{"protocol", protocol}, {"exclude", exclude}, {"repetitions", repetitions}};
    j["supervised"] = {{"epochs", sup_epochs}, {"batch_size", sup_batch}, {"lr", sup_lr}};
    j["seed"] = seed;
    return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
    RunConfig c;
    if (j.contains("paths")) {
        c.data_root = j["paths"].value("data_root", c.data_root);
        c.out_dir = j["paths"].value("out_dir", c.out_dir);
    }
    if (j.contains("synth")) c.synth = SynthConfig::from_json(j["synth"]);
    if (j.contains("prep")) {
        const auto& p = j["prep"];
        c.trim_head = p.value("trim_head", c.trim_head);
        c.trim_tail = p.value("trim_tail", c.trim_tail);
        c.reduce_factor = p.value("reduce_factor", c.reduce_factor);
        c.window = p.value("window", c.window);
        c.stride = p.value("stride", c.stride);
        c.density_threshold = p.value("density_threshold", c.density_threshold);
        c.per_class_train = p.value("per_class_train", c.per_class_train);
    }
    if (j.contains("model")) {
        const auto& m = j["model"];
        c.channels = m.value("channels", c.channels);
        c.c_out = m.value("c_out", c.c_out);
        c.reduction_ratio = m.value("reduction_ratio", c.reduction_ratio);
        c.stage_widths = m.value("stage_widths", c.stage_widths);
        c.blocks_per_stage = m.value("blocks_per_stage", c.blocks_per_stage);
        c.residual = m.value("residual", c.residual);
        c.attention = m.value("attention", c.attention);
    }
    if (j.contains("train")) {
        const auto& t = j["train"];
        c.k_shot = t.value("k_shot", c.k_shot);
        c.q_query = t.value("q_query", c.q_query);
        c.epochs = t.value("epochs", c.epochs);
        c.lr = t.value("lr", c.lr);
        c.momentum = t.value("momentum", c.momentum);
        c.plain_distance = t.value("plain_distance", c.plain_distance);
        c.reshuffle_partitions = t.value("reshuffle_partitions", c.reshuffle_partitions);
        c.ccp_window = t.value("ccp_window", c.ccp_window);
    }
    if (j.contains("eval")) {
        const auto& e = j["eval"];
        c.protocol = e.value("protocol", c.protocol);
        c.exclude = e.value("exclude", c.exclude);
        c.repetitions = e.value("repetitions", c.repetitions);
    }
    if (j.contains("supervised")) {
        const auto& s = j["supervised"];
        c.sup_epochs = s.value("epochs", c.sup_epochs);
        c.sup_batch = s.value("batch_size", c.sup_batch);
        c.sup_lr = s.value("lr", c.sup_lr);
    }
    c.seed = j.value("seed", c.seed);
    return c;
}

RunConfig load_runconfig(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("config: cannot open '" + path + "'");
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DecodeError("config: bad json in '" + path + "': " + e.what());
    }
    try {
        return RunConfig::from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw DecodeError("config: bad field in '" + path + "': " + e.what());
    }
}

void save_runconfig(const RunConfig& cfg, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError("config: cannot open '" + path + "' for writing");
    os << cfg.to_json().dump(2) << "\n";
    if (!os) throw IoError("config: write failed for '" + path + "'");
}

}  // namespace hsproto
