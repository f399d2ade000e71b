#ifndef HSPROTO_RUNCONFIG_HPP
#define HSPROTO_RUNCONFIG_HPP

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "hsproto/model.hpp"
#include "hsproto/synth.hpp"
#include "hsproto/train.hpp"

namespace hsproto {

// The single experiment record: one JSON document, overridable by a few CLI
// flags. Every command echoes the resolved config into its result document,
// so a run can be reproduced from any of its outputs.
struct RunConfig {
    // paths
    std::string data_root = "data";
    std::string out_dir = "out";

    // synthesis (SynthConfig::seed is derived from `seed`, see below)
    SynthConfig synth;

    // preparation: trim -> reduce (optional) -> crop -> density filter -> split
    int trim_head = 10;
    int trim_tail = 10;
    int reduce_factor = 2;  // 1 disables channel reduction
    int window = 128;
    int stride = 64;
    double density_threshold = 0.5;
    int per_class_train = 30;

    // model
    int channels = 0;  // 0 = take from the training data
    int c_out = 3;
    int reduction_ratio = 16;
    std::vector<int> stage_widths{32, 64};
    int blocks_per_stage = 2;
    bool residual = true;
    bool attention = true;

    // training
    int k_shot = 5;
    int q_query = 10;
    int epochs = 50;
    double lr = 1e-3;
    double momentum = 0.9;
    bool plain_distance = false;
    bool reshuffle_partitions = false;
    int ccp_window = 1;

    // evaluation
    std::string protocol = "complete";  // complete | partial-s1 | partial-s2
    std::vector<std::string> exclude;
    int repetitions = 20;

    // supervised baseline
    int sup_epochs = 30;
    int sup_batch = 32;
    double sup_lr = 1e-3;

    uint64_t seed = 1;

    // Stream separation: each stage derives its own seed from the master.
    uint64_t synth_seed() const { return seed; }
    uint64_t init_seed() const { return mix_seed(seed, "init"); }
    uint64_t train_seed() const { return mix_seed(seed, "train"); }
    uint64_t eval_seed() const { return mix_seed(seed, "eval"); }

    void validate() const;
    nlohmann::json to_json() const;
    static RunConfig from_json(const nlohmann::json& j);

    // file layout under out_dir
    std::string checkpoint_path() const { return out_dir + "/checkpoint.bin"; }
    std::string trainlog_path() const { return out_dir + "/trainlog.jsonl"; }
    std::string ccp_path() const { return out_dir + "/ccp.json"; }
};

RunConfig load_runconfig(const std::string& path);
void save_runconfig(const RunConfig& cfg, const std::string& path);

}  // namespace hsproto

#endif
