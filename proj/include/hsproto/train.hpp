#ifndef HSPROTO_TRAIN_HPP
#define HSPROTO_TRAIN_HPP

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "hsproto/embed.hpp"
#include "hsproto/model.hpp"
#include "hsproto/protonet.hpp"

namespace hsproto {

struct TrainHyper {
    int way = 0;
    int k_shot = 5;
    int q_query = 10;
    int epochs = 50;
    double lr = 1e-3;
    double momentum = 0.9;
    uint64_t seed = 0;
    bool attention = true;
    bool plain_distance = false;     // posterior over plain L2 instead of squared
    bool reshuffle_partitions = false;  // re-partition episodes every epoch
    int ccp_window = 1;              // trailing epochs feeding the collective prototypes

    void validate() const;
    nlohmann::json to_json() const;
};

struct EpisodeRecord {
    int epoch = 0;
    int episode = 0;
    double loss = 0.0;
    double accuracy = 0.0;
    int clamped = 0;
};

struct TrainLog {
    std::vector<EpisodeRecord> records;
    std::vector<double> epoch_loss;      // mean query loss per epoch
    std::vector<double> epoch_accuracy;  // mean query accuracy per epoch
    int best_epoch = -1;                 // minimum mean query loss, ties earliest
    uint64_t seed = 0;
    nlohmann::json hyper;
    std::string distance_kind;  // "squared" or "plain"
    int clamped_total = 0;      // queries that hit the posterior floor

    // Prototypes of every episode, recomputed with the frozen end-of-best-
    // epoch weights. This is what feeds the collective prototypes.
    std::vector<PrototypeSet> best_prototypes;
    // Prototypes as they stood when each episode was visited during training,
    // keyed by epoch. Used only by the trailing-window averaging mode.
    std::map<int, std::vector<PrototypeSet>> live_prototypes;
};

struct TrainResult {
    EmbedModel<float> model;  // weights from the end of the best epoch
    TrainLog log;
};

// Episodic SGD with momentum over the mean query NLL. Deterministic per seed;
// the returned model carries the best epoch's weights.
TrainResult train(const LoadedDataset& data, const EmbedModel<float>& initial,
                  const TrainHyper& hyper);

// C_k = (1/N) * sum of episode prototypes for class k. window=1 averages the
// best epoch's recomputed prototype sets; window>1 widens to the live sets of
// the trailing `window` epochs ending at the best epoch.
CCPBank build_ccp(const TrainLog& log, const std::vector<std::string>& classes, int window = 1);
CCPBank build_ccp(const TrainLog& log, const std::vector<std::string>& classes,
                  uint64_t config_digest, int window);

// One JSON object per line: epoch, episode, loss, accuracy.
void export_train_log(const TrainLog& log, const std::string& path);

// Per-episode support prototypes under fixed weights. With the best-epoch
// model and its episode partition this reproduces TrainLog::best_prototypes,
// which is how a prototype bank is rebuilt from a checkpoint.
std::vector<PrototypeSet> episode_prototypes(const std::vector<Episode>& episodes,
                                             const LoadedDataset& data,
                                             const EmbedModel<float>& model, bool attention);

// The per-episode embedding objective: prototypes from the support rows,
// posterior over (squared) distances for the query rows, mean NLL.
// Rows are class-major: way*K support rows then way*Q query rows.
struct EpisodeObjective final : EmbeddingLoss<float> {
    int way, k_shot, q_query;
    bool plain;
    mutable Mat<double> last_protos;
    mutable double last_accuracy = 0.0;
    mutable int last_clamped = 0;

    EpisodeObjective(int way_, int k_, int q_, bool plain_)
        : way(way_), k_shot(k_), q_query(q_), plain(plain_) {}

    double objective(const Mat<double>& emb, Mat<double>* g_emb) const override;
};

}  // namespace hsproto

#endif
