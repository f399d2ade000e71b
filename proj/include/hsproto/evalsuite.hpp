#ifndef HSPROTO_EVALSUITE_HPP
#define HSPROTO_EVALSUITE_HPP

#include <string>
#include <vector>

#include "hsproto/embed.hpp"
#include "hsproto/manifest.hpp"
#include "hsproto/model.hpp"
#include "hsproto/protonet.hpp"
#include "hsproto/train.hpp"

namespace hsproto {

// Row = truth, column = prediction, both over `classes`. Rows of classes that
// were not queried stay zero. timing_ms is informational and never serialized,
// so rerunning a seed reproduces report files byte for byte.
struct EvalReport {
    std::string protocol;
    uint64_t seed = 0;
    uint64_t config_digest = 0;
    std::vector<std::string> classes;
    std::vector<std::string> query_classes;
    std::vector<std::vector<int>> counts;
    double accuracy = 0.0;
    std::vector<double> per_class_accuracy;  // -1 for classes with no queries
    int total = 0;
    double timing_ms = 0.0;
};

void save_report(const EvalReport& report, const std::string& path);
EvalReport load_report(const std::string& path);

// Row-normalized percentages (rows sum to 100; zero rows stay zero).
Mat<double> percentage_matrix(const EvalReport& report);

// Every test cube embedded once and classified against the collective
// prototypes. The bank must carry the digest of `model`'s config and must
// cover every class present in the test set.
EvalReport eval_complete(const LoadedDataset& test, const EmbedModel<float>& model,
                         const CCPBank& bank);

struct VariabilityReport {
    std::vector<double> per_set_accuracies;
    double mean = 0.0;
    double stddev = 0.0;  // sample standard deviation
    double ccp_accuracy = 0.0;
};

// One accuracy per support set (prototypes from that episode's support alone)
// plus the accuracy of their collective average. Episodes index into `train`.
VariabilityReport eval_with_support_sets(const LoadedDataset& test,
                                         const EmbedModel<float>& model,
                                         const LoadedDataset& train,
                                         const std::vector<Episode>& episodes);

// A drawn support set: cubes grouped per class name.
struct SupportSet {
    std::vector<std::string> classes;                 // registry order
    std::vector<std::vector<const LabeledCube*>> members;  // aligned with classes
};

// Queries are the test cubes of `excluded` classes; candidates are the
// classes present in `support`. Support and query cubes must be disjoint.
EvalReport eval_partial_strategy1(const LoadedDataset& test, const EmbedModel<float>& model,
                                  const std::vector<std::string>& excluded,
                                  const SupportSet& support, uint64_t seed);
EvalReport eval_partial_strategy2(const LoadedDataset& test, const EmbedModel<float>& model,
                                  const std::vector<std::string>& excluded,
                                  const SupportSet& support, uint64_t seed);

// Draws K support cubes per class from `pool` for the named classes.
// Draws are per (seed, repetition, class), so a strategy-2 set restricted to
// the excluded classes is exactly the paired strategy-1 set.
SupportSet draw_support(const LoadedDataset& pool, const std::vector<std::string>& classes,
                        int k_shot, uint64_t seed, int repetition);

struct RepeatedPartialReport {
    std::string protocol;
    std::vector<EvalReport> runs;
    std::vector<double> accuracies;
    double mean = 0.0;
    double stddev = 0.0;
};

// Repeats a partial-class evaluation over `repetitions` random support draws.
RepeatedPartialReport eval_partial_repeated(const LoadedDataset& test,
                                            const EmbedModel<float>& model,
                                            const LoadedDataset& pool,
                                            const std::vector<std::string>& excluded,
                                            int k_shot, int repetitions, uint64_t seed,
                                            bool strategy2);

// ---------------------------------------------------------------------------
// Supervised baseline: the same embedding trained end to end under a linear
// head with cross-entropy, for the accuracy-gap comparison.
// ---------------------------------------------------------------------------

struct SupervisedHyper {
    int epochs = 30;
    double lr = 1e-3;
    double momentum = 0.9;
    int batch_size = 32;
    uint64_t seed = 0;
    bool attention = true;

    void validate() const;
};

struct SupervisedResult {
    EmbedModel<float> model;
    std::vector<float> head_w;  // n_classes x D, row-major
    std::vector<float> head_b;
    std::vector<std::string> classes;
    std::vector<double> epoch_loss;
};

SupervisedResult train_supervised_baseline(const LoadedDataset& train,
                                           const EmbedModel<float>& init,
                                           const SupervisedHyper& hyper);

EvalReport eval_supervised(const LoadedDataset& test, const SupervisedResult& clf,
                           uint64_t seed);

// ---------------------------------------------------------------------------
// Artifact exports.
// ---------------------------------------------------------------------------

// Counts plus row percentages as delimited text.
void export_confusion(const EvalReport& report, const std::string& path);
// Difference of the two reports' percentage matrices (a - b).
void export_confusion_diff(const EvalReport& a, const EvalReport& b, const std::string& path);

// Entry (k, c) = mean attention weight of channel c over the cubes of class k.
Mat<double> attention_heatmap(const LoadedDataset& data, const EmbedModel<float>& model);
void export_attention_heatmap(const LoadedDataset& data, const EmbedModel<float>& model,
                              const std::string& path);

// Delimited rows "id,class,v0,...,v{D-1}" for external projection.
void export_embeddings(const LoadedDataset& data, const EmbedModel<float>& model,
                       const std::string& path);
void export_ccp_embeddings(const CCPBank& bank, const std::string& path);
void export_prototype_embeddings(const std::vector<PrototypeSet>& sets,
                                 const std::vector<std::string>& classes,
                                 const std::string& path);

}  // namespace hsproto

#endif
