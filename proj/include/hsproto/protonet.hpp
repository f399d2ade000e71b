#ifndef HSPROTO_PROTONET_HPP
#define HSPROTO_PROTONET_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "hsproto/manifest.hpp"
#include "hsproto/tensor.hpp"

namespace hsproto {

// One N-way episode. support[c] / query[c] hold indices into the dataset's
// cube list for class class_ids[c]; the two are disjoint by construction.
struct Episode {
    int way = 0;
    int k_shot = 0;
    int q_query = 0;
    std::vector<int> class_ids;
    std::vector<std::vector<int>> support;
    std::vector<std::vector<int>> query;
    int id = 0;
};

// Partitions every class's cubes into episodes of K support + Q query each,
// without replacement. Classes are chosen by filtering the manifest first,
// so `way` must equal the manifest's class count.
std::vector<Episode> sample_episodes(const DatasetManifest& manifest, int way, int k_shot,
                                     int q_query, uint64_t seed);

struct PrototypeSet {
    Mat<double> protos;  // way x D
    std::vector<int> class_ids;
    int source_episode = -1;
};

// c_k = arithmetic mean of class k's support embeddings.
PrototypeSet compute_prototypes(const std::vector<Mat<double>>& per_class_embeddings,
                                const std::vector<int>& class_ids, int source_episode = -1);

// Pairwise squared Euclidean distances, entry (i,j) = |q_i - p_j|^2.
Mat<double> sq_distances(const Mat<double>& queries, const Mat<double>& prototypes);

// Row-wise softmax of negated distances, max-shift stabilized. Rows sum to 1
// within 1e-9 and entries lie in [0,1].
Mat<double> class_posterior(const Mat<double>& distances);

struct EpisodeLossResult {
    double value = 0.0;
    int clamped = 0;  // queries whose true-class probability hit the 1e-12 floor
};

// Mean over queries of -log p(true class).
EpisodeLossResult episode_loss(const Mat<double>& posterior, const std::vector<int>& labels);

inline constexpr double kPosteriorFloor = 1e-12;

// Nearest prototype by squared distance; ties go to the lowest class index.
// Returns class_ids entries (registry indices), one per query row.
std::vector<int> classify(const Mat<double>& query_embeddings, const Mat<double>& prototypes,
                          const std::vector<int>& class_ids);
std::vector<int> classify(const Mat<double>& query_embeddings, const PrototypeSet& protos);

// Collective class prototypes: one row per registered class, averaged over
// the contributing episodes' prototype sets.
struct CCPBank {
    Mat<double> protos;
    std::vector<std::string> classes;
    int best_epoch = -1;
    int n_episodes = 0;
    uint64_t config_digest = 0;
};

std::vector<int> classify(const Mat<double>& query_embeddings, const CCPBank& bank);

void save_ccp(const CCPBank& bank, const std::string& path);
// Verifies the stored config digest against the digest of the checkpoint the
// bank will be used with; mismatch is a compatibility error.
CCPBank load_ccp(const std::string& path, uint64_t checkpoint_digest);
// Inspection-only load, no compatibility check.
CCPBank load_ccp(const std::string& path);

}  // namespace hsproto

#endif
