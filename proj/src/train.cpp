#include "hsproto/train.hpp"

#include <cmath>
#include <fstream>

#include "hsproto/error.hpp"
#include "hsproto/rng.hpp"

namespace hsproto {

void TrainHyper::validate() const {
    if (way < 2) throw ArgumentError("train: way must be >= 2");
    if (k_shot < 1 || q_query < 1) throw ArgumentError("train: K and Q must be >= 1");
    if (epochs < 1) throw ArgumentError("train: epochs must be >= 1");
    if (lr < 0.0) throw ArgumentError("train: lr must be >= 0");
    if (momentum < 0.0 || momentum >= 1.0)
        throw ArgumentError("train: momentum must be in [0, 1)");
    if (ccp_window < 1) throw ArgumentError("train: ccp_window must be >= 1");
}

nlohmann::json TrainHyper::to_json() const {
    return {{"way", way},
            {"k_shot", k_shot},
            {"q_query", q_query},
            {"epochs", epochs},
            {"lr", lr},
            {"momentum", momentum},
            {"seed", seed},
            {"attention", attention},
            {"plain_distance", plain_distance},
            {"reshuffle_partitions", reshuffle_partitions},
            {"ccp_window", ccp_window}};
}

double EpisodeObjective::objective(const Mat<double>& emb, Mat<double>* g_emb) const {
    const int n_s = way * k_shot;
    const int n_q = way * q_query;
    if (emb.rows != static_cast<size_t>(n_s + n_q))
        throw ArgumentError("episode objective: embedding row count mismatch");
    const size_t d = emb.cols;

    Mat<double> protos(static_cast<size_t>(way), d);
    for (int k = 0; k < way; ++k)
        for (size_t j = 0; j < d; ++j) {
            double acc = 0.0;
            for (int i = 0; i < k_shot; ++i)
                acc += emb.at(static_cast<size_t>(k * k_shot + i), j);
            protos.at(static_cast<size_t>(k), j) = acc / static_cast<double>(k_shot);
        }

    Mat<double> queries(static_cast<size_t>(n_q), d);
    for (int j = 0; j < n_q; ++j)
        for (size_t c = 0; c < d; ++c)
            queries.at(static_cast<size_t>(j), c) = emb.at(static_cast<size_t>(n_s + j), c);

    const Mat<double> dsq = sq_distances(queries, protos);
    Mat<double> dist = dsq;
    if (plain)
        for (auto& v : dist.v) v = std::sqrt(v);
    const Mat<double> post = class_posterior(dist);

    std::vector<int> labels(static_cast<size_t>(n_q));
    for (int j = 0; j < n_q; ++j) labels[static_cast<size_t>(j)] = j / q_query;
    const EpisodeLossResult lr = episode_loss(post, labels);
    last_clamped = lr.clamped;
    last_protos = protos;

    int correct = 0;
    for (int j = 0; j < n_q; ++j) {
        size_t best = 0;
        for (size_t k = 1; k < dsq.cols; ++k)
            if (dsq.at(static_cast<size_t>(j), k) < dsq.at(static_cast<size_t>(j), best)) best = k;
        if (static_cast<int>(best) == labels[static_cast<size_t>(j)]) ++correct;
    }
    last_accuracy = static_cast<double>(correct) / static_cast<double>(n_q);

    if (g_emb) {
        std::fill(g_emb->v.begin(), g_emb->v.end(), 0.0);
        // dL/d(dsq_jk); queries that hit the posterior floor contribute no
        // gradient (the clamp is flat there)
        Mat<double> h(static_cast<size_t>(n_q), static_cast<size_t>(way));
        for (int j = 0; j < n_q; ++j) {
            const size_t sj = static_cast<size_t>(j);
            const int t = labels[sj];
            if (post.at(sj, static_cast<size_t>(t)) < kPosteriorFloor) {
                for (int k = 0; k < way; ++k) h.at(sj, static_cast<size_t>(k)) = 0.0;
                continue;
            }
            for (int k = 0; k < way; ++k) {
                const double delta = k == t ? 1.0 : 0.0;
                double g = (delta - post.at(sj, static_cast<size_t>(k))) /
                           static_cast<double>(n_q);
                if (plain) {
                    const double sq = dsq.at(sj, static_cast<size_t>(k));
                    g = sq > 0.0 ? g / (2.0 * std::sqrt(sq)) : 0.0;
                }
                h.at(sj, static_cast<size_t>(k)) = g;
            }
        }
        for (int j = 0; j < n_q; ++j) {
            const size_t sj = static_cast<size_t>(j);
            for (int k = 0; k < way; ++k) {
                const double g = h.at(sj, static_cast<size_t>(k));
                if (g == 0.0) continue;
                for (size_t c = 0; c < d; ++c) {
                    const double diff =
                        queries.at(sj, c) - protos.at(static_cast<size_t>(k), c);
                    g_emb->at(static_cast<size_t>(n_s + j), c) += g * 2.0 * diff;
                    // prototype pull-back, spread over the K support points
                    const double gc = g * -2.0 * diff / static_cast<double>(k_shot);
                    for (int i = 0; i < k_shot; ++i)
                        g_emb->at(static_cast<size_t>(k * k_shot + i), c) += gc;
                }
            }
        }
    }
    return lr.value;
}

namespace {

std::vector<std::vector<float>*> tensor_list(EmbedModel<float>& m) {
    std::vector<std::vector<float>*> out;
    m.for_each_tensor([&](const std::string&, std::vector<float>& v) { out.push_back(&v); });
    return out;
}

// Support rows class-major, then query rows class-major.
std::vector<const Grid<float>*> episode_batch(const Episode& ep,
                                              const std::vector<Grid<float>>& grids) {
    std::vector<const Grid<float>*> batch;
    batch.reserve(static_cast<size_t>(ep.way) * (ep.k_shot + ep.q_query));
    for (const auto& cls : ep.support)
        for (int idx : cls) batch.push_back(&grids[static_cast<size_t>(idx)]);
    for (const auto& cls : ep.query)
        for (int idx : cls) batch.push_back(&grids[static_cast<size_t>(idx)]);
    return batch;
}

std::vector<PrototypeSet> frozen_prototypes(const std::vector<Episode>& episodes,
                                            const std::vector<Grid<float>>& grids,
                                            const EmbedModel<float>& model, bool attention) {
    std::vector<PrototypeSet> out;
    out.reserve(episodes.size());
    for (const auto& ep : episodes) {
        std::vector<Mat<double>> per_class;
        per_class.reserve(static_cast<size_t>(ep.way));
        for (const auto& cls : ep.support) {
            std::vector<const Grid<float>*> batch;
            for (int idx : cls) batch.push_back(&grids[static_cast<size_t>(idx)]);
            per_class.push_back(cast_mat<double>(embed_batch_grids(batch, model, attention)));
        }
        out.push_back(compute_prototypes(per_class, ep.class_ids, ep.id));
    }
    return out;
}

}  // namespace

TrainResult train(const LoadedDataset& data, const EmbedModel<float>& initial,
                  const TrainHyper& hyper) {
    hyper.validate();
    if (data.cubes.empty()) throw ArgumentError("train: empty dataset");
    if (data.channels() != initial.cfg.channels)
        throw ArgumentError("train: dataset has " + std::to_string(data.channels()) +
                            " channels, model expects " +
                            std::to_string(initial.cfg.channels));
    if (hyper.attention && !initial.cfg.attention)
        throw ArgumentError("train: attention requested but model has no attention block");

    std::vector<Grid<float>> grids;
    grids.reserve(data.cubes.size());
    for (const auto& lc : data.cubes) grids.push_back(to_grid<float>(lc.cube));

    std::vector<Episode> episodes =
        sample_episodes(data.manifest, hyper.way, hyper.k_shot, hyper.q_query,
                        mix_seed(hyper.seed, "episodes"));

    EmbedModel<float> model = initial;
    EmbedModel<float> velocity = EmbedModel<float>::build(model.cfg);
    velocity.zero_tensors();
    EmbedModel<float> grads = EmbedModel<float>::build(model.cfg);
    auto p_model = tensor_list(model);
    auto p_vel = tensor_list(velocity);
    auto p_grad = tensor_list(grads);

    EpisodeObjective obj(hyper.way, hyper.k_shot, hyper.q_query, hyper.plain_distance);
    obj.attention = hyper.attention;

    TrainLog log;
    log.seed = hyper.seed;
    log.hyper = hyper.to_json();
    log.distance_kind = hyper.plain_distance ? "plain" : "squared";

    EmbedModel<float> best_model = model;
    std::vector<Episode> best_episodes = episodes;

    for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
        if (hyper.reshuffle_partitions && epoch > 0)
            episodes = sample_episodes(data.manifest, hyper.way, hyper.k_shot, hyper.q_query,
                                       mix_seed(mix_seed(hyper.seed, "episodes"),
                                                static_cast<uint64_t>(epoch)));
        std::vector<int> order(episodes.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
        Rng order_rng(mix_seed(mix_seed(hyper.seed, "order"), static_cast<uint64_t>(epoch)));
        shuffle(order, order_rng);

        double loss_sum = 0.0, acc_sum = 0.0;
        for (int oi : order) {
            const Episode& ep = episodes[static_cast<size_t>(oi)];
            const auto batch = episode_batch(ep, grids);
            grads.zero_tensors();
            double loss;
            try {
                loss = obj.value_and_grad(model, batch, grads);
            } catch (const ArgumentError& e) {
                throw TrainingError("train: diverged at epoch " + std::to_string(epoch) +
                                    ", episode " + std::to_string(ep.id) + ": " + e.what());
            }
            if (!std::isfinite(loss))
                throw TrainingError("train: non-finite loss at epoch " + std::to_string(epoch) +
                                    ", episode " + std::to_string(ep.id));
            log.records.push_back({epoch, ep.id, loss, obj.last_accuracy, obj.last_clamped});
            log.clamped_total += obj.last_clamped;
            log.live_prototypes[epoch].push_back(
                PrototypeSet{obj.last_protos, ep.class_ids, ep.id});
            loss_sum += loss;
            acc_sum += obj.last_accuracy;
            if (hyper.lr != 0.0) {
                const float lr = static_cast<float>(hyper.lr);
                const float mom = static_cast<float>(hyper.momentum);
                for (size_t t = 0; t < p_model.size(); ++t) {
                    auto& p = *p_model[t];
                    auto& v = *p_vel[t];
                    const auto& g = *p_grad[t];
                    for (size_t i = 0; i < p.size(); ++i) {
                        v[i] = mom * v[i] + g[i];
                        p[i] -= lr * v[i];
                    }
                }
            }
        }
        const double n = static_cast<double>(episodes.size());
        log.epoch_loss.push_back(loss_sum / n);
        log.epoch_accuracy.push_back(acc_sum / n);
        if (log.best_epoch < 0 ||
            log.epoch_loss.back() < log.epoch_loss[static_cast<size_t>(log.best_epoch)]) {
            log.best_epoch = epoch;
            best_model = model;
            best_episodes = episodes;
        }
    }

    log.best_prototypes = frozen_prototypes(best_episodes, grids, best_model, hyper.attention);
    return TrainResult{std::move(best_model), std::move(log)};
}

std::vector<PrototypeSet> episode_prototypes(const std::vector<Episode>& episodes,
                                             const LoadedDataset& data,
                                             const EmbedModel<float>& model, bool attention) {
    std::vector<Grid<float>> grids;
    grids.reserve(data.cubes.size());
    for (const auto& lc : data.cubes) grids.push_back(to_grid<float>(lc.cube));
    return frozen_prototypes(episodes, grids, model, attention);
}

namespace {

CCPBank average_sets(const std::vector<const PrototypeSet*>& sets,
                     const std::vector<std::string>& classes) {
    const size_t way = sets[0]->protos.rows;
    const size_t d = sets[0]->protos.cols;
    if (way != classes.size())
        throw ArgumentError("build_ccp: prototype way does not match class registry");
    CCPBank bank;
    bank.classes = classes;
    bank.protos = Mat<double>(way, d);
    bank.n_episodes = static_cast<int>(sets.size());
    for (size_t k = 0; k < way; ++k)
        for (size_t c = 0; c < d; ++c) {
            double acc = 0.0;
            for (const auto* s : sets) acc += s->protos.at(k, c);
            bank.protos.at(k, c) = acc / static_cast<double>(sets.size());
        }
    return bank;
}

}  // namespace

CCPBank build_ccp(const TrainLog& log, const std::vector<std::string>& classes,
                  uint64_t config_digest, int window) {
    if (window < 1) throw ArgumentError("build_ccp: window must be >= 1");
    std::vector<const PrototypeSet*> sets;
    if (window == 1) {
        for (const auto& s : log.best_prototypes) sets.push_back(&s);
    } else {
        const int first = std::max(0, log.best_epoch - window + 1);
        for (int e = first; e <= log.best_epoch; ++e) {
            auto it = log.live_prototypes.find(e);
            if (it == log.live_prototypes.end())
                throw ArgumentError("build_ccp: missing prototype snapshots for epoch " +
                                    std::to_string(e));
            for (const auto& s : it->second) sets.push_back(&s);
        }
    }
    if (sets.empty()) throw ArgumentError("build_ccp: missing prototype snapshots");
    CCPBank bank = average_sets(sets, classes);
    bank.best_epoch = log.best_epoch;
    bank.config_digest = config_digest;
    return bank;
}

CCPBank build_ccp(const TrainLog& log, const std::vector<std::string>& classes, int window) {
    return build_ccp(log, classes, 0, window);
}

void export_train_log(const TrainLog& log, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError("export_train_log: cannot open '" + path + "'");
    for (const auto& r : log.records) {
        nlohmann::json j{{"epoch", r.epoch},
                         {"episode", r.episode},
                         {"loss", r.loss},
                         {"accuracy", r.accuracy},
                         {"clamped", r.clamped}};
        os << j.dump() << "\n";
    }
    if (!os) throw IoError("export_train_log: write failed for '" + path + "'");
}

}  // namespace hsproto
