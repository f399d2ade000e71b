#include "hsproto/protonet.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "hsproto/error.hpp"
#include "hsproto/kernels.hpp"
#include "hsproto/rng.hpp"

namespace hsproto {

std::vector<Episode> sample_episodes(const DatasetManifest& manifest, int way, int k_shot,
                                     int q_query, uint64_t seed) {
    if (way < 2) throw ArgumentError("sample_episodes: way must be >= 2");
    if (k_shot < 1 || q_query < 1)
        throw ArgumentError("sample_episodes: K and Q must be >= 1");
    if (way != static_cast<int>(manifest.classes.size()))
        throw ArgumentError("sample_episodes: way (" + std::to_string(way) +
                            ") must equal the manifest's class count (" +
                            std::to_string(manifest.classes.size()) +
                            "); filter the manifest to choose classes");
    const int block = k_shot + q_query;
    const auto by_class = manifest.entries_by_class();
    const int per_class = static_cast<int>(by_class[0].size());
    for (int c = 0; c < way; ++c) {
        const int n = static_cast<int>(by_class[static_cast<size_t>(c)].size());
        if (n == 0 || n % block != 0) {
            const int down = (n / block) * block;
            const int up = down + block;
            const int nearest = (down > 0 && n - down <= up - n) ? down : up;
            throw ArgumentError("sample_episodes: class '" + manifest.classes[static_cast<size_t>(c)] +
                                "' has " + std::to_string(n) + " cubes, not divisible by K+Q=" +
                                std::to_string(block) + " (nearest valid count: " +
                                std::to_string(nearest) + ")");
        }
        if (n != per_class)
            throw ArgumentError("sample_episodes: class cardinalities differ; balance the manifest");
    }
    const int n_episodes = per_class / block;
    std::vector<Episode> episodes(static_cast<size_t>(n_episodes));
    for (int e = 0; e < n_episodes; ++e) {
        auto& ep = episodes[static_cast<size_t>(e)];
        ep.way = way;
        ep.k_shot = k_shot;
        ep.q_query = q_query;
        ep.id = e;
        ep.class_ids.resize(static_cast<size_t>(way));
        for (int c = 0; c < way; ++c) ep.class_ids[static_cast<size_t>(c)] = c;
        ep.support.resize(static_cast<size_t>(way));
        ep.query.resize(static_cast<size_t>(way));
    }
    for (int c = 0; c < way; ++c) {
        std::vector<int> order = by_class[static_cast<size_t>(c)];
        Rng rng(mix_seed(seed, static_cast<uint64_t>(c)));
        shuffle(order, rng);
        for (int e = 0; e < n_episodes; ++e) {
            auto& ep = episodes[static_cast<size_t>(e)];
            const int base = e * block;
            ep.support[static_cast<size_t>(c)].assign(order.begin() + base,
                                                      order.begin() + base + k_shot);
            ep.query[static_cast<size_t>(c)].assign(order.begin() + base + k_shot,
                                                    order.begin() + base + block);
        }
    }
    return episodes;
}

PrototypeSet compute_prototypes(const std::vector<Mat<double>>& per_class_embeddings,
                                const std::vector<int>& class_ids, int source_episode) {
    if (per_class_embeddings.empty())
        throw ArgumentError("compute_prototypes: no classes");
    if (per_class_embeddings.size() != class_ids.size())
        throw ArgumentError("compute_prototypes: class id count mismatch");
    const size_t d = per_class_embeddings[0].cols;
    PrototypeSet ps;
    ps.protos = Mat<double>(per_class_embeddings.size(), d);
    ps.class_ids = class_ids;
    ps.source_episode = source_episode;
    for (size_t k = 0; k < per_class_embeddings.size(); ++k) {
        const auto& e = per_class_embeddings[k];
        if (e.rows == 0) throw ArgumentError("compute_prototypes: class " +
                                             std::to_string(class_ids[k]) + " has no embeddings");
        if (e.cols != d) throw ArgumentError("compute_prototypes: embedding widths differ");
        for (size_t j = 0; j < d; ++j) {
            double acc = 0.0;
            for (size_t i = 0; i < e.rows; ++i) acc += e.at(i, j);
            ps.protos.at(k, j) = acc / static_cast<double>(e.rows);
        }
    }
    return ps;
}

Mat<double> sq_distances(const Mat<double>& queries, const Mat<double>& prototypes) {
    return kernels::sq_distances(queries, prototypes);
}

Mat<double> class_posterior(const Mat<double>& distances) {
    if (distances.rows == 0 || distances.cols == 0)
        throw ArgumentError("class_posterior: empty distance matrix");
    for (double v : distances.v)
        if (!std::isfinite(v)) throw ArgumentError("class_posterior: non-finite distance");
    return kernels::softmax_neg_rows(distances);
}

EpisodeLossResult episode_loss(const Mat<double>& posterior, const std::vector<int>& labels) {
    if (labels.size() != posterior.rows)
        throw ArgumentError("episode_loss: label count does not match query count");
    EpisodeLossResult r;
    double acc = 0.0;
    for (size_t i = 0; i < labels.size(); ++i) {
        const int t = labels[i];
        if (t < 0 || static_cast<size_t>(t) >= posterior.cols)
            throw ArgumentError("episode_loss: label out of range");
        double p = posterior.at(i, static_cast<size_t>(t));
        if (p < kPosteriorFloor) {
            p = kPosteriorFloor;
            ++r.clamped;
        }
        acc -= std::log(p);
    }
    r.value = acc / static_cast<double>(labels.size());
    return r;
}

std::vector<int> classify(const Mat<double>& query_embeddings, const Mat<double>& prototypes,
                          const std::vector<int>& class_ids) {
    if (prototypes.rows == 0) throw ArgumentError("classify: empty prototype bank");
    if (query_embeddings.cols != prototypes.cols)
        throw ArgumentError("classify: embedding width does not match prototypes");
    if (class_ids.size() != prototypes.rows)
        throw ArgumentError("classify: class id count does not match prototype rows");
    const Mat<double> d = kernels::sq_distances(query_embeddings, prototypes);
    std::vector<int> pred(query_embeddings.rows);
    for (size_t i = 0; i < d.rows; ++i) {
        size_t best = 0;
        for (size_t j = 1; j < d.cols; ++j) {
            // strict less: ties keep the earlier row, and rows are ordered by
            // ascending class index
            if (d.at(i, j) < d.at(i, best)) best = j;
        }
        pred[i] = class_ids[best];
    }
    return pred;
}

std::vector<int> classify(const Mat<double>& query_embeddings, const PrototypeSet& protos) {
    return classify(query_embeddings, protos.protos, protos.class_ids);
}

std::vector<int> classify(const Mat<double>& query_embeddings, const CCPBank& bank) {
    std::vector<int> ids(bank.protos.rows);
    for (size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
    return classify(query_embeddings, bank.protos, ids);
}

void save_ccp(const CCPBank& bank, const std::string& path) {
    if (bank.protos.rows != bank.classes.size())
        throw ArgumentError("save_ccp: row count does not match class registry");
    nlohmann::json j;
    j["format_version"] = 1;
    j["classes"] = bank.classes;
    j["embed_dim"] = bank.protos.cols;
    nlohmann::json rows = nlohmann::json::array();
    for (size_t i = 0; i < bank.protos.rows; ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (size_t k = 0; k < bank.protos.cols; ++k) row.push_back(bank.protos.at(i, k));
        rows.push_back(std::move(row));
    }
    j["prototypes"] = std::move(rows);
    j["provenance"] = {{"best_epoch", bank.best_epoch},
                       {"n_episodes", bank.n_episodes},
                       {"config_digest", std::to_string(bank.config_digest)}};
    std::ofstream os(path);
    if (!os) throw IoError("save_ccp: cannot open '" + path + "' for writing");
    os << j.dump(2) << "\n";
    if (!os) throw IoError("save_ccp: write failed for '" + path + "'");
}

CCPBank load_ccp(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("load_ccp: cannot open '" + path + "'");
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DecodeError("load_ccp: bad json in '" + path + "': " + e.what());
    }
    try {
        if (j.at("format_version").get<int>() != 1)
            throw DecodeError("load_ccp: unsupported format version");
        CCPBank bank;
        bank.classes = j.at("classes").get<std::vector<std::string>>();
        const size_t d = j.at("embed_dim").get<size_t>();
        const auto& rows = j.at("prototypes");
        if (rows.size() != bank.classes.size())
            throw DecodeError("load_ccp: prototype row count does not match classes");
        bank.protos = Mat<double>(rows.size(), d);
        for (size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].size() != d) throw DecodeError("load_ccp: ragged prototype row");
            for (size_t k = 0; k < d; ++k) {
                bank.protos.at(i, k) = rows[i][k].get<double>();
                if (!std::isfinite(bank.protos.at(i, k)))
                    throw DecodeError("load_ccp: non-finite prototype value");
            }
        }
        const auto& prov = j.at("provenance");
        bank.best_epoch = prov.at("best_epoch").get<int>();
        bank.n_episodes = prov.at("n_episodes").get<int>();
        bank.config_digest = std::stoull(prov.at("config_digest").get<std::string>());
        return bank;
    } catch (const nlohmann::json::exception& e) {
        throw DecodeError("load_ccp: bad bank file '" + path + "': " + e.what());
    }
}

CCPBank load_ccp(const std::string& path, uint64_t checkpoint_digest) {
    CCPBank bank = load_ccp(path);
    if (bank.config_digest != checkpoint_digest)
        throw DigestError("load_ccp: bank digest " + std::to_string(bank.config_digest) +
                          " does not match checkpoint digest " +
                          std::to_string(checkpoint_digest));
    return bank;
}

}  // namespace hsproto
