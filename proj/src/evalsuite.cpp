#include "hsproto/evalsuite.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "hsproto/error.hpp"
#include "hsproto/rng.hpp"

namespace hsproto {

namespace {

std::string fmt_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

std::string fmt_f6(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

double elapsed_ms(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
        .count();
}

Mat<double> embed_cubes(const std::vector<const LabeledCube*>& cubes,
                        const EmbedModel<float>& model) {
    std::vector<Grid<float>> grids;
    grids.reserve(cubes.size());
    for (const auto* lc : cubes) grids.push_back(to_grid<float>(lc->cube));
    std::vector<const Grid<float>*> ptrs;
    ptrs.reserve(grids.size());
    for (const auto& g : grids) ptrs.push_back(&g);
    return cast_mat<double>(embed_batch_grids(ptrs, model, model.cfg.attention));
}

Mat<double> embed_dataset(const LoadedDataset& d, const EmbedModel<float>& model) {
    std::vector<const LabeledCube*> ptrs;
    ptrs.reserve(d.cubes.size());
    for (const auto& lc : d.cubes) ptrs.push_back(&lc);
    return embed_cubes(ptrs, model);
}

EvalReport build_report(const std::vector<std::string>& classes, const std::vector<int>& truths,
                        const std::vector<int>& preds, const std::string& protocol,
                        uint64_t config_digest) {
    const size_t n = classes.size();
    EvalReport r;
    r.protocol = protocol;
    r.config_digest = config_digest;
    r.classes = classes;
    r.counts.assign(n, std::vector<int>(n, 0));
    for (size_t i = 0; i < truths.size(); ++i)
        ++r.counts[static_cast<size_t>(truths[i])][static_cast<size_t>(preds[i])];
    r.total = static_cast<int>(truths.size());
    int diag = 0;
    r.per_class_accuracy.assign(n, -1.0);
    for (size_t c = 0; c < n; ++c) {
        int row = 0;
        for (size_t p = 0; p < n; ++p) row += r.counts[c][p];
        diag += r.counts[c][c];
        if (row > 0) {
            r.per_class_accuracy[c] = static_cast<double>(r.counts[c][c]) / row;
            r.query_classes.push_back(classes[c]);
        }
    }
    r.accuracy = r.total > 0 ? static_cast<double>(diag) / r.total : 0.0;
    return r;
}

double accuracy_of(const std::vector<int>& truths, const std::vector<int>& preds) {
    int ok = 0;
    for (size_t i = 0; i < truths.size(); ++i) ok += truths[i] == preds[i] ? 1 : 0;
    return truths.empty() ? 0.0 : static_cast<double>(ok) / static_cast<double>(truths.size());
}

}  // namespace

void save_report(const EvalReport& report, const std::string& path) {
    nlohmann::json j;
    j["format_version"] = 1;
    j["protocol"] = report.protocol;
    j["seed"] = report.seed;
    j["config_digest"] = std::to_string(report.config_digest);
    j["classes"] = report.classes;
    j["query_classes"] = report.query_classes;
    j["counts"] = report.counts;
    j["accuracy"] = report.accuracy;
    j["per_class_accuracy"] = report.per_class_accuracy;
    j["total"] = report.total;
    std::ofstream os(path);
    if (!os) throw IoError("save_report: cannot open '" + path + "'");
    os << j.dump(2) << "\n";
    if (!os) throw IoError("save_report: write failed for '" + path + "'");
}

EvalReport load_report(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("load_report: cannot open '" + path + "'");
    nlohmann::json j;
    try {
        is >> j;
        EvalReport r;
        r.protocol = j.at("protocol").get<std::string>();
        r.seed = j.at("seed").get<uint64_t>();
        r.config_digest = std::stoull(j.at("config_digest").get<std::string>());
        r.classes = j.at("classes").get<std::vector<std::string>>();
        r.query_classes = j.at("query_classes").get<std::vector<std::string>>();
        r.counts = j.at("counts").get<std::vector<std::vector<int>>>();
        r.accuracy = j.at("accuracy").get<double>();
        r.per_class_accuracy = j.at("per_class_accuracy").get<std::vector<double>>();
        r.total = j.at("total").get<int>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw DecodeError("load_report: bad report '" + path + "': " + e.what());
    }
}

Mat<double> percentage_matrix(const EvalReport& report) {
    const size_t n = report.classes.size();
    Mat<double> pct(n, n);
    for (size_t i = 0; i < n; ++i) {
        int row = 0;
        for (size_t j = 0; j < n; ++j) row += report.counts[i][j];
        for (size_t j = 0; j < n; ++j)
            pct.at(i, j) = row > 0 ? 100.0 * report.counts[i][j] / row : 0.0;
    }
    return pct;
}

EvalReport eval_complete(const LoadedDataset& test, const EmbedModel<float>& model,
                         const CCPBank& bank) {
    const auto t0 = std::chrono::steady_clock::now();
    if (bank.config_digest != model.cfg.digest())
        throw DigestError("eval_complete: bank digest does not match the model config");
    if (bank.protos.rows == 0) throw ArgumentError("eval_complete: empty prototype bank");
    std::unordered_map<std::string, int> bank_index;
    for (size_t i = 0; i < bank.classes.size(); ++i)
        bank_index.emplace(bank.classes[i], static_cast<int>(i));
    for (const auto& cls : test.manifest.classes)
        if (!bank_index.count(cls))
            throw ProtocolError("eval_complete: test class '" + cls +
                                "' is absent from the prototype bank");
    std::vector<int> truths;
    truths.reserve(test.cubes.size());
    for (const auto& lc : test.cubes) truths.push_back(bank_index.at(lc.label));
    const Mat<double> emb = embed_dataset(test, model);
    const std::vector<int> preds = classify(emb, bank);
    EvalReport r = build_report(bank.classes, truths, preds, "complete", bank.config_digest);
    r.timing_ms = elapsed_ms(t0);
    return r;
}

VariabilityReport eval_with_support_sets(const LoadedDataset& test,
                                         const EmbedModel<float>& model,
                                         const LoadedDataset& train,
                                         const std::vector<Episode>& episodes) {
    if (episodes.empty()) throw ArgumentError("eval_with_support_sets: no episodes");
    if (train.manifest.classes != test.manifest.classes)
        throw ProtocolError("eval_with_support_sets: train and test class registries differ");
    std::vector<int> truths;
    truths.reserve(test.cubes.size());
    for (const auto& lc : test.cubes) truths.push_back(lc.label_index);
    const Mat<double> emb = embed_dataset(test, model);

    std::vector<PrototypeSet> sets;
    sets.reserve(episodes.size());
    for (const auto& ep : episodes) {
        std::vector<Mat<double>> per_class;
        per_class.reserve(ep.support.size());
        for (const auto& cls : ep.support) {
            std::vector<const LabeledCube*> cubes;
            for (int idx : cls) cubes.push_back(&train.cubes[static_cast<size_t>(idx)]);
            per_class.push_back(embed_cubes(cubes, model));
        }
        sets.push_back(compute_prototypes(per_class, ep.class_ids, ep.id));
    }

    VariabilityReport vr;
    for (const auto& s : sets)
        vr.per_set_accuracies.push_back(accuracy_of(truths, classify(emb, s)));

    const size_t way = sets[0].protos.rows;
    const size_t d = sets[0].protos.cols;
    Mat<double> ccp(way, d);
    for (size_t k = 0; k < way; ++k)
        for (size_t c = 0; c < d; ++c) {
            double acc = 0.0;
            for (const auto& s : sets) acc += s.protos.at(k, c);
            ccp.at(k, c) = acc / static_cast<double>(sets.size());
        }
    vr.ccp_accuracy = accuracy_of(truths, classify(emb, ccp, sets[0].class_ids));

    double sum = 0.0;
    for (double a : vr.per_set_accuracies) sum += a;
    vr.mean = sum / static_cast<double>(vr.per_set_accuracies.size());
    if (vr.per_set_accuracies.size() > 1) {
        double ss = 0.0;
        for (double a : vr.per_set_accuracies) ss += (a - vr.mean) * (a - vr.mean);
        vr.stddev = std::sqrt(ss / static_cast<double>(vr.per_set_accuracies.size() - 1));
    }
    return vr;
}

namespace {

// Shared core of both partial-class strategies: candidates come from the
// support set, queries are the excluded classes' test cubes.
EvalReport eval_against_support(const LoadedDataset& test, const EmbedModel<float>& model,
                                const SupportSet& support,
                                const std::vector<std::string>& query_classes,
                                const std::string& protocol, uint64_t seed) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto& registry = test.manifest.classes;
    if (support.classes.size() != support.members.size() || support.classes.empty())
        throw ArgumentError("partial eval: malformed support set");
    std::unordered_map<std::string, int> reg_index;
    for (size_t i = 0; i < registry.size(); ++i) reg_index.emplace(registry[i], static_cast<int>(i));
    std::unordered_set<std::string> support_ids;
    for (size_t c = 0; c < support.classes.size(); ++c) {
        if (!reg_index.count(support.classes[c]))
            throw ProtocolError("partial eval: support class '" + support.classes[c] +
                                "' not in the test registry");
        if (support.members[c].empty())
            throw ArgumentError("partial eval: empty support for class '" + support.classes[c] +
                                "'");
        for (const auto* lc : support.members[c]) support_ids.insert(lc->id);
    }
    std::set<std::string> qset(query_classes.begin(), query_classes.end());
    std::vector<const LabeledCube*> queries;
    std::vector<int> truths;
    for (const auto& lc : test.cubes) {
        if (!qset.count(lc.label)) continue;
        if (support_ids.count(lc.id))
            throw ProtocolError("partial eval: cube '" + lc.id +
                                "' appears in both support and query");
        queries.push_back(&lc);
        truths.push_back(reg_index.at(lc.label));
    }
    if (queries.empty()) throw ArgumentError("partial eval: no query cubes");

    std::vector<Mat<double>> per_class;
    std::vector<int> candidate_ids;
    for (size_t c = 0; c < support.classes.size(); ++c) {
        per_class.push_back(embed_cubes(support.members[c], model));
        candidate_ids.push_back(reg_index.at(support.classes[c]));
    }
    const PrototypeSet protos = compute_prototypes(per_class, candidate_ids);
    const Mat<double> emb = embed_cubes(queries, model);
    const std::vector<int> preds = classify(emb, protos);
    EvalReport r = build_report(registry, truths, preds, protocol, model.cfg.digest());
    r.seed = seed;
    r.timing_ms = elapsed_ms(t0);
    return r;
}

void check_excluded(const std::vector<std::string>& registry,
                    const std::vector<std::string>& excluded) {
    if (excluded.empty()) throw ArgumentError("partial eval: no excluded classes");
    for (const auto& e : excluded)
        if (std::find(registry.begin(), registry.end(), e) == registry.end())
            throw ProtocolError("partial eval: excluded class '" + e + "' is not registered");
}

}  // namespace

EvalReport eval_partial_strategy1(const LoadedDataset& test, const EmbedModel<float>& model,
                                  const std::vector<std::string>& excluded,
                                  const SupportSet& support, uint64_t seed) {
    check_excluded(test.manifest.classes, excluded);
    const std::set<std::string> want(excluded.begin(), excluded.end());
    const std::set<std::string> got(support.classes.begin(), support.classes.end());
    if (want != got)
        throw ProtocolError("strategy 1: support must cover exactly the excluded classes");
    return eval_against_support(test, model, support, excluded, "partial-s1", seed);
}

EvalReport eval_partial_strategy2(const LoadedDataset& test, const EmbedModel<float>& model,
                                  const std::vector<std::string>& excluded,
                                  const SupportSet& support, uint64_t seed) {
    check_excluded(test.manifest.classes, excluded);
    const std::set<std::string> got(support.classes.begin(), support.classes.end());
    const std::set<std::string> all(test.manifest.classes.begin(), test.manifest.classes.end());
    if (got != all) throw ProtocolError("strategy 2: support must cover all registered classes");
    return eval_against_support(test, model, support, excluded, "partial-s2", seed);
}

SupportSet draw_support(const LoadedDataset& pool, const std::vector<std::string>& classes,
                        int k_shot, uint64_t seed, int repetition) {
    if (k_shot < 1) throw ArgumentError("draw_support: k_shot must be >= 1");
    const auto by_class = pool.manifest.entries_by_class();
    SupportSet out;
    const std::set<std::string> want(classes.begin(), classes.end());
    for (size_t c = 0; c < pool.manifest.classes.size(); ++c) {
        const auto& name = pool.manifest.classes[c];
        if (!want.count(name)) continue;
        std::vector<int> indices = by_class[c];
        if (static_cast<int>(indices.size()) < k_shot)
            throw ArgumentError("draw_support: class '" + name + "' has only " +
                                std::to_string(indices.size()) + " cubes, needs " +
                                std::to_string(k_shot));
        Rng rng(mix_seed(mix_seed(mix_seed(seed, "support"), static_cast<uint64_t>(repetition)),
                         static_cast<uint64_t>(c)));
        shuffle(indices, rng);
        std::vector<const LabeledCube*> members;
        for (int i = 0; i < k_shot; ++i)
            members.push_back(&pool.cubes[static_cast<size_t>(indices[static_cast<size_t>(i)])]);
        out.classes.push_back(name);
        out.members.push_back(std::move(members));
    }
    if (out.classes.size() != want.size())
        throw ArgumentError("draw_support: some requested classes are not in the pool");
    return out;
}

RepeatedPartialReport eval_partial_repeated(const LoadedDataset& test,
                                            const EmbedModel<float>& model,
                                            const LoadedDataset& pool,
                                            const std::vector<std::string>& excluded,
                                            int k_shot, int repetitions, uint64_t seed,
                                            bool strategy2) {
    if (repetitions < 1) throw ArgumentError("eval_partial_repeated: repetitions must be >= 1");
    RepeatedPartialReport rep;
    rep.protocol = strategy2 ? "partial-s2" : "partial-s1";
    for (int r = 0; r < repetitions; ++r) {
        const SupportSet support = draw_support(
            pool, strategy2 ? test.manifest.classes : excluded, k_shot, seed, r);
        EvalReport er = strategy2
                            ? eval_partial_strategy2(test, model, excluded, support, seed)
                            : eval_partial_strategy1(test, model, excluded, support, seed);
        rep.accuracies.push_back(er.accuracy);
        rep.runs.push_back(std::move(er));
    }
    double sum = 0.0;
    for (double a : rep.accuracies) sum += a;
    rep.mean = sum / static_cast<double>(rep.accuracies.size());
    if (rep.accuracies.size() > 1) {
        double ss = 0.0;
        for (double a : rep.accuracies) ss += (a - rep.mean) * (a - rep.mean);
        rep.stddev = std::sqrt(ss / static_cast<double>(rep.accuracies.size() - 1));
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Supervised baseline.
// ---------------------------------------------------------------------------

void SupervisedHyper::validate() const {
    if (epochs < 1) throw ArgumentError("supervised: epochs must be >= 1");
    if (lr < 0.0) throw ArgumentError("supervised: lr must be >= 0");
    if (momentum < 0.0 || momentum >= 1.0)
        throw ArgumentError("supervised: momentum must be in [0, 1)");
    if (batch_size < 1) throw ArgumentError("supervised: batch_size must be >= 1");
}

namespace {

// Cross-entropy under a linear head. Head gradients are accumulated into
// gw/gb; g_emb receives the pull-back through the head.
struct SupervisedObjective final : EmbeddingLoss<float> {
    const std::vector<float>* w = nullptr;
    const std::vector<float>* b = nullptr;
    const std::vector<int>* labels = nullptr;
    int n_classes = 0;
    mutable std::vector<double> gw, gb;

    double objective(const Mat<double>& emb, Mat<double>* g_emb) const override {
        const size_t n = emb.rows;
        const size_t d = emb.cols;
        const size_t m = static_cast<size_t>(n_classes);
        if (g_emb) {
            gw.assign(m * d, 0.0);
            gb.assign(m, 0.0);
        }
        double loss = 0.0;
        std::vector<double> logits(m), p(m);
        for (size_t i = 0; i < n; ++i) {
            for (size_t c = 0; c < m; ++c) {
                double acc = static_cast<double>((*b)[c]);
                for (size_t k = 0; k < d; ++k)
                    acc += static_cast<double>((*w)[c * d + k]) * emb.at(i, k);
                logits[c] = acc;
            }
            double mx = logits[0];
            for (size_t c = 1; c < m; ++c) mx = std::max(mx, logits[c]);
            double sum = 0.0;
            for (size_t c = 0; c < m; ++c) {
                p[c] = std::exp(logits[c] - mx);
                sum += p[c];
            }
            for (size_t c = 0; c < m; ++c) p[c] /= sum;
            const int t = (*labels)[i];
            loss -= std::log(std::max(p[static_cast<size_t>(t)], kPosteriorFloor));
            if (g_emb) {
                for (size_t c = 0; c < m; ++c) {
                    const double g =
                        (p[c] - (static_cast<int>(c) == t ? 1.0 : 0.0)) / static_cast<double>(n);
                    gb[c] += g;
                    for (size_t k = 0; k < d; ++k) {
                        gw[c * d + k] += g * emb.at(i, k);
                        g_emb->at(i, k) += g * static_cast<double>((*w)[c * d + k]);
                    }
                }
            }
        }
        return loss / static_cast<double>(n);
    }
};

}  // namespace

SupervisedResult train_supervised_baseline(const LoadedDataset& train,
                                           const EmbedModel<float>& init,
                                           const SupervisedHyper& hyper) {
    hyper.validate();
    if (train.cubes.empty()) throw ArgumentError("supervised: empty dataset");
    if (hyper.attention != init.cfg.attention)
        throw ArgumentError("supervised: attention flag does not match the model config");
    const auto& classes = train.manifest.classes;
    const int n_classes = static_cast<int>(classes.size());
    const size_t d = static_cast<size_t>(init.cfg.embed_dim());

    std::vector<Grid<float>> grids;
    grids.reserve(train.cubes.size());
    for (const auto& lc : train.cubes) grids.push_back(to_grid<float>(lc.cube));

    SupervisedResult res;
    res.model = init;
    res.classes = classes;
    res.head_w.assign(static_cast<size_t>(n_classes) * d, 0.0f);
    res.head_b.assign(static_cast<size_t>(n_classes), 0.0f);

    EmbedModel<float> velocity = EmbedModel<float>::build(init.cfg);
    velocity.zero_tensors();
    EmbedModel<float> grads = EmbedModel<float>::build(init.cfg);
    std::vector<std::vector<float>*> p_model, p_vel, p_grad;
    res.model.for_each_tensor([&](const std::string&, std::vector<float>& v) { p_model.push_back(&v); });
    velocity.for_each_tensor([&](const std::string&, std::vector<float>& v) { p_vel.push_back(&v); });
    grads.for_each_tensor([&](const std::string&, std::vector<float>& v) { p_grad.push_back(&v); });
    std::vector<float> vel_w(res.head_w.size(), 0.0f), vel_b(res.head_b.size(), 0.0f);

    SupervisedObjective obj;
    obj.w = &res.head_w;
    obj.b = &res.head_b;
    obj.n_classes = n_classes;

    std::vector<int> indices(train.cubes.size());
    for (size_t i = 0; i < indices.size(); ++i) indices[i] = static_cast<int>(i);
    const float lr = static_cast<float>(hyper.lr);
    const float mom = static_cast<float>(hyper.momentum);

    for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
        Rng rng(mix_seed(mix_seed(hyper.seed, "shuffle"), static_cast<uint64_t>(epoch)));
        shuffle(indices, rng);
        double loss_sum = 0.0;
        size_t seen = 0;
        for (size_t start = 0; start < indices.size(); start += static_cast<size_t>(hyper.batch_size)) {
            const size_t end = std::min(indices.size(), start + static_cast<size_t>(hyper.batch_size));
            std::vector<const Grid<float>*> batch;
            std::vector<int> labels;
            for (size_t i = start; i < end; ++i) {
                batch.push_back(&grids[static_cast<size_t>(indices[i])]);
                labels.push_back(train.cubes[static_cast<size_t>(indices[i])].label_index);
            }
            obj.labels = &labels;
            grads.zero_tensors();
            double loss;
            try {
                loss = obj.value_and_grad(res.model, batch, grads);
            } catch (const ArgumentError& e) {
                throw TrainingError(std::string("supervised: diverged: ") + e.what());
            }
            if (!std::isfinite(loss))
                throw TrainingError("supervised: non-finite loss at epoch " +
                                    std::to_string(epoch));
            loss_sum += loss * static_cast<double>(batch.size());
            seen += batch.size();
            if (hyper.lr != 0.0) {
                for (size_t t = 0; t < p_model.size(); ++t) {
                    auto& p = *p_model[t];
                    auto& v = *p_vel[t];
                    const auto& g = *p_grad[t];
                    for (size_t i = 0; i < p.size(); ++i) {
                        v[i] = mom * v[i] + g[i];
                        p[i] -= lr * v[i];
                    }
                }
                for (size_t i = 0; i < res.head_w.size(); ++i) {
                    vel_w[i] = mom * vel_w[i] + static_cast<float>(obj.gw[i]);
                    res.head_w[i] -= lr * vel_w[i];
                }
                for (size_t i = 0; i < res.head_b.size(); ++i) {
                    vel_b[i] = mom * vel_b[i] + static_cast<float>(obj.gb[i]);
                    res.head_b[i] -= lr * vel_b[i];
                }
            }
        }
        res.epoch_loss.push_back(loss_sum / static_cast<double>(seen));
    }
    return res;
}

EvalReport eval_supervised(const LoadedDataset& test, const SupervisedResult& clf,
                           uint64_t seed) {
    const auto t0 = std::chrono::steady_clock::now();
    if (test.manifest.classes != clf.classes)
        throw ProtocolError("eval_supervised: class registries differ");
    const Mat<double> emb = embed_dataset(test, clf.model);
    const size_t m = clf.classes.size();
    const size_t d = emb.cols;
    std::vector<int> truths, preds;
    truths.reserve(test.cubes.size());
    for (const auto& lc : test.cubes) truths.push_back(lc.label_index);
    for (size_t i = 0; i < emb.rows; ++i) {
        size_t best = 0;
        double best_v = -1e300;
        for (size_t c = 0; c < m; ++c) {
            double acc = static_cast<double>(clf.head_b[c]);
            for (size_t k = 0; k < d; ++k)
                acc += static_cast<double>(clf.head_w[c * d + k]) * emb.at(i, k);
            if (acc > best_v) {
                best_v = acc;
                best = c;
            }
        }
        preds.push_back(static_cast<int>(best));
    }
    EvalReport r =
        build_report(clf.classes, truths, preds, "supervised", clf.model.cfg.digest());
    r.seed = seed;
    r.timing_ms = elapsed_ms(t0);
    return r;
}

// ---------------------------------------------------------------------------
// Exports.
// ---------------------------------------------------------------------------

void export_confusion(const EvalReport& report, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError("export_confusion: cannot open '" + path + "'");
    os << "# protocol," << report.protocol << "\n";
    os << "# seed," << report.seed << "\n";
    os << "# accuracy," << fmt_g(report.accuracy) << "\n";
    os << "# counts\n";
    os << "truth\\prediction";
    for (const auto& c : report.classes) os << "," << c;
    os << "\n";
    for (size_t i = 0; i < report.classes.size(); ++i) {
        os << report.classes[i];
        for (size_t j = 0; j < report.classes.size(); ++j) os << "," << report.counts[i][j];
        os << "\n";
    }
    os << "# row_percentages\n";
    const Mat<double> pct = percentage_matrix(report);
    for (size_t i = 0; i < report.classes.size(); ++i) {
        os << report.classes[i];
        for (size_t j = 0; j < report.classes.size(); ++j) os << "," << fmt_f6(pct.at(i, j));
        os << "\n";
    }
    if (!os) throw IoError("export_confusion: write failed for '" + path + "'");
}

void export_confusion_diff(const EvalReport& a, const EvalReport& b, const std::string& path) {
    if (a.classes != b.classes)
        throw ArgumentError("export_confusion_diff: reports cover different classes");
    const Mat<double> pa = percentage_matrix(a);
    const Mat<double> pb = percentage_matrix(b);
    std::ofstream os(path);
    if (!os) throw IoError("export_confusion_diff: cannot open '" + path + "'");
    os << "# percentage_difference," << a.protocol << "-minus-" << b.protocol << "\n";
    for (size_t i = 0; i < a.classes.size(); ++i) {
        os << a.classes[i];
        for (size_t j = 0; j < a.classes.size(); ++j)
            os << "," << fmt_f6(pa.at(i, j) - pb.at(i, j));
        os << "\n";
    }
    if (!os) throw IoError("export_confusion_diff: write failed for '" + path + "'");
}

Mat<double> attention_heatmap(const LoadedDataset& data, const EmbedModel<float>& model) {
    if (!model.cfg.attention)
        throw ProtocolError("attention_heatmap: attention is disabled in this model");
    if (data.cubes.empty()) throw ArgumentError("attention_heatmap: empty dataset");
    const size_t n_classes = data.manifest.classes.size();
    const size_t c = static_cast<size_t>(model.cfg.channels);
    Mat<double> heat(n_classes, c);
    std::vector<int> counts(n_classes, 0);
    for (const auto& lc : data.cubes) {
        const std::vector<float> s = se_excite(se_squeeze(lc.cube), model.se);
        const size_t k = static_cast<size_t>(lc.label_index);
        for (size_t ch = 0; ch < c; ++ch) heat.at(k, ch) += static_cast<double>(s[ch]);
        ++counts[k];
    }
    for (size_t k = 0; k < n_classes; ++k)
        if (counts[k] > 0)
            for (size_t ch = 0; ch < c; ++ch) heat.at(k, ch) /= static_cast<double>(counts[k]);
    return heat;
}

void export_attention_heatmap(const LoadedDataset& data, const EmbedModel<float>& model,
                              const std::string& path) {
    const Mat<double> heat = attention_heatmap(data, model);
    std::ofstream os(path);
    if (!os) throw IoError("export_attention_heatmap: cannot open '" + path + "'");
    os << "class";
    for (size_t ch = 0; ch < heat.cols; ++ch) os << ",c" << ch;
    os << "\n";
    for (size_t k = 0; k < heat.rows; ++k) {
        os << data.manifest.classes[k];
        for (size_t ch = 0; ch < heat.cols; ++ch) os << "," << fmt_g(heat.at(k, ch));
        os << "\n";
    }
    if (!os) throw IoError("export_attention_heatmap: write failed for '" + path + "'");
}

void export_embeddings(const LoadedDataset& data, const EmbedModel<float>& model,
                       const std::string& path) {
    const Mat<double> emb = embed_dataset(data, model);
    std::ofstream os(path);
    if (!os) throw IoError("export_embeddings: cannot open '" + path + "'");
    for (size_t i = 0; i < data.cubes.size(); ++i) {
        os << data.cubes[i].id << "," << data.cubes[i].label;
        for (size_t k = 0; k < emb.cols; ++k) os << "," << fmt_g(emb.at(i, k));
        os << "\n";
    }
    if (!os) throw IoError("export_embeddings: write failed for '" + path + "'");
}

void export_ccp_embeddings(const CCPBank& bank, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError("export_ccp_embeddings: cannot open '" + path + "'");
    for (size_t i = 0; i < bank.classes.size(); ++i) {
        os << "ccp:" << bank.classes[i] << "," << bank.classes[i];
        for (size_t k = 0; k < bank.protos.cols; ++k) os << "," << fmt_g(bank.protos.at(i, k));
        os << "\n";
    }
    if (!os) throw IoError("export_ccp_embeddings: write failed for '" + path + "'");
}

void export_prototype_embeddings(const std::vector<PrototypeSet>& sets,
                                 const std::vector<std::string>& classes,
                                 const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError("export_prototype_embeddings: cannot open '" + path + "'");
    for (const auto& s : sets)
        for (size_t k = 0; k < s.protos.rows; ++k) {
            const auto& cls = classes.at(static_cast<size_t>(s.class_ids[k]));
            os << "ep" << s.source_episode << ":" << cls << "," << cls;
            for (size_t c = 0; c < s.protos.cols; ++c) os << "," << fmt_g(s.protos.at(k, c));
            os << "\n";
        }
    if (!os) throw IoError("export_prototype_embeddings: write failed for '" + path + "'");
}

}  // namespace hsproto
