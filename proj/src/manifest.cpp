#include "hsproto/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "hsproto/cube_io.hpp"
#include "hsproto/error.hpp"
#include "hsproto/rng.hpp"

namespace hsproto {

using nlohmann::json;

int DatasetManifest::class_index(const std::string& name) const {
    auto it = std::find(classes.begin(), classes.end(), name);
    return it == classes.end() ? -1 : static_cast<int>(it - classes.begin());
}

std::vector<std::vector<int>> DatasetManifest::entries_by_class() const {
    std::vector<std::vector<int>> by_class(classes.size());
    for (size_t i = 0; i < entries.size(); ++i) {
        const int k = entries[i].label_index;
        if (k < 0 || k >= static_cast<int>(classes.size()))
            throw ArgumentError("manifest: entry '" + entries[i].path +
                                "' has an out-of-range label index");
        by_class[k].push_back(static_cast<int>(i));
    }
    return by_class;
}

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
    json doc;
    doc["format_version"] = 1;
    doc["classes"] = m.classes;
    doc["balanced"] = m.balanced;
    if (!m.provenance.is_null()) doc["provenance"] = m.provenance;
    json entries = json::array();
    for (const auto& e : m.entries) entries.push_back({{"path", e.path}, {"label", e.label}});
    doc["entries"] = std::move(entries);

    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write manifest " + path.string());
    out << doc.dump(2) << "\n";
    if (!out) throw IoError("manifest write failed for " + path.string());
}

DatasetManifest load_manifest(const std::filesystem::path& path, bool check_files) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest " + path.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw DecodeError("manifest " + path.string() + ": " + e.what());
    }
    if (doc.value("format_version", 0) != 1)
        throw DecodeError("manifest: unsupported format_version");

    DatasetManifest m;
    m.base_dir = path.parent_path();
    m.classes = doc.at("classes").get<std::vector<std::string>>();
    m.balanced = doc.value("balanced", false);
    if (doc.contains("provenance")) m.provenance = doc["provenance"];
    for (const auto& e : doc.at("entries")) {
        ManifestEntry entry;
        entry.path = e.at("path").get<std::string>();
        entry.label = e.at("label").get<std::string>();
        entry.label_index = m.class_index(entry.label);
        if (entry.label_index < 0)
            throw DecodeError("manifest: entry label '" + entry.label +
                              "' is not in the class registry");
        m.entries.push_back(std::move(entry));
    }

    if (check_files) {
        for (const auto& e : m.entries)
            if (!std::filesystem::exists(m.resolve(e)))
                throw IoError("manifest: referenced file missing: " + m.resolve(e).string());
    }
    if (m.balanced) {
        std::map<std::string, size_t> counts;
        for (const auto& e : m.entries) counts[e.label]++;
        size_t first = counts.empty() ? 0 : counts.begin()->second;
        for (const auto& [name, n] : counts)
            if (n != first)
                throw DecodeError("manifest: declared balanced but class '" + name + "' has " +
                                  std::to_string(n) + " entries, expected " +
                                  std::to_string(first));
    }
    return m;
}

void verify_manifest(const DatasetManifest& m) {
    for (const auto& e : m.entries) (void)load_cube(m.resolve(e));
}

namespace {

// Shared sampling core: per-class index permutation, first per_class_train to
// train. Classes are visited in registry order with a per-class derived seed.
void split_indices(const std::vector<std::vector<int>>& by_class,
                   const std::vector<std::string>& classes, int per_class_train, uint64_t seed,
                   std::vector<int>& train_out, std::vector<int>& test_out) {
    for (size_t k = 0; k < by_class.size(); ++k) {
        std::vector<int> idx = by_class[k];
        if (static_cast<int>(idx.size()) < per_class_train)
            throw ArgumentError("split: class '" + classes[k] + "' has " +
                                std::to_string(idx.size()) + " members, needs >= " +
                                std::to_string(per_class_train));
        Rng rng(mix_seed(seed, k));
        shuffle(idx, rng);
        for (size_t i = 0; i < idx.size(); ++i)
            (static_cast<int>(i) < per_class_train ? train_out : test_out).push_back(idx[i]);
    }
    std::sort(train_out.begin(), train_out.end());
    std::sort(test_out.begin(), test_out.end());
}

}  // namespace

std::pair<DatasetManifest, DatasetManifest> split_manifest(const DatasetManifest& pool,
                                                           int per_class_train, uint64_t seed) {
    if (per_class_train < 0) throw ArgumentError("split: per_class_train must be >= 0");
    std::vector<int> train_idx, test_idx;
    split_indices(pool.entries_by_class(), pool.classes, per_class_train, seed, train_idx,
                  test_idx);

    auto subset = [&pool](const std::vector<int>& idx) {
        DatasetManifest m;
        m.classes = pool.classes;
        m.base_dir = pool.base_dir;
        m.provenance = pool.provenance;
        for (int i : idx) m.entries.push_back(pool.entries[i]);
        return m;
    };
    auto train = subset(train_idx);
    train.balanced = true;
    auto test = subset(test_idx);
    return {std::move(train), std::move(test)};
}

std::pair<std::vector<const LabeledCube*>, std::vector<const LabeledCube*>> split_pool(
    const std::vector<LabeledCube>& pool, const std::vector<std::string>& classes,
    int per_class_train, uint64_t seed) {
    std::vector<std::vector<int>> by_class(classes.size());
    for (size_t i = 0; i < pool.size(); ++i) {
        const int k = pool[i].label_index;
        if (k < 0 || k >= static_cast<int>(classes.size()))
            throw ArgumentError("split: cube '" + pool[i].id + "' has an unregistered label");
        by_class[k].push_back(static_cast<int>(i));
    }
    std::vector<int> train_idx, test_idx;
    split_indices(by_class, classes, per_class_train, seed, train_idx, test_idx);
    std::vector<const LabeledCube*> train, test;
    for (int i : train_idx) train.push_back(&pool[i]);
    for (int i : test_idx) test.push_back(&pool[i]);
    return {std::move(train), std::move(test)};
}

DatasetManifest filter_classes(const DatasetManifest& m, const std::vector<std::string>& keep) {
    DatasetManifest out;
    out.classes = m.classes;
    out.base_dir = m.base_dir;
    out.provenance = m.provenance;
    out.balanced = m.balanced;
    for (const auto& name : keep)
        if (m.class_index(name) < 0)
            throw ArgumentError("filter_classes: unknown class '" + name + "'");
    for (const auto& e : m.entries)
        if (std::find(keep.begin(), keep.end(), e.label) != keep.end()) out.entries.push_back(e);
    return out;
}

DatasetManifest restrict_registry(const DatasetManifest& m, const std::vector<std::string>& keep) {
    for (const auto& name : keep)
        if (m.class_index(name) < 0)
            throw ArgumentError("restrict_registry: unknown class '" + name + "'");
    DatasetManifest out;
    out.base_dir = m.base_dir;
    out.provenance = m.provenance;
    out.balanced = m.balanced;
    for (const auto& name : m.classes)
        if (std::find(keep.begin(), keep.end(), name) != keep.end()) out.classes.push_back(name);
    for (const auto& e : m.entries) {
        const int k = out.class_index(e.label);
        if (k < 0) continue;
        out.entries.push_back(ManifestEntry{e.path, e.label, k});
    }
    return out;
}

LoadedDataset load_dataset(const DatasetManifest& manifest) {
    LoadedDataset ds;
    ds.manifest = manifest;
    ds.cubes.reserve(manifest.entries.size());
    for (const auto& e : manifest.entries)
        ds.cubes.push_back(LabeledCube{load_cube(manifest.resolve(e)), e.label, e.label_index, e.path});
    return ds;
}

LoadedDataset load_dataset(const std::filesystem::path& manifest_path) {
    return load_dataset(load_manifest(manifest_path));
}

}  // namespace hsproto
