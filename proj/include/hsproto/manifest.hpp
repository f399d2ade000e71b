#ifndef HSPROTO_MANIFEST_HPP
#define HSPROTO_MANIFEST_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hsproto/cube.hpp"

namespace hsproto {

struct ManifestEntry {
    std::string path;  // relative to the manifest's base_dir
    std::string label;
    int label_index = -1;
};

// Ordered class registry plus one split's cube listing.
struct DatasetManifest {
    std::vector<std::string> classes;
    std::vector<ManifestEntry> entries;
    bool balanced = false;
    nlohmann::json provenance;  // free-form prep/source parameters

    // Where relative entry paths resolve from; set on load/save, not serialized.
    std::filesystem::path base_dir;

    int class_index(const std::string& name) const;
    std::filesystem::path resolve(const ManifestEntry& e) const { return base_dir / e.path; }
    std::vector<std::vector<int>> entries_by_class() const;  // entry indices per class
};

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path);

// check_files: verify every referenced cube file exists (cheap existence check).
DatasetManifest load_manifest(const std::filesystem::path& path, bool check_files = true);

// Decodes every referenced cube; throws on the first failure.
void verify_manifest(const DatasetManifest& m);

// Per-class sample without replacement: exactly per_class_train entries per
// class go to train, the complement to test. Deterministic for a fixed seed.
std::pair<DatasetManifest, DatasetManifest> split_manifest(const DatasetManifest& pool,
                                                           int per_class_train, uint64_t seed);

// In-memory split over labelled cubes; same sampling contract as split_manifest.
std::pair<std::vector<const LabeledCube*>, std::vector<const LabeledCube*>> split_pool(
    const std::vector<LabeledCube>& pool, const std::vector<std::string>& classes,
    int per_class_train, uint64_t seed);

// Manifest restricted to the given classes; registry (and label indices) are preserved.
DatasetManifest filter_classes(const DatasetManifest& m, const std::vector<std::string>& keep);

// Like filter_classes, but the registry itself narrows to `keep` (original
// order) and label indices are re-assigned against the narrowed registry.
// This is what episodic training over a class subset expects.
DatasetManifest restrict_registry(const DatasetManifest& m, const std::vector<std::string>& keep);

// Manifest plus decoded cubes, entry order preserved. Cube i carries the
// label, registry index, and id (manifest-relative path) of entry i.
struct LoadedDataset {
    DatasetManifest manifest;
    std::vector<LabeledCube> cubes;

    int channels() const { return cubes.empty() ? 0 : cubes.front().cube.channels; }
};

LoadedDataset load_dataset(const std::filesystem::path& manifest_path);
LoadedDataset load_dataset(const DatasetManifest& manifest);

}  // namespace hsproto

#endif
