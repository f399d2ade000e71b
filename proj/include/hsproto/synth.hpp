#ifndef HSPROTO_SYNTH_HPP
#define HSPROTO_SYNTH_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "hsproto/cube.hpp"
#include "hsproto/manifest.hpp"

namespace hsproto {

// Per-class generative recipe: mean spectrum plus noise/texture amplitudes.
struct ClassSignature {
    int class_index = 0;
    std::string name;
    std::vector<float> spectrum;  // length C, values in (0, 1)
    double texture_scale = 0.0;   // amplitude of the smooth multiplicative field
    double noise_sigma = 0.0;     // per pixel-channel Gaussian sigma
};

struct SynthConfig {
    int num_classes = 8;
    int cubes_per_class = 45;
    int height = 16;
    int width = 16;
    int channels = 32;
    double separation = 0.5;       // minimum pairwise L2 distance between spectra
    double foreground_fill = 0.6;  // target foreground fraction, in (0, 1]
    double noise_sigma = 0.05;
    double texture_scale = 0.1;
    double outlier_rate = 0.0;     // fraction of cubes generated at 5x sigma
    int per_class_train = 30;      // train split size handed to split_manifest
    uint64_t seed = 1;

    void validate() const;
    nlohmann::json to_json() const;
    static SynthConfig from_json(const nlohmann::json& j);
};

// num_classes spectra with all pairwise distances >= separation; deterministic
// per seed. Throws Error reporting the best achieved separation when the
// constraint is infeasible within the retry budget.
std::vector<ClassSignature> gen_signatures(const SynthConfig& config);

// One labelled cube: smooth blob mask at the configured fill, foreground =
// spectrum * (1 + texture) + noise, background = noise around zero.
LabeledCube gen_cube(const ClassSignature& sig, int height, int width, int channels,
                     double foreground_fill, uint64_t seed);

struct SynthDataset {
    std::vector<ClassSignature> signatures;
    DatasetManifest all;    // every generated cube
    DatasetManifest train;  // balanced per-class split
    DatasetManifest test;
};

// Writes cubes + pool/train/test manifests under out_dir. Byte-identical for
// identical config and seed.
SynthDataset gen_dataset(const SynthConfig& config, const std::filesystem::path& out_dir);

}  // namespace hsproto

#endif
