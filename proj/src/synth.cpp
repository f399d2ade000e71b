#include "hsproto/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hsproto/cube_io.hpp"
#include "hsproto/error.hpp"
#include "hsproto/rng.hpp"

namespace hsproto {

void SynthConfig::validate() const {
    if (num_classes < 1 || cubes_per_class < 1 || height < 1 || width < 1 || channels < 1)
        throw ArgumentError("synth: all counts must be >= 1");
    if (!(foreground_fill > 0.0 && foreground_fill <= 1.0))
        throw ArgumentError("synth: foreground_fill must be in (0, 1]");
    if (separation < 0.0) throw ArgumentError("synth: separation must be >= 0");
    if (noise_sigma < 0.0) throw ArgumentError("synth: noise_sigma must be >= 0");
    if (texture_scale < 0.0) throw ArgumentError("synth: texture_scale must be >= 0");
    if (outlier_rate < 0.0 || outlier_rate > 1.0)
        throw ArgumentError("synth: outlier_rate must be in [0, 1]");
    if (per_class_train < 0 || per_class_train > cubes_per_class)
        throw ArgumentError("synth: per_class_train must be in [0, cubes_per_class]");
}

nlohmann::json SynthConfig::to_json() const {
    return {{"num_classes", num_classes},
            {"cubes_per_class", cubes_per_class},
            {"height", height},
            {"width", width},
            {"channels", channels},
            {"separation", separation},
            {"foreground_fill", foreground_fill},
            {"noise_sigma", noise_sigma},
            {"texture_scale", texture_scale},
            {"outlier_rate", outlier_rate},
            {"per_class_train", per_class_train},
            {"seed", seed}};
}

SynthConfig SynthConfig::from_json(const nlohmann::json& j) {
    SynthConfig c;
    c.num_classes = j.value("num_classes", c.num_classes);
    c.cubes_per_class = j.value("cubes_per_class", c.cubes_per_class);
    c.height = j.value("height", c.height);
    c.width = j.value("width", c.width);
    c.channels = j.value("channels", c.channels);
    c.separation = j.value("separation", c.separation);
    c.foreground_fill = j.value("foreground_fill", c.foreground_fill);
    c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
    c.texture_scale = j.value("texture_scale", c.texture_scale);
    c.outlier_rate = j.value("outlier_rate", c.outlier_rate);
    c.per_class_train = j.value("per_class_train", c.per_class_train);
    c.seed = j.value("seed", c.seed);
    return c;
}

namespace {

// Smooth spectrum in [0.15, 0.85]: a few Gaussian bumps over the channel axis,
// min-max normalized.
std::vector<float> random_spectrum(int channels, Rng& rng) {
    const int bumps = 3 + static_cast<int>(uniform_index(rng, 3));
    std::vector<double> g(channels, 0.0);
    for (int b = 0; b < bumps; ++b) {
        const double amp = uniform_range(rng, 0.3, 1.0);
        const double mu = uniform_range(rng, 0.0, channels);
        const double sd = uniform_range(rng, channels / 16.0 + 0.5, channels / 4.0 + 0.5);
        for (int c = 0; c < channels; ++c) {
            const double d = (c - mu) / sd;
            g[c] += amp * std::exp(-0.5 * d * d);
        }
    }
    const auto [lo, hi] = std::minmax_element(g.begin(), g.end());
    const double span = (*hi > *lo) ? (*hi - *lo) : 1.0;
    std::vector<float> spectrum(channels);
    for (int c = 0; c < channels; ++c)
        spectrum[c] = static_cast<float>(0.15 + 0.7 * ((g[c] - *lo) / span));
    return spectrum;
}

double spectrum_distance(const std::vector<float>& a, const std::vector<float>& b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - b[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

// Low-frequency field: coarse N(0,1) lattice, bilinearly upsampled.
std::vector<double> smooth_field(int height, int width, int coarse, Rng& rng) {
    const int gh = std::max(2, coarse), gw = std::max(2, coarse);
    std::vector<double> lattice(static_cast<size_t>(gh) * gw);
    for (auto& v : lattice) v = normal01(rng);
    std::vector<double> field(static_cast<size_t>(height) * width);
    for (int r = 0; r < height; ++r) {
        const double fy = (height == 1) ? 0.0 : static_cast<double>(r) / (height - 1) * (gh - 1);
        const int y0 = std::min(static_cast<int>(fy), gh - 2);
        const double ty = fy - y0;
        for (int c = 0; c < width; ++c) {
            const double fx = (width == 1) ? 0.0 : static_cast<double>(c) / (width - 1) * (gw - 1);
            const int x0 = std::min(static_cast<int>(fx), gw - 2);
            const double tx = fx - x0;
            const double v00 = lattice[static_cast<size_t>(y0) * gw + x0];
            const double v01 = lattice[static_cast<size_t>(y0) * gw + x0 + 1];
            const double v10 = lattice[static_cast<size_t>(y0 + 1) * gw + x0];
            const double v11 = lattice[static_cast<size_t>(y0 + 1) * gw + x0 + 1];
            field[static_cast<size_t>(r) * width + c] =
                (1 - ty) * ((1 - tx) * v00 + tx * v01) + ty * ((1 - tx) * v10 + tx * v11);
        }
    }
    return field;
}

// Foreground = the round(fill * H * W) pixels with the largest field values;
// ties broken by pixel index, so the achieved fraction is exact.
std::vector<uint8_t> blob_mask(int height, int width, double fill, Rng& rng) {
    const size_t n = static_cast<size_t>(height) * width;
    const auto field = smooth_field(height, width, 5, rng);
    size_t target = static_cast<size_t>(std::llround(fill * static_cast<double>(n)));
    target = std::min(std::max<size_t>(target, 1), n);
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return field[a] > field[b]; });
    std::vector<uint8_t> mask(n, 0);
    for (size_t i = 0; i < target; ++i) mask[order[i]] = 1;
    return mask;
}

}  // namespace

std::vector<ClassSignature> gen_signatures(const SynthConfig& config) {
    config.validate();
    Rng rng(mix_seed(config.seed, "signatures"));
    std::vector<ClassSignature> sigs;
    double best_worst = -1.0;
    for (int k = 0; k < config.num_classes; ++k) {
        const int retries = 500;
        bool placed = false;
        for (int attempt = 0; attempt < retries && !placed; ++attempt) {
            auto candidate = random_spectrum(config.channels, rng);
            double worst = std::numeric_limits<double>::infinity();
            for (const auto& s : sigs)
                worst = std::min(worst, spectrum_distance(candidate, s.spectrum));
            if (sigs.empty() || worst >= config.separation) {
                ClassSignature sig;
                sig.class_index = k;
                sig.name = "class" + std::to_string(k);
                sig.spectrum = std::move(candidate);
                sig.texture_scale = config.texture_scale;
                sig.noise_sigma = config.noise_sigma;
                sigs.push_back(std::move(sig));
                placed = true;
            } else {
                best_worst = std::max(best_worst, worst);
            }
        }
        if (!placed)
            throw Error("gen_signatures: could not place class " + std::to_string(k) +
                        " at separation " + std::to_string(config.separation) +
                        "; best achieved " + std::to_string(best_worst));
    }
    return sigs;
}

LabeledCube gen_cube(const ClassSignature& sig, int height, int width, int channels,
                     double foreground_fill, uint64_t seed) {
    if (static_cast<int>(sig.spectrum.size()) != channels)
        throw ArgumentError("gen_cube: signature spectrum length does not equal channels");
    Rng rng(seed);
    HyperCube cube(height, width, channels);
    cube.mask = blob_mask(height, width, foreground_fill, rng);
    const auto texture = smooth_field(height, width, 4, rng);
    for (int r = 0; r < height; ++r)
        for (int col = 0; col < width; ++col) {
            const size_t p = static_cast<size_t>(r) * width + col;
            const double t = 1.0 + sig.texture_scale * texture[p];
            for (int c = 0; c < channels; ++c) {
                const double noise = (sig.noise_sigma > 0.0) ? sig.noise_sigma * normal01(rng) : 0.0;
                const double value = cube.mask[p] ? sig.spectrum[c] * t + noise : noise;
                cube.at(r, col, c) = static_cast<float>(value);
            }
        }
    LabeledCube out;
    out.cube = std::move(cube);
    out.label = sig.name;
    out.label_index = sig.class_index;
    return out;
}

SynthDataset gen_dataset(const SynthConfig& config, const std::filesystem::path& out_dir) {
    config.validate();
    std::filesystem::create_directories(out_dir);

    SynthDataset ds;
    ds.signatures = gen_signatures(config);

    ds.all.base_dir = out_dir;
    for (const auto& sig : ds.signatures) ds.all.classes.push_back(sig.name);
    ds.all.provenance = config.to_json();
    ds.all.provenance["source"] = "synth";

    Rng outlier_rng(mix_seed(config.seed, "outliers"));
    for (const auto& sig : ds.signatures) {
        const auto class_dir = out_dir / sig.name;
        std::filesystem::create_directories(class_dir);
        for (int i = 0; i < config.cubes_per_class; ++i) {
            ClassSignature effective = sig;
            if (config.outlier_rate > 0.0 && uniform01(outlier_rng) < config.outlier_rate)
                effective.noise_sigma = 5.0 * sig.noise_sigma;
            const uint64_t cube_seed =
                mix_seed(config.seed, (static_cast<uint64_t>(sig.class_index) << 32) |
                                          static_cast<uint64_t>(i));
            auto labeled = gen_cube(effective, config.height, config.width, config.channels,
                                    config.foreground_fill, cube_seed);
            char name[32];
            std::snprintf(name, sizeof(name), "cube_%04d.hsc", i);
            save_cube(labeled.cube, class_dir / name, sig.name);
            ds.all.entries.push_back(
                {sig.name + "/" + name, sig.name, sig.class_index});
        }
    }
    ds.all.balanced = true;
    save_manifest(ds.all, out_dir / "pool.json");

    auto [train, test] = split_manifest(ds.all, config.per_class_train, mix_seed(config.seed, "split"));
    ds.train = std::move(train);
    ds.test = std::move(test);
    save_manifest(ds.train, out_dir / "train.json");
    save_manifest(ds.test, out_dir / "test.json");
    return ds;
}

}  // namespace hsproto
