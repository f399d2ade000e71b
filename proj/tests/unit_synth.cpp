#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "hsproto/cube_io.hpp"
#include "hsproto/error.hpp"
#include "hsproto/synth.hpp"

using namespace hsproto;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("hsproto_synth_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(is), {});
}

double pairwise_l2(const std::vector<float>& a, const std::vector<float>& b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - b[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

}  // namespace

TEST_CASE("signatures respect the separation floor and stay in range") {
    SynthConfig cfg;
    cfg.num_classes = 8;
    cfg.channels = 32;
    cfg.separation = 0.5;
    cfg.seed = 3;

    const auto sigs = gen_signatures(cfg);
    REQUIRE(sigs.size() == 8);
    for (size_t i = 0; i < sigs.size(); ++i) {
        CHECK(sigs[i].name == "class" + std::to_string(i));
        CHECK(sigs[i].spectrum.size() == 32);
        for (float v : sigs[i].spectrum) {
            CHECK(v > 0.0f);
            CHECK(v < 1.0f);
        }
        for (size_t j = i + 1; j < sigs.size(); ++j)
            CHECK(pairwise_l2(sigs[i].spectrum, sigs[j].spectrum) >= cfg.separation);
    }

    const auto again = gen_signatures(cfg);
    for (size_t i = 0; i < sigs.size(); ++i) CHECK(sigs[i].spectrum == again[i].spectrum);

    // an impossible floor reports the best it managed
    cfg.separation = 100.0;
    CHECK_THROWS_WITH_AS(gen_signatures(cfg),
                         doctest::Contains("best achieved"), Error);
}

TEST_CASE("noise-free cubes carry the pure signature on the foreground") {
    SynthConfig cfg;
    cfg.channels = 16;
    cfg.noise_sigma = 0.0;
    cfg.texture_scale = 0.0;
    cfg.seed = 11;
    const auto sigs = gen_signatures(cfg);

    const LabeledCube lc = gen_cube(sigs[0], 12, 12, 16, 0.6, 77);
    const HyperCube& cube = lc.cube;
    REQUIRE(cube.has_mask());
    for (int r = 0; r < 12; ++r)
        for (int c = 0; c < 12; ++c) {
            const bool fg = cube.mask[static_cast<size_t>(r) * 12 + c] != 0;
            for (int ch = 0; ch < 16; ++ch) {
                if (fg)
                    CHECK(cube.at(r, c, ch) == sigs[0].spectrum[static_cast<size_t>(ch)]);
                else
                    CHECK(cube.at(r, c, ch) == 0.0f);
            }
        }
    CHECK(lc.label == "class0");
    CHECK(lc.label_index == 0);
}

TEST_CASE("foreground fill is hit exactly after rounding") {
    SynthConfig cfg;
    cfg.channels = 4;
    cfg.seed = 5;
    const auto sigs = gen_signatures(cfg);
    for (double fill : {0.25, 0.5, 0.6, 1.0}) {
        const LabeledCube lc = gen_cube(sigs[0], 16, 16, 4, fill, 123);
        const double expect = std::round(fill * 256.0) / 256.0;
        CHECK(lc.cube.foreground_fraction() == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("identical seeds give identical cubes, different seeds differ") {
    SynthConfig cfg;
    cfg.channels = 8;
    cfg.seed = 9;
    const auto sigs = gen_signatures(cfg);
    const auto a = gen_cube(sigs[0], 10, 10, 8, 0.5, 1000);
    const auto b = gen_cube(sigs[0], 10, 10, 8, 0.5, 1000);
    const auto c = gen_cube(sigs[0], 10, 10, 8, 0.5, 1001);
    CHECK(a.cube.data == b.cube.data);
    CHECK(a.cube.mask == b.cube.mask);
    CHECK(a.cube.data != c.cube.data);
}

TEST_CASE("noise scales linearly with sigma around the clean cube") {
    SynthConfig cfg;
    cfg.channels = 8;
    cfg.seed = 13;
    cfg.texture_scale = 0.05;
    const auto sigs = gen_signatures(cfg);

    ClassSignature clean = sigs[0], lo = sigs[0], hi = sigs[0];
    clean.noise_sigma = 0.0;
    lo.noise_sigma = 0.05;
    hi.noise_sigma = 0.25;  // 5x, the outlier multiplier

    const auto c0 = gen_cube(clean, 8, 8, 8, 0.5, 55).cube;
    const auto c1 = gen_cube(lo, 8, 8, 8, 0.5, 55).cube;
    const auto c5 = gen_cube(hi, 8, 8, 8, 0.5, 55).cube;
    for (size_t i = 0; i < c0.data.size(); ++i) {
        const double d1 = static_cast<double>(c1.data[i]) - c0.data[i];
        const double d5 = static_cast<double>(c5.data[i]) - c0.data[i];
        CHECK(d5 == doctest::Approx(5.0 * d1).epsilon(1e-4));
    }
}

TEST_CASE("dataset generation is reproducible byte for byte") {
    SynthConfig cfg;
    cfg.num_classes = 3;
    cfg.cubes_per_class = 6;
    cfg.height = cfg.width = 8;
    cfg.channels = 8;
    cfg.per_class_train = 4;
    cfg.seed = 21;

    const auto d1 = temp_dir("repro1");
    const auto d2 = temp_dir("repro2");
    const auto ds1 = gen_dataset(cfg, d1);
    const auto ds2 = gen_dataset(cfg, d2);

    CHECK(ds1.all.entries.size() == 18);
    CHECK(ds1.train.entries.size() == 12);
    CHECK(ds1.test.entries.size() == 6);
    CHECK(ds1.train.balanced);

    for (const auto& name : {"pool.json", "train.json", "test.json"})
        CHECK(slurp(d1 / name) == slurp(d2 / name));
    for (const auto& e : ds1.all.entries) {
        CHECK(slurp(d1 / e.path) == slurp(d2 / e.path));
        CHECK(fs::exists(d1 / (e.path + std::string(".mask"))));
    }

    // provenance names the generator and echoes the seed
    CHECK(ds1.all.provenance["source"] == "synth");
    CHECK(ds1.all.provenance["seed"] == 21);

    // the split never leaks a cube into both sides
    std::set<std::string> train_paths;
    for (const auto& e : ds1.train.entries) train_paths.insert(e.path);
    for (const auto& e : ds1.test.entries) CHECK(train_paths.count(e.path) == 0);
}

TEST_CASE("outlier cubes are rare and follow the configured rate") {
    SynthConfig cfg;
    cfg.num_classes = 2;
    cfg.cubes_per_class = 40;
    cfg.height = cfg.width = 6;
    cfg.channels = 6;
    cfg.per_class_train = 20;
    cfg.noise_sigma = 0.05;
    cfg.seed = 31;

    const auto base_dir = temp_dir("outlier0");
    const auto out_dir = temp_dir("outlier1");
    const auto base = gen_dataset(cfg, base_dir);
    cfg.outlier_rate = 0.25;
    const auto noisy = gen_dataset(cfg, out_dir);

    // same seed: an outlier cube deviates from its clean twin, a normal one is identical
    int outliers = 0;
    for (size_t i = 0; i < base.all.entries.size(); ++i) {
        const auto a = load_cube(base_dir / base.all.entries[i].path);
        const auto b = load_cube(out_dir / noisy.all.entries[i].path);
        double max_dev = 0.0;
        for (size_t k = 0; k < a.data.size(); ++k)
            max_dev = std::max(max_dev, std::abs(static_cast<double>(a.data[k]) - b.data[k]));
        if (max_dev > 0.0) ++outliers;
    }
    CHECK(outliers > 0);
    CHECK(outliers < 40);  // nowhere near all 80 at rate 0.25
}

TEST_CASE("synth config round-trips through json") {
    SynthConfig cfg;
    cfg.num_classes = 5;
    cfg.outlier_rate = 0.1;
    cfg.seed = 77;
    const SynthConfig back = SynthConfig::from_json(cfg.to_json());
    CHECK(back.num_classes == 5);
    CHECK(back.outlier_rate == 0.1);
    CHECK(back.seed == 77);
    CHECK(back.to_json() == cfg.to_json());

    // defaults fill unspecified fields
    const SynthConfig sparse = SynthConfig::from_json({{"channels", 12}});
    CHECK(sparse.channels == 12);
    CHECK(sparse.num_classes == SynthConfig{}.num_classes);
}

TEST_CASE("invalid synth parameters are rejected before any work") {
    SynthConfig cfg;
    cfg.foreground_fill = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ArgumentError);
    cfg = SynthConfig{};
    cfg.outlier_rate = 1.5;
    CHECK_THROWS_AS(cfg.validate(), ArgumentError);
    cfg = SynthConfig{};
    cfg.per_class_train = 46;
    CHECK_THROWS_AS(cfg.validate(), ArgumentError);
    cfg = SynthConfig{};
    cfg.channels = 0;
    CHECK_THROWS_AS(gen_signatures(cfg), ArgumentError);
}
