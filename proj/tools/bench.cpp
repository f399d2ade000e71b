// Timing comparison of the serial reference kernels against the OpenMP
// kernels at one thread and at the hardware thread count, on shapes close to
// a real acquisition (128x128 windows, ~200 channels). Prints a table of
// median wall times; exits nonzero if any parallel kernel result drifts from
// the reference beyond the documented tolerance.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "hsproto/embed.hpp"
#include "hsproto/kernels.hpp"
#include "hsproto/kernels_ref.hpp"
#include "hsproto/model.hpp"
#include "hsproto/rng.hpp"
#include "hsproto/tensor.hpp"

using namespace hsproto;

namespace {

double median_ms(const std::function<void()>& fn, int reps) {
    std::vector<double> times;
    times.reserve(static_cast<size_t>(reps));
    for (int r = 0; r < reps; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        times.push_back(
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                .count());
    }
    std::sort(times.begin(), times.end());
    return times[times.size() / 2];
}

Grid<float> random_grid(int h, int w, int c, uint64_t seed) {
    Grid<float> g(h, w, c);
    Rng rng(seed);
    for (auto& v : g.v) v = static_cast<float>(uniform01(rng));
    return g;
}

std::vector<float> random_vec(size_t n, uint64_t seed) {
    std::vector<float> v(n);
    Rng rng(seed);
    for (auto& x : v) x = static_cast<float>(uniform01(rng) - 0.5);
    return v;
}

struct Row {
    std::string name;
    double ref_ms, one_ms, many_ms;
};

void print_row(const Row& r) {
    std::printf("%-22s %10.2f %10.2f %10.2f %9.2fx\n", r.name.c_str(), r.ref_ms, r.one_ms,
                r.many_ms, r.many_ms > 0 ? r.ref_ms / r.many_ms : 0.0);
}

double max_abs_diff(const std::vector<float>& a, const std::vector<float>& b) {
    double m = 0.0;
    for (size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
    return m;
}

}  // namespace

int main(int argc, char** argv) {
    int reps = 5;
    if (argc > 1) reps = std::max(1, std::atoi(argv[1]));
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    std::printf("kernel benchmark: medians of %d runs, %u hardware threads\n", reps, hw);
    std::printf("%-22s %10s %10s %10s %10s\n", "kernel", "ref", "omp(1)", "omp(all)",
                "speedup");

    const Grid<float> conv_in = random_grid(128, 128, 32, 11);
    const int conv_cout = 32;
    const auto conv_w = random_vec(3u * 3u * 32u * static_cast<size_t>(conv_cout), 12);
    const auto conv_b = random_vec(static_cast<size_t>(conv_cout), 13);
    Grid<float> conv_out, conv_ref_out;

    const Grid<float> wide = random_grid(128, 128, 204, 14);
    std::vector<float> z_opt, z_ref;

    Mat<double> qa(512, 64), pb(8, 64);
    {
        Rng rng(15);
        for (auto& v : qa.v) v = uniform01(rng);
        for (auto& v : pb.v) v = uniform01(rng);
    }
    Mat<double> dists;

    ModelConfig mc;
    mc.channels = 204;
    mc.init_seed = 99;
    EmbedModel<float> model = EmbedModel<float>::build(mc);
    model.init_weights();
    std::vector<float> emb;

    std::vector<Row> rows;
    int failures = 0;
    const auto bench3 = [&](const std::string& name, const std::function<void()>& ref_fn,
                            const std::function<void()>& opt_fn) {
        Row row{name, 0, 0, 0};
        ref_fn();  // warm + reference values
        row.ref_ms = median_ms(ref_fn, reps);
        kernels::set_parallel_enabled(false);
        row.one_ms = median_ms(opt_fn, reps);
        kernels::set_parallel_enabled(true);
        kernels::set_max_threads(0);
        row.many_ms = median_ms(opt_fn, reps);
        rows.push_back(row);
        print_row(row);
    };

    bench3(
        "conv3x3 128x128x32",
        [&] { kernels::ref::conv_forward(conv_in, conv_w, conv_b, 3, 1, conv_cout, conv_ref_out); },
        [&] { kernels::conv_forward(conv_in, conv_w, conv_b, 3, 1, conv_cout, conv_out); });
    if (conv_out.v != conv_ref_out.v) {
        std::printf("  MISMATCH: conv_forward is not bitwise identical\n");
        ++failures;
    }

    bench3(
        "squeeze 128x128x204",
        [&] { kernels::ref::squeeze_mean_max(wide, z_ref); },
        [&] { kernels::squeeze_mean_max(wide, z_opt); });
    if (z_ref != z_opt) {
        std::printf("  MISMATCH: squeeze_mean_max is not bitwise identical\n");
        ++failures;
    }

    Mat<double> dists_ref;
    bench3(
        "sq_distances 512x8x64",
        [&] { dists_ref = kernels::ref::sq_distances(qa, pb); },
        [&] { dists = kernels::sq_distances(qa, pb); });
    if (dists_ref.v != dists.v) {
        std::printf("  MISMATCH: sq_distances is not bitwise identical\n");
        ++failures;
    }

    std::vector<float> emb_ref;
    bench3(
        "embed 128x128x204",
        [&] {
            kernels::set_parallel_enabled(false);
            emb_ref = embed_grid(wide, model);
        },
        [&] { emb = embed_grid(wide, model); });
    const double drift = max_abs_diff(emb_ref, emb);
    if (drift != 0.0) {
        // embed composes only bitwise-stable kernels; any drift is a bug
        std::printf("  MISMATCH: embedding drift %.3g\n", drift);
        ++failures;
    }

    if (failures) {
        std::printf("%d kernel(s) disagree with the reference\n", failures);
        return 1;
    }
    std::printf("all kernels agree with the serial reference\n");
    return 0;
}
