#include "hsproto/prep.hpp"

#include <algorithm>

#include "hsproto/error.hpp"

namespace hsproto {

HyperCube trim_channels(const HyperCube& cube, int head, int tail) {
    if (head < 0 || tail < 0) throw ArgumentError("trim_channels: head/tail must be >= 0");
    if (head + tail >= cube.channels)
        throw ArgumentError("trim_channels: head + tail (" + std::to_string(head + tail) +
                            ") must be < channels (" + std::to_string(cube.channels) + ")");
    HyperCube out(cube.height, cube.width, cube.channels - head - tail);
    for (int r = 0; r < cube.height; ++r)
        for (int col = 0; col < cube.width; ++col)
            for (int c = 0; c < out.channels; ++c) out.at(r, col, c) = cube.at(r, col, c + head);
    if (!cube.band_centers.empty())
        out.band_centers.assign(cube.band_centers.begin() + head,
                                cube.band_centers.end() - tail);
    out.mask = cube.mask;
    return out;
}

HyperCube average_reduce_channels(const HyperCube& cube, int factor) {
    if (factor < 1) throw ArgumentError("average_reduce_channels: factor must be >= 1");
    if (cube.channels % factor != 0)
        throw ArgumentError("average_reduce_channels: factor " + std::to_string(factor) +
                            " does not divide channel count " + std::to_string(cube.channels));
    HyperCube out(cube.height, cube.width, cube.channels / factor);
    for (int r = 0; r < cube.height; ++r)
        for (int col = 0; col < cube.width; ++col)
            for (int j = 0; j < out.channels; ++j) {
                double acc = 0.0;
                for (int f = 0; f < factor; ++f) acc += cube.at(r, col, j * factor + f);
                out.at(r, col, j) = static_cast<float>(acc / factor);
            }
    if (!cube.band_centers.empty()) {
        out.band_centers.resize(out.channels);
        for (int j = 0; j < out.channels; ++j) {
            double acc = 0.0;
            for (int f = 0; f < factor; ++f) acc += cube.band_centers[j * factor + f];
            out.band_centers[j] = acc / factor;
        }
    }
    out.mask = cube.mask;
    return out;
}

std::vector<HyperCube> crop_windows(const HyperCube& cube, int window, int stride) {
    if (window < 1) throw ArgumentError("crop_windows: window must be >= 1");
    if (stride < 1) throw ArgumentError("crop_windows: stride must be >= 1");
    if (window > cube.height || window > cube.width)
        throw ArgumentError("crop_windows: window " + std::to_string(window) +
                            " exceeds cube extent " + std::to_string(cube.height) + "x" +
                            std::to_string(cube.width));
    std::vector<HyperCube> crops;
    for (int r0 = 0; r0 + window <= cube.height; r0 += stride)
        for (int c0 = 0; c0 + window <= cube.width; c0 += stride) {
            HyperCube crop(window, window, cube.channels);
            for (int r = 0; r < window; ++r)
                for (int col = 0; col < window; ++col)
                    for (int c = 0; c < cube.channels; ++c)
                        crop.at(r, col, c) = cube.at(r0 + r, c0 + col, c);
            crop.band_centers = cube.band_centers;
            if (cube.has_mask()) {
                crop.mask.resize(crop.pixels());
                for (int r = 0; r < window; ++r)
                    for (int col = 0; col < window; ++col)
                        crop.mask[static_cast<size_t>(r) * window + col] =
                            cube.mask[static_cast<size_t>(r0 + r) * cube.width + (c0 + col)];
            }
            crops.push_back(std::move(crop));
        }
    return crops;
}

std::vector<HyperCube> density_filter(const std::vector<HyperCube>& crops, double threshold) {
    if (threshold < 0.0 || threshold > 1.0)
        throw ArgumentError("density_filter: threshold must be in [0, 1]");
    std::vector<HyperCube> kept;
    for (const auto& crop : crops) {
        if (!crop.has_mask()) throw ArgumentError("density_filter: crop has no mask");
        if (crop.foreground_fraction() >= threshold) kept.push_back(crop);
    }
    return kept;
}

HyperCube minmax_normalize(const HyperCube& cube) {
    HyperCube out = cube;
    const auto [lo_it, hi_it] = std::minmax_element(cube.data.begin(), cube.data.end());
    const float lo = *lo_it, hi = *hi_it;
    if (hi > lo) {
        // divide rather than multiply by a reciprocal: the max must land on 1 exactly
        const float span = hi - lo;
        for (auto& v : out.data) v = (v - lo) / span;
    } else {
        std::fill(out.data.begin(), out.data.end(), 0.0f);
    }
    return out;
}

}  // namespace hsproto
