#ifndef HSPROTO_CUBE_HPP
#define HSPROTO_CUBE_HPP

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "hsproto/error.hpp"
#include "hsproto/tensor.hpp"

namespace hsproto {

// Reflectance raster with optional band metadata and foreground mask.
// Data is stored channel-fastest: (row * W + col) * C + c.
struct HyperCube {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<float> data;
    std::vector<double> band_centers;  // empty, or size C and strictly increasing
    std::vector<uint8_t> mask;         // empty, or H*W row-major, nonzero = foreground

    HyperCube() = default;
    HyperCube(int h, int w, int c)
        : height(h), width(w), channels(c), data(static_cast<size_t>(h) * w * c, 0.0f) {}

    float& at(int r, int col, int c) {
        return data[(static_cast<size_t>(r) * width + col) * channels + c];
    }
    float at(int r, int col, int c) const {
        return data[(static_cast<size_t>(r) * width + col) * channels + c];
    }
    size_t pixels() const { return static_cast<size_t>(height) * width; }
    size_t values() const { return pixels() * channels; }
    bool has_mask() const { return !mask.empty(); }

    // Fraction of pixels marked foreground; requires a mask.
    double foreground_fraction() const {
        if (mask.empty()) throw ArgumentError("foreground_fraction: cube has no mask");
        size_t n = 0;
        for (uint8_t m : mask) n += (m != 0);
        return static_cast<double>(n) / static_cast<double>(pixels());
    }
};

// Throws ArgumentError naming the first violated invariant.
void validate_cube(const HyperCube& cube);

struct LabeledCube {
    HyperCube cube;
    std::string label;
    int label_index = -1;
    std::string id;  // usually the source file path
};

template <typename T>
Grid<T> to_grid(const HyperCube& cube) {
    Grid<T> g(cube.height, cube.width, cube.channels);
    for (size_t i = 0; i < cube.data.size(); ++i) g.v[i] = static_cast<T>(cube.data[i]);
    return g;
}

}  // namespace hsproto

#endif
