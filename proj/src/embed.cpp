#include "hsproto/embed.hpp"

#include "hsproto/cube_io.hpp"

namespace hsproto {

std::vector<float> se_squeeze(const HyperCube& cube) {
    validate_cube(cube);
    const Grid<float> g = to_grid<float>(cube);
    std::vector<float> z;
    kernels::squeeze_mean_max(g, z);
    return z;
}

std::vector<float> se_squeeze_avg_only(const HyperCube& cube) {
    validate_cube(cube);
    const Grid<float> g = to_grid<float>(cube);
    std::vector<float> z;
    kernels::squeeze_mean(g, z);
    return z;
}

std::vector<float> se_excite(const std::vector<float>& z, const SEBlock<float>& se) {
    if (static_cast<int>(z.size()) != se.channels)
        throw ArgumentError("se_excite: z has " + std::to_string(z.size()) +
                            " entries, block expects " + std::to_string(se.channels));
    std::vector<float> h_pre, h, s_pre, s;
    kernels::fc_forward(se.w1, se.b1, z, h_pre);
    h.resize(h_pre.size());
    for (size_t i = 0; i < h_pre.size(); ++i) h[i] = h_pre[i] > 0.0f ? h_pre[i] : 0.0f;
    kernels::fc_forward(se.w2, se.b2, h, s_pre);
    s.resize(s_pre.size());
    for (size_t i = 0; i < s_pre.size(); ++i) s[i] = sigmoid_clamped(s_pre[i]);
    return s;
}

HyperCube se_recalibrate(const HyperCube& cube, const std::vector<float>& s) {
    validate_cube(cube);
    if (static_cast<int>(s.size()) != cube.channels)
        throw ArgumentError("se_recalibrate: weight count does not match channels");
    HyperCube out = cube;
    const int c = cube.channels;
    for (size_t p = 0; p < cube.pixels(); ++p)
        for (int ch = 0; ch < c; ++ch) out.data[p * c + ch] = cube.data[p * c + ch] * s[ch];
    return out;
}

Grid<float> spectral_downsample(const HyperCube& cube, const ConvLayer<float>& down) {
    validate_cube(cube);
    if (down.cin != cube.channels)
        throw ArgumentError("spectral_downsample: map expects " + std::to_string(down.cin) +
                            " channels, cube has " + std::to_string(cube.channels));
    const Grid<float> g = to_grid<float>(cube);
    Grid<float> out;
    conv_apply(down, g, out);
    return out;
}

std::vector<float> embed(const HyperCube& cube, const EmbedModel<float>& m,
                         bool attention_enabled) {
    validate_cube(cube);
    const Grid<float> g = to_grid<float>(cube);
    return embed_grid(g, m, attention_enabled);
}

std::vector<float> embed(const HyperCube& cube, const EmbedModel<float>& m) {
    return embed(cube, m, m.cfg.attention);
}

Mat<float> embed_batch(const std::vector<HyperCube>& cubes, const EmbedModel<float>& m,
                       bool attention_enabled) {
    std::vector<Grid<float>> grids;
    grids.reserve(cubes.size());
    for (const auto& c : cubes) {
        validate_cube(c);
        grids.push_back(to_grid<float>(c));
    }
    std::vector<const Grid<float>*> ptrs;
    ptrs.reserve(grids.size());
    for (const auto& g : grids) ptrs.push_back(&g);
    return embed_batch_grids(ptrs, m, attention_enabled);
}

}  // namespace hsproto
