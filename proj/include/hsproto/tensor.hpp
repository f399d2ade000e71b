#ifndef HSPROTO_TENSOR_HPP
#define HSPROTO_TENSOR_HPP

#include <cstddef>
#include <vector>

namespace hsproto {

// H x W x C raster, channel-fastest: index = (row * width + col) * channels + c.
template <typename T>
struct Grid {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<T> v;

    Grid() = default;
    Grid(int h, int w, int c) : height(h), width(w), channels(c), v(static_cast<size_t>(h) * w * c) {}

    T& at(int r, int col, int c) { return v[(static_cast<size_t>(r) * width + col) * channels + c]; }
    const T& at(int r, int col, int c) const {
        return v[(static_cast<size_t>(r) * width + col) * channels + c];
    }
    size_t pixels() const { return static_cast<size_t>(height) * width; }
    size_t size() const { return v.size(); }
};

template <typename T>
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<T> v;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c) {}

    T& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
    const T& at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
    T* row(int r) { return v.data() + static_cast<size_t>(r) * cols; }
    const T* row(int r) const { return v.data() + static_cast<size_t>(r) * cols; }
};

template <typename T, typename U>
Grid<T> cast_grid(const Grid<U>& g) {
    Grid<T> out(g.height, g.width, g.channels);
    for (size_t i = 0; i < g.v.size(); ++i) out.v[i] = static_cast<T>(g.v[i]);
    return out;
}

template <typename T, typename U>
Mat<T> cast_mat(const Mat<U>& m) {
    Mat<T> out(m.rows, m.cols);
    for (size_t i = 0; i < m.v.size(); ++i) out.v[i] = static_cast<T>(m.v[i]);
    return out;
}

}  // namespace hsproto

#endif
