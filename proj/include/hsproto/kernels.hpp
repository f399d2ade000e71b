#ifndef HSPROTO_KERNELS_HPP
#define HSPROTO_KERNELS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "hsproto/tensor.hpp"

namespace hsproto::kernels {

// Runtime switches for the OpenMP paths. Every kernel parallelizes over
// independent output elements and keeps each element's accumulation order
// fixed, so results are bitwise identical for any thread count.
bool parallel_enabled();
void set_parallel_enabled(bool enabled);
void set_max_threads(int n);  // 0 = OpenMP default
bool in_parallel_region();

// Below this many inner multiply-adds a parallel region is not worth opening.
inline constexpr size_t kMinParallelWork = 1u << 15;

inline bool par_ok(size_t work) {
    return parallel_enabled() && work >= kMinParallelWork && !in_parallel_region();
}

// ---------------------------------------------------------------------------
// Convolution, square kernel of size 1 or 3, zero padding ksize/2.
// Weights are laid out [ky][kx][cin][cout]; output extent is (n-1)/stride + 1.
// ---------------------------------------------------------------------------

inline int conv_out_extent(int n, int stride) { return (n - 1) / stride + 1; }

template <typename T>
void conv_forward(const Grid<T>& in, const std::vector<T>& w, const std::vector<T>& b,
                  int ksize, int stride, int out_ch, Grid<T>& out) {
    const int pad = ksize / 2;
    const int oh = conv_out_extent(in.height, stride);
    const int ow = conv_out_extent(in.width, stride);
    const int cin = in.channels;
    if (out.height != oh || out.width != ow || out.channels != out_ch) out = Grid<T>(oh, ow, out_ch);
    const size_t work = out.size() * static_cast<size_t>(ksize) * ksize * cin;
#pragma omp parallel for if (par_ok(work))
    for (int orow = 0; orow < oh; ++orow) {
        for (int ocol = 0; ocol < ow; ++ocol) {
            T* acc = &out.at(orow, ocol, 0);
            for (int oc = 0; oc < out_ch; ++oc) acc[oc] = b[oc];
            for (int ky = 0; ky < ksize; ++ky) {
                const int ir = orow * stride + ky - pad;
                if (ir < 0 || ir >= in.height) continue;
                for (int kx = 0; kx < ksize; ++kx) {
                    const int icol = ocol * stride + kx - pad;
                    if (icol < 0 || icol >= in.width) continue;
                    const T* px = &in.at(ir, icol, 0);
                    const T* wk = w.data() + static_cast<size_t>((ky * ksize + kx)) * cin * out_ch;
                    for (int ic = 0; ic < cin; ++ic) {
                        const T v = px[ic];
                        const T* wrow = wk + static_cast<size_t>(ic) * out_ch;
                        for (int oc = 0; oc < out_ch; ++oc) acc[oc] += v * wrow[oc];
                    }
                }
            }
        }
    }
}

// Gradient w.r.t. the convolution input, gather formulation: each input
// element sums its incoming contributions itself, so there are no write races.
template <typename T>
void conv_input_grad(const Grid<T>& gout, const std::vector<T>& w, int ksize, int stride,
                     int in_h, int in_w, int cin, Grid<T>& gin) {
    const int pad = ksize / 2;
    const int out_ch = gout.channels;
    if (gin.height != in_h || gin.width != in_w || gin.channels != cin)
        gin = Grid<T>(in_h, in_w, cin);
    std::fill(gin.v.begin(), gin.v.end(), T(0));
    const size_t work = gin.size() * static_cast<size_t>(ksize) * ksize * out_ch;
#pragma omp parallel for if (par_ok(work))
    for (int ir = 0; ir < in_h; ++ir) {
        for (int icol = 0; icol < in_w; ++icol) {
            T* gi = &gin.at(ir, icol, 0);
            for (int ky = 0; ky < ksize; ++ky) {
                const int ty = ir + pad - ky;
                if (ty < 0 || ty % stride != 0) continue;
                const int orow = ty / stride;
                if (orow >= gout.height) continue;
                for (int kx = 0; kx < ksize; ++kx) {
                    const int tx = icol + pad - kx;
                    if (tx < 0 || tx % stride != 0) continue;
                    const int ocol = tx / stride;
                    if (ocol >= gout.width) continue;
                    const T* go = &gout.at(orow, ocol, 0);
                    const T* wk = w.data() + static_cast<size_t>((ky * ksize + kx)) * cin * out_ch;
                    for (int ic = 0; ic < cin; ++ic) {
                        const T* wrow = wk + static_cast<size_t>(ic) * out_ch;
                        T s = T(0);
                        for (int oc = 0; oc < out_ch; ++oc) s += go[oc] * wrow[oc];
                        gi[ic] += s;
                    }
                }
            }
        }
    }
}

// Accumulates weight/bias gradients. Parallel over (ky, kx, cin) rows of gw,
// so each weight's sum runs over output pixels in a fixed order.
template <typename T>
void conv_param_grad(const Grid<T>& in, const Grid<T>& gout, int ksize, int stride,
                     std::vector<T>& gw, std::vector<T>& gb) {
    const int pad = ksize / 2;
    const int cin = in.channels;
    const int out_ch = gout.channels;
    const int triples = ksize * ksize * cin;
    const size_t work = static_cast<size_t>(triples) * gout.pixels() * out_ch;
#pragma omp parallel for if (par_ok(work))
    for (int t = 0; t < triples; ++t) {
        const int ky = t / (ksize * cin);
        const int kx = (t / cin) % ksize;
        const int ic = t % cin;
        T* grow = gw.data() + static_cast<size_t>(t) * out_ch;
        for (int orow = 0; orow < gout.height; ++orow) {
            const int ir = orow * stride + ky - pad;
            if (ir < 0 || ir >= in.height) continue;
            for (int ocol = 0; ocol < gout.width; ++ocol) {
                const int icol = ocol * stride + kx - pad;
                if (icol < 0 || icol >= in.width) continue;
                const T v = in.at(ir, icol, ic);
                const T* go = &gout.at(orow, ocol, 0);
                for (int oc = 0; oc < out_ch; ++oc) grow[oc] += v * go[oc];
            }
        }
    }
    for (int oc = 0; oc < out_ch; ++oc) {
        T acc = T(0);
        for (size_t p = 0; p < gout.pixels(); ++p) acc += gout.v[p * out_ch + oc];
        gb[oc] += acc;
    }
}

// ---------------------------------------------------------------------------
// Fully connected: y = W x + b with W row-major (m x n).
// ---------------------------------------------------------------------------

template <typename T>
void fc_forward(const std::vector<T>& w, const std::vector<T>& b, const std::vector<T>& x,
                std::vector<T>& y) {
    const int m = static_cast<int>(b.size());
    const int n = static_cast<int>(x.size());
    y.resize(m);
    const size_t work = static_cast<size_t>(m) * n;
#pragma omp parallel for if (par_ok(work))
    for (int i = 0; i < m; ++i) {
        T acc = b[i];
        const T* row = w.data() + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) acc += row[j] * x[j];
        y[i] = acc;
    }
}

template <typename T>
void fc_backward(const std::vector<T>& w, const std::vector<T>& x, const std::vector<T>& gy,
                 std::vector<T>& gw, std::vector<T>& gb, std::vector<T>& gx) {
    const int m = static_cast<int>(gy.size());
    const int n = static_cast<int>(x.size());
    const size_t work = static_cast<size_t>(m) * n;
#pragma omp parallel for if (par_ok(work))
    for (int i = 0; i < m; ++i) {
        T* grow = gw.data() + static_cast<size_t>(i) * n;
        const T g = gy[i];
        for (int j = 0; j < n; ++j) grow[j] += g * x[j];
        gb[i] += g;
    }
    gx.assign(n, T(0));
#pragma omp parallel for if (par_ok(work))
    for (int j = 0; j < n; ++j) {
        T acc = T(0);
        for (int i = 0; i < m; ++i) acc += gy[i] * w[static_cast<size_t>(i) * n + j];
        gx[j] = acc;
    }
}

// ---------------------------------------------------------------------------
// Elementwise and pooling pieces.
// ---------------------------------------------------------------------------

template <typename T>
void relu_forward(const Grid<T>& pre, Grid<T>& post) {
    if (post.size() != pre.size()) post = Grid<T>(pre.height, pre.width, pre.channels);
#pragma omp parallel for if (par_ok(pre.size()))
    for (ptrdiff_t i = 0; i < static_cast<ptrdiff_t>(pre.v.size()); ++i)
        post.v[i] = pre.v[i] > T(0) ? pre.v[i] : T(0);
}

template <typename T>
void relu_backward(const Grid<T>& pre, const Grid<T>& gpost, Grid<T>& gpre) {
    if (gpre.size() != pre.size()) gpre = Grid<T>(pre.height, pre.width, pre.channels);
#pragma omp parallel for if (par_ok(pre.size()))
    for (ptrdiff_t i = 0; i < static_cast<ptrdiff_t>(pre.v.size()); ++i)
        gpre.v[i] = pre.v[i] > T(0) ? gpost.v[i] : T(0);
}

template <typename T>
void add_inplace(Grid<T>& a, const Grid<T>& b) {
#pragma omp parallel for if (par_ok(a.size()))
    for (ptrdiff_t i = 0; i < static_cast<ptrdiff_t>(a.v.size()); ++i) a.v[i] += b.v[i];
}

// Spatial mean per channel; accumulation in double, summed in pixel order.
template <typename T>
void global_avg_pool(const Grid<T>& in, std::vector<T>& out) {
    const int c = in.channels;
    out.resize(c);
    const size_t npix = in.pixels();
#pragma omp parallel for if (par_ok(in.size()))
    for (int d = 0; d < c; ++d) {
        double acc = 0.0;
        for (size_t p = 0; p < npix; ++p) acc += static_cast<double>(in.v[p * c + d]);
        out[d] = static_cast<T>(acc / static_cast<double>(npix));
    }
}

template <typename T>
void global_avg_pool_backward(const std::vector<T>& gout, int h, int w, Grid<T>& gin) {
    const int c = static_cast<int>(gout.size());
    if (gin.height != h || gin.width != w || gin.channels != c) gin = Grid<T>(h, w, c);
    const T scale = T(1) / static_cast<T>(static_cast<size_t>(h) * w);
#pragma omp parallel for if (par_ok(gin.size()))
    for (ptrdiff_t i = 0; i < static_cast<ptrdiff_t>(gin.v.size()); ++i)
        gin.v[i] = gout[i % c] * scale;
}

// Channel squeeze: z_c = (mean_c + max_c) / 2 over all pixels.
template <typename T>
void squeeze_mean_max(const Grid<T>& in, std::vector<T>& z) {
    const int c = in.channels;
    z.resize(c);
    const size_t npix = in.pixels();
#pragma omp parallel for if (par_ok(in.size()))
    for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        T mx = in.v[ch];
        for (size_t p = 0; p < npix; ++p) {
            const T v = in.v[p * c + ch];
            acc += static_cast<double>(v);
            mx = std::max(mx, v);
        }
        z[ch] = static_cast<T>(0.5 * (acc / static_cast<double>(npix) + static_cast<double>(mx)));
    }
}

// Baseline squeeze: spatial mean only.
template <typename T>
void squeeze_mean(const Grid<T>& in, std::vector<T>& z) {
    global_avg_pool(in, z);
}

template <typename T>
void scale_channels(const Grid<T>& in, const std::vector<T>& s, Grid<T>& out) {
    const int c = in.channels;
    if (out.size() != in.size()) out = Grid<T>(in.height, in.width, in.channels);
#pragma omp parallel for if (par_ok(in.size()))
    for (ptrdiff_t p = 0; p < static_cast<ptrdiff_t>(in.pixels()); ++p) {
        const T* src = in.v.data() + static_cast<size_t>(p) * c;
        T* dst = out.v.data() + static_cast<size_t>(p) * c;
        for (int ch = 0; ch < c; ++ch) dst[ch] = src[ch] * s[ch];
    }
}

// d(scale_channels)/ds: gs_c = sum_p in[p,c] * gout[p,c].
template <typename T>
void scale_channels_grad_s(const Grid<T>& in, const Grid<T>& gout, std::vector<T>& gs) {
    const int c = in.channels;
    gs.resize(c);
#pragma omp parallel for if (par_ok(in.size()))
    for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (size_t p = 0; p < in.pixels(); ++p)
            acc += static_cast<double>(in.v[p * c + ch]) * static_cast<double>(gout.v[p * c + ch]);
        gs[ch] = static_cast<T>(acc);
    }
}

// ---------------------------------------------------------------------------
// Metric-space pieces (always double: posterior rows must sum to 1 at 1e-9).
// ---------------------------------------------------------------------------

// Pairwise squared Euclidean distances between query rows and prototype rows.
Mat<double> sq_distances(const Mat<double>& queries, const Mat<double>& prototypes);

// Row-wise softmax of the negated input with max-shift stabilization.
Mat<double> softmax_neg_rows(const Mat<double>& distances);

}  // namespace hsproto::kernels

#endif
