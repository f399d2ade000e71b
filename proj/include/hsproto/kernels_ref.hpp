#ifndef HSPROTO_KERNELS_REF_HPP
#define HSPROTO_KERNELS_REF_HPP

#include <algorithm>
#include <cmath>
#include <vector>

#include "hsproto/tensor.hpp"

// Straight-line textbook implementations kept as the comparison oracle for
// the optimized kernels. Serial, no tiling, no pragmas. Where the summation
// order matches the optimized kernel the results are bitwise identical;
// conv_input_grad is the one exception (scatter vs gather order) and is
// compared at a small tolerance instead.
namespace hsproto::kernels::ref {

template <typename T>
void conv_forward(const Grid<T>& in, const std::vector<T>& w, const std::vector<T>& b,
                  int ksize, int stride, int out_ch, Grid<T>& out) {
    const int pad = ksize / 2;
    const int oh = (in.height - 1) / stride + 1;
    const int ow = (in.width - 1) / stride + 1;
    out = Grid<T>(oh, ow, out_ch);
    for (int orow = 0; orow < oh; ++orow)
        for (int ocol = 0; ocol < ow; ++ocol)
            for (int oc = 0; oc < out_ch; ++oc) {
                T acc = b[oc];
                for (int ky = 0; ky < ksize; ++ky)
                    for (int kx = 0; kx < ksize; ++kx) {
                        const int ir = orow * stride + ky - pad;
                        const int icol = ocol * stride + kx - pad;
                        if (ir < 0 || ir >= in.height || icol < 0 || icol >= in.width) continue;
                        for (int ic = 0; ic < in.channels; ++ic)
                            acc += in.at(ir, icol, ic) *
                                   w[(static_cast<size_t>((ky * ksize + kx)) * in.channels + ic) *
                                         out_ch +
                                     oc];
                    }
                out.at(orow, ocol, oc) = acc;
            }
}

// Scatter formulation: walks output pixels and adds each contribution into
// the input-gradient cell it came from.
template <typename T>
void conv_input_grad(const Grid<T>& gout, const std::vector<T>& w, int ksize, int stride,
                     int in_h, int in_w, int cin, Grid<T>& gin) {
    const int pad = ksize / 2;
    const int out_ch = gout.channels;
    gin = Grid<T>(in_h, in_w, cin);
    for (int orow = 0; orow < gout.height; ++orow)
        for (int ocol = 0; ocol < gout.width; ++ocol)
            for (int ky = 0; ky < ksize; ++ky)
                for (int kx = 0; kx < ksize; ++kx) {
                    const int ir = orow * stride + ky - pad;
                    const int icol = ocol * stride + kx - pad;
                    if (ir < 0 || ir >= in_h || icol < 0 || icol >= in_w) continue;
                    for (int ic = 0; ic < cin; ++ic)
                        for (int oc = 0; oc < out_ch; ++oc)
                            gin.at(ir, icol, ic) +=
                                gout.at(orow, ocol, oc) *
                                w[(static_cast<size_t>((ky * ksize + kx)) * cin + ic) * out_ch + oc];
                }
}

template <typename T>
void conv_param_grad(const Grid<T>& in, const Grid<T>& gout, int ksize, int stride,
                     std::vector<T>& gw, std::vector<T>& gb) {
    const int pad = ksize / 2;
    const int cin = in.channels;
    const int out_ch = gout.channels;
    for (int ky = 0; ky < ksize; ++ky)
        for (int kx = 0; kx < ksize; ++kx)
            for (int ic = 0; ic < cin; ++ic)
                for (int orow = 0; orow < gout.height; ++orow)
                    for (int ocol = 0; ocol < gout.width; ++ocol) {
                        const int ir = orow * stride + ky - pad;
                        const int icol = ocol * stride + kx - pad;
                        if (ir < 0 || ir >= in.height || icol < 0 || icol >= in.width) continue;
                        const T v = in.at(ir, icol, ic);
                        for (int oc = 0; oc < out_ch; ++oc)
                            gw[(static_cast<size_t>((ky * ksize + kx)) * cin + ic) * out_ch + oc] +=
                                v * gout.at(orow, ocol, oc);
                    }
    for (int oc = 0; oc < out_ch; ++oc) {
        T acc = T(0);
        for (size_t p = 0; p < gout.pixels(); ++p)
            acc += gout.v[p * static_cast<size_t>(out_ch) + oc];
        gb[oc] += acc;
    }
}

template <typename T>
void fc_forward(const std::vector<T>& w, const std::vector<T>& b, const std::vector<T>& x,
                std::vector<T>& y) {
    const size_t m = b.size();
    const size_t n = x.size();
    y.resize(m);
    for (size_t i = 0; i < m; ++i) {
        T acc = b[i];
        for (size_t j = 0; j < n; ++j) acc += w[i * n + j] * x[j];
        y[i] = acc;
    }
}

template <typename T>
void global_avg_pool(const Grid<T>& in, std::vector<T>& out) {
    const int c = in.channels;
    out.resize(c);
    for (int d = 0; d < c; ++d) {
        double acc = 0.0;
        for (size_t p = 0; p < in.pixels(); ++p) acc += static_cast<double>(in.v[p * c + d]);
        out[d] = static_cast<T>(acc / static_cast<double>(in.pixels()));
    }
}

template <typename T>
void squeeze_mean_max(const Grid<T>& in, std::vector<T>& z) {
    const int c = in.channels;
    z.resize(c);
    for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        T mx = in.v[ch];
        for (size_t p = 0; p < in.pixels(); ++p) {
            const T v = in.v[p * c + ch];
            acc += static_cast<double>(v);
            mx = std::max(mx, v);
        }
        z[ch] = static_cast<T>(0.5 * (acc / static_cast<double>(in.pixels()) +
                                      static_cast<double>(mx)));
    }
}

template <typename T>
void scale_channels(const Grid<T>& in, const std::vector<T>& s, Grid<T>& out) {
    out = Grid<T>(in.height, in.width, in.channels);
    for (size_t p = 0; p < in.pixels(); ++p)
        for (int ch = 0; ch < in.channels; ++ch)
            out.v[p * in.channels + ch] = in.v[p * in.channels + ch] * s[ch];
}

Mat<double> sq_distances(const Mat<double>& queries, const Mat<double>& prototypes);
Mat<double> softmax_neg_rows(const Mat<double>& distances);

}  // namespace hsproto::kernels::ref

#endif
