#include "hsproto/kernels.hpp"

#include <atomic>
#include <cmath>

#include "hsproto/error.hpp"
#include "hsproto/kernels_ref.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace hsproto::kernels {

namespace {
std::atomic<bool> g_parallel{true};
}

bool parallel_enabled() { return g_parallel.load(std::memory_order_relaxed); }

void set_parallel_enabled(bool enabled) { g_parallel.store(enabled, std::memory_order_relaxed); }

void set_max_threads(int n) {
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(n);
#else
    (void)n;
#endif
}

bool in_parallel_region() {
#ifdef _OPENMP
    return omp_in_parallel() != 0;
#else
    return false;
#endif
}

Mat<double> sq_distances(const Mat<double>& queries, const Mat<double>& prototypes) {
    if (queries.cols != prototypes.cols)
        throw ArgumentError("sq_distances: dimension mismatch");
    Mat<double> d(queries.rows, prototypes.rows);
    const size_t work = queries.rows * prototypes.rows * queries.cols;
#pragma omp parallel for if (par_ok(work))
    for (ptrdiff_t i = 0; i < static_cast<ptrdiff_t>(queries.rows); ++i) {
        const double* q = queries.row(i);
        for (size_t j = 0; j < prototypes.rows; ++j) {
            const double* p = prototypes.row(j);
            double acc = 0.0;
            for (size_t k = 0; k < queries.cols; ++k) {
                const double diff = q[k] - p[k];
                acc += diff * diff;
            }
            d.at(i, j) = acc;
        }
    }
    return d;
}

Mat<double> softmax_neg_rows(const Mat<double>& distances) {
    Mat<double> p(distances.rows, distances.cols);
    const size_t work = distances.rows * distances.cols;
#pragma omp parallel for if (par_ok(work))
    for (ptrdiff_t i = 0; i < static_cast<ptrdiff_t>(distances.rows); ++i) {
        const double* d = distances.row(i);
        double dmin = d[0];
        for (size_t j = 1; j < distances.cols; ++j) dmin = std::min(dmin, d[j]);
        double sum = 0.0;
        double* out = p.row(i);
        for (size_t j = 0; j < distances.cols; ++j) {
            out[j] = std::exp(dmin - d[j]);
            sum += out[j];
        }
        for (size_t j = 0; j < distances.cols; ++j) out[j] /= sum;
    }
    return p;
}

namespace ref {

Mat<double> sq_distances(const Mat<double>& queries, const Mat<double>& prototypes) {
    Mat<double> d(queries.rows, prototypes.rows);
    for (size_t i = 0; i < queries.rows; ++i)
        for (size_t j = 0; j < prototypes.rows; ++j) {
            double acc = 0.0;
            for (size_t k = 0; k < queries.cols; ++k) {
                const double diff = queries.at(i, k) - prototypes.at(j, k);
                acc += diff * diff;
            }
            d.at(i, j) = acc;
        }
    return d;
}

Mat<double> softmax_neg_rows(const Mat<double>& distances) {
    Mat<double> p(distances.rows, distances.cols);
    for (size_t i = 0; i < distances.rows; ++i) {
        double dmin = distances.at(i, 0);
        for (size_t j = 1; j < distances.cols; ++j) dmin = std::min(dmin, distances.at(i, j));
        double sum = 0.0;
        for (size_t j = 0; j < distances.cols; ++j) {
            p.at(i, j) = std::exp(dmin - distances.at(i, j));
            sum += p.at(i, j);
        }
        for (size_t j = 0; j < distances.cols; ++j) p.at(i, j) /= sum;
    }
    return p;
}

}  // namespace ref

}  // namespace hsproto::kernels
