#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace hgnn {

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

// Small dense row-major matrix, used for MLP weights and transform matrices.
template <class T>
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<T> a;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c) {}

    T& operator()(int i, int j) { return a[static_cast<std::size_t>(i) * cols + j]; }
    const T& operator()(int i, int j) const { return a[static_cast<std::size_t>(i) * cols + j]; }

    static Mat identity(int n) {
        Mat m(n, n);
        for (int i = 0; i < n; ++i) m(i, i) = T{1};
        return m;
    }
};

using Matrix = Mat<double>;
using CMatrix = Mat<std::complex<double>>;

// Dense third-order tensor, slice-major: frontal slice t is a contiguous
// rows x cols row-major matrix. Universal carrier for adjacency, feature,
// score, weight and embedding tensors.
template <class T>
struct Tensor3T {
    int rows = 0;
    int cols = 0;
    int slots = 0;
    std::vector<T> data;

    Tensor3T() = default;
    Tensor3T(int r, int c, int s)
        : rows(r), cols(c), slots(s),
          data(static_cast<std::size_t>(r) * c * s) {
        require(r >= 0 && c >= 0 && s >= 0, "Tensor3: negative dimension");
    }

    std::size_t size() const { return data.size(); }
    std::size_t slice_size() const { return static_cast<std::size_t>(rows) * cols; }

    T* slice(int t) { return data.data() + slice_size() * t; }
    const T* slice(int t) const { return data.data() + slice_size() * t; }

    T& operator()(int i, int j, int t) {
        return data[slice_size() * t + static_cast<std::size_t>(i) * cols + j];
    }
    const T& operator()(int i, int j, int t) const {
        return data[slice_size() * t + static_cast<std::size_t>(i) * cols + j];
    }

    bool same_shape(const Tensor3T& o) const {
        return rows == o.rows && cols == o.cols && slots == o.slots;
    }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }
};

using Tensor3 = Tensor3T<double>;
using CTensor3 = Tensor3T<std::complex<double>>;

inline std::string shape_str(int r, int c, int s) {
    return std::to_string(r) + "x" + std::to_string(c) + "x" + std::to_string(s);
}

// ---------------------------------------------------------------------------
// Elementwise helpers
// ---------------------------------------------------------------------------

template <class F>
Tensor3 map(const Tensor3& x, F f) {
    Tensor3 y(x.rows, x.cols, x.slots);
    for (std::size_t n = 0; n < x.size(); ++n) y.data[n] = f(x.data[n]);
    return y;
}

inline Tensor3 add(const Tensor3& x, const Tensor3& y) {
    require(x.same_shape(y), "add: shape mismatch " + shape_str(x.rows, x.cols, x.slots) +
                                 " vs " + shape_str(y.rows, y.cols, y.slots));
    Tensor3 z(x.rows, x.cols, x.slots);
    for (std::size_t n = 0; n < x.size(); ++n) z.data[n] = x.data[n] + y.data[n];
    return z;
}

inline Tensor3 scale(const Tensor3& x, double s) {
    return map(x, [s](double v) { return s * v; });
}

// o = ca*x + cb*y, the fusion primitive.
inline Tensor3 affine_combine(double ca, const Tensor3& x, double cb, const Tensor3& y) {
    require(x.same_shape(y), "affine_combine: shape mismatch");
    Tensor3 z(x.rows, x.cols, x.slots);
    for (std::size_t n = 0; n < x.size(); ++n) z.data[n] = ca * x.data[n] + cb * y.data[n];
    return z;
}

// Concatenate along the column (feature) dimension: NxF1xT ++ NxF2xT -> Nx(F1+F2)xT.
inline Tensor3 concat_cols(const Tensor3& x, const Tensor3& y) {
    require(x.rows == y.rows && x.slots == y.slots,
            "concat_cols: row/slot mismatch");
    Tensor3 z(x.rows, x.cols + y.cols, x.slots);
    for (int t = 0; t < x.slots; ++t)
        for (int i = 0; i < x.rows; ++i) {
            for (int j = 0; j < x.cols; ++j) z(i, j, t) = x(i, j, t);
            for (int j = 0; j < y.cols; ++j) z(i, x.cols + j, t) = y(i, j, t);
        }
    return z;
}

inline bool all_finite(const Tensor3& x) {
    for (double v : x.data)
        if (!std::isfinite(v)) return false;
    return true;
}

inline double max_abs(const Tensor3& x) {
    double m = 0.0;
    for (double v : x.data) m = std::max(m, std::abs(v));
    return m;
}

inline double max_abs_diff(const Tensor3& x, const Tensor3& y) {
    require(x.same_shape(y), "max_abs_diff: shape mismatch");
    double m = 0.0;
    for (std::size_t n = 0; n < x.size(); ++n)
        m = std::max(m, std::abs(x.data[n] - y.data[n]));
    return m;
}

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// ---------------------------------------------------------------------------
// Face-wise (slice-by-slice) matrix products
// ---------------------------------------------------------------------------

// C[t] = A[t] * B[t] for every frontal slice. Accumulation is row-major
// (i, k, j loop order) with a fixed summation order for reproducibility.
template <class T>
Tensor3T<T> facewise_product(const Tensor3T<T>& x, const Tensor3T<T>& y) {
    require(x.cols == y.rows,
            "facewise_product: inner dimension mismatch " +
                shape_str(x.rows, x.cols, x.slots) + " * " + shape_str(y.rows, y.cols, y.slots));
    require(x.slots == y.slots, "facewise_product: slot count mismatch");
    Tensor3T<T> z(x.rows, y.cols, x.slots);
    const int m = x.rows, kk = x.cols, n = y.cols;
    for (int t = 0; t < x.slots; ++t) {
        const T* xs = x.slice(t);
        const T* ys = y.slice(t);
        T* zs = z.slice(t);
        for (int i = 0; i < m; ++i) {
            T* zrow = zs + static_cast<std::size_t>(i) * n;
            for (int k = 0; k < kk; ++k) {
                const T a = xs[static_cast<std::size_t>(i) * kk + k];
                if (a == T{}) continue;
                const T* yrow = ys + static_cast<std::size_t>(k) * n;
                for (int j = 0; j < n; ++j) zrow[j] += a * yrow[j];
            }
        }
    }
    return z;
}

template <class T>
Tensor3T<T> transpose_slices(const Tensor3T<T>& x) {
    Tensor3T<T> y(x.cols, x.rows, x.slots);
    for (int t = 0; t < x.slots; ++t)
        for (int i = 0; i < x.rows; ++i)
            for (int j = 0; j < x.cols; ++j) y(j, i, t) = x(i, j, t);
    return y;
}

template <class T>
Tensor3T<T> conj_transpose_slices(const Tensor3T<T>& x) {
    Tensor3T<T> y(x.cols, x.rows, x.slots);
    for (int t = 0; t < x.slots; ++t)
        for (int i = 0; i < x.rows; ++i)
            for (int j = 0; j < x.cols; ++j) y(j, i, t) = std::conj(x(i, j, t));
    return y;
}

inline Tensor3 identity_slices(int n, int slots) {
    Tensor3 z(n, n, slots);
    for (int t = 0; t < slots; ++t)
        for (int i = 0; i < n; ++i) z(i, i, t) = 1.0;
    return z;
}

// A^k per frontal slice by repeated matrix multiplication. k = 0 yields
// identity slices; negative k is rejected.
inline Tensor3 slice_matrix_power(const Tensor3& a, int k) {
    require(a.rows == a.cols, "slice_matrix_power: slices must be square");
    require(k >= 0, "slice_matrix_power: negative exponent");
    if (k == 0) return identity_slices(a.rows, a.slots);
    Tensor3 r = a;
    for (int step = 1; step < k; ++step) r = facewise_product(r, a);
    return r;
}

}  // namespace hgnn
