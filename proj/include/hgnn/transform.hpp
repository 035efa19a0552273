#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <string>

#include "hgnn/tensor.hpp"

namespace hgnn {

enum class TransformKind { Identity, UnnormalizedDft };

inline const char* to_string(TransformKind k) {
    return k == TransformKind::Identity ? "identity" : "dft";
}

// The invertible slot-mixing matrix M of the tensor product, together with
// its inverse. Identity keeps slots independent; the unnormalized DFT gives
// the classical transform-domain product (slice-wise circular convolution).
struct Transform {
    TransformKind kind = TransformKind::Identity;
    int size = 0;
    CMatrix forward;   // M
    CMatrix inverse;   // M^-1

    static Transform identity(int t) {
        Transform tf;
        tf.kind = TransformKind::Identity;
        tf.size = t;
        tf.forward = CMatrix::identity(t);
        tf.inverse = CMatrix::identity(t);
        return tf;
    }

    static Transform dft(int t) {
        Transform tf;
        tf.kind = TransformKind::UnnormalizedDft;
        tf.size = t;
        tf.forward = CMatrix(t, t);
        tf.inverse = CMatrix(t, t);
        const double w = -2.0 * std::numbers::pi / t;
        for (int j = 0; j < t; ++j)
            for (int k = 0; k < t; ++k) {
                // j*k mod t keeps the angle small for large slot counts.
                const double ang = w * ((static_cast<long long>(j) * k) % t);
                tf.forward(j, k) = std::polar(1.0, ang);
                tf.inverse(j, k) = std::polar(1.0 / t, -ang);
            }
        tf.check_inverse();
        return tf;
    }

    static Transform make(TransformKind k, int t) {
        return k == TransformKind::Identity ? identity(t) : dft(t);
    }

    // M * M^-1 == I to relative tolerance 1e-10.
    void check_inverse() const {
        for (int i = 0; i < size; ++i)
            for (int j = 0; j < size; ++j) {
                std::complex<double> s = 0.0;
                for (int k = 0; k < size; ++k) s += forward(i, k) * inverse(k, j);
                const double want = (i == j) ? 1.0 : 0.0;
                if (std::abs(s - want) > 1e-10)
                    throw std::runtime_error("Transform: M * M^-1 deviates from identity");
            }
    }
};

namespace detail {

// Apply a TxT matrix to every mode-3 tube of a tensor.
template <class TIn>
CTensor3 mode3_apply(const Tensor3T<TIn>& x, const CMatrix& m) {
    require(m.rows == x.slots && m.cols == x.slots,
            "mode3: matrix size does not match slot count");
    CTensor3 y(x.rows, x.cols, x.slots);
    const std::size_t ss = x.slice_size();
    for (std::size_t n = 0; n < ss; ++n) {
        for (int r = 0; r < x.slots; ++r) {
            std::complex<double> acc = 0.0;
            for (int s = 0; s < x.slots; ++s) acc += m(r, s) * x.data[ss * s + n];
            y.data[ss * r + n] = acc;
        }
    }
    return y;
}

inline CMatrix conj_transpose(const CMatrix& m) {
    CMatrix r(m.cols, m.rows);
    for (int i = 0; i < m.rows; ++i)
        for (int j = 0; j < m.cols; ++j) r(j, i) = std::conj(m(i, j));
    return r;
}

// Discard the imaginary part after verifying it is numerical noise.
inline Tensor3 take_real(const CTensor3& x, double tol = 1e-9) {
    Tensor3 y(x.rows, x.cols, x.slots);
    double max_re = 0.0, max_im = 0.0;
    for (std::size_t n = 0; n < x.size(); ++n) {
        max_re = std::max(max_re, std::abs(x.data[n].real()));
        max_im = std::max(max_im, std::abs(x.data[n].imag()));
        y.data[n] = x.data[n].real();
    }
    if (max_im > tol * std::max(1.0, max_re))
        throw std::runtime_error("mode3: imaginary residue " + std::to_string(max_im) +
                                 " exceeds tolerance");
    return y;
}

}  // namespace detail

// Mode-3 product with an arbitrary real matrix: tube (i,j,:) -> m * tube.
inline Tensor3 mode3_product(const Tensor3& x, const Matrix& m) {
    require(m.rows == x.slots && m.cols == x.slots,
            "mode3_product: matrix size does not match slot count");
    Tensor3 y(x.rows, x.cols, x.slots);
    const std::size_t ss = x.slice_size();
    for (std::size_t n = 0; n < ss; ++n)
        for (int r = 0; r < x.slots; ++r) {
            double acc = 0.0;
            for (int s = 0; s < x.slots; ++s) acc += m(r, s) * x.data[ss * s + n];
            y.data[ss * r + n] = acc;
        }
    return y;
}

// Forward transform keeps the complex intermediate; the inverse restores a
// real tensor (imaginary residue is checked, then discarded).
inline CTensor3 mode3_forward(const Tensor3& x, const Transform& tf) {
    return detail::mode3_apply(x, tf.forward);
}

inline Tensor3 mode3_inverse(const CTensor3& x, const Transform& tf) {
    return detail::take_real(detail::mode3_apply(x, tf.inverse));
}

// Tensor product: transform along mode 3, multiply face-wise, transform back.
// The Identity transform collapses to a plain face-wise product (bitwise, by
// construction: it shares that code path).
inline Tensor3 t_product(const Tensor3& x, const Tensor3& y, const Transform& tf) {
    require(tf.size == x.slots, "t_product: transform size does not match slot count");
    if (tf.kind == TransformKind::Identity) return facewise_product(x, y);
    const CTensor3 xf = mode3_forward(x, tf);
    const CTensor3 yf = mode3_forward(y, tf);
    return mode3_inverse(facewise_product(xf, yf), tf);
}

// Adjoint of t_product for reverse-mode differentiation. Given the gradient
// dC of a scalar loss with respect to C = t_product(X, Y), accumulates
//   dX += Re(M^H ._3 ((M^-H ._3 dC) facewise Yf^H))
//   dY += Re(M^H ._3 (Xf^H facewise (M^-H ._3 dC)))
// which reduces to dX += dC * Y^T, dY += X^T * dC per slice when M = I.
inline void t_product_backward(const Tensor3& dc, const Tensor3& x, const Tensor3& y,
                               const Transform& tf, Tensor3& dx, Tensor3& dy) {
    require(dc.rows == x.rows && dc.cols == y.cols && dc.slots == x.slots,
            "t_product_backward: gradient shape mismatch");
    require(dx.same_shape(x) && dy.same_shape(y),
            "t_product_backward: accumulator shape mismatch");
    if (tf.kind == TransformKind::Identity) {
        const Tensor3 gx = facewise_product(dc, transpose_slices(y));
        const Tensor3 gy = facewise_product(transpose_slices(x), dc);
        for (std::size_t n = 0; n < dx.size(); ++n) dx.data[n] += gx.data[n];
        for (std::size_t n = 0; n < dy.size(); ++n) dy.data[n] += gy.data[n];
        return;
    }
    const CMatrix m_h = detail::conj_transpose(tf.forward);
    const CMatrix minv_h = detail::conj_transpose(tf.inverse);
    const CTensor3 dcf = detail::mode3_apply(dc, minv_h);
    const CTensor3 xf = mode3_forward(x, tf);
    const CTensor3 yf = mode3_forward(y, tf);
    const Tensor3 gx = detail::take_real(detail::mode3_apply(
        facewise_product(dcf, conj_transpose_slices(yf)), m_h));
    const Tensor3 gy = detail::take_real(detail::mode3_apply(
        facewise_product(conj_transpose_slices(xf), dcf), m_h));
    for (std::size_t n = 0; n < dx.size(); ++n) dx.data[n] += gx.data[n];
    for (std::size_t n = 0; n < dy.size(); ++n) dy.data[n] += gy.data[n];
}

}  // namespace hgnn
