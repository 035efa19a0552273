#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "hgnn/rng.hpp"
#include "hgnn/tensor.hpp"

namespace hgnn {

enum class Activation { Sigmoid, Tanh, Identity };

inline const char* to_string(Activation a) {
    switch (a) {
        case Activation::Sigmoid: return "sigmoid";
        case Activation::Tanh: return "tanh";
        default: return "identity";
    }
}

inline double activate(Activation a, double v) {
    switch (a) {
        case Activation::Sigmoid: return sigmoid(v);
        case Activation::Tanh: return std::tanh(v);
        default: return v;
    }
}

// Derivative expressed through the activation output.
inline double activate_grad(Activation a, double out) {
    switch (a) {
        case Activation::Sigmoid: return out * (1.0 - out);
        case Activation::Tanh: return 1.0 - out * out;
        default: return 1.0;
    }
}

// One-hidden-layer perceptron with a linear output: y = act(x W1 + b1) W2 + b2.
// Row-vector convention; W1 is in x hidden, W2 is hidden x out.
struct Mlp {
    Matrix w1;
    std::vector<double> b1;
    Matrix w2;
    std::vector<double> b2;
    Activation hidden = Activation::Tanh;

    int in_dim() const { return w1.rows; }
    int hidden_dim() const { return w1.cols; }
    int out_dim() const { return w2.cols; }

    // Forward pass; writes the post-activation hidden state for backprop.
    void forward(const double* x, double* hidden_out, double* y) const {
        const int h = hidden_dim(), d = in_dim(), o = out_dim();
        for (int j = 0; j < h; ++j) {
            double acc = b1[j];
            for (int i = 0; i < d; ++i) acc += x[i] * w1(i, j);
            hidden_out[j] = activate(hidden, acc);
        }
        for (int k = 0; k < o; ++k) {
            double acc = b2[k];
            for (int j = 0; j < h; ++j) acc += hidden_out[j] * w2(j, k);
            y[k] = acc;
        }
    }

    // Accumulates parameter gradients into g and, if dx is non-null, the
    // input gradient into dx (also accumulated).
    void backward(const double* x, const double* hidden_out, const double* dy,
                  Mlp& g, double* dx = nullptr) const {
        const int h = hidden_dim(), d = in_dim(), o = out_dim();
        for (int j = 0; j < h; ++j) {
            double dz = 0.0;
            for (int k = 0; k < o; ++k) {
                dz += dy[k] * w2(j, k);
            }
            const double da = dz * activate_grad(hidden, hidden_out[j]);
            for (int i = 0; i < d; ++i) g.w1(i, j) += x[i] * da;
            g.b1[j] += da;
            if (dx)
                for (int i = 0; i < d; ++i) dx[i] += da * w1(i, j);
        }
        for (int k = 0; k < o; ++k) {
            for (int j = 0; j < h; ++j) g.w2(j, k) += hidden_out[j] * dy[k];
            g.b2[k] += dy[k];
        }
    }
};

inline double glorot_bound(int fan_in, int fan_out) {
    return std::sqrt(6.0 / (fan_in + fan_out));
}

inline Matrix glorot_matrix(int rows, int cols, Rng& rng) {
    Matrix m(rows, cols);
    const double b = glorot_bound(rows, cols);
    for (auto& v : m.a) v = rng.uniform(-b, b);
    return m;
}

inline Mlp make_mlp(int in, int hidden, int out, Rng& rng,
                    Activation act = Activation::Tanh) {
    Mlp m;
    m.w1 = glorot_matrix(in, hidden, rng);
    m.b1.assign(hidden, 0.0);
    m.w2 = glorot_matrix(hidden, out, rng);
    m.b2.assign(out, 0.0);
    m.hidden = act;
    return m;
}

inline Mlp zeros_like(const Mlp& m) {
    Mlp z;
    z.w1 = Matrix(m.w1.rows, m.w1.cols);
    z.b1.assign(m.b1.size(), 0.0);
    z.w2 = Matrix(m.w2.rows, m.w2.cols);
    z.b2.assign(m.b2.size(), 0.0);
    z.hidden = m.hidden;
    return z;
}

}  // namespace hgnn
