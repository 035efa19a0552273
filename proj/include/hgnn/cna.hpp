#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "hgnn/mlp.hpp"
#include "hgnn/rng.hpp"
#include "hgnn/tensor.hpp"

namespace hgnn {

// ---------------------------------------------------------------------------
// Common-neighbor-awareness parameters and trace
// ---------------------------------------------------------------------------

struct CnaParams {
    Mlp g_edge;                // scalar -> h_s
    Mlp g_node;                // h_s -> scalar
    std::vector<double> beta;  // hop weights, K entries
    double r_c = 0.5;
    double r_a = 0.5;
    bool beta_frozen = false;

    int hops() const { return static_cast<int>(beta.size()); }
};

inline CnaParams make_cna_params(int h_s, int k_hops, Rng& rng) {
    require(h_s >= 1, "make_cna_params: embedding width must be >= 1");
    require(k_hops >= 1, "make_cna_params: hop count must be >= 1");
    CnaParams p;
    p.g_edge = make_mlp(1, h_s, h_s, rng);
    p.g_node = make_mlp(h_s, h_s, 1, rng);
    p.beta.resize(k_hops);
    for (int k = 0; k < k_hops; ++k) p.beta[k] = 1.0 / (k + 1);
    return p;
}

inline CnaParams zeros_like(const CnaParams& p) {
    CnaParams z;
    z.g_edge = zeros_like(p.g_edge);
    z.g_node = zeros_like(p.g_node);
    z.beta.assign(p.beta.size(), 0.0);
    z.r_c = p.r_c;
    z.r_a = p.r_a;
    z.beta_frozen = p.beta_frozen;
    return z;
}

// Everything the backward pass needs from the refinement chain, produced
// once per forward pass. gedge_hidden holds the hidden activation of g_edge
// for every incident (node, neighbor) pair per slot, in row-scan order.
struct CnaTrace {
    Tensor3 s;       // N x 1 x T structural features
    Tensor3 s_diag;  // N x N x T
    Tensor3 z;       // N x N x T hop mix
    Tensor3 c_hat;   // raw correlation scores
    Tensor3 c;       // normalized correlations
    Tensor3 o;       // refined aggregation weights
    Tensor3 gnode_in;
    Tensor3 gnode_hidden;
    std::vector<std::vector<double>> gedge_hidden;
    bool active = true;  // false when the chain was skipped (r_c = 0)
};

// ---------------------------------------------------------------------------
// Forward chain
// ---------------------------------------------------------------------------

// s_it = g_node(sum_{j in N(i)} g_edge(a_ijt)); isolated nodes push the zero
// vector through g_node. A must be the raw (unnormalized) adjacency.
inline Tensor3 struct_features(const Tensor3& a, const CnaParams& p,
                               CnaTrace* tr = nullptr) {
    require(a.rows == a.cols, "struct_features: adjacency slices must be square");
    require(p.g_edge.in_dim() == 1 && p.g_node.out_dim() == 1 &&
                p.g_edge.out_dim() == p.g_node.in_dim(),
            "struct_features: g_edge/g_node widths do not chain");
    const int n = a.rows, t_all = a.slots;
    const int hs = p.g_edge.out_dim();
    Tensor3 s(n, 1, t_all);
    if (tr) {
        tr->gnode_in = Tensor3(n, hs, t_all);
        tr->gnode_hidden = Tensor3(n, p.g_node.hidden_dim(), t_all);
        tr->gedge_hidden.assign(static_cast<std::size_t>(t_all), {});
    }
    std::vector<double> u(hs), e_hid(p.g_edge.hidden_dim()), e_out(hs),
        n_hid(p.g_node.hidden_dim());
    for (int t = 0; t < t_all; ++t) {
        for (int i = 0; i < n; ++i) {
            std::fill(u.begin(), u.end(), 0.0);
            for (int j = 0; j < n; ++j) {
                const double aij = a(i, j, t);
                if (aij == 0.0) continue;
                p.g_edge.forward(&aij, e_hid.data(), e_out.data());
                for (int m = 0; m < hs; ++m) u[m] += e_out[m];
                if (tr)
                    tr->gedge_hidden[t].insert(tr->gedge_hidden[t].end(), e_hid.begin(),
                                               e_hid.end());
            }
            double out = 0.0;
            p.g_node.forward(u.data(), n_hid.data(), &out);
            s(i, 0, t) = out;
            if (tr) {
                for (int m = 0; m < hs; ++m) tr->gnode_in(i, m, t) = u[m];
                for (std::size_t m = 0; m < n_hid.size(); ++m)
                    tr->gnode_hidden(i, static_cast<int>(m), t) = n_hid[m];
            }
        }
    }
    return s;
}

inline Tensor3 diag_embed(const Tensor3& s) {
    require(s.cols == 1, "diag_embed: expected a column tensor");
    Tensor3 d(s.rows, s.rows, s.slots);
    for (int t = 0; t < s.slots; ++t)
        for (int i = 0; i < s.rows; ++i) d(i, i, t) = s(i, 0, t);
    return d;
}

// Adjacency powers A^1..A^K, shared by every forward pass on one graph.
inline std::vector<Tensor3> hop_powers(const Tensor3& a, int k_hops) {
    require(k_hops >= 1, "hop_powers: hop count must be >= 1");
    std::vector<Tensor3> p;
    p.reserve(static_cast<std::size_t>(k_hops));
    p.push_back(a);
    for (int k = 1; k < k_hops; ++k) p.push_back(facewise_product(p.back(), a));
    return p;
}

// Z slice t = sum_k beta_k A_t^k S_t with precomputed powers. S is diagonal,
// so each term scales column j by s_jt; the accumulation order matches the
// literal matrix-product form term by term.
inline Tensor3 hop_mix_pre(const std::vector<Tensor3>& powers, const Tensor3& s,
                           const std::vector<double>& beta) {
    require(!powers.empty() && powers.size() == beta.size(),
            "hop_mix_pre: power/beta count mismatch");
    require(s.cols == 1 && s.rows == powers[0].rows, "hop_mix_pre: bad feature shape");
    const int n = s.rows, t_all = s.slots;
    Tensor3 z(n, n, t_all);
    for (std::size_t k = 0; k < powers.size(); ++k) {
        const Tensor3& pk = powers[k];
        const double bk = beta[k];
        for (int t = 0; t < t_all; ++t)
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) {
                    const double pv = pk(i, j, t);
                    if (pv == 0.0) continue;
                    z(i, j, t) += bk * (pv * s(j, 0, t));
                }
    }
    return z;
}

inline Tensor3 hop_mix(const Tensor3& a, const Tensor3& s_diag, const CnaParams& p) {
    require(p.hops() >= 1, "hop_mix: hop count must be >= 1");
    require(a.same_shape(s_diag), "hop_mix: shape mismatch");
    Tensor3 s(a.rows, 1, a.slots);
    for (int t = 0; t < a.slots; ++t)
        for (int i = 0; i < a.rows; ++i) s(i, 0, t) = s_diag(i, i, t);
    return hop_mix_pre(hop_powers(a, p.hops()), s, p.beta);
}

// Correlation scores c_hat slice t = Z_t Z_t^T; upper triangle computed and
// mirrored so slices are exactly symmetric.
inline Tensor3 cn_scores(const Tensor3& z) {
    require(z.rows == z.cols, "cn_scores: slices must be square");
    const int n = z.rows;
    Tensor3 c(n, n, z.slots);
    for (int t = 0; t < z.slots; ++t) {
        const double* zs = z.slice(t);
        for (int i = 0; i < n; ++i)
            for (int j = i; j < n; ++j) {
                const double* ri = zs + static_cast<std::size_t>(i) * n;
                const double* rj = zs + static_cast<std::size_t>(j) * n;
                double acc = 0.0;
                for (int m = 0; m < n; ++m) acc += ri[m] * rj[m];
                c(i, j, t) = acc;
                c(j, i, t) = acc;
            }
    }
    return c;
}

// Brute-force reference for the K=1, beta_1=1 case on a binary slice:
// sum over the common neighbors k of (s_kt)^2.
inline double cn_oracle(const Tensor3& a, const Tensor3& s, int i, int j, int t) {
    double acc = 0.0;
    for (int k = 0; k < a.rows; ++k)
        if (a(i, k, t) != 0.0 && a(j, k, t) != 0.0) acc += s(k, 0, t) * s(k, 0, t);
    return acc;
}

// Row-wise softmax restricted to the 1-hop neighborhood plus the self term;
// entries outside the mask are zero and masked rows sum to 1. A supplies the
// mask, so it must be the raw adjacency.
inline Tensor3 normalize_scores(const Tensor3& c_hat, const Tensor3& a) {
    require(c_hat.same_shape(a), "normalize_scores: score/adjacency shape mismatch");
    require(a.rows == a.cols, "normalize_scores: slices must be square");
    const int n = a.rows;
    Tensor3 c(n, n, a.slots);
    std::vector<double> e(n);
    for (int t = 0; t < a.slots; ++t)
        for (int i = 0; i < n; ++i) {
            double mx = -std::numeric_limits<double>::infinity();
            for (int j = 0; j < n; ++j)
                if (j == i || a(i, j, t) != 0.0) mx = std::max(mx, c_hat(i, j, t));
            double denom = 0.0;
            for (int j = 0; j < n; ++j) {
                if (j != i && a(i, j, t) == 0.0) continue;
                e[j] = std::exp(c_hat(i, j, t) - mx);
                denom += e[j];
            }
            for (int j = 0; j < n; ++j)
                if (j == i || a(i, j, t) != 0.0) c(i, j, t) = e[j] / denom;
        }
    return c;
}

// O = r_c * C + r_a * A_hat.
inline Tensor3 fuse_weights(const Tensor3& c, const Tensor3& a_hat, const CnaParams& p) {
    require(c.same_shape(a_hat), "fuse_weights: shape mismatch");
    return affine_combine(p.r_c, c, p.r_a, a_hat);
}

// Full refinement chain with backward caches. a is the raw adjacency, a_hat
// its normalized form, powers = hop_powers(a, K).
inline CnaTrace cna_forward(const Tensor3& a, const Tensor3& a_hat,
                            const std::vector<Tensor3>& powers, const CnaParams& p) {
    CnaTrace tr;
    tr.s = struct_features(a, p, &tr);
    tr.s_diag = diag_embed(tr.s);
    tr.z = hop_mix_pre(powers, tr.s, p.beta);
    tr.c_hat = cn_scores(tr.z);
    tr.c = normalize_scores(tr.c_hat, a);
    tr.o = fuse_weights(tr.c, a_hat, p);
    return tr;
}

// ---------------------------------------------------------------------------
// Backward chain
// ---------------------------------------------------------------------------

// Accumulates gradients for g_edge, g_node and beta into g given dL/dO.
// The normalized scores are supported on the neighbor-plus-self mask, so the
// softmax backward only propagates masked entries.
inline void cna_backward(const Tensor3& d_o, const CnaTrace& tr, const Tensor3& a,
                         const std::vector<Tensor3>& powers, const CnaParams& p,
                         CnaParams& g) {
    if (!tr.active) return;
    require(powers.size() == p.beta.size(), "cna_backward: power/beta count mismatch");
    const int n = a.rows, t_all = a.slots;

    // dC = r_c dO; softmax backward row by row over the mask.
    Tensor3 d_chat(n, n, t_all);
    for (int t = 0; t < t_all; ++t)
        for (int i = 0; i < n; ++i) {
            double dot = 0.0;
            for (int j = 0; j < n; ++j)
                if (j == i || a(i, j, t) != 0.0)
                    dot += tr.c(i, j, t) * (p.r_c * d_o(i, j, t));
            for (int j = 0; j < n; ++j)
                if (j == i || a(i, j, t) != 0.0)
                    d_chat(i, j, t) = tr.c(i, j, t) * (p.r_c * d_o(i, j, t) - dot);
        }

    // c_hat_t = Z_t Z_t^T  =>  dZ_t = (dC_hat_t + dC_hat_t^T) Z_t. dC_hat is
    // zero outside the mask, which is symmetric, so only masked pairs feed in.
    Tensor3 d_z(n, n, t_all);
    for (int t = 0; t < t_all; ++t) {
        const double* zs = tr.z.slice(t);
        double* dzs = d_z.slice(t);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                if (j != i && a(i, j, t) == 0.0) continue;
                const double w = d_chat(i, j, t) + d_chat(j, i, t);
                if (w == 0.0) continue;
                const double* zr = zs + static_cast<std::size_t>(j) * n;
                double* dr = dzs + static_cast<std::size_t>(i) * n;
                for (int m = 0; m < n; ++m) dr[m] += w * zr[m];
            }
    }

    // Z_ijt = sum_k beta_k (A^k)_ijt s_jt.
    Tensor3 d_s(n, 1, t_all);
    for (int t = 0; t < t_all; ++t)
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                const double dz = d_z(i, j, t);
                if (dz == 0.0) continue;
                for (std::size_t k = 0; k < powers.size(); ++k) {
                    const double pv = powers[k](i, j, t);
                    if (pv == 0.0) continue;
                    g.beta[k] += pv * tr.s(j, 0, t) * dz;
                    d_s(j, 0, t) += p.beta[k] * pv * dz;
                }
            }

    // Through g_node into the shared neighborhood sum, then through g_edge
    // for each incident edge in the forward scan order.
    const int hs = p.g_edge.out_dim();
    std::vector<double> du(hs);
    for (int t = 0; t < t_all; ++t) {
        std::size_t pos = 0;
        const std::size_t eh = static_cast<std::size_t>(p.g_edge.hidden_dim());
        for (int i = 0; i < n; ++i) {
            const double dsi = d_s(i, 0, t);
            std::fill(du.begin(), du.end(), 0.0);
            p.g_node.backward(&tr.gnode_in(i, 0, t), &tr.gnode_hidden(i, 0, t), &dsi,
                              g.g_node, du.data());
            for (int j = 0; j < n; ++j) {
                const double aij = a(i, j, t);
                if (aij == 0.0) continue;
                p.g_edge.backward(&aij, tr.gedge_hidden[t].data() + pos, du.data(),
                                  g.g_edge);
                pos += eh;
            }
        }
    }
}

}  // namespace hgnn
