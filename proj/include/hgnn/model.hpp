#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "hgnn/cna.hpp"
#include "hgnn/graph.hpp"
#include "hgnn/mlp.hpp"
#include "hgnn/tensor.hpp"
#include "hgnn/transform.hpp"

namespace hgnn {

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

struct LayerParams {
    Tensor3 w;  // F_in x F_out x T
    Tensor3 b;  // 1 x F_out x T
};

struct ModelParams {
    std::vector<LayerParams> layers;
    Mlp decoder;  // 2F -> h_d -> 1, terminal sigmoid applied in decode_link
    CnaParams cna;
    Activation sigma = Activation::Sigmoid;
    double alpha = 1e-3;
    bool use_bias = true;
    std::uint64_t version = 0;  // bumped on every parameter mutation

    int layer_count() const { return static_cast<int>(layers.size()); }
    int embed_dim() const { return layers.back().w.cols; }
};

struct ModelInit {
    int f_in = 32;
    int f_embed = 32;
    int layer_count = 2;
    int slots = 1;
    int k_hops = 2;
    int h_s = 8;
    int h_d = 32;
    Activation sigma = Activation::Sigmoid;
    double alpha = 1e-3;
    double r_c = 0.5;
    double r_a = 0.5;
    bool use_bias = true;
    bool beta_frozen = false;
    std::uint64_t seed = 1;
};

inline Tensor3 glorot_tensor(int rows, int cols, int slots, Rng& rng) {
    Tensor3 w(rows, cols, slots);
    const double b = glorot_bound(rows, cols);
    for (auto& v : w.data) v = rng.uniform(-b, b);
    return w;
}

inline ModelParams make_model(const ModelInit& init) {
    require(init.layer_count >= 1, "make_model: need at least one layer");
    require(init.f_in >= 1 && init.f_embed >= 1 && init.slots >= 1,
            "make_model: bad dimensions");
    Rng rng(derive_seed(init.seed, "init"));
    ModelParams m;
    for (int l = 0; l < init.layer_count; ++l) {
        const int fi = l == 0 ? init.f_in : init.f_embed;
        LayerParams lp;
        lp.w = glorot_tensor(fi, init.f_embed, init.slots, rng);
        lp.b = Tensor3(1, init.f_embed, init.slots);
        m.layers.push_back(std::move(lp));
    }
    m.decoder = make_mlp(2 * init.f_embed, init.h_d, 1, rng);
    m.cna = make_cna_params(init.h_s, init.k_hops, rng);
    m.cna.r_c = init.r_c;
    m.cna.r_a = init.r_a;
    m.cna.beta_frozen = init.beta_frozen;
    m.sigma = init.sigma;
    m.alpha = init.alpha;
    m.use_bias = init.use_bias;
    return m;
}

inline ModelParams zeros_like(const ModelParams& p) {
    ModelParams z;
    for (const auto& l : p.layers) {
        LayerParams lp;
        lp.w = Tensor3(l.w.rows, l.w.cols, l.w.slots);
        lp.b = Tensor3(l.b.rows, l.b.cols, l.b.slots);
        z.layers.push_back(std::move(lp));
    }
    z.decoder = zeros_like(p.decoder);
    z.cna = zeros_like(p.cna);
    z.sigma = p.sigma;
    z.alpha = p.alpha;
    z.use_bias = p.use_bias;
    return z;
}

// Walks every learnable parameter group in a fixed order: layer weights,
// layer biases (when enabled), decoder, g_edge, g_node, beta (when not
// frozen). The gradient carrier from zeros_like shares this layout.
template <class MP, class Fn>
void visit_learnable(MP& m, Fn&& fn) {
    auto mlp = [&fn](const std::string& base, auto& mm, bool biases) {
        fn(base + ".w1", mm.w1.a.data(), mm.w1.a.size());
        if (biases) fn(base + ".b1", mm.b1.data(), mm.b1.size());
        fn(base + ".w2", mm.w2.a.data(), mm.w2.a.size());
        if (biases) fn(base + ".b2", mm.b2.data(), mm.b2.size());
    };
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        const std::string base = "layer" + std::to_string(l);
        fn(base + ".w", m.layers[l].w.data.data(), m.layers[l].w.data.size());
        if (m.use_bias) fn(base + ".b", m.layers[l].b.data.data(), m.layers[l].b.data.size());
    }
    mlp("decoder", m.decoder, m.use_bias);
    mlp("g_edge", m.cna.g_edge, true);
    mlp("g_node", m.cna.g_node, true);
    if (!m.cna.beta_frozen) fn("beta", m.cna.beta.data(), m.cna.beta.size());
}

struct ParamView {
    std::string name;
    double* p = nullptr;
    std::size_t n = 0;
};

inline std::vector<ParamView> learnable_views(ModelParams& m) {
    std::vector<ParamView> v;
    visit_learnable(m, [&v](const std::string& name, double* p, std::size_t n) {
        v.push_back({name, p, n});
    });
    return v;
}

inline double l2_norm_sq(const ModelParams& m) {
    double acc = 0.0;
    visit_learnable(m, [&acc](const std::string&, const double* p, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) acc += p[i] * p[i];
    });
    return acc;
}

// ---------------------------------------------------------------------------
// Per-graph precomputation shared across forward passes
// ---------------------------------------------------------------------------

struct GraphContext {
    const DynamicGraph* graph = nullptr;
    Tensor3 a_hat;                // normalized adjacency
    std::vector<Tensor3> a_pows;  // A^1..A^K
};

inline GraphContext make_context(const DynamicGraph& g, int k_hops) {
    GraphContext ctx;
    ctx.graph = &g;
    ctx.a_hat = normalize_adjacency(g.adjacency);
    ctx.a_pows = hop_powers(g.adjacency, k_hops);
    return ctx;
}

// ---------------------------------------------------------------------------
// Forward
// ---------------------------------------------------------------------------

struct ForwardTrace {
    CnaTrace cna;
    std::vector<Tensor3> h;   // h[0] = X, h[l] = layer l output
    std::vector<Tensor3> oh;  // oh[l] = t_product(O, h[l])
    std::uint64_t params_version = 0;

    const Tensor3& embedding() const { return h.back(); }
};

inline void check_shapes(const GraphContext& ctx, const ModelParams& p) {
    require(!p.layers.empty(), "forward: model has no layers");
    const DynamicGraph& g = *ctx.graph;
    require(p.layers[0].w.rows == g.feature_dim(),
            "forward: feature dim " + std::to_string(g.feature_dim()) +
                " does not match layer 1 input " + std::to_string(p.layers[0].w.rows));
    int f = p.layers[0].w.cols;
    for (std::size_t l = 1; l < p.layers.size(); ++l) {
        require(p.layers[l].w.rows == f, "forward: layer shape chain broken at layer " +
                                             std::to_string(l + 1));
        f = p.layers[l].w.cols;
    }
    for (const auto& l : p.layers)
        require(l.w.slots == g.n_slots && l.b.slots == g.n_slots,
                "forward: layer slot count does not match graph");
    require(static_cast<int>(ctx.a_pows.size()) == p.cna.hops(),
            "forward: context hop powers do not match K");
}

// H^(0) = X; H^(l) = sigma(t_product(t_product(O, H^(l-1)), W^(l)) + b).
// With r_c = 0 the refinement chain cannot influence O, so it is skipped
// unless force_cna asks for the full trace anyway.
inline ForwardTrace forward(const GraphContext& ctx, const ModelParams& p,
                            const Transform& tf, bool force_cna = false) {
    check_shapes(ctx, p);
    const DynamicGraph& g = *ctx.graph;
    require(tf.size == g.n_slots, "forward: transform size does not match slot count");

    ForwardTrace tr;
    tr.params_version = p.version;
    if (p.cna.r_c != 0.0 || force_cna) {
        tr.cna = cna_forward(g.adjacency, ctx.a_hat, ctx.a_pows, p.cna);
    } else {
        tr.cna.active = false;
        tr.cna.o = scale(ctx.a_hat, p.cna.r_a);
    }

    tr.h.push_back(g.features);
    for (const auto& layer : p.layers) {
        Tensor3 oh = t_product(tr.cna.o, tr.h.back(), tf);
        Tensor3 pre = t_product(oh, layer.w, tf);
        if (p.use_bias)
            for (int t = 0; t < pre.slots; ++t)
                for (int i = 0; i < pre.rows; ++i)
                    for (int f = 0; f < pre.cols; ++f) pre(i, f, t) += layer.b(0, f, t);
        tr.oh.push_back(std::move(oh));
        const Activation sigma = p.sigma;
        tr.h.push_back(map(pre, [sigma](double v) { return activate(sigma, v); }));
    }
    return tr;
}

inline ForwardTrace forward(const DynamicGraph& g, const ModelParams& p,
                            const Transform& tf) {
    return forward(make_context(g, p.cna.hops()), p, tf);
}

// ---------------------------------------------------------------------------
// Decoder and objective
// ---------------------------------------------------------------------------

// Keeps probabilities in the open interval so both logs stay finite; the
// gradient is treated as zero in the clamped region.
constexpr double kProbClamp = 1e-12;

inline double clamp_prob(double v) {
    return std::min(1.0 - kProbClamp, std::max(kProbClamp, v));
}

// y_hat = sigmoid(decoder([h_i || h_j])). Concatenation is ordered, so
// decode_link(i, j) and decode_link(j, i) generally differ.
inline double decode_link(const Tensor3& h, int i, int j, int t, const ModelParams& p) {
    require(i >= 0 && i < h.rows && j >= 0 && j < h.rows && t >= 0 && t < h.slots,
            "decode_link: index out of range");
    const int f = h.cols;
    require(p.decoder.in_dim() == 2 * f, "decode_link: decoder width mismatch");
    std::vector<double> x(static_cast<std::size_t>(2) * f);
    std::vector<double> hid(static_cast<std::size_t>(p.decoder.hidden_dim()));
    for (int m = 0; m < f; ++m) {
        x[m] = h(i, m, t);
        x[f + m] = h(j, m, t);
    }
    double logit = 0.0;
    p.decoder.forward(x.data(), hid.data(), &logit);
    return clamp_prob(sigmoid(logit));
}

inline std::vector<double> predict(const ForwardTrace& tr, const std::vector<Sample>& samples,
                                   const ModelParams& p) {
    std::vector<double> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(decode_link(tr.embedding(), s.i, s.j, s.t, p));
    return out;
}

// Mean binary cross-entropy plus the L2 penalty alpha * ||Omega||^2.
inline double loss(const std::vector<Sample>& samples, const std::vector<double>& preds,
                   const ModelParams& p) {
    require(!samples.empty(), "loss: empty sample set");
    require(samples.size() == preds.size(), "loss: sample/prediction count mismatch");
    double acc = 0.0;
    for (std::size_t n = 0; n < samples.size(); ++n) {
        const double y = samples[n].label;
        const double pr = preds[n];
        acc -= y * std::log(pr) + (1.0 - y) * std::log(1.0 - pr);
    }
    return acc / static_cast<double>(samples.size()) + p.alpha * l2_norm_sq(p);
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

// Exact reverse-mode gradients for every learnable parameter, accumulated
// into a zeros_like(p) carrier. The trace must come from forward() on the
// same parameter version.
inline ModelParams backward(const ForwardTrace& tr, const std::vector<Sample>& samples,
                            const ModelParams& p, const GraphContext& ctx,
                            const Transform& tf) {
    require(!samples.empty(), "backward: empty sample set");
    if (tr.params_version != p.version)
        throw std::runtime_error("backward: trace is stale (parameter version " +
                                 std::to_string(tr.params_version) + " vs " +
                                 std::to_string(p.version) + ")");
    ModelParams g = zeros_like(p);
    const Tensor3& h_out = tr.embedding();
    const int f = h_out.cols;
    const double inv_n = 1.0 / static_cast<double>(samples.size());

    // Decoder head: d loss / d logit = (y_hat - y) / |samples|, zero where
    // the probability clamp is active (matches finite differences there).
    Tensor3 dh(h_out.rows, h_out.cols, h_out.slots);
    std::vector<double> x(static_cast<std::size_t>(2) * f);
    std::vector<double> hid(static_cast<std::size_t>(p.decoder.hidden_dim()));
    std::vector<double> dx(static_cast<std::size_t>(2) * f);
    for (const auto& s : samples) {
        for (int m = 0; m < f; ++m) {
            x[m] = h_out(s.i, m, s.t);
            x[f + m] = h_out(s.j, m, s.t);
        }
        double logit = 0.0;
        p.decoder.forward(x.data(), hid.data(), &logit);
        const double pr = sigmoid(logit);
        if (pr <= kProbClamp || pr >= 1.0 - kProbClamp) continue;
        const double dlogit = (pr - static_cast<double>(s.label)) * inv_n;
        std::fill(dx.begin(), dx.end(), 0.0);
        p.decoder.backward(x.data(), hid.data(), &dlogit, g.decoder, dx.data());
        for (int m = 0; m < f; ++m) {
            dh(s.i, m, s.t) += dx[m];
            dh(s.j, m, s.t) += dx[f + m];
        }
    }

    // Layers, top down. dO accumulates across layers.
    Tensor3 d_o(tr.cna.o.rows, tr.cna.o.cols, tr.cna.o.slots);
    for (int l = p.layer_count() - 1; l >= 0; --l) {
        const Tensor3& out = tr.h[static_cast<std::size_t>(l) + 1];
        const Activation sigma = p.sigma;
        Tensor3 dpre(out.rows, out.cols, out.slots);
        for (std::size_t n = 0; n < out.size(); ++n)
            dpre.data[n] = dh.data[n] * activate_grad(sigma, out.data[n]);
        if (p.use_bias)
            for (int t = 0; t < dpre.slots; ++t)
                for (int i = 0; i < dpre.rows; ++i)
                    for (int ff = 0; ff < dpre.cols; ++ff)
                        g.layers[l].b(0, ff, t) += dpre(i, ff, t);
        Tensor3 d_oh(tr.oh[l].rows, tr.oh[l].cols, tr.oh[l].slots);
        t_product_backward(dpre, tr.oh[l], p.layers[l].w, tf, d_oh, g.layers[l].w);
        Tensor3 dh_prev(tr.h[l].rows, tr.h[l].cols, tr.h[l].slots);
        t_product_backward(d_oh, tr.cna.o, tr.h[l], tf, d_o, dh_prev);
        dh = std::move(dh_prev);
    }

    cna_backward(d_o, tr.cna, ctx.graph->adjacency, ctx.a_pows, p.cna, g.cna);

    // d(alpha ||Omega||^2) = 2 alpha Omega entrywise.
    {
        auto gv = learnable_views(g);
        std::size_t idx = 0;
        const double two_alpha = 2.0 * p.alpha;
        visit_learnable(p, [&](const std::string&, const double* q, std::size_t n) {
            for (std::size_t m = 0; m < n; ++m) gv[idx].p[m] += two_alpha * q[m];
            ++idx;
        });
    }
    return g;
}

// ---------------------------------------------------------------------------
// Checkpoints ("HCNA"): magic, format version, config echo, every parameter
// tensor with dims. save -> load -> save is byte-identical.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_str(std::ostream& os, const std::string& s) {
    put_u32(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_str(std::istream& is) {
    const std::uint32_t n = get_u32(is);
    std::string s(n, '\0');
    is.read(s.data(), n);
    return s;
}

inline void put_tensor_dims(std::ostream& os, const Tensor3& t) {
    put_u32(os, static_cast<std::uint32_t>(t.rows));
    put_u32(os, static_cast<std::uint32_t>(t.cols));
    put_u32(os, static_cast<std::uint32_t>(t.slots));
    put_tensor(os, t);
}

inline Tensor3 get_tensor_dims(std::istream& is) {
    const int r = static_cast<int>(get_u32(is));
    const int c = static_cast<int>(get_u32(is));
    const int s = static_cast<int>(get_u32(is));
    require(r >= 0 && c >= 0 && s >= 0, "checkpoint: bad tensor dims");
    Tensor3 t(r, c, s);
    get_tensor(is, t);
    return t;
}

inline void put_matrix(std::ostream& os, const Matrix& m) {
    put_u32(os, static_cast<std::uint32_t>(m.rows));
    put_u32(os, static_cast<std::uint32_t>(m.cols));
    for (double v : m.a) put_f64(os, v);
}

inline Matrix get_matrix(std::istream& is) {
    const int r = static_cast<int>(get_u32(is));
    const int c = static_cast<int>(get_u32(is));
    require(r >= 0 && c >= 0, "checkpoint: bad matrix dims");
    Matrix m(r, c);
    for (double& v : m.a) v = get_f64(is);
    return m;
}

inline void put_mlp(std::ostream& os, const Mlp& m) {
    put_u32(os, static_cast<std::uint32_t>(m.hidden));
    put_matrix(os, m.w1);
    put_u32(os, static_cast<std::uint32_t>(m.b1.size()));
    for (double v : m.b1) put_f64(os, v);
    put_matrix(os, m.w2);
    put_u32(os, static_cast<std::uint32_t>(m.b2.size()));
    for (double v : m.b2) put_f64(os, v);
}

inline Mlp get_mlp(std::istream& is) {
    Mlp m;
    m.hidden = static_cast<Activation>(get_u32(is));
    m.w1 = get_matrix(is);
    m.b1.resize(get_u32(is));
    for (double& v : m.b1) v = get_f64(is);
    m.w2 = get_matrix(is);
    m.b2.resize(get_u32(is));
    for (double& v : m.b2) v = get_f64(is);
    return m;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const ModelParams& p,
                            const std::string& config_echo) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("save_checkpoint: cannot open " + path);
    os.write("HCNA", 4);
    detail::put_u32(os, 1);  // format version
    detail::put_str(os, config_echo);
    detail::put_u32(os, static_cast<std::uint32_t>(p.layers.size()));
    detail::put_u32(os, static_cast<std::uint32_t>(p.sigma));
    detail::put_u32(os, p.use_bias ? 1 : 0);
    detail::put_u32(os, p.cna.beta_frozen ? 1 : 0);
    detail::put_f64(os, p.alpha);
    detail::put_f64(os, p.cna.r_c);
    detail::put_f64(os, p.cna.r_a);
    for (const auto& l : p.layers) {
        detail::put_tensor_dims(os, l.w);
        detail::put_tensor_dims(os, l.b);
    }
    detail::put_mlp(os, p.decoder);
    detail::put_mlp(os, p.cna.g_edge);
    detail::put_mlp(os, p.cna.g_node);
    detail::put_u32(os, static_cast<std::uint32_t>(p.cna.beta.size()));
    for (double v : p.cna.beta) detail::put_f64(os, v);
    if (!os) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

inline ModelParams load_checkpoint(const std::string& path, std::string* config_echo = nullptr) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::invalid_argument("load_checkpoint: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::string(magic, 4) != "HCNA")
        throw std::invalid_argument("load_checkpoint: bad magic in " + path);
    const std::uint32_t version = detail::get_u32(is);
    if (version != 1)
        throw std::invalid_argument("load_checkpoint: unsupported format version " +
                                    std::to_string(version));
    const std::string echo = detail::get_str(is);
    if (config_echo) *config_echo = echo;
    ModelParams p;
    const std::uint32_t n_layers = detail::get_u32(is);
    p.sigma = static_cast<Activation>(detail::get_u32(is));
    p.use_bias = detail::get_u32(is) != 0;
    p.cna.beta_frozen = detail::get_u32(is) != 0;
    p.alpha = detail::get_f64(is);
    p.cna.r_c = detail::get_f64(is);
    p.cna.r_a = detail::get_f64(is);
    for (std::uint32_t l = 0; l < n_layers; ++l) {
        LayerParams lp;
        lp.w = detail::get_tensor_dims(is);
        lp.b = detail::get_tensor_dims(is);
        p.layers.push_back(std::move(lp));
    }
    p.decoder = detail::get_mlp(is);
    p.cna.g_edge = detail::get_mlp(is);
    p.cna.g_node = detail::get_mlp(is);
    p.cna.beta.resize(detail::get_u32(is));
    for (double& v : p.cna.beta) v = detail::get_f64(is);
    if (!is) throw std::invalid_argument("load_checkpoint: truncated file " + path);
    return p;
}

}  // namespace hgnn
