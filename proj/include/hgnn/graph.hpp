#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "hgnn/rng.hpp"
#include "hgnn/tensor.hpp"

namespace hgnn {

// ---------------------------------------------------------------------------
// Edge-list ingestion
// ---------------------------------------------------------------------------

struct TemporalEdge {
    int src = 0;
    int dst = 0;
    long long ts = 0;
    double weight = 1.0;
};

struct ParseResult {
    std::vector<TemporalEdge> edges;
    int n_nodes = 0;
    long long dropped_self_loops = 0;
    long long malformed_lines = 0;
};

namespace detail {

inline bool parse_number(const std::string& tok, double& out) {
    try {
        std::size_t pos = 0;
        out = std::stod(tok, &pos);
        return pos == tok.size() && std::isfinite(out);
    } catch (...) {
        return false;
    }
}

}  // namespace detail

// Reads "SRC DST TIMESTAMP" or "SRC DST WEIGHT TIMESTAMP" lines, whitespace-
// or comma-separated ('#'/'%' start comments). Node ids are remapped to a
// dense 0..N-1 range in first-appearance order; self-loops are dropped.
// Strict mode throws on the first malformed line, lenient mode counts them.
inline ParseResult parse_edge_list(std::istream& in, bool strict = false) {
    ParseResult res;
    std::unordered_map<long long, int> remap;
    std::string line;
    long long line_no = 0;
    auto node_id = [&remap](long long raw) {
        auto [it, fresh] = remap.emplace(raw, static_cast<int>(remap.size()));
        (void)fresh;
        return it->second;
    };
    while (std::getline(in, line)) {
        ++line_no;
        for (char& c : line)
            if (c == ',' || c == '\t' || c == '\r') c = ' ';
        std::istringstream ls(line);
        std::vector<std::string> toks;
        std::string tok;
        while (ls >> tok) toks.push_back(tok);
        if (toks.empty() || toks[0][0] == '#' || toks[0][0] == '%') continue;

        double f[4] = {0, 0, 0, 0};
        bool ok = toks.size() == 3 || toks.size() == 4;
        for (std::size_t k = 0; ok && k < toks.size(); ++k)
            ok = detail::parse_number(toks[k], f[k]);
        long long src = 0, dst = 0, ts = 0;
        double weight = 1.0;
        if (ok) {
            src = static_cast<long long>(f[0]);
            dst = static_cast<long long>(f[1]);
            if (toks.size() == 3) {
                ts = static_cast<long long>(std::llround(f[2]));
            } else {
                weight = f[2];
                ts = static_cast<long long>(std::llround(f[3]));
            }
            ok = src == f[0] && dst == f[1] && src >= 0 && dst >= 0 && ts >= 0;
        }
        if (!ok) {
            if (strict)
                throw std::invalid_argument("parse_edge_list: malformed line " +
                                            std::to_string(line_no) + ": " + line);
            ++res.malformed_lines;
            continue;
        }
        if (src == dst) {
            ++res.dropped_self_loops;
            continue;
        }
        res.edges.push_back({node_id(src), node_id(dst), ts, weight});
    }
    res.n_nodes = static_cast<int>(remap.size());
    return res;
}

// ---------------------------------------------------------------------------
// Snapshot construction
// ---------------------------------------------------------------------------

struct DynamicGraph {
    int n_nodes = 0;
    int n_slots = 0;
    Tensor3 adjacency;  // N x N x T, symmetric, zero diagonal
    Tensor3 features;   // N x F x T
    std::vector<std::vector<std::pair<int, int>>> edges_per_slot;  // i < j
    bool binarized = true;

    int feature_dim() const { return features.cols; }
    long long total_edges() const {
        long long n = 0;
        for (const auto& e : edges_per_slot) n += static_cast<long long>(e.size());
        return n;
    }
};

// Partitions [min_ts, max_ts] into T equal-width windows and accumulates
// symmetric edge weights per window. With binarize any nonzero accumulated
// weight becomes 1. node_cap > 0 keeps only the highest-degree nodes.
inline DynamicGraph build_snapshots(const std::vector<TemporalEdge>& edges_in, int n_slots,
                                    bool binarize = true, int node_cap = 0) {
    require(n_slots >= 1, "build_snapshots: slot count must be >= 1");
    require(!edges_in.empty(), "build_snapshots: no edges");

    std::vector<TemporalEdge> edges = edges_in;
    int n_nodes = 0;
    for (const auto& e : edges) n_nodes = std::max({n_nodes, e.src + 1, e.dst + 1});

    if (node_cap > 0 && node_cap < n_nodes) {
        std::vector<long long> degree(n_nodes, 0);
        for (const auto& e : edges) {
            ++degree[e.src];
            ++degree[e.dst];
        }
        std::vector<int> order(n_nodes);
        for (int i = 0; i < n_nodes; ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&degree](int a, int b) {
            return degree[a] != degree[b] ? degree[a] > degree[b] : a < b;
        });
        std::vector<int> remap(n_nodes, -1);
        std::vector<int> kept(order.begin(), order.begin() + node_cap);
        std::sort(kept.begin(), kept.end());
        for (int k = 0; k < node_cap; ++k) remap[kept[k]] = k;
        std::vector<TemporalEdge> filtered;
        filtered.reserve(edges.size());
        for (auto e : edges) {
            if (remap[e.src] < 0 || remap[e.dst] < 0) continue;
            e.src = remap[e.src];
            e.dst = remap[e.dst];
            filtered.push_back(e);
        }
        require(!filtered.empty(), "build_snapshots: node cap removed every edge");
        edges = std::move(filtered);
        n_nodes = node_cap;
    }

    long long min_ts = edges[0].ts, max_ts = edges[0].ts;
    for (const auto& e : edges) {
        min_ts = std::min(min_ts, e.ts);
        max_ts = std::max(max_ts, e.ts);
    }
    const double width =
        static_cast<double>(max_ts - min_ts + 1) / static_cast<double>(n_slots);

    DynamicGraph g;
    g.n_nodes = n_nodes;
    g.n_slots = n_slots;
    g.binarized = binarize;
    g.adjacency = Tensor3(n_nodes, n_nodes, n_slots);
    for (const auto& e : edges) {
        int t = static_cast<int>(static_cast<double>(e.ts - min_ts) / width);
        t = std::min(t, n_slots - 1);
        g.adjacency(e.src, e.dst, t) += e.weight;
        g.adjacency(e.dst, e.src, t) += e.weight;
    }
    if (binarize)
        for (auto& v : g.adjacency.data) v = (v != 0.0) ? 1.0 : 0.0;

    g.edges_per_slot.resize(n_slots);
    for (int t = 0; t < n_slots; ++t)
        for (int i = 0; i < n_nodes; ++i)
            for (int j = i + 1; j < n_nodes; ++j)
                if (g.adjacency(i, j, t) != 0.0) g.edges_per_slot[t].emplace_back(i, j);
    return g;
}

// GCN-style symmetric normalization with self-loops, per frontal slice:
// A_hat_t = D^{-1/2} (A_t + I) D^{-1/2}.
inline Tensor3 normalize_adjacency(const Tensor3& a) {
    require(a.rows == a.cols, "normalize_adjacency: slices must be square");
    const int n = a.rows;
    Tensor3 out(n, n, a.slots);
    std::vector<double> deg(n);
    for (int t = 0; t < a.slots; ++t) {
        for (int i = 0; i < n; ++i) {
            double d = 1.0;  // self-loop
            for (int j = 0; j < n; ++j) {
                require(a(i, j, t) >= 0.0, "normalize_adjacency: negative entry");
                d += a(i, j, t);
            }
            deg[i] = d;
        }
        // Single sqrt of the degree product keeps small exact cases exact,
        // e.g. a lone edge normalizes to 1/2 rather than (1/sqrt(2))^2.
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                const double v = a(i, j, t) + (i == j ? 1.0 : 0.0);
                if (v != 0.0) out(i, j, t) = v / std::sqrt(deg[i] * deg[j]);
            }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Chronological splits
// ---------------------------------------------------------------------------

struct SplitPlan {
    std::vector<int> train_slots;
    std::vector<int> val_slots;
    std::vector<int> test_slots;
};

// First floor(r_train*T) slots train, next floor(r_val*T) validation, rest
// test; a partition that would come out empty steals one slot from its left
// neighbor.
inline SplitPlan split_slots(int n_slots, double r_train = 0.7, double r_val = 0.2) {
    require(n_slots >= 3, "split_slots: need at least 3 slots");
    int n_train = static_cast<int>(r_train * n_slots);
    int n_val = static_cast<int>(r_val * n_slots);
    int n_test = n_slots - n_train - n_val;
    if (n_test == 0) {
        if (n_val > 1) {
            --n_val;
        } else {
            --n_train;
        }
        ++n_test;
    }
    if (n_val == 0) {
        --n_train;
        ++n_val;
    }
    require(n_train >= 1 && n_val >= 1 && n_test >= 1, "split_slots: degenerate split");
    SplitPlan plan;
    for (int t = 0; t < n_train; ++t) plan.train_slots.push_back(t);
    for (int t = n_train; t < n_train + n_val; ++t) plan.val_slots.push_back(t);
    for (int t = n_train + n_val; t < n_slots; ++t) plan.test_slots.push_back(t);
    return plan;
}

inline SplitPlan split_temporal(const DynamicGraph& g, double r_train = 0.7,
                                double r_val = 0.2) {
    return split_slots(g.n_slots, r_train, r_val);
}

// ---------------------------------------------------------------------------
// Link samples
// ---------------------------------------------------------------------------

struct Sample {
    int i = 0;
    int j = 0;
    int t = 0;
    int label = 0;
};

struct SampleSet {
    std::vector<Sample> entries;
    bool exhausted = false;  // fewer non-edges than requested
};

// Draws m distinct uniformly random non-adjacent pairs (i < j) at slot t.
// Falls back to full enumeration when the request covers most non-edges.
inline SampleSet negative_sample(const DynamicGraph& g, int t, std::size_t m,
                                 std::uint64_t seed) {
    require(t >= 0 && t < g.n_slots, "negative_sample: slot out of range");
    const int n = g.n_nodes;
    const long long pairs = static_cast<long long>(n) * (n - 1) / 2;
    const long long non_edges = pairs - static_cast<long long>(g.edges_per_slot[t].size());
    SampleSet out;
    Rng rng(seed);

    if (static_cast<long long>(m) >= non_edges || 2 * static_cast<long long>(m) > non_edges) {
        std::vector<Sample> all;
        all.reserve(static_cast<std::size_t>(non_edges));
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j)
                if (g.adjacency(i, j, t) == 0.0) all.push_back({i, j, t, 0});
        if (static_cast<long long>(m) >= non_edges) {
            out.entries = std::move(all);
            out.exhausted = static_cast<long long>(m) > non_edges;
            return out;
        }
        rng.shuffle(all);
        out.entries.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(m));
        return out;
    }

    std::vector<bool> taken(static_cast<std::size_t>(n) * n, false);
    out.entries.reserve(m);
    while (out.entries.size() < m) {
        int i = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n)));
        int j = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n)));
        if (i == j) continue;
        if (i > j) std::swap(i, j);
        const std::size_t key = static_cast<std::size_t>(i) * n + j;
        if (taken[key] || g.adjacency(i, j, t) != 0.0) continue;
        taken[key] = true;
        out.entries.push_back({i, j, t, 0});
    }
    return out;
}

// Balanced positive/negative sample set over the given slots: every edge of
// each slot labeled 1 plus an equal count of sampled non-edges labeled 0.
inline SampleSet make_samples(const DynamicGraph& g, const std::vector<int>& slots,
                              std::uint64_t seed) {
    SampleSet out;
    for (int t : slots) {
        const auto& edges = g.edges_per_slot[t];
        if (edges.empty()) continue;
        for (const auto& [i, j] : edges) out.entries.push_back({i, j, t, 1});
        SampleSet neg = negative_sample(g, t, edges.size(),
                                        derive_seed(seed, "neg", static_cast<std::uint64_t>(t)));
        out.exhausted = out.exhausted || neg.exhausted;
        out.entries.insert(out.entries.end(), neg.entries.begin(), neg.entries.end());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Node features
// ---------------------------------------------------------------------------

enum class FeatureScheme { Degree, Random };

inline FeatureScheme feature_scheme_from_string(const std::string& s) {
    if (s == "degree") return FeatureScheme::Degree;
    if (s == "random") return FeatureScheme::Random;
    throw std::invalid_argument("unknown feature scheme: " + s);
}

// Degree scheme: column 0 carries the slot-wise normalized degree, the rest
// hold node-stable noise in [-0.1, 0.1] (replicated across slots so a node
// keeps its identity through time). Random scheme: all columns noise.
inline Tensor3 init_features(const DynamicGraph& g, int f_dim, FeatureScheme scheme,
                             std::uint64_t seed) {
    require(f_dim >= 1, "init_features: feature dimension must be >= 1");
    const int n = g.n_nodes, t_all = g.n_slots;
    Tensor3 x(n, f_dim, t_all);
    Rng rng(derive_seed(seed, "features"));
    const int noise_from = scheme == FeatureScheme::Degree ? 1 : 0;
    for (int i = 0; i < n; ++i)
        for (int f = noise_from; f < f_dim; ++f) {
            const double v = rng.uniform(-0.1, 0.1);
            for (int t = 0; t < t_all; ++t) x(i, f, t) = v;
        }
    if (scheme == FeatureScheme::Degree) {
        const double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;
        for (int t = 0; t < t_all; ++t)
            for (int i = 0; i < n; ++i) {
                double deg = 0.0;
                for (int j = 0; j < n; ++j)
                    if (g.adjacency(i, j, t) != 0.0) deg += 1.0;
                x(i, 0, t) = deg / denom;
            }
    }
    return x;
}

// ---------------------------------------------------------------------------
// Snapshot cache ("DGC1"): magic, little-endian u32 dims N, F, T, then the
// raw adjacency and feature payloads as little-endian doubles.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

inline void put_f64(std::ostream& os, double d) {
    std::uint64_t v;
    static_assert(sizeof(v) == sizeof(d));
    std::memcpy(&v, &d, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

inline double get_f64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    double d;
    std::memcpy(&d, &v, 8);
    return d;
}

inline void put_tensor(std::ostream& os, const Tensor3& t) {
    for (double v : t.data) put_f64(os, v);
}

inline void get_tensor(std::istream& is, Tensor3& t) {
    for (double& v : t.data) v = get_f64(is);
}

}  // namespace detail

inline void save_cache(const std::string& path, const DynamicGraph& g) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("save_cache: cannot open " + path);
    os.write("DGC1", 4);
    detail::put_u32(os, static_cast<std::uint32_t>(g.n_nodes));
    detail::put_u32(os, static_cast<std::uint32_t>(g.feature_dim()));
    detail::put_u32(os, static_cast<std::uint32_t>(g.n_slots));
    detail::put_tensor(os, g.adjacency);
    detail::put_tensor(os, g.features);
    if (!os) throw std::runtime_error("save_cache: write failed for " + path);
}

inline DynamicGraph load_cache(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::invalid_argument("load_cache: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::string(magic, 4) != "DGC1")
        throw std::invalid_argument("load_cache: bad magic in " + path);
    DynamicGraph g;
    g.n_nodes = static_cast<int>(detail::get_u32(is));
    const int f_dim = static_cast<int>(detail::get_u32(is));
    g.n_slots = static_cast<int>(detail::get_u32(is));
    require(g.n_nodes > 0 && g.n_slots > 0 && f_dim >= 0, "load_cache: bad dimensions");
    g.adjacency = Tensor3(g.n_nodes, g.n_nodes, g.n_slots);
    g.features = Tensor3(g.n_nodes, f_dim, g.n_slots);
    detail::get_tensor(is, g.adjacency);
    detail::get_tensor(is, g.features);
    if (!is) throw std::invalid_argument("load_cache: truncated file " + path);
    g.edges_per_slot.resize(g.n_slots);
    g.binarized = true;
    for (int t = 0; t < g.n_slots; ++t)
        for (int i = 0; i < g.n_nodes; ++i)
            for (int j = i + 1; j < g.n_nodes; ++j) {
                const double v = g.adjacency(i, j, t);
                if (v != 0.0) g.edges_per_slot[t].emplace_back(i, j);
                if (v != 0.0 && v != 1.0) g.binarized = false;
            }
    return g;
}

}  // namespace hgnn
