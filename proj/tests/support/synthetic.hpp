#pragma once

// Synthetic graph builders shared by the unit and acceptance suites.

#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "hgnn/hgnn.hpp"

namespace synth {

using namespace hgnn;

// Fills edges_per_slot and features for a hand-built adjacency tensor.
inline DynamicGraph finish(Tensor3 a, int f_dim, FeatureScheme scheme,
                           std::uint64_t seed) {
    DynamicGraph g;
    g.n_nodes = a.rows;
    g.n_slots = a.slots;
    g.adjacency = std::move(a);
    g.edges_per_slot.resize(g.n_slots);
    for (int t = 0; t < g.n_slots; ++t)
        for (int i = 0; i < g.n_nodes; ++i)
            for (int j = i + 1; j < g.n_nodes; ++j)
                if (g.adjacency(i, j, t) != 0.0) g.edges_per_slot[t].emplace_back(i, j);
    g.features = init_features(g, f_dim, scheme, seed);
    return g;
}

inline DynamicGraph er_graph(int n, int t_all, double p, std::uint64_t seed,
                             int f_dim = 4) {
    Rng rng(derive_seed(seed, "er"));
    Tensor3 a(n, n, t_all);
    for (int t = 0; t < t_all; ++t)
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j)
                if (rng.bernoulli(p)) {
                    a(i, j, t) = 1.0;
                    a(j, i, t) = 1.0;
                }
    return finish(std::move(a), f_dim, FeatureScheme::Degree,
                  derive_seed(seed, "er-feat"));
}

// Closure-rule generator: every slot-(t+1) link forms between a pair that
// had at least two common neighbors at slot t, thinned to a stable edge
// budget. Slot 0 seeds the closure with planted communities; the rule is
// community-preserving, so the structure persists through the last slot.
inline DynamicGraph planted_cn_graph(int n, int t_all, std::uint64_t seed,
                                     int f_dim = 16) {
    Rng rng(derive_seed(seed, "planted-cn"));
    Tensor3 a(n, n, t_all);
    auto link = [&a](int i, int j, int t) {
        a(i, j, t) = 1.0;
        a(j, i, t) = 1.0;
    };
    const int comm = n / 5 > 0 ? n / 5 : n;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (i / comm == j / comm && rng.bernoulli(0.3)) link(i, j, 0);

    const int target = 3 * n;
    for (int t = 0; t + 1 < t_all; ++t) {
        std::vector<std::pair<int, int>> cand;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) {
                int cn = 0;
                for (int k = 0; k < n && cn < 2; ++k)
                    if (a(i, k, t) != 0.0 && a(j, k, t) != 0.0) ++cn;
                if (cn >= 2) cand.emplace_back(i, j);
            }
        const double q = cand.size() > static_cast<std::size_t>(target)
                             ? static_cast<double>(target) / static_cast<double>(cand.size())
                             : 1.0;
        for (const auto& [i, j] : cand)
            if (rng.bernoulli(q)) link(i, j, t + 1);
    }
    return finish(std::move(a), f_dim, FeatureScheme::Degree,
                  derive_seed(seed, "planted-feat"));
}

// Community-structured temporal rating stream in "SRC,DST,RATING,TIME" form
// (the bitcoin-alpha layout). Node ids are raw (pre-remap); timestamps cover
// exactly `slots` equal windows of width 100.
inline void write_rating_stream(const std::string& path, int raw_nodes, int slots,
                                std::uint64_t seed) {
    Rng rng(derive_seed(seed, "stream"));
    std::ofstream os(path, std::ios::binary);
    const int comm = raw_nodes / 8 > 0 ? raw_nodes / 8 : raw_nodes;
    for (int t = 0; t < slots; ++t) {
        for (int i = 0; i < raw_nodes; ++i)
            for (int j = i + 1; j < raw_nodes; ++j) {
                const bool same = i / comm == j / comm;
                const double p = same ? 0.08 : 0.0015;
                if (!rng.bernoulli(p)) continue;
                const long long ts = static_cast<long long>(t) * 100 +
                                     static_cast<long long>(rng.uniform_int(100));
                const int rating = rng.bernoulli(0.9)
                                       ? 1 + static_cast<int>(rng.uniform_int(10))
                                       : -1 - static_cast<int>(rng.uniform_int(10));
                os << i << ',' << j << ',' << rating << ',' << ts << '\n';
            }
    }
}

// Gadget slice with pairs planted to share exactly 0, 1, 2 and 3 common
// neighbors; returns the pairs in that order.
inline std::pair<Tensor3, std::vector<std::pair<int, int>>> planted_pairs_slice() {
    // pair (0,1): no common neighbor; (2,3): via 4; (5,6): via 7,8;
    // (9,10): via 11,12,13
    Tensor3 a(14, 14, 1);
    auto link = [&a](int i, int j) {
        a(i, j, 0) = 1.0;
        a(j, i, 0) = 1.0;
    };
    link(2, 4);
    link(3, 4);
    link(5, 7);
    link(6, 7);
    link(5, 8);
    link(6, 8);
    link(9, 11);
    link(10, 11);
    link(9, 12);
    link(10, 12);
    link(9, 13);
    link(10, 13);
    std::vector<std::pair<int, int>> pairs{{0, 1}, {2, 3}, {5, 6}, {9, 10}};
    return {std::move(a), std::move(pairs)};
}

}  // namespace synth
