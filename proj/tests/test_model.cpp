#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "hgnn/model.hpp"
#include "support/synthetic.hpp"

using namespace hgnn;

namespace {

DynamicGraph single_node_graph(double x0) {
    DynamicGraph g;
    g.n_nodes = 1;
    g.n_slots = 1;
    g.adjacency = Tensor3(1, 1, 1);
    g.features = Tensor3(1, 1, 1);
    g.features(0, 0, 0) = x0;
    g.edges_per_slot.resize(1);
    return g;
}

ModelInit small_init(int f_in, int slots, std::uint64_t seed) {
    ModelInit init;
    init.f_in = f_in;
    init.f_embed = 3;
    init.layer_count = 2;
    init.slots = slots;
    init.k_hops = 2;
    init.h_s = 4;
    init.h_d = 6;
    init.seed = seed;
    return init;
}

void zero_model(ModelParams& m) {
    for (ParamView& v : learnable_views(m))
        for (std::size_t n = 0; n < v.n; ++n) v.p[n] = 0.0;
}

std::string file_bytes(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("zero weights collapse every embedding entry to one half") {
    const DynamicGraph g = synth::er_graph(5, 2, 0.4, 301, 3);
    ModelInit init = small_init(3, 2, 302);
    ModelParams m = make_model(init);
    zero_model(m);
    const ForwardTrace tr = forward(g, m, Transform::identity(2));
    for (double v : tr.embedding().data) REQUIRE(v == 0.5);
    // and the zero decoder maps any pair to probability one half
    REQUIRE(decode_link(tr.embedding(), 0, 1, 0, m) == 0.5);
}

TEST_CASE("single node scalar recursion matches the hand-derived values") {
    const DynamicGraph g = single_node_graph(0.3);
    ModelInit init = small_init(1, 1, 303);
    init.f_embed = 1;
    init.k_hops = 1;
    ModelParams m = make_model(init);
    zero_model(m);
    m.layers[0].w(0, 0, 0) = 0.2;
    m.layers[0].b(0, 0, 0) = 0.1;
    m.layers[1].w(0, 0, 0) = -0.4;
    m.layers[1].b(0, 0, 0) = 0.05;

    const ForwardTrace tr = forward(g, m, Transform::identity(1));
    // isolated node: the masked softmax self term gives C = 1 and the
    // normalized adjacency self weight is 1, so O = 0.5 + 0.5 = 1
    REQUIRE(tr.cna.o(0, 0, 0) == 1.0);
    const double h1 = tr.h[1](0, 0, 0);
    const double h2 = tr.h[2](0, 0, 0);
    REQUIRE(h1 == Catch::Approx(0.5399148845555657).margin(1e-12));
    REQUIRE(h2 == Catch::Approx(0.45860348914940546).margin(1e-12));
    // closed-form recursion restated inline
    const double want1 = sigmoid(0.3 * 0.2 + 0.1);
    const double want2 = sigmoid(want1 * -0.4 + 0.05);
    REQUIRE(h1 == Catch::Approx(want1).margin(1e-15));
    REQUIRE(h2 == Catch::Approx(want2).margin(1e-15));
}

TEST_CASE("layer shape chaining is validated") {
    const DynamicGraph g = synth::er_graph(4, 2, 0.5, 304, 3);
    ModelInit init = small_init(5, 2, 305);  // f_in 5 vs feature dim 3
    const ModelParams m = make_model(init);
    REQUIRE_THROWS_AS(forward(g, m, Transform::identity(2)), std::invalid_argument);
}

TEST_CASE("decoded probabilities are strictly inside the unit interval") {
    const DynamicGraph g = synth::er_graph(6, 2, 0.4, 306, 3);
    const ModelParams m = make_model(small_init(3, 2, 307));
    const ForwardTrace tr = forward(g, m, Transform::identity(2));
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) {
            const double p = decode_link(tr.embedding(), i, j, 1, m);
            REQUIRE(p > 0.0);
            REQUIRE(p < 1.0);
        }
}

TEST_CASE("decoding is ordered: (i,j) and (j,i) generally differ") {
    const DynamicGraph g = synth::er_graph(6, 2, 0.4, 308, 3);
    const ModelParams m = make_model(small_init(3, 2, 309));
    const ForwardTrace tr = forward(g, m, Transform::identity(2));
    REQUIRE(decode_link(tr.embedding(), 0, 1, 0, m) !=
            decode_link(tr.embedding(), 1, 0, 0, m));
}

TEST_CASE("uninformative predictions cost exactly ln 2") {
    ModelParams m = make_model(small_init(3, 1, 310));
    m.alpha = 0.0;
    const std::vector<Sample> samples{{0, 1, 0, 1}, {0, 2, 0, 0}};
    const std::vector<double> preds{0.5, 0.5};
    REQUIRE(loss(samples, preds, m) == Catch::Approx(std::log(2.0)).margin(1e-15));
}

TEST_CASE("cross entropy matches an inline restatement on mixed labels") {
    ModelParams m = make_model(small_init(3, 1, 311));
    m.alpha = 0.0;
    const std::vector<Sample> samples{{0, 1, 0, 1}, {0, 2, 0, 0}, {1, 2, 0, 1}};
    const std::vector<double> preds{0.9, 0.2, 0.6};
    const double want = -(std::log(0.9) + std::log(0.8) + std::log(0.6)) / 3.0;
    REQUIRE(loss(samples, preds, m) == Catch::Approx(want).margin(1e-15));
    REQUIRE_THROWS_AS(loss({}, {}, m), std::invalid_argument);
    REQUIRE_THROWS_AS(loss(samples, {0.5}, m), std::invalid_argument);
}

TEST_CASE("the L2 penalty is the plain sum of squared parameters") {
    ModelParams m = make_model(small_init(3, 1, 312));
    zero_model(m);
    auto views = learnable_views(m);
    views[0].p[0] = 2.0;
    views[1].p[0] = 3.0;
    views.back().p[0] = 4.0;
    REQUIRE(l2_norm_sq(m) == 29.0);
    m.alpha = 0.001;
    const std::vector<Sample> samples{{0, 1, 0, 1}};
    const std::vector<double> preds{0.5};
    REQUIRE(loss(samples, preds, m) ==
            Catch::Approx(std::log(2.0) + 0.001 * 29.0).margin(1e-15));
}

TEST_CASE("regularization contributes exactly 2 alpha omega to the gradient") {
    const DynamicGraph g = synth::er_graph(6, 3, 0.4, 313, 3);
    ModelParams m = make_model(small_init(3, 3, 314));
    const GraphContext ctx = make_context(g, m.cna.hops());
    const Transform tf = Transform::identity(3);
    const ForwardTrace tr = forward(ctx, m, tf);
    const std::vector<Sample> samples{{0, 1, 0, 1}, {2, 3, 1, 0}, {4, 5, 2, 1}};

    ModelParams m0 = m;
    m0.alpha = 0.0;
    ModelParams m1 = m;
    m1.alpha = 0.5;
    ModelParams g0 = backward(tr, samples, m0, ctx, tf);
    ModelParams g1 = backward(tr, samples, m1, ctx, tf);

    auto v = learnable_views(m);
    auto dv0 = learnable_views(g0);
    auto dv1 = learnable_views(g1);
    for (std::size_t group = 0; group < v.size(); ++group)
        for (std::size_t n = 0; n < v[group].n; ++n) {
            const double diff = dv1[group].p[n] - dv0[group].p[n];
            REQUIRE(diff == Catch::Approx(v[group].p[n]).margin(1e-12));
        }
}

TEST_CASE("backward rejects a stale trace after parameters change") {
    const DynamicGraph g = synth::er_graph(5, 2, 0.4, 315, 3);
    ModelParams m = make_model(small_init(3, 2, 316));
    const GraphContext ctx = make_context(g, m.cna.hops());
    const Transform tf = Transform::identity(2);
    const ForwardTrace tr = forward(ctx, m, tf);
    ++m.version;
    const std::vector<Sample> samples{{0, 1, 0, 1}};
    REQUIRE_THROWS_AS(backward(tr, samples, m, ctx, tf), std::runtime_error);
}

TEST_CASE("with r_c = 0 the embeddings ignore every cna network weight") {
    const DynamicGraph g = synth::er_graph(6, 2, 0.4, 317, 3);
    ModelInit init = small_init(3, 2, 318);
    init.r_c = 0.0;
    init.r_a = 1.0;
    ModelParams m = make_model(init);
    const Transform tf = Transform::identity(2);
    const ForwardTrace before = forward(g, m, tf);
    REQUIRE_FALSE(before.cna.active);

    for (auto& w : m.cna.g_edge.w1.a) w += 3.0;
    for (auto& w : m.cna.g_node.w2.a) w -= 2.0;
    ++m.version;
    const ForwardTrace after = forward(g, m, tf);
    REQUIRE(before.embedding().data == after.embedding().data);
}

TEST_CASE("forward is bitwise deterministic") {
    const DynamicGraph g = synth::er_graph(7, 3, 0.35, 319, 3);
    const ModelParams m = make_model(small_init(3, 3, 320));
    const Transform tf = Transform::dft(3);
    const ForwardTrace a = forward(g, m, tf);
    const ForwardTrace b = forward(g, m, tf);
    REQUIRE(a.embedding().data == b.embedding().data);
    REQUIRE(a.cna.o.data == b.cna.o.data);
}

TEST_CASE("permuting the nodes permutes the embedding rows identically") {
    const int n = 7;
    const DynamicGraph g = synth::er_graph(n, 2, 0.4, 321, 3);
    const ModelParams m = make_model(small_init(3, 2, 322));
    const Transform tf = Transform::identity(2);

    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    Rng prng(99);
    prng.shuffle(perm);

    DynamicGraph pg;
    pg.n_nodes = n;
    pg.n_slots = 2;
    pg.adjacency = Tensor3(n, n, 2);
    pg.features = Tensor3(n, 3, 2);
    pg.edges_per_slot.resize(2);
    for (int t = 0; t < 2; ++t)
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j)
                pg.adjacency(perm[i], perm[j], t) = g.adjacency(i, j, t);
            for (int f = 0; f < 3; ++f) pg.features(perm[i], f, t) = g.features(i, f, t);
        }
    for (int t = 0; t < 2; ++t)
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j)
                if (pg.adjacency(i, j, t) != 0.0) pg.edges_per_slot[t].emplace_back(i, j);

    const Tensor3 h = forward(g, m, tf).embedding();
    const Tensor3 ph = forward(pg, m, tf).embedding();
    for (int t = 0; t < 2; ++t)
        for (int i = 0; i < n; ++i)
            for (int f = 0; f < 3; ++f)
                REQUIRE(ph(perm[i], f, t) == Catch::Approx(h(i, f, t)).margin(1e-9));
}

TEST_CASE("checkpoints round-trip byte-exactly and reproduce predictions") {
    const DynamicGraph g = synth::er_graph(6, 2, 0.4, 323, 3);
    const ModelParams m = make_model(small_init(3, 2, 324));
    const auto dir = std::filesystem::temp_directory_path();
    const auto p1 = dir / "hgnn_ckpt_a.hcna";
    const auto p2 = dir / "hgnn_ckpt_b.hcna";

    save_checkpoint(p1.string(), m, "alpha=0.001 lr=0.01");
    std::string echo;
    const ModelParams back = load_checkpoint(p1.string(), &echo);
    REQUIRE(echo == "alpha=0.001 lr=0.01");
    save_checkpoint(p2.string(), back, echo);
    REQUIRE(file_bytes(p1) == file_bytes(p2));

    const Transform tf = Transform::identity(2);
    REQUIRE(forward(g, m, tf).embedding().data ==
            forward(g, back, tf).embedding().data);
    REQUIRE(back.use_bias == m.use_bias);
    REQUIRE(back.alpha == m.alpha);
    REQUIRE(back.cna.beta == m.cna.beta);
    std::filesystem::remove(p1);
    std::filesystem::remove(p2);
}

TEST_CASE("checkpoint loader rejects garbage") {
    const auto path = std::filesystem::temp_directory_path() / "hgnn_ckpt_bad.hcna";
    {
        std::ofstream os(path, std::ios::binary);
        os << "JUNKJUNKJUNK";
    }
    REQUIRE_THROWS_AS(load_checkpoint(path.string()), std::invalid_argument);
    std::filesystem::remove(path);
    REQUIRE_THROWS_AS(load_checkpoint(path.string()), std::invalid_argument);
}

TEST_CASE("learnable views walk every group exactly once") {
    ModelParams m = make_model(small_init(3, 2, 325));
    const auto views = learnable_views(m);
    std::size_t total = 0;
    for (const auto& v : views) total += v.n;
    // 2 layers (w+b), decoder (4), g_edge (4), g_node (4), beta
    REQUIRE(views.size() == 2 * 2 + 4 + 4 + 4 + 1);
    REQUIRE(views.back().name == "beta");
    REQUIRE(views.back().n == 2);

    std::size_t expect = 0;
    for (const auto& l : m.layers) expect += l.w.size() + l.b.size();
    auto mlp_size = [](const Mlp& q) {
        return q.w1.a.size() + q.b1.size() + q.w2.a.size() + q.b2.size();
    };
    expect += mlp_size(m.decoder) + mlp_size(m.cna.g_edge) + mlp_size(m.cna.g_node);
    expect += m.cna.beta.size();
    REQUIRE(total == expect);

    // frozen beta disappears from the learnable walk
    m.cna.beta_frozen = true;
    REQUIRE(learnable_views(m).size() == views.size() - 1);
}
