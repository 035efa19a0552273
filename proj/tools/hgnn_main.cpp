// Command-line front end: prepare | train | eval | scores | gradcheck.
// Exit codes: 0 success, 2 input error, 3 numerical failure.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hgnn/hgnn.hpp"

namespace fs = std::filesystem;
using namespace hgnn;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitNumerical = 3;

struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CliConfig {
    std::string dataset;
    std::string cache = "graph.dgc1";
    std::string checkpoint;
    std::string out_dir = "runs";
    int slots = 32;
    int node_cap = 0;
    int f_dim = 32;
    int layers = 2;
    int k_hops = 2;
    std::string transform = "dft";
    std::string feature_scheme = "degree";
    double lr = 0.01;
    double alpha = 1e-3;
    double r_c = 0.5;
    double r_a = 0.5;
    double r_train = 0.7;
    double r_val = 0.2;
    std::uint64_t seed = 1;
    int max_iters = 300;
    int patience = 10;
    double threshold = 0.5;
    bool no_binarize = false;
    bool strict_paper = false;
    bool no_cna = false;
    bool freeze_beta = false;
    bool sweep = false;
    int slot = 0;
    bool corrupt = false;
};

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

TransformKind transform_kind(const std::string& s) {
    if (s == "identity") return TransformKind::Identity;
    if (s == "dft") return TransformKind::UnnormalizedDft;
    throw InputError("unknown transform: " + s);
}

// Canonical key=value listing; doubles printed round-trip exact. This string
// is the checkpoint's config echo and the source of the run-directory hash.
std::string config_echo(const CliConfig& c) {
    std::ostringstream os;
    os << "alpha=" << fmt_double(c.alpha) << "\n"
       << "cache=" << c.cache << "\n"
       << "f_dim=" << c.f_dim << "\n"
       << "freeze_beta=" << (c.freeze_beta ? 1 : 0) << "\n"
       << "k_hops=" << c.k_hops << "\n"
       << "layers=" << c.layers << "\n"
       << "lr=" << fmt_double(c.lr) << "\n"
       << "max_iters=" << c.max_iters << "\n"
       << "no_cna=" << (c.no_cna ? 1 : 0) << "\n"
       << "patience=" << c.patience << "\n"
       << "r_a=" << fmt_double(c.r_a) << "\n"
       << "r_c=" << fmt_double(c.r_c) << "\n"
       << "r_train=" << fmt_double(c.r_train) << "\n"
       << "r_val=" << fmt_double(c.r_val) << "\n"
       << "seed=" << c.seed << "\n"
       << "strict_paper=" << (c.strict_paper ? 1 : 0) << "\n"
       << "threshold=" << fmt_double(c.threshold) << "\n"
       << "transform=" << c.transform << "\n";
    return os.str();
}

std::map<std::string, std::string> parse_echo(const std::string& echo) {
    std::map<std::string, std::string> kv;
    std::istringstream is(echo);
    std::string line;
    while (std::getline(is, line)) {
        const auto eq = line.find('=');
        if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

std::string hash8(const std::string& s) {
    const std::uint64_t h = derive_seed(0, s);
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%08llx",
                  static_cast<unsigned long long>(h & 0xffffffffull));
    return buf;
}

void require_file(const std::string& path, const char* what) {
    if (path.empty() || !fs::exists(path))
        throw InputError(std::string(what) + " not found: " + path);
}

DynamicGraph load_graph(const std::string& path) {
    require_file(path, "cache");
    return load_cache(path);
}

// ---------------------------------------------------------------------------
// prepare
// ---------------------------------------------------------------------------

int cmd_prepare(const CliConfig& c) {
    require_file(c.dataset, "dataset");
    std::ifstream in(c.dataset);
    if (!in) throw InputError("cannot open dataset: " + c.dataset);
    const ParseResult parsed = parse_edge_list(in);
    if (parsed.edges.empty()) throw InputError("no edges parsed from " + c.dataset);

    DynamicGraph g = build_snapshots(parsed.edges, c.slots, !c.no_binarize, c.node_cap);
    g.features = init_features(g, c.f_dim, feature_scheme_from_string(c.feature_scheme),
                               c.seed);
    save_cache(c.cache, g);

    std::cout << "parsed edges: " << parsed.edges.size()
              << " (self-loops dropped: " << parsed.dropped_self_loops
              << ", malformed: " << parsed.malformed_lines << ")\n";
    std::cout << "nodes: " << g.n_nodes << "  slots: " << g.n_slots
              << "  features: " << g.feature_dim() << "\n";
    std::cout << "edges per slot:";
    for (const auto& e : g.edges_per_slot) std::cout << ' ' << e.size();
    std::cout << "\ncache written: " << c.cache << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

ModelParams build_model(const CliConfig& c, int f_in, int slots) {
    ModelInit mi;
    mi.f_in = f_in;
    mi.f_embed = c.f_dim;
    mi.layer_count = c.layers;
    mi.slots = slots;
    mi.k_hops = c.k_hops;
    mi.alpha = c.alpha;
    mi.r_c = c.no_cna ? 0.0 : c.r_c;
    mi.r_a = c.r_a;
    mi.use_bias = !c.strict_paper;
    mi.beta_frozen = c.freeze_beta;
    mi.seed = c.seed;
    return make_model(mi);
}

struct RunOutput {
    fs::path dir;
    EvalReport train_report;
    EvalReport test_report;
};

RunOutput run_training(const CliConfig& c, const DynamicGraph& g) {
    const std::string echo = config_echo(c);
    const fs::path run_dir = fs::path(c.out_dir) / (hash8(echo) + "-s" + std::to_string(c.seed));
    fs::create_directories(run_dir);

    const Transform tf = Transform::make(transform_kind(c.transform), g.n_slots);
    ModelParams params = build_model(c, g.feature_dim(), g.n_slots);
    const GraphContext ctx = make_context(g, params.cna.hops());
    const SplitPlan plan = split_temporal(g, c.r_train, c.r_val);

    TrainConfig tc;
    tc.lr = c.lr;
    tc.alpha = c.alpha;
    tc.max_iters = c.max_iters;
    tc.patience = c.patience;
    tc.seed = c.seed;
    tc.threshold = c.threshold;

    std::vector<MetricsRow> metrics;
    TrainResult res = train_loop(ctx, plan, std::move(params), tc, tf, &metrics);

    const SampleSet test = make_samples(g, plan.test_slots, derive_seed(c.seed, "test-neg"));
    if (test.entries.empty()) throw InputError("test slots contain no edges");
    const EvalReport test_rep =
        evaluate_on(ctx, res.best_params, tf, test.entries, c.threshold);

    std::ofstream mf(run_dir / "metrics.tsv", std::ios::binary);
    for (const auto& row : metrics)
        mf << row.iteration << '\t' << fmt_double(row.train_loss) << '\t'
           << fmt_double(row.val_f1) << '\t' << fmt_double(row.val_accuracy) << '\n';
    mf.close();

    save_checkpoint((run_dir / "model.hcna").string(), res.best_params, echo);

    std::ofstream rf(run_dir / "report.txt", std::ios::binary);
    rf << "iters_run=" << res.report.iters_run << '\n'
       << "best_iter=" << res.report.best_iter << '\n'
       << "val_f1=" << fmt_double(res.report.f1) << '\n'
       << "val_accuracy=" << fmt_double(res.report.accuracy) << '\n'
       << "test_f1=" << fmt_double(test_rep.f1) << '\n'
       << "test_accuracy=" << fmt_double(test_rep.accuracy) << '\n'
       << "test_tp=" << test_rep.confusion.tp << " test_fp=" << test_rep.confusion.fp
       << " test_tn=" << test_rep.confusion.tn << " test_fn=" << test_rep.confusion.fn
       << '\n';
    rf.close();

    return {run_dir, res.report, test_rep};
}

int cmd_train(CliConfig c) {
    const DynamicGraph g = load_graph(c.cache);
    if (!c.sweep) {
        const RunOutput out = run_training(c, g);
        std::cout << "run dir: " << out.dir.string() << "\n";
        std::cout << "iterations: " << out.train_report.iters_run
                  << "  best iter: " << out.train_report.best_iter << "\n";
        std::cout << "val F1 " << fmt_double(out.train_report.f1) << "  val acc "
                  << fmt_double(out.train_report.accuracy) << "\n";
        std::cout << "test F1 " << fmt_double(out.test_report.f1) << "  test acc "
                  << fmt_double(out.test_report.accuracy) << "\n";
        return kExitOk;
    }

    const TrainConfig grids;
    double best_f1 = -1.0;
    CliConfig best_cfg = c;
    fs::path best_dir;
    for (const double lr : grids.lr_grid)
        for (const double alpha : grids.alpha_grid) {
            CliConfig cc = c;
            cc.lr = lr;
            cc.alpha = alpha;
            const RunOutput out = run_training(cc, g);
            std::cout << "lr=" << fmt_double(lr) << " alpha=" << fmt_double(alpha)
                      << " val_f1=" << fmt_double(out.train_report.f1)
                      << " test_f1=" << fmt_double(out.test_report.f1) << "  ("
                      << out.dir.string() << ")\n";
            if (out.train_report.f1 > best_f1) {
                best_f1 = out.train_report.f1;
                best_cfg = cc;
                best_dir = out.dir;
            }
        }
    std::cout << "best: lr=" << fmt_double(best_cfg.lr)
              << " alpha=" << fmt_double(best_cfg.alpha) << " val_f1=" << fmt_double(best_f1)
              << " dir=" << best_dir.string() << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

int cmd_eval(const CliConfig& c, const CLI::App* sub) {
    require_file(c.checkpoint, "checkpoint");
    std::string echo;
    const ModelParams params = load_checkpoint(c.checkpoint, &echo);
    const auto kv = parse_echo(echo);

    auto pick_str = [&](const char* flag, const char* key, const std::string& cur) {
        if (sub->count(flag) > 0) return cur;
        const auto it = kv.find(key);
        return it == kv.end() ? cur : it->second;
    };
    const std::string cache = pick_str("--cache", "cache", c.cache);
    const std::string transform = pick_str("--transform", "transform", c.transform);
    const double r_train = std::stod(pick_str("--r-train", "r_train", fmt_double(c.r_train)));
    const double r_val = std::stod(pick_str("--r-val", "r_val", fmt_double(c.r_val)));
    const double threshold =
        std::stod(pick_str("--threshold", "threshold", fmt_double(c.threshold)));
    const std::uint64_t seed = std::stoull(pick_str("--seed", "seed", std::to_string(c.seed)));

    const DynamicGraph g = load_graph(cache);
    const Transform tf = Transform::make(transform_kind(transform), g.n_slots);
    const GraphContext ctx = make_context(g, params.cna.hops());
    const SplitPlan plan = split_temporal(g, r_train, r_val);
    const SampleSet test = make_samples(g, plan.test_slots, derive_seed(seed, "test-neg"));
    if (test.entries.empty()) throw InputError("test slots contain no edges");

    const EvalReport rep = evaluate_on(ctx, params, tf, test.entries, threshold);
    std::cout << "test slots:";
    for (int t : plan.test_slots) std::cout << ' ' << t;
    std::cout << "\nsamples: " << test.entries.size() << "\n";
    std::cout << "F1 " << fmt_double(rep.f1) << "\nAccuracy " << fmt_double(rep.accuracy)
              << "\nconfusion tp=" << rep.confusion.tp << " fp=" << rep.confusion.fp
              << " tn=" << rep.confusion.tn << " fn=" << rep.confusion.fn << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// scores
// ---------------------------------------------------------------------------

void write_slice_csv(const fs::path& path, const Tensor3& x, int t) {
    std::ofstream os(path, std::ios::binary);
    os << "node";
    for (int j = 0; j < x.cols; ++j) os << ',' << j;
    os << '\n';
    for (int i = 0; i < x.rows; ++i) {
        os << i;
        for (int j = 0; j < x.cols; ++j) os << ',' << fmt_double(x(i, j, t));
        os << '\n';
    }
}

int cmd_scores(const CliConfig& c) {
    require_file(c.checkpoint, "checkpoint");
    std::string echo;
    const ModelParams params = load_checkpoint(c.checkpoint, &echo);
    const auto kv = parse_echo(echo);
    const std::string cache = !c.cache.empty() && fs::exists(c.cache)     ? c.cache
                              : kv.count("cache") ? kv.at("cache")
                                                  : c.cache;
    const DynamicGraph g = load_graph(cache);
    if (c.slot < 0 || c.slot >= g.n_slots)
        throw InputError("slot " + std::to_string(c.slot) + " out of range [0, " +
                         std::to_string(g.n_slots) + ")");
    const std::string tfname = kv.count("transform") ? kv.at("transform") : c.transform;
    const Transform tf = Transform::make(transform_kind(tfname), g.n_slots);
    const GraphContext ctx = make_context(g, params.cna.hops());
    const ForwardTrace tr = forward(ctx, params, tf, /*force_cna=*/true);

    fs::create_directories(c.out_dir);
    const std::string tag = "_t" + std::to_string(c.slot) + ".csv";
    const fs::path chat = fs::path(c.out_dir) / ("scores_chat" + tag);
    const fs::path cnorm = fs::path(c.out_dir) / ("scores_c" + tag);
    const fs::path fused = fs::path(c.out_dir) / ("scores_o" + tag);
    write_slice_csv(chat, tr.cna.c_hat, c.slot);
    write_slice_csv(cnorm, tr.cna.c, c.slot);
    write_slice_csv(fused, tr.cna.o, c.slot);
    std::cout << "wrote " << chat.string() << "\n";
    std::cout << "wrote " << cnorm.string() << "\n";
    std::cout << "wrote " << fused.string() << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

DynamicGraph toy_graph(std::uint64_t seed) {
    Rng rng(derive_seed(seed, "toy-graph"));
    DynamicGraph g;
    g.n_nodes = 6;
    g.n_slots = 3;
    g.adjacency = Tensor3(6, 6, 3);
    for (int t = 0; t < 3; ++t)
        for (int i = 0; i < 6; ++i)
            for (int j = i + 1; j < 6; ++j)
                if (rng.bernoulli(0.4)) {
                    g.adjacency(i, j, t) = 1.0;
                    g.adjacency(j, i, t) = 1.0;
                }
    g.edges_per_slot.resize(3);
    for (int t = 0; t < 3; ++t)
        for (int i = 0; i < 6; ++i)
            for (int j = i + 1; j < 6; ++j)
                if (g.adjacency(i, j, t) != 0.0) g.edges_per_slot[t].emplace_back(i, j);
    g.features = init_features(g, 4, FeatureScheme::Degree, derive_seed(seed, "toy-feat"));
    return g;
}

int cmd_gradcheck(const CliConfig& c) {
    const DynamicGraph g = toy_graph(c.seed);
    ModelInit mi;
    mi.f_in = 4;
    mi.f_embed = 4;
    mi.layer_count = 2;
    mi.slots = 3;
    mi.k_hops = c.k_hops;
    mi.use_bias = !c.strict_paper;
    mi.beta_frozen = c.freeze_beta;
    mi.seed = c.seed;

    std::vector<TransformKind> kinds;
    if (c.transform == "both")
        kinds = {TransformKind::Identity, TransformKind::UnnormalizedDft};
    else
        kinds = {transform_kind(c.transform)};

    bool all_pass = true;
    for (const TransformKind kind : kinds) {
        ModelParams params = make_model(mi);
        const GraphContext ctx = make_context(g, params.cna.hops());
        const Transform tf = Transform::make(kind, g.n_slots);
        const SampleSet samples =
            make_samples(g, {0, 1, 2}, derive_seed(c.seed, "gradcheck-samples"));
        const auto tamper = [](ModelParams& grads) {
            for (auto& v : grads.layers[0].w.data) v *= 2.0;
        };
        const GradCheckReport rep =
            grad_check(ctx, params, tf, samples.entries, 1e-5, 1e-4,
                       c.corrupt ? std::function<void(ModelParams&)>(tamper) : nullptr);
        std::cout << "transform " << to_string(kind) << ": max rel err "
                  << fmt_double(rep.max_rel_err) << (rep.pass ? "  PASS" : "  FAIL") << "\n";
        for (const auto& grp : rep.groups)
            if (!(grp.max_rel_err < 1e-4))
                std::cout << "  group " << grp.name << ": " << fmt_double(grp.max_rel_err)
                          << "\n";
        all_pass = all_pass && rep.pass;
    }
    return all_pass ? kExitOk : kExitNumerical;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"HGNN-CNA: high-order graph network with common-neighbor-aware "
                 "message passing for temporal link prediction"};
    app.require_subcommand(1);
    CliConfig c;

    auto add_model_opts = [&c](CLI::App* sub) {
        sub->add_option("--cache", c.cache, "snapshot cache file");
        sub->add_option("-F,--features", c.f_dim, "embedding width");
        sub->add_option("-L,--layers", c.layers, "layer count");
        sub->add_option("-K,--hops", c.k_hops, "hop count for the mix");
        sub->add_option("--transform", c.transform, "identity | dft")
            ->check(CLI::IsMember({"identity", "dft"}));
        sub->add_option("--lr", c.lr, "learning rate");
        sub->add_option("--alpha", c.alpha, "L2 coefficient");
        sub->add_option("--r-c", c.r_c, "correlation fusion weight");
        sub->add_option("--r-a", c.r_a, "adjacency fusion weight");
        sub->add_option("--r-train", c.r_train, "train slot fraction");
        sub->add_option("--r-val", c.r_val, "validation slot fraction");
        sub->add_option("--seed", c.seed, "master seed");
        sub->add_option("--max-iters", c.max_iters, "iteration cap");
        sub->add_option("--patience", c.patience, "early-stopping patience");
        sub->add_option("--threshold", c.threshold, "classification cutoff");
        sub->add_option("--out", c.out_dir, "output directory");
        sub->add_flag("--strict-paper", c.strict_paper, "disable bias terms");
        sub->add_flag("--no-cna", c.no_cna, "ablation: r_c = 0");
        sub->add_flag("--freeze-beta", c.freeze_beta, "keep hop weights fixed");
        sub->set_config("--config", "", "flat key=value config file");
    };

    CLI::App* prepare = app.add_subcommand("prepare", "build a snapshot cache from an edge list");
    prepare->add_option("dataset", c.dataset, "edge list: SRC DST [WEIGHT] TIME");
    prepare->add_option("--cache", c.cache, "output cache file");
    prepare->add_option("-T,--slots", c.slots, "time slot count");
    prepare->add_option("--node-cap", c.node_cap, "keep only the top-degree nodes (0 = all)");
    prepare->add_option("-F,--features", c.f_dim, "feature width");
    prepare->add_option("--feature-scheme", c.feature_scheme, "degree | random")
        ->check(CLI::IsMember({"degree", "random"}));
    prepare->add_option("--seed", c.seed, "feature noise seed");
    prepare->add_flag("--no-binarize", c.no_binarize, "keep accumulated edge weights");
    prepare->set_config("--config", "", "flat key=value config file");

    CLI::App* train = app.add_subcommand("train", "train and write checkpoint + metrics");
    add_model_opts(train);
    train->add_flag("--sweep", c.sweep, "sweep the lr/alpha grids");

    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test slots");
    eval->add_option("--checkpoint", c.checkpoint, "model checkpoint")->required();
    add_model_opts(eval);

    CLI::App* scores = app.add_subcommand("scores", "dump correlation score slices as CSV");
    scores->add_option("--checkpoint", c.checkpoint, "model checkpoint")->required();
    scores->add_option("--cache", c.cache, "snapshot cache file");
    scores->add_option("-t,--slot", c.slot, "time slot to dump");
    scores->add_option("--out", c.out_dir, "output directory");
    scores->add_option("--transform", c.transform, "identity | dft");

    CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient check");
    gradcheck->add_option("--transform", c.transform, "identity | dft | both")
        ->check(CLI::IsMember({"identity", "dft", "both"}));
    gradcheck->add_option("--seed", c.seed, "toy instance seed");
    gradcheck->add_option("-K,--hops", c.k_hops, "hop count");
    gradcheck->add_flag("--strict-paper", c.strict_paper, "disable bias terms");
    gradcheck->add_flag("--freeze-beta", c.freeze_beta, "keep hop weights fixed");
    gradcheck->add_flag("--corrupt", c.corrupt, "tamper with gradients (must fail)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitInput;
    }

    try {
        if (prepare->parsed()) return cmd_prepare(c);
        if (train->parsed()) return cmd_train(c);
        if (eval->parsed()) return cmd_eval(c, eval);
        if (scores->parsed()) return cmd_scores(c);
        if (gradcheck->parsed()) {
            if (gradcheck->count("--transform") == 0) c.transform = "both";
            return cmd_gradcheck(c);
        }
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumerical;
    }
    return kExitInput;
}
