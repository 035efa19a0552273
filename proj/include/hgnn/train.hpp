#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "hgnn/graph.hpp"
#include "hgnn/model.hpp"
#include "hgnn/transform.hpp"

namespace hgnn {

// ---------------------------------------------------------------------------
// Configuration and reports
// ---------------------------------------------------------------------------

struct TrainConfig {
    double lr = 0.01;
    double alpha = 1e-3;
    int max_iters = 300;
    int patience = 10;
    std::uint64_t seed = 1;
    double threshold = 0.5;
    std::vector<double> lr_grid{0.1, 0.01, 0.02, 0.05, 0.001, 0.002};
    std::vector<double> alpha_grid{0.01, 0.005, 0.001, 0.0005};
};

struct Confusion {
    long long tp = 0;
    long long fp = 0;
    long long tn = 0;
    long long fn = 0;

    long long total() const { return tp + fp + tn + fn; }
};

struct EvalReport {
    double f1 = 0.0;
    double accuracy = 0.0;
    std::vector<double> loss_history;
    int best_iter = 0;  // 1-based; 0 = not trained
    Confusion confusion;
    int iters_run = 0;
    std::vector<double> val_f1_history;
    std::vector<double> val_acc_history;
};

struct MetricsRow {
    int iteration = 0;
    double train_loss = 0.0;
    double val_f1 = 0.0;
    double val_accuracy = 0.0;
};

// Thrown when the loss leaves the finite range; carries the iteration.
struct DivergenceError : std::runtime_error {
    int iteration;
    explicit DivergenceError(int it)
        : std::runtime_error("training diverged: non-finite loss at iteration " +
                             std::to_string(it)),
          iteration(it) {}
};

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamState {
    ModelParams m;
    ModelParams v;
    long long t = 0;
};

inline AdamState make_adam_state(const ModelParams& p) {
    AdamState st;
    st.m = zeros_like(p);
    st.v = zeros_like(p);
    return st;
}

// Standard Adam with bias correction (beta1 = 0.9, beta2 = 0.999, eps = 1e-8).
inline void adam_step(ModelParams& p, const ModelParams& g, AdamState& st, double lr) {
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    ++st.t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(st.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(st.t));
    auto pv = learnable_views(p);
    auto mv = learnable_views(st.m);
    auto vv = learnable_views(st.v);
    std::size_t idx = 0;
    visit_learnable(g, [&](const std::string&, const double* gp, std::size_t n) {
        double* pp = pv[idx].p;
        double* mp = mv[idx].p;
        double* vp = vv[idx].p;
        for (std::size_t i = 0; i < n; ++i) {
            mp[i] = beta1 * mp[i] + (1.0 - beta1) * gp[i];
            vp[i] = beta2 * vp[i] + (1.0 - beta2) * gp[i] * gp[i];
            const double mhat = mp[i] / bc1;
            const double vhat = vp[i] / bc2;
            pp[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
        ++idx;
    });
    ++p.version;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

// Predictions >= threshold count as positive; F1 = 0 when precision and
// recall are both zero.
inline EvalReport evaluate(const std::vector<double>& preds,
                           const std::vector<Sample>& samples, double threshold = 0.5) {
    require(!samples.empty(), "evaluate: empty sample set");
    require(preds.size() == samples.size(), "evaluate: sample/prediction count mismatch");
    EvalReport r;
    for (std::size_t n = 0; n < samples.size(); ++n) {
        const bool pos = preds[n] >= threshold;
        const bool truth = samples[n].label != 0;
        if (pos && truth)
            ++r.confusion.tp;
        else if (pos && !truth)
            ++r.confusion.fp;
        else if (!pos && truth)
            ++r.confusion.fn;
        else
            ++r.confusion.tn;
    }
    const auto& c = r.confusion;
    const double precision = c.tp + c.fp > 0 ? static_cast<double>(c.tp) / (c.tp + c.fp) : 0.0;
    const double recall = c.tp + c.fn > 0 ? static_cast<double>(c.tp) / (c.tp + c.fn) : 0.0;
    r.f1 = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    r.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
    return r;
}

inline EvalReport evaluate(const ForwardTrace& tr, const std::vector<Sample>& samples,
                           const ModelParams& p, double threshold = 0.5) {
    return evaluate(predict(tr, samples, p), samples, threshold);
}

inline EvalReport evaluate_on(const GraphContext& ctx, const ModelParams& p,
                              const Transform& tf, const std::vector<Sample>& samples,
                              double threshold = 0.5) {
    return evaluate(forward(ctx, p, tf), samples, p, threshold);
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TrainResult {
    ModelParams best_params;
    EvalReport report;
};

// Full-batch Adam over the train slots. Positives are every train-slot edge;
// negatives are resampled each iteration from an iteration-derived seed. The
// validation set is fixed up front; validation F1 (threshold 0.5) drives
// early stopping with the given patience, and the returned parameters are
// the snapshot from the best validation iteration, before that iteration's
// gradient step.
inline TrainResult train_loop(const GraphContext& ctx, const SplitPlan& plan,
                              ModelParams params, const TrainConfig& cfg,
                              const Transform& tf,
                              std::vector<MetricsRow>* metrics = nullptr) {
    require(!plan.train_slots.empty() && !plan.val_slots.empty(),
            "train_loop: empty train or validation slot set");
    require(cfg.lr > 0.0, "train_loop: lr must be positive");
    require(cfg.patience >= 1 && cfg.max_iters >= 1, "train_loop: bad stopping config");
    const DynamicGraph& g = *ctx.graph;
    params.alpha = cfg.alpha;

    const SampleSet val = make_samples(g, plan.val_slots, derive_seed(cfg.seed, "val-neg"));
    require(!val.entries.empty(), "train_loop: validation slots contain no edges");

    TrainResult res;
    res.best_params = params;
    AdamState adam = make_adam_state(params);
    double best_f1 = -std::numeric_limits<double>::infinity();
    int stall = 0;

    for (int it = 1; it <= cfg.max_iters; ++it) {
        const SampleSet train =
            make_samples(g, plan.train_slots, derive_seed(cfg.seed, "train-neg",
                                                          static_cast<std::uint64_t>(it)));
        require(!train.entries.empty(), "train_loop: train slots contain no edges");

        const ForwardTrace tr = forward(ctx, params, tf);
        const std::vector<double> preds = predict(tr, train.entries, params);
        const double train_loss = loss(train.entries, preds, params);
        if (!std::isfinite(train_loss)) throw DivergenceError(it);
        res.report.loss_history.push_back(train_loss);

        const EvalReport val_eval = evaluate(tr, val.entries, params, cfg.threshold);
        res.report.val_f1_history.push_back(val_eval.f1);
        res.report.val_acc_history.push_back(val_eval.accuracy);
        if (metrics) metrics->push_back({it, train_loss, val_eval.f1, val_eval.accuracy});
        res.report.iters_run = it;

        if (val_eval.f1 > best_f1) {
            best_f1 = val_eval.f1;
            res.best_params = params;
            res.report.best_iter = it;
            res.report.f1 = val_eval.f1;
            res.report.accuracy = val_eval.accuracy;
            res.report.confusion = val_eval.confusion;
            stall = 0;
        } else {
            ++stall;
        }
        if (stall >= cfg.patience || it == cfg.max_iters) break;

        const ModelParams grads = backward(tr, train.entries, params, ctx, tf);
        adam_step(params, grads, adam, cfg.lr);
    }
    return res;
}

// ---------------------------------------------------------------------------
// Gradient check
// ---------------------------------------------------------------------------

struct GradCheckGroup {
    std::string name;
    double max_rel_err = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckGroup> groups;
    double max_rel_err = 0.0;
    bool pass = false;
};

// Central finite differences per parameter against the analytic backward
// pass. Relative error uses max(|analytic|, |fd|, 1e-4) as denominator, so
// near-zero gradients are compared absolutely at 1e-8 resolution. tamper, if
// given, mutates the analytic gradients first (mutation-test hook).
inline GradCheckReport grad_check(const GraphContext& ctx, ModelParams& params,
                                  const Transform& tf, const std::vector<Sample>& samples,
                                  double h = 1e-5, double tol = 1e-4,
                                  const std::function<void(ModelParams&)>& tamper = nullptr) {
    require(h > 0.0, "grad_check: step must be positive");
    ModelParams analytic = backward(forward(ctx, params, tf), samples, params, ctx, tf);
    if (tamper) tamper(analytic);

    const auto eval_loss = [&]() {
        const ForwardTrace tr = forward(ctx, params, tf);
        return loss(samples, predict(tr, samples, params), params);
    };

    GradCheckReport rep;
    auto pv = learnable_views(params);
    auto gv = learnable_views(analytic);
    for (std::size_t grp = 0; grp < pv.size(); ++grp) {
        GradCheckGroup group;
        group.name = pv[grp].name;
        for (std::size_t i = 0; i < pv[grp].n; ++i) {
            double& theta = pv[grp].p[i];
            const double saved = theta;
            theta = saved + h;
            const double lp = eval_loss();
            theta = saved - h;
            const double lm = eval_loss();
            theta = saved;
            const double fd = (lp - lm) / (2.0 * h);
            const double an = gv[grp].p[i];
            const double denom = std::max({std::abs(an), std::abs(fd), 1e-4});
            group.max_rel_err = std::max(group.max_rel_err, std::abs(an - fd) / denom);
        }
        rep.max_rel_err = std::max(rep.max_rel_err, group.max_rel_err);
        rep.groups.push_back(std::move(group));
    }
    rep.pass = rep.max_rel_err < tol;
    return rep;
}

}  // namespace hgnn
