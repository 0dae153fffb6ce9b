#pragma once

#include <cstdint>
#include <cstdio>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "dsn/data.hpp"
#include "dsn/model.hpp"
#include "dsn/ops.hpp"
#include "dsn/optim.hpp"
#include "dsn/rng.hpp"
#include "dsn/topology.hpp"

namespace dsn {

struct TrainConfig {
    int epochs = 1000;
    int batch_size = 16;
    OptimConfig optim;        // total_epochs is overwritten with `epochs`
    UpdateSchedule schedule;  // likewise
    uint64_t seed = 42;
    int eval_every = 0;  // 0: never evaluate during training
    bool shuffle = true;
};

struct TopoEvent {
    int epoch = 0;
    int64_t changed = 0;  // mask bits flipped (pruned + grown, all layers)
};

struct RunRecord {
    std::vector<double> loss;       // per epoch, mean cross-entropy per instance
    std::vector<double> train_acc;  // per epoch
    std::vector<double> lr;
    std::vector<uint8_t> topo_update;  // 1 when a topology update ran that epoch
    std::vector<TopoEvent> updates;
    std::vector<std::pair<int, double>> eval_points;  // (epoch, test accuracy)
    int best_epoch = 0;  // 1-based epoch with minimum training loss
    double best_loss = std::numeric_limits<double>::infinity();
    double final_test_acc = -1.0;
};

inline std::string run_record_csv(const RunRecord& r) {
    std::ostringstream out;
    out << "epoch,loss,train_acc,lr,topo_update\n";
    char buf[96];
    for (size_t e = 0; e < r.loss.size(); ++e) {
        std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,%d\n", e + 1, r.loss[e],
                      r.train_acc[e], r.lr[e], (int)r.topo_update[e]);
        out << buf;
    }
    return out.str();
}

/// Fraction of argmax(logits) == label; argmax ties resolve to the lowest
/// class index. The model is not modified (eval-mode forward).
inline double evaluate(DsnModel& model, const TsDataset& ds) {
    check(ds.size() > 0, errc::data, "evaluate: empty dataset");
    check(ds.num_classes == model.cfg.num_classes, errc::shape,
          "evaluate: model outputs " + std::to_string(model.cfg.num_classes) +
              " classes but dataset has " + std::to_string(ds.num_classes));
    const int n = ds.length, m = ds.variates, c = model.cfg.num_classes;
    int correct = 0;
    const int chunk = 64;
    for (int base = 0; base < ds.size(); base += chunk) {
        const int B = std::min(chunk, ds.size() - base);
        Tensor xb({B, m, n});
        for (int b = 0; b < B; ++b)
            std::copy(ds.instances[(size_t)(base + b)].data.begin(),
                      ds.instances[(size_t)(base + b)].data.end(),
                      xb.ptr() + (int64_t)b * m * n);
        Tensor logits = model.forward(xb, false);
        for (int b = 0; b < B; ++b) {
            const float* row = logits.ptr() + (int64_t)b * c;
            int arg = 0;
            for (int j = 1; j < c; ++j)
                if (row[j] > row[arg]) arg = j;
            if (arg == ds.labels[(size_t)(base + b)]) ++correct;
        }
    }
    return (double)correct / (double)ds.size();
}

struct TrainResult {
    DsnModel best;  // snapshot at the best (minimum train loss) epoch
    RunRecord record;
};

/// Full training loop: seeded shuffling, batched Adam steps with cosine LR,
/// prune/regrow topology updates every delta_t epochs (after that epoch's
/// optimizer steps), best-snapshot tracking by minimum epoch train loss.
/// `model` is left in its final-epoch state.
inline TrainResult train(DsnModel& model, const TsDataset& data, TrainConfig cfg,
                         const TsDataset* eval_set = nullptr) {
    check(data.size() > 0, errc::data, "train: empty dataset");
    check(data.variates == model.cfg.input_variates, errc::shape,
          "train: dataset has " + std::to_string(data.variates) + " variates, model expects " +
              std::to_string(model.cfg.input_variates));
    check(data.num_classes <= model.cfg.num_classes, errc::shape,
          "train: dataset has " + std::to_string(data.num_classes) +
              " classes, model outputs " + std::to_string(model.cfg.num_classes));
    check(cfg.epochs >= 1, errc::config, "train: epochs must be >= 1");
    check(cfg.batch_size >= 1, errc::config, "train: batch_size must be >= 1");
    cfg.optim.total_epochs = cfg.epochs;
    cfg.schedule.total_epochs = cfg.epochs;
    validate(cfg.schedule);

    const int N = data.size(), m = data.variates, n = data.length;
    const int c = model.cfg.num_classes;
    const int batches_per_epoch = (N + cfg.batch_size - 1) / cfg.batch_size;
    if (cfg.schedule.unit == UpdateUnit::iteration)
        cfg.schedule.total_epochs = cfg.epochs * batches_per_epoch;
    Rng root(cfg.seed);
    const Rng shuffle_rng = root.split("shuffle");
    const Rng topo_rng = root.split("topology");

    std::vector<int> order((size_t)N);
    for (int i = 0; i < N; ++i) order[(size_t)i] = i;

    auto run_updates = [&](int t, int epoch, RunRecord& r) {
        int64_t changed = 0;
        int li = 0;
        for (ConvLayer* l : model.sparse_layers()) {
            const float* dg = cfg.schedule.grow == GrowMode::gradient && l->dense_grad.size()
                                  ? l->dense_grad.ptr()
                                  : nullptr;
            const TopoStepStats st =
                topology_update_step(l->weights, l->mask, t, cfg.schedule,
                                     l->sparse_cfg.sparsity,
                                     topo_rng.split((uint64_t)t).split((uint64_t)li), dg);
            if (st.changed > 0) l->mark_topology_changed();
            changed += st.changed;
            ++li;
        }
        r.updates.push_back({epoch, changed});
    };

    TrainResult result;
    RunRecord& rec = result.record;
    int64_t iter = 0;
    Tensor last_xb;  // retained for the epoch-level gradient-growth pass

    for (int t = 1; t <= cfg.epochs; ++t) {
        const double lr = cosine_lr(t - 1, cfg.optim);
        if (cfg.shuffle) {
            Rng sr = shuffle_rng.split((uint64_t)t);
            for (int i = N - 1; i > 0; --i) {
                const int j = (int)sr.next_below(i + 1);
                std::swap(order[(size_t)i], order[(size_t)j]);
            }
        }
        double loss_sum = 0.0;
        int correct = 0;
        bool epoch_had_update = false;
        for (int base = 0; base < N; base += cfg.batch_size) {
            const int B = std::min(cfg.batch_size, N - base);
            Tensor xb({B, m, n});
            for (int b = 0; b < B; ++b)
                std::copy(data.instances[(size_t)order[(size_t)(base + b)]].data.begin(),
                          data.instances[(size_t)order[(size_t)(base + b)]].data.end(),
                          xb.ptr() + (int64_t)b * m * n);
            Tensor logits = model.forward(xb, true);
            Tensor grad({B, c});
            for (int b = 0; b < B; ++b) {
                const int label = data.labels[(size_t)order[(size_t)(base + b)]];
                Tensor row;
                row.shape = {c};
                row.data.assign(logits.ptr() + (int64_t)b * c, logits.ptr() + (int64_t)(b + 1) * c);
                const float li = cross_entropy(row, label);
                if (!std::isfinite(li))
                    fail(errc::divergence, "training diverged: non-finite loss at epoch " +
                                               std::to_string(t) + ", batch " +
                                               std::to_string(base / cfg.batch_size));
                loss_sum += li;
                Tensor g = cross_entropy_backward(row, label);
                for (int j = 0; j < c; ++j) grad.at(b, j) = g.data[(size_t)j] / (float)B;
                int arg = 0;
                for (int j = 1; j < c; ++j)
                    if (row.data[(size_t)j] > row.data[(size_t)arg]) arg = j;
                if (arg == label) ++correct;
            }
            ++iter;
            // In iteration units the topology update replaces this
            // iteration's gradient step and consumes its gradients.
            const bool iter_update = cfg.schedule.dynamic &&
                                     cfg.schedule.unit == UpdateUnit::iteration &&
                                     iter % cfg.schedule.delta_t_epochs == 0;
            model.backward(grad, iter_update && cfg.schedule.grow == GrowMode::gradient);
            if (iter_update) {
                model.for_each_parameter(
                    [&](Parameter& p, const std::vector<int32_t>*) { p.zero_grad(); });
                run_updates((int)iter, t, rec);
                epoch_had_update = true;
            } else {
                model.for_each_parameter([&](Parameter& p, const std::vector<int32_t>* active) {
                    if (active)
                        adam_step_masked(p, lr, cfg.optim, *active);
                    else
                        adam_step(p, lr, cfg.optim);
                });
            }
            if (cfg.schedule.dynamic && cfg.schedule.unit == UpdateUnit::epoch &&
                cfg.schedule.grow == GrowMode::gradient &&
                t % cfg.schedule.delta_t_epochs == 0 && base + B >= N)
                last_xb = xb;
        }
        const double epoch_loss = loss_sum / (double)N;
        rec.loss.push_back(epoch_loss);
        rec.train_acc.push_back((double)correct / (double)N);
        rec.lr.push_back(lr);
        rec.topo_update.push_back(epoch_had_update ? 1 : 0);

        if (epoch_loss < rec.best_loss) {
            rec.best_loss = epoch_loss;
            rec.best_epoch = t;
            result.best = model;  // masks as active during this epoch
        }

        if (cfg.schedule.dynamic && cfg.schedule.unit == UpdateUnit::epoch &&
            t % cfg.schedule.delta_t_epochs == 0) {
            if (cfg.schedule.grow == GrowMode::gradient) {
                // One extra dense-gradient accumulation on the epoch's last
                // batch; the regular parameter grads it produces are dropped.
                Tensor logits = model.forward(last_xb, true);
                const int B = last_xb.dim(0);
                Tensor grad({B, c});
                for (int b = 0; b < B; ++b) {
                    Tensor row;
                    row.shape = {c};
                    row.data.assign(logits.ptr() + (int64_t)b * c,
                                    logits.ptr() + (int64_t)(b + 1) * c);
                    const int label =
                        data.labels[(size_t)order[(size_t)(N - B + b)]];
                    Tensor g = cross_entropy_backward(row, label);
                    for (int j = 0; j < c; ++j) grad.at(b, j) = g.data[(size_t)j] / (float)B;
                }
                model.backward(grad, true);
                model.for_each_parameter(
                    [&](Parameter& p, const std::vector<int32_t>*) { p.zero_grad(); });
            }
            run_updates(t, t, rec);
            rec.topo_update.back() = 1;
        }

        if (cfg.eval_every > 0 && eval_set && t % cfg.eval_every == 0)
            rec.eval_points.emplace_back(t, evaluate(model, *eval_set));
    }
    if (rec.best_epoch == 0) {
        rec.best_epoch = cfg.epochs;
        result.best = model;
    }
    return result;
}

}  // namespace dsn
