#include "momentum/training.hpp"

#include "format.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace momentum {

Model zeros_like(const Model& like) {
    Model out;
    out.cell = zeros_like(like.cell);
    out.readout.V = Tensor2(like.readout.V.rows(), like.readout.V.cols());
    out.readout.c = Tensor1(like.readout.c.len());
    return out;
}

LossGrad cross_entropy(const Tensor1& logits, std::size_t label) {
    if (label >= logits.len()) {
        throw std::out_of_range("cross_entropy: label " + std::to_string(label) + " out of range for " +
                                std::to_string(logits.len()) + " classes");
    }
    const auto values = logits.data();
    const double peak = *std::max_element(values.begin(), values.end());
    double total = 0.0;
    for (double v : values) total += std::exp(v - peak);
    const double log_total = std::log(total);
    LossGrad out;
    out.loss = -(logits[label] - peak - log_total);
    out.grad = Tensor1(logits.len());
    for (std::size_t i = 0; i < logits.len(); ++i) {
        out.grad[i] = std::exp(logits[i] - peak - log_total) - (i == label ? 1.0 : 0.0);
    }
    return out;
}

ScalarLossGrad mse(double pred, double target) {
    const double diff = pred - target;
    return {diff * diff, 2.0 * diff};
}

// ---------------------------------------------------------------------------

std::size_t TaskConfig::input_dim() const {
    switch (kind) {
        case TaskKind::Copying: return copying.vocab();
        case TaskKind::Adding: return 2;
        case TaskKind::Mnist:
        case TaskKind::Pmnist: return 1;
        case TaskKind::Synthetic: return synthetic.input_dim;
    }
    return 0;
}

std::size_t TaskConfig::output_dim() const {
    switch (kind) {
        case TaskKind::Copying: return copying.vocab();
        case TaskKind::Adding: return 1;
        case TaskKind::Mnist:
        case TaskKind::Pmnist: return 10;
        case TaskKind::Synthetic: return synthetic.classes;
    }
    return 0;
}

void TrainConfig::validate() const {
    cell.validate();
    optim.validate();
    if (cell.input_dim != task.input_dim()) {
        throw std::invalid_argument("cell.d = " + std::to_string(cell.input_dim) + " but task " +
                                    std::string(to_string(task.kind)) + " has input dimension " +
                                    std::to_string(task.input_dim()));
    }
    if (clip_norm && !(*clip_norm > 0.0)) throw std::invalid_argument("optim.clip must be > 0");
    if (batch_size < 1) throw std::invalid_argument("run.batch must be >= 1");
    if (task.eval_batch < 1) throw std::invalid_argument("task.eval_batch must be >= 1");
    if (snapshot_every && *snapshot_every < 1) throw std::invalid_argument("run.snapshot_every must be >= 1");
    switch (task.kind) {
        case TaskKind::Copying: task.copying.validate(); break;
        case TaskKind::Adding: task.adding.validate(); break;
        case TaskKind::Synthetic: task.synthetic.validate(); break;
        case TaskKind::Mnist:
        case TaskKind::Pmnist:
            if (task.mnist_images.empty() || task.mnist_labels.empty()) {
                throw std::invalid_argument("task.mnist_images and task.mnist_labels are required");
            }
            break;
    }
}

Model init_model(const TrainConfig& config) {
    Model model;
    Rng cell_rng(config.seed, streams::kInit);
    model.cell = init_params(config.cell, cell_rng);
    Rng head_rng(config.seed, streams::kReadoutInit);
    const std::size_t out = config.task.output_dim();
    const std::size_t h = config.cell.hidden_dim;
    const double bound = 1.0 / std::sqrt(static_cast<double>(h));
    model.readout.V = Tensor2(out, h);
    for (double& v : model.readout.V.data()) v = bound * (2.0 * head_rng.uniform() - 1.0);
    model.readout.c = Tensor1(out);
    return model;
}

// ---------------------------------------------------------------------------

namespace {

void add_row_sums(const Tensor2& t, Tensor1& acc) {
    for (std::size_t r = 0; r < t.rows(); ++r) {
        double s = 0.0;
        for (double v : t.row(r)) s += v;
        acc[r] += s;
    }
}

Tensor2 readout_logits(const ReadoutParams& head, const Tensor2& h) {
    Tensor2 logits(head.V.rows(), h.cols());
    gemm(head.V, Trans::No, h, Trans::No, 0.0, logits);
    for (std::size_t r = 0; r < logits.rows(); ++r)
        for (double& v : logits.row(r)) v += head.c[r];
    return logits;
}

std::size_t argmax_col(const Tensor2& t, std::size_t col) {
    std::size_t best = 0;
    for (std::size_t r = 1; r < t.rows(); ++r)
        if (t(r, col) > t(best, col)) best = r;
    return best;
}

// Mean cross-entropy of the columns against labels, scaled by `weight`.
// Fills dlogits with weight * (softmax - onehot). Returns (loss sum, correct).
std::pair<double, std::size_t> ce_columns(const Tensor2& logits, const std::vector<int>& labels,
                                          double weight, Tensor2& dlogits) {
    double loss = 0.0;
    std::size_t correct = 0;
    for (std::size_t b = 0; b < logits.cols(); ++b) {
        const auto label = static_cast<std::size_t>(labels[b]);
        const LossGrad lg = cross_entropy(logits.col(b), label);
        loss += lg.loss;
        if (argmax_col(logits, b) == label) ++correct;
        for (std::size_t r = 0; r < logits.rows(); ++r) dlogits(r, b) = weight * lg.grad[r];
    }
    return {loss, correct};
}

}  // namespace

BatchEval evaluate_batch(const CellSpec& spec, const Model& model, const SequenceBatch& batch,
                         bool want_grads, bool record_flow) {
    const std::size_t steps = batch.steps();
    const std::size_t nb = batch.batch();
    if (steps == 0 || nb == 0) throw std::invalid_argument("evaluate_batch: empty batch");
    const bool backprop = want_grads || record_flow;

    const Trajectory traj = unroll(spec, model.cell, batch.inputs, fresh_state(spec, nb));
    const ReadoutParams& head = model.readout;

    BatchEval res;
    Model grads;
    if (backprop) grads = zeros_like(model);
    std::vector<Tensor2> dl_dh(steps);

    auto accumulate_head = [&](const Tensor2& dlogits, const Tensor2& h, std::size_t step_index) {
        if (!backprop) return;
        gemm(dlogits, Trans::No, h, Trans::Yes, 1.0, grads.readout.V);
        add_row_sums(dlogits, grads.readout.c);
        Tensor2 dh(h.rows(), h.cols());
        gemm(head.V, Trans::Yes, dlogits, Trans::No, 0.0, dh);
        dl_dh[step_index] = std::move(dh);
    };

    if (!batch.step_labels.empty()) {
        // copying: every step carries a label, loss averaged over steps and batch
        if (batch.step_labels.size() != steps) throw ShapeError("evaluate_batch: step label count");
        const double weight = 1.0 / static_cast<double>(steps * nb);
        const int blank = static_cast<int>(head.V.rows()) - 1;
        double loss = 0.0;
        std::size_t correct = 0;
        std::size_t slots = 0;
        for (std::size_t t = 0; t < steps; ++t) {
            const Tensor2& h = traj.states[t + 1].h;
            const Tensor2 logits = readout_logits(head, h);
            Tensor2 dlogits(logits.rows(), logits.cols());
            loss += ce_columns(logits, batch.step_labels[t], weight, dlogits).first;
            for (std::size_t b = 0; b < nb; ++b) {
                if (batch.step_labels[t][b] == blank) continue;
                ++slots;
                if (argmax_col(logits, b) == static_cast<std::size_t>(batch.step_labels[t][b])) ++correct;
            }
            accumulate_head(dlogits, h, t);
        }
        res.loss = loss * weight;
        res.metric = slots == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(slots);
    } else if (!batch.labels.empty()) {
        const Tensor2& h = traj.final_state().h;
        const Tensor2 logits = readout_logits(head, h);
        Tensor2 dlogits(logits.rows(), logits.cols());
        const double weight = 1.0 / static_cast<double>(nb);
        const auto [loss, correct] = ce_columns(logits, batch.labels, weight, dlogits);
        res.loss = loss * weight;
        res.metric = static_cast<double>(correct) * weight;
        accumulate_head(dlogits, h, steps - 1);
    } else if (!batch.values.empty()) {
        const Tensor2& h = traj.final_state().h;
        const Tensor2 pred = readout_logits(head, h);
        if (pred.rows() != 1) throw ShapeError("evaluate_batch: regression head must have one output");
        Tensor2 dpred(1, nb);
        double loss = 0.0;
        for (std::size_t b = 0; b < nb; ++b) {
            const auto lg = mse(pred(0, b), batch.values[b]);
            loss += lg.loss;
            dpred(0, b) = lg.grad / static_cast<double>(nb);
        }
        res.loss = loss / static_cast<double>(nb);
        res.metric = res.loss;
        accumulate_head(dpred, h, steps - 1);
    } else {
        throw std::invalid_argument("evaluate_batch: batch has no targets");
    }

    if (backprop) {
        auto back = backward(traj, dl_dh, record_flow);
        grads.cell = std::move(back.grads);
        res.flow = std::move(back.flow);
        if (want_grads) res.grads = std::move(grads);
    }
    return res;
}

// ---------------------------------------------------------------------------

TaskSampler::TaskSampler(const TrainConfig& config)
    : task_(config.task), batch_size_(config.batch_size), train_rng_(config.seed, streams::kTrainData) {
    if (task_.kind == TaskKind::Mnist || task_.kind == TaskKind::Pmnist) {
        train_data_ = load_mnist_idx(task_.mnist_images, task_.mnist_labels);
        if (!task_.mnist_test_images.empty()) {
            test_data_ = load_mnist_idx(task_.mnist_test_images, task_.mnist_test_labels);
        }
        if (task_.kind == TaskKind::Pmnist) {
            Rng perm_rng(config.seed, streams::kPermutation);
            permutation_ = random_permutation(kMnistPixels, perm_rng);
        }
    }
    Rng eval_rng(config.seed, streams::kEvalData);
    eval_ = draw(eval_rng, task_.eval_batch, true);
}

SequenceBatch TaskSampler::next_train() { return draw(train_rng_, batch_size_, false); }

SequenceBatch TaskSampler::draw(Rng& rng, std::size_t batch, bool test_split) {
    switch (task_.kind) {
        case TaskKind::Copying: {
            CopyingSpec spec = task_.copying;
            spec.batch = batch;
            return gen_copying(spec, rng);
        }
        case TaskKind::Adding: {
            AddingSpec spec = task_.adding;
            spec.batch = batch;
            return gen_adding(spec, rng);
        }
        case TaskKind::Synthetic: {
            SyntheticSpec spec = task_.synthetic;
            spec.batch = batch;
            return gen_synthetic(spec, rng);
        }
        case TaskKind::Mnist:
        case TaskKind::Pmnist: {
            const MnistDataset& data = (test_split && test_data_) ? *test_data_ : *train_data_;
            if (data.size() == 0) throw MnistError("empty MNIST dataset");
            std::vector<std::size_t> idx(batch);
            if (test_split && test_data_) {
                for (std::size_t i = 0; i < batch; ++i) idx[i] = i % data.size();
            } else {
                for (auto& i : idx) i = rng.uniform_int(data.size());
            }
            return mnist_batch(data, idx, task_.kind == TaskKind::Pmnist ? &permutation_ : nullptr);
        }
    }
    throw std::logic_error("unreachable task kind");
}

// ---------------------------------------------------------------------------

void write_metrics_csv(std::ostream& out, const MetricLog& log) {
    out << "iteration,split,loss,metric,wall_ms\n";
    for (const auto& r : log.rows) {
        out << r.iteration << ',' << r.split << ',' << detail::real9(r.loss) << ','
            << detail::real9(r.metric) << ',' << r.wall_ms << '\n';
    }
}

TrainResult train(const TrainConfig& config, const TrainHooks& hooks) {
    config.validate();
    const auto start = std::chrono::steady_clock::now();
    auto elapsed_ms = [&]() -> std::int64_t {
        if (!config.wall_clock) return 0;
        return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() -
                                                                     start)
            .count();
    };

    TrainResult res;
    res.model = init_model(config);
    if (config.iterations == 0) return res;

    TaskSampler sampler(config);
    OptimizerState opt_state;
    std::size_t last_eval = 0;

    auto run_eval = [&](std::size_t iteration) {
        BatchEval ev = evaluate_batch(config.cell, res.model, sampler.eval_batch(), false);
        res.log.rows.push_back({iteration, "eval", ev.loss, ev.metric, elapsed_ms()});
        last_eval = iteration;
        res.final_eval = std::move(ev);
    };

    if (config.snapshot_every) res.snapshots.push_back({0, res.model});

    for (std::size_t i = 0; i < config.iterations; ++i) {
        const SequenceBatch batch = sampler.next_train();
        BatchEval ev;
        try {
            ev = evaluate_batch(config.cell, res.model, batch, true);
        } catch (const NumericError& e) {
            throw DivergenceError(i, "iteration " + std::to_string(i) + ": " + e.what());
        }
        if (!std::isfinite(ev.loss)) {
            throw DivergenceError(i, "iteration " + std::to_string(i) + ": non-finite training loss");
        }
        res.log.rows.push_back({i, "train", ev.loss, ev.metric, elapsed_ms()});

        Model grads = config.clip_norm ? clip_grad_norm(std::move(ev.grads), *config.clip_norm)
                                       : std::move(ev.grads);
        optimizer_step(config.optim, opt_state, res.model, grads);
        res.iterations_run = i + 1;

        if (config.eval_every > 0 && res.iterations_run % config.eval_every == 0) {
            run_eval(res.iterations_run);
        }
        if (config.snapshot_every && res.iterations_run % *config.snapshot_every == 0) {
            res.snapshots.push_back({res.iterations_run, res.model});
        }
        if (hooks.on_iteration && hooks.on_iteration(i, ev.loss)) break;
    }
    if (last_eval != res.iterations_run) run_eval(res.iterations_run);
    return res;
}

std::vector<GradFlowRecord> gradient_flow(const TrainConfig& config,
                                          const std::vector<ModelSnapshot>& snapshots) {
    TaskSampler sampler(config);
    std::vector<GradFlowRecord> out;
    out.reserve(snapshots.size());
    for (const auto& snap : snapshots) {
        BatchEval ev = evaluate_batch(config.cell, snap.model, sampler.eval_batch(), false, true);
        ev.flow->iteration = snap.iteration;
        out.push_back(std::move(*ev.flow));
    }
    return out;
}

void write_gradflow_csv(std::ostream& out, const std::vector<GradFlowRecord>& records) {
    out << "iteration,t,grad_norm\n";
    for (const auto& rec : records) {
        for (std::size_t t = 0; t < rec.norms.size(); ++t) {
            out << rec.iteration << ',' << (t + 1) << ',' << detail::real9(rec.norms[t]) << '\n';
        }
    }
}

// ---------------------------------------------------------------------------

std::vector<SweepRow> mu_s_sweep(const TrainConfig& base, const std::vector<double>& mu_grid,
                                 const std::vector<double>& s_grid) {
    if (mu_grid.empty() || s_grid.empty()) throw std::invalid_argument("mu_s_sweep: empty grid");
    std::vector<SweepRow> rows;
    rows.reserve(mu_grid.size() * s_grid.size());
    for (double mu : mu_grid) {
        for (double s : s_grid) {
            TrainConfig cfg = base;
            cfg.cell.mu = mu;
            cfg.cell.s = s;
            const TrainResult res = train(cfg);
            SweepRow row{mu, s, 0.0, 0.0};
            for (auto it = res.log.rows.rbegin(); it != res.log.rows.rend(); ++it) {
                if (it->split == "train") {
                    row.final_train_loss = it->loss;
                    break;
                }
            }
            if (res.final_eval) row.final_eval_metric = res.final_eval->metric;
            rows.push_back(row);
        }
    }
    return rows;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
    out << "mu,s,final_train_loss,final_eval_metric\n";
    for (const auto& r : rows) {
        out << detail::real9(r.mu) << ',' << detail::real9(r.s) << ',' << detail::real9(r.final_train_loss)
            << ',' << detail::real9(r.final_eval_metric) << '\n';
    }
}

// ---------------------------------------------------------------------------

void write_model(std::ostream& out, const Model& model) {
    auto put = [&](const Tensor2& t) { write_tensor(out, t); };
    put(model.cell.U);
    put(model.cell.W);
    put(Tensor2(1, model.cell.b.len(), model.cell.b.values()));
    put(Tensor2(1, model.cell.bh.len(), model.cell.bh.values()));
    put(model.readout.V);
    put(Tensor2(1, model.readout.c.len(), model.readout.c.values()));
}

Model read_model(std::istream& in, const Model& shape) {
    auto take = [&](const Tensor2& like) {
        Tensor2 t = read_tensor(in);
        if (t.rows() != like.rows() || t.cols() != like.cols()) {
            throw ShapeError("read_model: tensor shape does not match the model");
        }
        return t;
    };
    auto take_vec = [&](const Tensor1& like) {
        Tensor2 t = read_tensor(in);
        if (t.size() != like.len()) throw ShapeError("read_model: vector length does not match the model");
        return Tensor1(std::vector<double>(t.data().begin(), t.data().end()));
    };
    Model m;
    m.cell.U = take(shape.cell.U);
    m.cell.W = take(shape.cell.W);
    m.cell.b = take_vec(shape.cell.b);
    m.cell.bh = take_vec(shape.cell.bh);
    m.readout.V = take(shape.readout.V);
    m.readout.c = take_vec(shape.readout.c);
    return m;
}

}  // namespace momentum
