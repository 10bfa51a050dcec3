// Readout head, losses, weight-space optimizers with global-norm clipping,
// the training loop and the momentum/step-size sweep.

#pragma once

#include "momentum/bptt.hpp"
#include "momentum/cells.hpp"
#include "momentum/tasks.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace momentum {

struct ReadoutParams {
    Tensor2 V;  ///< [out x h]
    Tensor1 c;  ///< [out]

    template <typename F>
    void visit(F&& f) {
        f(std::string_view("V"), V.data());
        f(std::string_view("c"), c.data());
    }
    template <typename F>
    void visit(F&& f) const {
        f(std::string_view("V"), V.data());
        f(std::string_view("c"), c.data());
    }
    bool operator==(const ReadoutParams&) const = default;
};

/// Cell plus readout. Also used as the gradient container.
struct Model {
    CellParams cell;
    ReadoutParams readout;

    template <typename F>
    void visit(F&& f) {
        cell.visit(f);
        readout.visit(f);
    }
    template <typename F>
    void visit(F&& f) const {
        cell.visit(f);
        readout.visit(f);
    }
    bool operator==(const Model&) const = default;
};

Model zeros_like(const Model& like);

// ---------------------------------------------------------------------------
// Losses

struct LossGrad {
    double loss = 0.0;
    Tensor1 grad;
};

/// -log softmax(logits)[label] with max subtraction; gradient softmax - onehot.
LossGrad cross_entropy(const Tensor1& logits, std::size_t label);

struct ScalarLossGrad {
    double loss = 0.0;
    double grad = 0.0;
};

ScalarLossGrad mse(double pred, double target);

// ---------------------------------------------------------------------------
// Clipping

template <typename P>
double global_norm(const P& grads) {
    double acc = 0.0;
    grads.visit([&](std::string_view, std::span<const double> s) {
        for (double v : s) acc += v * v;
    });
    return std::sqrt(acc);
}

/// Scales every gradient by max_norm / ||grads|| when the joint norm exceeds max_norm.
template <typename P>
P clip_grad_norm(P grads, double max_norm) {
    if (!(max_norm > 0.0)) throw std::invalid_argument("clip_grad_norm: max_norm must be > 0");
    const double norm = global_norm(grads);
    if (norm > max_norm) {
        const double scale = max_norm / norm;
        grads.visit([&](std::string_view, std::span<double> s) {
            for (double& v : s) v *= scale;
        });
    }
    return grads;
}

// ---------------------------------------------------------------------------
// Optimizers

enum class OptimizerKind { Sgd, RmsProp, Adam };

std::string_view to_string(OptimizerKind kind);
std::optional<OptimizerKind> parse_optimizer_kind(std::string_view name);

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::RmsProp;
    double lr = 1e-3;
    double momentum = 0.0;  ///< heavy-ball coefficient for Sgd
    double alpha = 0.9;     ///< RMSProp smoothing
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    void validate() const;
};

/// Per-parameter buffers, laid out like the parameter spans they serve.
struct OptimizerState {
    std::vector<std::vector<double>> first;
    std::vector<std::vector<double>> second;
    std::size_t t = 0;
};

/// One update. Sgd: p = mu p + lr g, theta -= p. RMSProp: m = a m + (1-a) g^2,
/// theta -= lr g / (sqrt(m) + eps). Adam: bias-corrected moments.
void optimizer_step(const OptimizerConfig& config, OptimizerState& state,
                    std::span<const std::span<double>> params,
                    std::span<const std::span<const double>> grads);

void optimizer_step(const OptimizerConfig& config, OptimizerState& state, Model& params,
                    const Model& grads);

// ---------------------------------------------------------------------------
// Tasks and configuration

struct TaskConfig {
    TaskKind kind = TaskKind::Synthetic;
    CopyingSpec copying;
    AddingSpec adding;
    SyntheticSpec synthetic;
    std::filesystem::path mnist_images;
    std::filesystem::path mnist_labels;
    std::filesystem::path mnist_test_images;
    std::filesystem::path mnist_test_labels;
    std::size_t eval_batch = 256;

    std::size_t input_dim() const;
    std::size_t output_dim() const;
};

struct TrainConfig {
    CellSpec cell;
    TaskConfig task;
    OptimizerConfig optim;
    std::optional<double> clip_norm = 1.0;
    std::size_t batch_size = 32;
    std::size_t iterations = 100;
    std::uint64_t seed = 0;
    std::size_t eval_every = 100;  ///< 0 disables periodic evaluation
    std::optional<std::size_t> snapshot_every;
    bool wall_clock = false;  ///< when false wall_ms is written as 0

    void validate() const;
};

/// Cell parameters from `init_params` plus a readout drawn from
/// U(-1/sqrt(h), 1/sqrt(h)) with zero bias.
Model init_model(const TrainConfig& config);

// ---------------------------------------------------------------------------
// Forward/backward on a batch

struct BatchEval {
    double loss = 0.0;
    double metric = 0.0;  ///< accuracy for classification and copying, MSE for adding
    Model grads;          ///< empty unless requested
    std::optional<GradFlowRecord> flow;
};

/// Mean loss over the batch (and over every step for copying). Copying
/// accuracy counts only the K output slots.
BatchEval evaluate_batch(const CellSpec& spec, const Model& model, const SequenceBatch& batch,
                         bool want_grads, bool record_flow = false);

/// Training and held-out batch source for a task.
class TaskSampler {
public:
    explicit TaskSampler(const TrainConfig& config);

    SequenceBatch next_train();
    const SequenceBatch& eval_batch() const { return eval_; }

private:
    SequenceBatch draw(Rng& rng, std::size_t batch, bool test_split);

    TaskConfig task_;
    std::size_t batch_size_;
    Rng train_rng_;
    std::optional<MnistDataset> train_data_;
    std::optional<MnistDataset> test_data_;
    Permutation permutation_;
    SequenceBatch eval_;
};

// ---------------------------------------------------------------------------
// Training loop

struct MetricRow {
    std::size_t iteration = 0;  ///< updates applied before the measurement
    std::string split;          ///< "train" or "eval"
    double loss = 0.0;
    double metric = 0.0;
    std::int64_t wall_ms = 0;
};

struct MetricLog {
    std::vector<MetricRow> rows;
};

void write_metrics_csv(std::ostream& out, const MetricLog& log);

struct ModelSnapshot {
    std::size_t iteration = 0;
    Model model;
};

struct TrainResult {
    MetricLog log;
    Model model;
    std::vector<ModelSnapshot> snapshots;
    std::size_t iterations_run = 0;
    std::optional<BatchEval> final_eval;
};

/// Thrown when a training loss turns non-finite.
struct DivergenceError : NumericError {
    DivergenceError(std::size_t iteration, const std::string& what)
        : NumericError(what), iteration(iteration) {}
    std::size_t iteration;
};

struct TrainHooks {
    /// Called after each logged train loss; return true to stop early.
    std::function<bool(std::size_t iteration, double train_loss)> on_iteration;
};

TrainResult train(const TrainConfig& config, const TrainHooks& hooks = {});

/// Gradient-flow records of the snapshots on the task's held-out batch.
std::vector<GradFlowRecord> gradient_flow(const TrainConfig& config,
                                          const std::vector<ModelSnapshot>& snapshots);

void write_gradflow_csv(std::ostream& out, const std::vector<GradFlowRecord>& records);

// ---------------------------------------------------------------------------
// Momentum / step-size sweep

struct SweepRow {
    double mu = 0.0;
    double s = 0.0;
    double final_train_loss = 0.0;
    double final_eval_metric = 0.0;
};

/// One train() per (mu, s) with the base seed.
std::vector<SweepRow> mu_s_sweep(const TrainConfig& base, const std::vector<double>& mu_grid,
                                 const std::vector<double>& s_grid);

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);

// ---------------------------------------------------------------------------
// Snapshots

/// Every tensor of the model as consecutive MOMO records (vectors as 1 x n).
void write_model(std::ostream& out, const Model& model);
Model read_model(std::istream& in, const Model& shape);

}  // namespace momentum
