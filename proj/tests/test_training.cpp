#include "momentum/training.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace momentum;

namespace {

TrainConfig tiny_config(TaskKind task, CellKind kind) {
    TrainConfig c;
    c.cell.kind = kind;
    c.cell.hidden_dim = 3;
    c.cell.mu = 0.6;
    c.cell.s = 0.9;
    c.task.kind = task;
    c.task.copying = CopyingSpec{2, 2, 1, 1};
    c.task.adding = AddingSpec{6, 1};
    c.task.synthetic = SyntheticSpec{5, 2, 3, 1};
    c.task.eval_batch = 4;
    c.cell.input_dim = c.task.input_dim();
    c.batch_size = 3;
    c.iterations = 5;
    c.eval_every = 2;
    c.seed = 17;
    return c;
}

// Perturb every model scalar and compare the batch loss slope with the
// analytic gradient.
void check_model_grads(const TrainConfig& c, std::uint64_t seed) {
    Model model = init_model(c);
    Rng rng(seed);
    model.visit([&](std::string_view, std::span<double> s) {
        for (double& v : s) v += 0.3 * rng.normal();
    });
    TaskSampler sampler(c);
    const SequenceBatch batch = sampler.next_train();
    const BatchEval ev = evaluate_batch(c.cell, model, batch, true);

    std::vector<std::span<double>> params;
    std::vector<std::span<const double>> grads;
    model.visit([&](std::string_view, std::span<double> s) { params.push_back(s); });
    ev.grads.visit([&](std::string_view, std::span<const double> s) { grads.push_back(s); });
    REQUIRE(params.size() == grads.size());
    const double eps = 1e-6;
    for (std::size_t p = 0; p < params.size(); ++p) {
        for (std::size_t i = 0; i < params[p].size(); ++i) {
            const double saved = params[p][i];
            params[p][i] = saved + eps;
            const double up = evaluate_batch(c.cell, model, batch, false).loss;
            params[p][i] = saved - eps;
            const double down = evaluate_batch(c.cell, model, batch, false).loss;
            params[p][i] = saved;
            const double numeric = (up - down) / (2 * eps);
            const double a = grads[p][i];
            CHECK((std::abs(a - numeric) <= 1e-8 || relative_error(a, numeric) <= 1e-5));
        }
    }
}

}  // namespace

TEST_CASE("cross entropy") {
    const LossGrad lg = cross_entropy(Tensor1(10, 0.0), 3);
    CHECK(lg.loss == doctest::Approx(std::log(10.0)).epsilon(1e-15));
    for (std::size_t i = 0; i < 10; ++i) CHECK(lg.grad[i] == doctest::Approx(i == 3 ? -0.9 : 0.1));
    // large logits stay finite
    const LossGrad big = cross_entropy(Tensor1{1000.0, 0.0}, 1);
    CHECK(big.loss == doctest::Approx(1000.0));
    CHECK_THROWS(cross_entropy(Tensor1(3), 3));
}

TEST_CASE("mse") {
    const ScalarLossGrad lg = mse(1.5, 1.0);
    CHECK(lg.loss == 0.25);
    CHECK(lg.grad == 1.0);
}

TEST_CASE("global norm clipping") {
    ReadoutParams g{Tensor2::from_rows({{3.0, 0.0}}), Tensor1{4.0}};
    CHECK(global_norm(g) == 5.0);
    const ReadoutParams clipped = clip_grad_norm(g, 1.0);
    CHECK(global_norm(clipped) == doctest::Approx(1.0));
    CHECK(clipped.V(0, 0) == doctest::Approx(0.6));
    CHECK(clipped.c[0] == doctest::Approx(0.8));
    CHECK(clip_grad_norm(g, 10.0) == g);
    CHECK_THROWS(clip_grad_norm(g, 0.0));
}

TEST_CASE("optimizer single steps") {
    std::vector<double> theta{1.0, -2.0};
    const std::vector<double> grad{0.5, -0.25};
    std::vector<std::span<double>> ps{theta};
    std::vector<std::span<const double>> gs{grad};

    OptimizerConfig sgd{OptimizerKind::Sgd, 0.1};
    OptimizerState st;
    optimizer_step(sgd, st, ps, gs);
    CHECK(theta[0] == doctest::Approx(0.95));
    CHECK(theta[1] == doctest::Approx(-1.975));

    theta = {1.0, -2.0};
    OptimizerConfig rms{OptimizerKind::RmsProp, 0.01};
    rms.alpha = 0.9;
    st = {};
    optimizer_step(rms, st, ps, gs);
    CHECK(theta[0] == doctest::Approx(1.0 - 0.01 * 0.5 / (std::sqrt(0.1 * 0.25) + 1e-8)));

    theta = {1.0, -2.0};
    OptimizerConfig adam{OptimizerKind::Adam, 0.01};
    st = {};
    optimizer_step(adam, st, ps, gs);
    // bias-corrected first step is lr * g / (|g| + eps)
    CHECK(theta[0] == doctest::Approx(0.99).epsilon(1e-7));
    CHECK(theta[1] == doctest::Approx(-1.99).epsilon(1e-7));
}

TEST_CASE("zero gradient is a fixed point") {
    for (auto kind : {OptimizerKind::Sgd, OptimizerKind::RmsProp, OptimizerKind::Adam}) {
        std::vector<double> theta{0.3, -0.7};
        const std::vector<double> zero{0.0, 0.0};
        std::vector<std::span<double>> ps{theta};
        std::vector<std::span<const double>> gs{zero};
        OptimizerConfig cfg{kind, 0.1};
        cfg.momentum = 0.9;
        OptimizerState st;
        for (int i = 0; i < 5; ++i) optimizer_step(cfg, st, ps, gs);
        CHECK(theta == std::vector<double>{0.3, -0.7});
    }
}

TEST_CASE("heavy-ball sgd accumulates velocity") {
    std::vector<double> theta{0.0};
    const std::vector<double> g{1.0};
    std::vector<std::span<double>> ps{theta};
    std::vector<std::span<const double>> gs{g};
    OptimizerConfig cfg{OptimizerKind::Sgd, 0.1};
    cfg.momentum = 0.5;
    OptimizerState st;
    optimizer_step(cfg, st, ps, gs);
    optimizer_step(cfg, st, ps, gs);
    CHECK(theta[0] == doctest::Approx(-(0.1 + 0.15)));
}

TEST_CASE("optimizer config validation") {
    OptimizerConfig cfg;
    cfg.lr = 0.0;
    CHECK_THROWS(cfg.validate());
    cfg.lr = 1e-3;
    cfg.beta2 = 1.0;
    CHECK_THROWS(cfg.validate());
    CHECK(parse_optimizer_kind("adam") == OptimizerKind::Adam);
    CHECK_FALSE(parse_optimizer_kind("adagrad").has_value());
}

TEST_CASE("end-to-end gradients match finite differences") {
    const TaskKind tasks[] = {TaskKind::Copying, TaskKind::Adding, TaskKind::Synthetic};
    const CellKind kinds[] = {CellKind::Rnn, CellKind::MomentumRnn, CellKind::MomentumLstm, CellKind::AdamLstm};
    std::uint64_t seed = 1;
    for (TaskKind task : tasks)
        for (CellKind kind : kinds) check_model_grads(tiny_config(task, kind), seed++);
}

TEST_CASE("training is deterministic for a seed") {
    const TrainConfig c = tiny_config(TaskKind::Copying, CellKind::MomentumLstm);
    const TrainResult a = train(c), b = train(c);
    std::ostringstream sa, sb;
    write_metrics_csv(sa, a.log);
    write_metrics_csv(sb, b.log);
    CHECK(sa.str() == sb.str());
    CHECK(a.model == b.model);

    TrainConfig other = c;
    other.seed = 18;
    CHECK_FALSE(train(other).model == a.model);
}

TEST_CASE("metric log layout") {
    TrainConfig c = tiny_config(TaskKind::Adding, CellKind::MomentumRnn);
    c.iterations = 5;
    c.eval_every = 2;
    const TrainResult r = train(c);
    std::size_t train_rows = 0;
    std::vector<std::size_t> eval_iters;
    for (const auto& row : r.log.rows) {
        if (row.split == "train") {
            CHECK(row.iteration == train_rows);
            ++train_rows;
        } else {
            eval_iters.push_back(row.iteration);
        }
        CHECK(row.wall_ms == 0);
    }
    CHECK(train_rows == 5);
    CHECK(eval_iters == std::vector<std::size_t>{2, 4, 5});
    CHECK(r.iterations_run == 5);

    std::ostringstream out;
    write_metrics_csv(out, r.log);
    CHECK(out.str().rfind("iteration,split,loss,metric,wall_ms\n", 0) == 0);
}

TEST_CASE("zero iterations returns the initial model") {
    TrainConfig c = tiny_config(TaskKind::Adding, CellKind::Lstm);
    c.iterations = 0;
    const TrainResult r = train(c);
    CHECK(r.log.rows.empty());
    CHECK(r.model == init_model(c));
}

TEST_CASE("early stop hook") {
    TrainConfig c = tiny_config(TaskKind::Adding, CellKind::Rnn);
    c.iterations = 50;
    TrainHooks hooks;
    hooks.on_iteration = [](std::size_t i, double) { return i == 6; };
    const TrainResult r = train(c, hooks);
    CHECK(r.iterations_run == 7);
}

TEST_CASE("initial copying loss is near ln(N + 2)") {
    TrainConfig c;
    c.cell.kind = CellKind::MomentumLstm;
    c.cell.hidden_dim = 64;
    c.task.kind = TaskKind::Copying;
    c.task.copying = CopyingSpec{4, 5, 20, 1};
    c.cell.input_dim = c.task.input_dim();
    c.batch_size = 32;
    c.iterations = 1;
    c.eval_every = 0;
    const TrainResult r = train(c);
    CHECK(std::abs(r.log.rows.front().loss - std::log(6.0)) < 0.2 * std::log(6.0));
}

TEST_CASE("divergence aborts with the iteration") {
    TrainConfig c = tiny_config(TaskKind::Adding, CellKind::Rnn);
    c.optim = OptimizerConfig{OptimizerKind::Sgd, 1e300};
    c.clip_norm.reset();
    c.iterations = 20;
    CHECK_THROWS_AS(train(c), DivergenceError);
}

TEST_CASE("config validation ties the cell to the task") {
    TrainConfig c = tiny_config(TaskKind::Adding, CellKind::Rnn);
    c.cell.input_dim = 5;
    CHECK_THROWS_AS(train(c), std::invalid_argument);
}

TEST_CASE("model round trip") {
    const TrainConfig c = tiny_config(TaskKind::Synthetic, CellKind::AdamLstm);
    const Model m = train(c).model;
    std::stringstream buf;
    write_model(buf, m);
    CHECK(read_model(buf, init_model(c)) == m);
    std::stringstream empty;
    CHECK_THROWS(read_model(empty, init_model(c)));
}

TEST_CASE("gradient flow and sweep") {
    TrainConfig c = tiny_config(TaskKind::Synthetic, CellKind::MomentumRnn);
    c.snapshot_every = 2;
    const TrainResult r = train(c);
    REQUIRE(r.snapshots.size() == 3);
    CHECK(r.snapshots[0].iteration == 0);
    const auto flow = gradient_flow(c, r.snapshots);
    REQUIRE(flow.size() == 3);
    CHECK(flow[2].iteration == 4);
    CHECK(flow[0].norms.size() == 5);
    std::ostringstream out;
    write_gradflow_csv(out, flow);
    CHECK(out.str().rfind("iteration,t,grad_norm\n0,1,", 0) == 0);

    const auto rows = mu_s_sweep(c, {0.0, 0.5}, {1.0});
    REQUIRE(rows.size() == 2);
    CHECK(rows[1].mu == 0.5);
    std::ostringstream sweep;
    write_sweep_csv(sweep, rows);
    CHECK(sweep.str().rfind("mu,s,final_train_loss,final_eval_metric\n", 0) == 0);
}
