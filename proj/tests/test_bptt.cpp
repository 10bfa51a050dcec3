#include "momentum/bptt.hpp"

#include <doctest.h>

#include <cmath>

using namespace momentum;

namespace {

CellParams random_params(const CellSpec& spec, Rng& rng) {
    CellParams p;
    const std::size_t g = spec.gate_dim();
    p.U = gaussian(g, spec.hidden_dim, 0.5, rng);
    p.W = gaussian(g, spec.input_dim, 0.7, rng);
    p.b = Tensor1(g);
    for (double& v : p.b.data()) v = 0.2 * rng.normal();
    if (is_lstm(spec.kind)) {
        p.bh = Tensor1(g);
        for (double& v : p.bh.data()) v = 0.2 * rng.normal();
    }
    return p;
}

std::vector<Tensor2> random_inputs(std::size_t steps, std::size_t d, std::size_t batch, Rng& rng) {
    std::vector<Tensor2> xs;
    for (std::size_t t = 0; t < steps; ++t) xs.push_back(gaussian(d, batch, 1.0, rng));
    return xs;
}

double half_sq(const CellState& st) {
    double acc = 0.0;
    for (double v : st.h.data()) acc += 0.5 * v * v;
    return acc;
}

void check_close(const ParamGrads& a, const ParamGrads& n, double tol) {
    std::vector<std::span<const double>> as, ns;
    a.visit([&](std::string_view, std::span<const double> s) { as.push_back(s); });
    n.visit([&](std::string_view, std::span<const double> s) { ns.push_back(s); });
    REQUIRE(as.size() == ns.size());
    for (std::size_t p = 0; p < as.size(); ++p)
        for (std::size_t i = 0; i < as[p].size(); ++i) {
            const double abs_err = std::abs(as[p][i] - ns[p][i]);
            CHECK((abs_err <= 1e-8 || relative_error(as[p][i], ns[p][i]) <= tol));
        }
}

}  // namespace

TEST_CASE("relative_error") {
    CHECK(relative_error(1.0, 1.0) == 0.0);
    CHECK(relative_error(2.0, 1.0) == 0.5);
    CHECK(relative_error(0.0, 1e-12) == doctest::Approx(1e-4));
}

TEST_CASE("T=1 rnn gradient matches the hand derivation") {
    Rng rng(1);
    CellSpec spec;
    spec.kind = CellKind::Rnn;
    spec.input_dim = 2;
    spec.hidden_dim = 3;
    const CellParams p = random_params(spec, rng);
    CellState h0 = fresh_state(spec);
    for (double& v : h0.h.data()) v = rng.normal();
    const Tensor2 x = gaussian(2, 1, 1.0, rng);
    const Trajectory traj = unroll(spec, p, std::vector<Tensor2>{x}, h0);
    const Tensor2 delta = gaussian(3, 1, 1.0, rng);  // dL/dh_1
    const ParamGrads g = backward(traj, delta, false).grads;
    for (std::size_t i = 0; i < 3; ++i) {
        const double y = traj.states[1].h(i, 0);
        const double da = delta(i, 0) * (1.0 - y * y);
        for (std::size_t j = 0; j < 3; ++j) CHECK(g.U(i, j) == doctest::Approx(da * h0.h(j, 0)).epsilon(1e-13));
        for (std::size_t j = 0; j < 2; ++j) CHECK(g.W(i, j) == doctest::Approx(da * x(j, 0)).epsilon(1e-13));
        CHECK(g.b[i] == doctest::Approx(da).epsilon(1e-13));
    }
}

TEST_CASE("quadratic loss on a momentum cell, tight tolerance") {
    Rng rng(2);
    CellSpec spec;
    spec.kind = CellKind::MomentumRnn;
    spec.mu = 0.5;
    spec.input_dim = 2;
    spec.hidden_dim = 2;
    const CellParams p = random_params(spec, rng);
    const auto xs = random_inputs(4, 2, 1, rng);
    const Trajectory traj = unroll(spec, p, xs, fresh_state(spec));
    const ParamGrads a = backward(traj, traj.final_state().h, false).grads;
    const ParamGrads n = finite_diff_grads(spec, p, xs, std::function<double(const CellState&)>(half_sq), 1e-5);
    check_close(a, n, 1e-8);
}

TEST_CASE("every kind agrees with finite differences from a fresh state") {
    Rng rng(3);
    for (CellKind kind : kAllCellKinds) {
        for (int rep = 0; rep < 4; ++rep) {
            CellSpec spec;
            spec.kind = kind;
            spec.input_dim = 1 + rng.uniform_int(3);
            spec.hidden_dim = 1 + rng.uniform_int(3);
            spec.mu = 0.2 + 0.7 * rng.uniform();
            spec.s = 0.5 + rng.uniform();
            spec.beta = 0.9;
            spec.schedule = static_cast<Schedule>(rng.uniform_int(3));
            spec.restart_f = 3;
            const CellParams p = random_params(spec, rng);
            const auto xs = random_inputs(1 + rng.uniform_int(6), spec.input_dim, 2, rng);
            const Trajectory traj = unroll(spec, p, xs, fresh_state(spec, 2));
            const ParamGrads a = backward(traj, traj.final_state().h, false).grads;
            const ParamGrads n =
                finite_diff_grads(spec, p, xs, std::function<double(const CellState&)>(half_sq), 1e-6);
            // Adam kinds start at m = 0 where sqrt(m') has a kink; looser tolerance.
            check_close(a, n, has_second_moment(kind) ? 1e-3 : 1e-5);
        }
    }
}

TEST_CASE("randomized gradient check instances pass and the negative control fails") {
    for (CellKind kind : kAllCellKinds) {
        const GradCheckResult r = gradient_check_instance(kind, 3, 8, 2, 5);
        CHECK(r.passed);
        CHECK(r.max_abs_error < 1e-7);
        const GradCheckResult bad = gradient_check_instance(kind, 3, 8, 2, 5, 1e-4);
        CHECK_FALSE(bad.passed);
    }
}

TEST_CASE("per-step injections equal the summed final-step losses") {
    Rng rng(4);
    CellSpec spec;
    spec.kind = CellKind::MomentumLstm;
    spec.mu = 0.6;
    spec.s = 0.9;
    spec.input_dim = 2;
    spec.hidden_dim = 3;
    const CellParams p = random_params(spec, rng);
    const auto xs = random_inputs(5, 2, 2, rng);
    const Trajectory traj = unroll(spec, p, xs, fresh_state(spec, 2));
    std::vector<Tensor2> inject(5);
    inject[1] = traj.states[2].h;
    inject[4] = traj.states[5].h;
    const ParamGrads a = backward(traj, inject, false).grads;
    const std::function<double(const Trajectory&)> loss = [](const Trajectory& t) {
        return half_sq(t.states[2]) + half_sq(t.states[5]);
    };
    check_close(a, finite_diff_grads(spec, p, xs, loss, 1e-6), 1e-6);

    std::vector<Tensor2> wrong_len(4);
    CHECK_THROWS(backward(traj, wrong_len, false));
}

TEST_CASE("rnn step Jacobian matches finite differences") {
    Rng rng(5);
    CellSpec spec;
    spec.kind = CellKind::Rnn;
    spec.input_dim = 3;
    spec.hidden_dim = 4;
    const CellParams p = random_params(spec, rng);
    CellState st = fresh_state(spec);
    for (double& v : st.h.data()) v = rng.normal();
    const Tensor1 x{0.3, -0.2, 0.9};
    const Tensor2 jac = rnn_step_jacobian(spec, p, st, x);
    const double eps = 1e-6;
    for (std::size_t j = 0; j < 4; ++j) {
        CellState up = st, down = st;
        up.h(j, 0) += eps;
        down.h(j, 0) -= eps;
        const CellState hu = step(spec, p, up, x), hd = step(spec, p, down, x);
        for (std::size_t i = 0; i < 4; ++i) {
            // numerator layout: row i is output, column j is input
            CHECK(std::abs(jac(i, j) - (hu.h(i, 0) - hd.h(i, 0)) / (2 * eps)) < 1e-6);
        }
    }
    // The transposed orientation generally does not match.
    double diff = 0.0;
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) diff = std::max(diff, std::abs(jac(i, j) - jac(j, i)));
    CHECK(diff > 1e-3);
}

TEST_CASE("gradient flow norms") {
    Rng rng(6);
    CellSpec spec;
    spec.kind = CellKind::Rnn;
    spec.input_dim = 1;
    spec.hidden_dim = 8;
    const CellParams p = init_params(spec, rng);
    const auto xs = random_inputs(50, 1, 3, rng);
    const Trajectory traj = unroll(spec, p, xs, fresh_state(spec, 3));
    const Tensor2 seed_grad = gaussian(8, 3, 1.0, rng);
    const BackwardResult r = backward(traj, seed_grad, true);
    REQUIRE(r.flow.has_value());
    REQUIRE(r.flow->norms.size() == 50);
    CHECK(r.flow->norms.back() == doctest::Approx(frobenius_norm(seed_grad)));
    // With U = I and tanh, each step can only shrink the gradient.
    for (std::size_t t = 1; t < 50; ++t) CHECK(r.flow->norms[t - 1] <= r.flow->norms[t] + 1e-15);

    const auto report = gradient_flow_report(
        spec, {ParamSnapshot{0, p}, ParamSnapshot{7, p}}, xs,
        [&](std::size_t, const CellState&) { return seed_grad; });
    REQUIRE(report.size() == 2);
    CHECK(report[1].iteration == 7);
    CHECK(report[0].norms == r.flow->norms);
    CHECK_FALSE(backward(traj, seed_grad, false).flow.has_value());
}

TEST_CASE("unroll reports non-finite steps") {
    CellSpec spec;
    spec.kind = CellKind::Rnn;
    CellParams p{Tensor2(1, 1, 1.0), Tensor2(1, 1, 1.0), Tensor1{0.0}, {}};
    std::vector<Tensor2> xs{Tensor2(1, 1, 1.0), Tensor2(1, 1, std::nan(""))};
    CHECK_THROWS_AS(unroll(spec, p, xs, fresh_state(spec)), NumericError);
    CHECK_THROWS_AS(unroll(spec, p, std::vector<Tensor2>{Tensor2(2, 1)}, fresh_state(spec)), ShapeError);
}
