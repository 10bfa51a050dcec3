#include "momentum/bptt.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace momentum {

namespace {

void add_row_sums(const Tensor2& t, Tensor1& acc) {
    for (std::size_t r = 0; r < t.rows(); ++r) {
        double s = 0.0;
        for (double v : t.row(r)) s += v;
        acc[r] += s;
    }
}

std::vector<std::span<double>> spans_of(CellParams& p) {
    std::vector<std::span<double>> out;
    p.visit([&](std::string_view, std::span<double> s) { out.push_back(s); });
    return out;
}

}  // namespace

double relative_error(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    return std::abs(analytic - numeric) / denom;
}

Trajectory unroll(const CellSpec& spec, const CellParams& params, const std::vector<Tensor2>& x_seq,
                  const CellState& initial) {
    if (x_seq.empty()) throw std::invalid_argument("unroll: empty sequence");
    check_params(spec, params);
    Trajectory traj;
    traj.spec = spec;
    traj.params = params;
    traj.inputs = x_seq;
    traj.states.reserve(x_seq.size() + 1);
    traj.caches.resize(x_seq.size());
    traj.states.push_back(initial);
    for (std::size_t k = 0; k < x_seq.size(); ++k) {
        try {
            traj.states.push_back(step(spec, params, traj.states.back(), x_seq[k], &traj.caches[k]));
        } catch (const NumericError& e) {
            throw NumericError("unroll: step " + std::to_string(k + 1) + ": " + e.what());
        }
    }
    return traj;
}

Trajectory unroll(const CellSpec& spec, const CellParams& params, const std::vector<Tensor1>& x_seq,
                  const CellState& initial) {
    std::vector<Tensor2> cols;
    cols.reserve(x_seq.size());
    for (const auto& x : x_seq) cols.push_back(Tensor2::column(x));
    return unroll(spec, params, cols, initial);
}

BackwardResult backward(const Trajectory& traj, const Tensor2& dl_dh_final, bool record_flow) {
    std::vector<Tensor2> per_step(traj.steps());
    if (!per_step.empty()) per_step.back() = dl_dh_final;
    return backward(traj, per_step, record_flow);
}

BackwardResult backward(const Trajectory& traj, const Tensor1& dl_dh_final, bool record_flow) {
    return backward(traj, Tensor2::column(dl_dh_final), record_flow);
}

BackwardResult backward(const Trajectory& traj, const std::vector<Tensor2>& dl_dh, bool record_flow) {
    const CellSpec& spec = traj.spec;
    const CellParams& params = traj.params;
    const std::size_t steps = traj.steps();
    if (steps == 0 || traj.states.size() != steps + 1 || traj.caches.size() != steps) {
        throw std::invalid_argument("backward: malformed trajectory");
    }
    if (dl_dh.size() != steps) throw ShapeError("backward: need one loss gradient slot per step");

    const std::size_t h = spec.hidden_dim;
    const std::size_t gdim = spec.gate_dim();
    const std::size_t batch = traj.states[0].batch();
    const bool lstm = is_lstm(spec.kind);
    const bool momentum = has_momentum(spec.kind);
    const bool adam = has_second_moment(spec.kind);
    const bool alt = spec.kind == CellKind::MomentumRnnAlt;

    BackwardResult result;
    result.grads = zeros_like(params);
    ParamGrads& grads = result.grads;
    GradFlowRecord flow;
    if (record_flow) flow.norms.assign(steps, 0.0);

    Tensor2 dh(h, batch);
    Tensor2 dh_prev(h, batch);
    Tensor2 dc = lstm ? Tensor2(h, batch) : Tensor2();
    Tensor2 dv = momentum ? Tensor2(gdim, batch) : Tensor2();
    Tensor2 dm = adam ? Tensor2(gdim, batch) : Tensor2();
    Tensor2 da(gdim, batch);
    Tensor2 dg(gdim, batch);

    for (std::size_t k = steps; k >= 1; --k) {
        const std::size_t idx = k - 1;
        const CellState& prev = traj.states[idx];
        const CellState& cur = traj.states[k];
        const StepCache& cache = traj.caches[idx];
        const Tensor2& x = traj.inputs[idx];

        if (!dl_dh[idx].empty()) {
            if (dl_dh[idx].rows() != h || dl_dh[idx].cols() != batch) {
                throw ShapeError("backward: loss gradient at step " + std::to_string(k) +
                                 " has wrong shape");
            }
            auto d = dh.data();
            const auto add = dl_dh[idx].data();
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += add[i];
        }
        if (!all_finite(dh.data())) {
            throw NumericError("backward: non-finite gradient at step " + std::to_string(k));
        }
        if (record_flow) flow.norms[idx] = frobenius_norm(dh);

        // Reverse through the recurrent part; leaves dL/d(drive) in `drive_grad`.
        const Tensor2* drive_grad = &da;
        const auto dhv = dh.data();
        auto dav = da.data();
        if (!lstm) {
            const auto hv = cur.h.data();
            for (std::size_t i = 0; i < dav.size(); ++i) {
                const double y = hv[i];
                const double slope = spec.activation == Activation::Tanh ? 1.0 - y * y : y * (1.0 - y);
                dav[i] = dhv[i] * slope;
            }
            gemm(da, Trans::No, alt ? cache.z : prev.h, Trans::Yes, 1.0, grads.U);
            gemm(params.U, Trans::Yes, da, Trans::No, 0.0, dh_prev);
            if (alt) drive_grad = &dh_prev;
        } else {
            const std::size_t block = h * batch;
            const auto gates = cache.gates.data();
            const auto tc = cache.tanh_c.data();
            const auto c_prev = prev.c.data();
            auto dcv = dc.data();
            for (std::size_t i = 0; i < block; ++i) {
                const double in = gates[i];
                const double fg = gates[block + i];
                const double cand = gates[2 * block + i];
                const double out = gates[3 * block + i];
                const double t = tc[i];
                const double dcn = dcv[i] + dhv[i] * out * (1.0 - t * t);
                dav[i] = dcn * cand * in * (1.0 - in);
                dav[block + i] = dcn * c_prev[i] * fg * (1.0 - fg);
                dav[2 * block + i] = dcn * in * (1.0 - cand * cand);
                dav[3 * block + i] = dhv[i] * t * out * (1.0 - out);
                dcv[i] = dcn * fg;
            }
            gemm(da, Trans::No, prev.h, Trans::Yes, 1.0, grads.U);
            add_row_sums(da, grads.bh);
            gemm(params.U, Trans::Yes, da, Trans::No, 0.0, dh_prev);
        }

        // Reverse through the input drive.
        const auto dd = drive_grad->data();
        auto dgv = dg.data();
        if (!momentum) {
            std::copy(dd.begin(), dd.end(), dgv.begin());
        } else if (!adam) {
            auto dvv = dv.data();
            for (std::size_t i = 0; i < dgv.size(); ++i) {
                const double total = dvv[i] + dd[i];
                dgv[i] = spec.s * total;
                dvv[i] = cache.mu * total;
            }
        } else {
            auto dvv = dv.data();
            auto dmv = dm.data();
            const auto rm = cache.root_m.data();
            const auto gv = cache.g.data();
            const auto vn = cur.v.data();
            for (std::size_t i = 0; i < dgv.size(); ++i) {
                const double q = rm[i] + spec.eps;
                const double dv_total = dvv[i] + dd[i] / q;
                double dm_total = dmv[i];
                // sqrt is not differentiable at m' = 0; take the zero subgradient there
                if (rm[i] > 0.0) dm_total += dd[i] * (-vn[i] / (q * q)) / (2.0 * rm[i]);
                dgv[i] = spec.s * dv_total + (1.0 - spec.beta) * 2.0 * gv[i] * dm_total;
                dvv[i] = cache.mu * dv_total;
                dmv[i] = spec.beta * dm_total;
            }
        }
        gemm(dg, Trans::No, x, Trans::Yes, 1.0, grads.W);
        add_row_sums(dg, grads.b);

        std::swap(dh, dh_prev);
    }

    bool finite = true;
    grads.visit([&](std::string_view, std::span<const double> s) { finite = finite && all_finite(s); });
    if (!finite) throw NumericError("backward: non-finite parameter gradient");

    if (record_flow) result.flow = std::move(flow);
    return result;
}

ParamGrads finite_diff_grads(const CellSpec& spec, const CellParams& params,
                             const std::vector<Tensor2>& x_seq,
                             const std::function<double(const Trajectory&)>& loss, double eps,
                             const CellState* start) {
    if (!(eps > 0.0)) throw std::invalid_argument("finite_diff_grads: eps must be > 0");
    if (x_seq.empty()) throw std::invalid_argument("finite_diff_grads: empty sequence");
    const CellState initial = start ? *start : fresh_state(spec, x_seq.front().cols());

    CellParams work = params;
    ParamGrads out = zeros_like(params);
    auto wspans = spans_of(work);
    auto ospans = spans_of(out);
    for (std::size_t p = 0; p < wspans.size(); ++p) {
        for (std::size_t i = 0; i < wspans[p].size(); ++i) {
            const double saved = wspans[p][i];
            wspans[p][i] = saved + eps;
            const double up = loss(unroll(spec, work, x_seq, initial));
            wspans[p][i] = saved - eps;
            const double down = loss(unroll(spec, work, x_seq, initial));
            wspans[p][i] = saved;
            ospans[p][i] = (up - down) / (2.0 * eps);
        }
    }
    return out;
}

ParamGrads finite_diff_grads(const CellSpec& spec, const CellParams& params,
                             const std::vector<Tensor2>& x_seq,
                             const std::function<double(const CellState&)>& loss, double eps,
                             const CellState* start) {
    return finite_diff_grads(
        spec, params, x_seq,
        std::function<double(const Trajectory&)>(
            [&](const Trajectory& traj) { return loss(traj.final_state()); }),
        eps, start);
}

Tensor2 rnn_step_jacobian(const CellSpec& spec, const CellParams& params, const CellState& state,
                          const Tensor1& x) {
    if (spec.kind != CellKind::Rnn) throw std::invalid_argument("rnn_step_jacobian: kind must be rnn");
    if (state.batch() != 1) throw ShapeError("rnn_step_jacobian: state must hold one sequence");
    const CellState next = step(spec, params, state, x);
    const std::size_t h = spec.hidden_dim;
    Tensor2 jac(h, h);
    for (std::size_t i = 0; i < h; ++i) {
        const double y = next.h(i, 0);
        const double slope = spec.activation == Activation::Tanh ? 1.0 - y * y : y * (1.0 - y);
        for (std::size_t j = 0; j < h; ++j) jac(i, j) = slope * params.U(i, j);
    }
    return jac;
}

std::vector<GradFlowRecord> gradient_flow_report(
    const CellSpec& spec, const std::vector<ParamSnapshot>& series,
    const std::vector<Tensor2>& inputs,
    const std::function<Tensor2(std::size_t snapshot, const CellState& final)>& dl_dh_final) {
    if (inputs.empty()) throw std::invalid_argument("gradient_flow_report: empty input batch");
    std::vector<GradFlowRecord> out;
    out.reserve(series.size());
    const CellState initial = fresh_state(spec, inputs.front().cols());
    for (std::size_t i = 0; i < series.size(); ++i) {
        const Trajectory traj = unroll(spec, series[i].params, inputs, initial);
        auto result = backward(traj, dl_dh_final(i, traj.final_state()), true);
        result.flow->iteration = series[i].iteration;
        out.push_back(std::move(*result.flow));
    }
    return out;
}

}  // namespace momentum

namespace momentum {

GradCheckResult gradient_check_instance(CellKind kind, std::uint64_t seed, std::size_t steps,
                                        std::size_t input_dim, std::size_t hidden_dim, double perturb) {
    constexpr std::size_t kBatch = 2;
    std::size_t kind_index = 0;
    while (kAllCellKinds[kind_index] != kind) ++kind_index;
    Rng rng(seed * 16 + kind_index, streams::kGradCheck);

    CellSpec spec;
    spec.kind = kind;
    spec.input_dim = input_dim;
    spec.hidden_dim = hidden_dim;
    spec.mu = 0.3 + 0.6 * rng.uniform();
    spec.s = 0.5 + 1.5 * rng.uniform();
    spec.beta = 0.5 + 0.49 * rng.uniform();
    spec.schedule = static_cast<Schedule>(rng.uniform_int(3));
    spec.restart_f = 2 + rng.uniform_int(4);
    spec.activation = rng.uniform_int(2) == 0 ? Activation::Tanh : Activation::Sigmoid;
    spec.validate();

    const std::size_t gdim = spec.gate_dim();
    CellParams params;
    params.U = gaussian(gdim, hidden_dim, 0.5 / std::sqrt(static_cast<double>(hidden_dim)), rng);
    params.W = gaussian(gdim, input_dim, 0.5, rng);
    params.b = Tensor1(gdim);
    for (double& v : params.b.data()) v = 0.2 * rng.normal();
    if (is_lstm(kind)) {
        params.bh = Tensor1(gdim);
        for (double& v : params.bh.data()) v = 0.2 * rng.normal();
    }

    std::vector<Tensor2> inputs;
    for (std::size_t t = 0; t < steps; ++t) inputs.push_back(gaussian(input_dim, kBatch, 1.0, rng));
    const Tensor2 weights = gaussian(hidden_dim, kBatch, 1.0, rng);

    // m_0 = 0 puts the first Adam step on the kink of sqrt(m'), where central
    // differences lose their second-order accuracy.
    CellState initial = fresh_state(spec, kBatch);
    for (double& v : initial.h.data()) v = 0.5 * rng.uniform() - 0.25;
    for (double& v : initial.c.data()) v = rng.normal();
    for (double& v : initial.v.data()) v = rng.normal();
    for (double& v : initial.m.data()) v = 0.2 + 0.8 * rng.uniform();

    const std::function<double(const CellState&)> loss = [&](const CellState& st) {
        double total = 0.0;
        const auto h = st.h.data();
        const auto w = weights.data();
        for (std::size_t i = 0; i < h.size(); ++i) total += w[i] * h[i] + 0.5 * h[i] * h[i];
        return total;
    };

    const Trajectory traj = unroll(spec, params, inputs, initial);
    Tensor2 dl_dh = weights;
    {
        auto d = dl_dh.data();
        const auto h = traj.final_state().h.data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += h[i];
    }
    ParamGrads analytic = backward(traj, dl_dh, false).grads;
    const ParamGrads numeric = finite_diff_grads(spec, params, inputs, loss, kGradCheckStep, &initial);

    GradCheckResult res;
    res.kind = kind;
    res.seed = seed;
    res.steps = steps;
    res.input_dim = input_dim;
    res.hidden_dim = hidden_dim;

    std::vector<std::pair<std::string, std::span<const double>>> a_spans;
    std::vector<std::span<const double>> n_spans;
    analytic.visit([&](std::string_view name, std::span<double> s) {
        for (double& v : s) v += perturb;
        a_spans.emplace_back(std::string(name), s);
    });
    numeric.visit([&](std::string_view, std::span<const double> s) { n_spans.push_back(s); });
    for (std::size_t p = 0; p < a_spans.size(); ++p) {
        const auto& [name, a] = a_spans[p];
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double abs_err = std::abs(a[i] - n_spans[p][i]);
            res.max_abs_error = std::max(res.max_abs_error, abs_err);
            if (abs_err <= kGradCheckAbsFloor) continue;
            const double rel = relative_error(a[i], n_spans[p][i]);
            if (rel > res.max_rel_error) {
                res.max_rel_error = rel;
                res.worst_param = name;
                res.worst_index = i;
            }
        }
    }
    res.passed = res.max_rel_error <= kGradCheckTolerance;
    return res;
}

}  // namespace momentum
