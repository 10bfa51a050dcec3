#include "momentum/cells.hpp"

#include <array>
#include <cmath>
#include <stdexcept>
#include <utility>

namespace momentum {

namespace {

constexpr std::array<std::pair<CellKind, std::string_view>, 9> kKindNames{{
    {CellKind::Rnn, "rnn"},
    {CellKind::MomentumRnn, "momentum_rnn"},
    {CellKind::MomentumRnnAlt, "momentum_rnn_alt"},
    {CellKind::Lstm, "lstm"},
    {CellKind::MomentumLstm, "momentum_lstm"},
    {CellKind::AdamRnn, "adam_rnn"},
    {CellKind::AdamLstm, "adam_lstm"},
    {CellKind::RmsPropRnn, "rmsprop_rnn"},
    {CellKind::RmsPropLstm, "rmsprop_lstm"},
}};

void require(bool ok, const std::string& what) {
    if (!ok) throw ShapeError(what);
}

void require_kind(const CellSpec& spec, CellKind kind) {
    if (spec.kind != kind) {
        throw std::invalid_argument("cell kind mismatch: expected " + std::string(to_string(kind)) +
                                    ", got " + std::string(to_string(spec.kind)));
    }
}

bool is_rmsprop(CellKind kind) {
    return kind == CellKind::RmsPropRnn || kind == CellKind::RmsPropLstm;
}

// rows of t += bias
void add_rows(Tensor2& t, const Tensor1& bias) {
    const std::size_t cols = t.cols();
    for (std::size_t r = 0; r < t.rows(); ++r) {
        double* row = t.row(r).data();
        const double add = bias[r];
        for (std::size_t c = 0; c < cols; ++c) row[c] += add;
    }
}

double activate(Activation act, double a) {
    return act == Activation::Tanh ? std::tanh(a) : sigmoid(a);
}

}  // namespace

std::string_view to_string(CellKind kind) {
    for (const auto& [k, name] : kKindNames)
        if (k == kind) return name;
    return "unknown";
}

std::string_view to_string(Schedule schedule) {
    switch (schedule) {
        case Schedule::Constant: return "constant";
        case Schedule::Nag: return "nag";
        case Schedule::ScheduledRestart: return "restart";
    }
    return "unknown";
}

std::string_view to_string(Activation activation) {
    return activation == Activation::Tanh ? "tanh" : "sigmoid";
}

std::optional<CellKind> parse_cell_kind(std::string_view name) {
    for (const auto& [k, n] : kKindNames)
        if (n == name) return k;
    return std::nullopt;
}

std::optional<Schedule> parse_schedule(std::string_view name) {
    if (name == "constant") return Schedule::Constant;
    if (name == "nag") return Schedule::Nag;
    if (name == "restart") return Schedule::ScheduledRestart;
    return std::nullopt;
}

std::optional<Activation> parse_activation(std::string_view name) {
    if (name == "tanh") return Activation::Tanh;
    if (name == "sigmoid") return Activation::Sigmoid;
    return std::nullopt;
}

bool is_lstm(CellKind kind) {
    switch (kind) {
        case CellKind::Lstm:
        case CellKind::MomentumLstm:
        case CellKind::AdamLstm:
        case CellKind::RmsPropLstm: return true;
        default: return false;
    }
}

bool has_momentum(CellKind kind) {
    return kind != CellKind::Rnn && kind != CellKind::Lstm;
}

bool has_second_moment(CellKind kind) {
    switch (kind) {
        case CellKind::AdamRnn:
        case CellKind::AdamLstm:
        case CellKind::RmsPropRnn:
        case CellKind::RmsPropLstm: return true;
        default: return false;
    }
}

void CellSpec::validate() const {
    if (input_dim == 0) throw std::invalid_argument("cell.d must be >= 1");
    if (hidden_dim == 0) throw std::invalid_argument("cell.h must be >= 1");
    if (!(mu >= 0.0) || !std::isfinite(mu)) throw std::invalid_argument("cell.mu must be >= 0");
    if (!(s > 0.0) || !std::isfinite(s)) throw std::invalid_argument("cell.s must be > 0");
    if (!(beta >= 0.0 && beta <= 1.0)) throw std::invalid_argument("cell.beta must be in [0, 1]");
    if (!(eps > 0.0) || !std::isfinite(eps)) throw std::invalid_argument("cell.eps must be > 0");
    if (schedule == Schedule::ScheduledRestart && restart_f < 1) {
        throw std::invalid_argument("cell.restart_f must be >= 1");
    }
    if (!std::isfinite(forget_bias)) throw std::invalid_argument("cell.forget_bias must be finite");
}

CellParams zeros_like(const CellParams& like) {
    CellParams out;
    out.U = Tensor2(like.U.rows(), like.U.cols());
    out.W = Tensor2(like.W.rows(), like.W.cols());
    out.b = Tensor1(like.b.len());
    out.bh = Tensor1(like.bh.len());
    return out;
}

void check_params(const CellSpec& spec, const CellParams& p) {
    const std::size_t g = spec.gate_dim();
    const std::size_t h = spec.hidden_dim;
    require(p.U.rows() == g && p.U.cols() == h, "cell params: U must be G x h");
    require(p.W.rows() == g && p.W.cols() == spec.input_dim, "cell params: W must be G x d");
    require(p.b.len() == g, "cell params: b must have length G");
    require(p.bh.len() == (is_lstm(spec.kind) ? g : 0),
            "cell params: bh must have length 4h for LSTM kinds and be empty otherwise");
}

CellState fresh_state(const CellSpec& spec, std::size_t batch) {
    CellState st;
    st.h = Tensor2(spec.hidden_dim, batch);
    if (is_lstm(spec.kind)) st.c = Tensor2(spec.hidden_dim, batch);
    if (has_momentum(spec.kind)) st.v = Tensor2(spec.gate_dim(), batch);
    if (has_second_moment(spec.kind)) st.m = Tensor2(spec.gate_dim(), batch);
    return st;
}

double mu_effective(const CellSpec& spec, std::size_t t) {
    if (t == 0) throw DomainError("mu_effective: step index starts at 1");
    if (is_rmsprop(spec.kind)) return 0.0;
    switch (spec.schedule) {
        case Schedule::Constant: return spec.mu;
        case Schedule::Nag:
            return static_cast<double>(t - 1) / static_cast<double>(t + 2);
        case Schedule::ScheduledRestart: {
            const auto r = static_cast<double>(t % spec.restart_f);
            return r / (r + 3.0);
        }
    }
    return spec.mu;
}

CellState step(const CellSpec& spec, const CellParams& params, const CellState& state,
               const Tensor2& x, StepCache* cache) {
    const std::size_t h = spec.hidden_dim;
    const std::size_t gdim = spec.gate_dim();
    const std::size_t batch = x.cols();
    const bool lstm = is_lstm(spec.kind);
    const bool momentum = has_momentum(spec.kind);
    const bool adam = has_second_moment(spec.kind);

    require(x.rows() == spec.input_dim, "cell step: input has wrong dimension");
    require(state.h.rows() == h && state.h.cols() == batch, "cell step: h has wrong shape");
    require(!lstm || (state.c.rows() == h && state.c.cols() == batch), "cell step: c has wrong shape");
    require(!momentum || (state.v.rows() == gdim && state.v.cols() == batch),
            "cell step: v has wrong shape");
    require(!adam || (state.m.rows() == gdim && state.m.cols() == batch),
            "cell step: m has wrong shape");

    CellState out;
    out.t = state.t + 1;
    const double mu = momentum ? mu_effective(spec, out.t) : 0.0;

    Tensor2 g(gdim, batch);
    gemm(params.W, Trans::No, x, Trans::No, 0.0, g);
    add_rows(g, params.b);

    // drive: the term added to the recurrent pre-activation
    Tensor2 drive;
    if (!momentum) {
        drive = g;
    } else {
        out.v = Tensor2(gdim, batch);
        {
            const auto v = state.v.data();
            const auto gv = g.data();
            auto nv = out.v.data();
            for (std::size_t i = 0; i < nv.size(); ++i) nv[i] = mu * v[i] + spec.s * gv[i];
        }
        if (!adam) {
            drive = out.v;
        } else {
            out.m = Tensor2(gdim, batch);
            Tensor2 root_m(gdim, batch);
            drive = Tensor2(gdim, batch);
            const auto m = state.m.data();
            const auto gv = g.data();
            const auto nv = out.v.data();
            auto nm = out.m.data();
            auto rm = root_m.data();
            auto dr = drive.data();
            for (std::size_t i = 0; i < nm.size(); ++i) {
                nm[i] = spec.beta * m[i] + (1.0 - spec.beta) * (gv[i] * gv[i]);
                rm[i] = std::sqrt(nm[i]);
                dr[i] = nv[i] / (rm[i] + spec.eps);
            }
            if (cache) {
                cache->g = g;
                cache->root_m = std::move(root_m);
            }
        }
    }

    if (!lstm) {
        Tensor2 a(h, batch);
        if (spec.kind == CellKind::MomentumRnnAlt) {
            Tensor2 z(h, batch);
            const auto hv = state.h.data();
            const auto dv = drive.data();
            auto zv = z.data();
            for (std::size_t i = 0; i < zv.size(); ++i) zv[i] = hv[i] + dv[i];
            gemm(params.U, Trans::No, z, Trans::No, 0.0, a);
            if (cache) cache->z = std::move(z);
        } else {
            gemm(params.U, Trans::No, state.h, Trans::No, 0.0, a);
            const auto dv = drive.data();
            auto av = a.data();
            for (std::size_t i = 0; i < av.size(); ++i) av[i] += dv[i];
        }
        out.h = std::move(a);
        for (double& v : out.h.data()) v = activate(spec.activation, v);
    } else {
        Tensor2 gates(gdim, batch);
        gemm(params.U, Trans::No, state.h, Trans::No, 0.0, gates);
        add_rows(gates, params.bh);
        {
            const auto dv = drive.data();
            auto gv = gates.data();
            for (std::size_t i = 0; i < gv.size(); ++i) gv[i] = dv[i] + gv[i];
        }
        const std::size_t block = h * batch;
        auto gv = gates.data();
        for (std::size_t i = 0; i < block; ++i) {
            gv[i] = sigmoid(gv[i]);                          // input
            gv[block + i] = sigmoid(gv[block + i]);          // forget
            gv[2 * block + i] = std::tanh(gv[2 * block + i]);  // candidate
            gv[3 * block + i] = sigmoid(gv[3 * block + i]);  // output
        }
        out.c = Tensor2(h, batch);
        out.h = Tensor2(h, batch);
        Tensor2 tanh_c(h, batch);
        const auto c = state.c.data();
        auto nc = out.c.data();
        auto nh = out.h.data();
        auto tc = tanh_c.data();
        for (std::size_t i = 0; i < block; ++i) {
            nc[i] = gv[block + i] * c[i] + gv[i] * gv[2 * block + i];
            tc[i] = std::tanh(nc[i]);
            nh[i] = gv[3 * block + i] * tc[i];
        }
        if (cache) {
            cache->gates = std::move(gates);
            cache->tanh_c = std::move(tanh_c);
        }
    }

    if (!all_finite(out.h.data()) || (lstm && !all_finite(out.c.data())) ||
        (momentum && !all_finite(out.v.data()))) {
        throw NumericError("cell step " + std::to_string(out.t) + ": non-finite state");
    }
    if (cache) cache->mu = mu;
    return out;
}

CellState step(const CellSpec& spec, const CellParams& params, const CellState& state,
               const Tensor1& x) {
    return step(spec, params, state, Tensor2::column(x));
}

#define MOMENTUM_KIND_ENTRY(fn, kind)                                                  \
    CellState fn(const CellSpec& spec, const CellParams& params, const CellState& state, \
                 const Tensor1& x) {                                                   \
        require_kind(spec, kind);                                                      \
        return step(spec, params, state, x);                                           \
    }

MOMENTUM_KIND_ENTRY(rnn_forward, CellKind::Rnn)
MOMENTUM_KIND_ENTRY(momentum_rnn_forward, CellKind::MomentumRnn)
MOMENTUM_KIND_ENTRY(momentum_rnn_alt_forward, CellKind::MomentumRnnAlt)
MOMENTUM_KIND_ENTRY(lstm_forward, CellKind::Lstm)
MOMENTUM_KIND_ENTRY(momentum_lstm_forward, CellKind::MomentumLstm)
MOMENTUM_KIND_ENTRY(adam_rnn_forward, CellKind::AdamRnn)
MOMENTUM_KIND_ENTRY(rmsprop_rnn_forward, CellKind::RmsPropRnn)
MOMENTUM_KIND_ENTRY(adam_lstm_forward, CellKind::AdamLstm)
MOMENTUM_KIND_ENTRY(rmsprop_lstm_forward, CellKind::RmsPropLstm)

#undef MOMENTUM_KIND_ENTRY

CellParams init_params(const CellSpec& spec, Rng& rng) {
    spec.validate();
    const std::size_t h = spec.hidden_dim;
    const std::size_t gdim = spec.gate_dim();
    CellParams p;
    p.W = orthogonal_init(gdim, spec.input_dim, rng);
    p.U = Tensor2(gdim, h);
    for (std::size_t i = 0; i < h; ++i) p.U(i, i) = 1.0;
    p.b = Tensor1(gdim);
    if (is_lstm(spec.kind)) {
        for (std::size_t i = h; i < 2 * h; ++i) p.b[i] = spec.forget_bias;
        p.bh = Tensor1(gdim);
    }
    return p;
}

}  // namespace momentum
