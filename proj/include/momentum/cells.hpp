// Recurrent cell families: plain RNN and LSTM, their heavy-ball momentum
// versions, and the Adam/RMSProp-normalized versions.
//
// All cells share one shape:
//
//   g  = W x + b                       input drive, G = h (RNN) or 4h (LSTM)
//   v' = mu_eff(t+1) v + s g           momentum kinds
//   m' = beta m + (1 - beta) g*g       Adam/RMSProp kinds
//   drive = g | v' | v' / (sqrt(m') + eps)
//
// and then either h' = act(U h + drive) or the LSTM gate update on
// drive + (U h + b_h) with gates stacked (i, f, c~, o).
// MomentumRnnAlt instead uses h' = act(U h + U v') with W holding W^ = U^-1 W.
//
// States carry the batch as the column dimension; the Tensor1 overloads are
// the batch-of-one case.

#pragma once

#include "momentum/numerics.hpp"

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

namespace momentum {

enum class CellKind {
    Rnn,
    MomentumRnn,
    MomentumRnnAlt,
    Lstm,
    MomentumLstm,
    AdamRnn,
    AdamLstm,
    RmsPropRnn,
    RmsPropLstm,
};

inline constexpr CellKind kAllCellKinds[] = {
    CellKind::Rnn,          CellKind::MomentumRnn, CellKind::MomentumRnnAlt,
    CellKind::Lstm,         CellKind::MomentumLstm, CellKind::AdamRnn,
    CellKind::AdamLstm,     CellKind::RmsPropRnn,  CellKind::RmsPropLstm,
};

enum class Schedule { Constant, Nag, ScheduledRestart };
enum class Activation { Tanh, Sigmoid };

std::string_view to_string(CellKind kind);
std::string_view to_string(Schedule schedule);
std::string_view to_string(Activation activation);
std::optional<CellKind> parse_cell_kind(std::string_view name);
std::optional<Schedule> parse_schedule(std::string_view name);
std::optional<Activation> parse_activation(std::string_view name);

bool is_lstm(CellKind kind);
/// Kinds that carry a momentum state v.
bool has_momentum(CellKind kind);
/// Kinds that carry a second-moment state m.
bool has_second_moment(CellKind kind);

struct CellSpec {
    CellKind kind = CellKind::Rnn;
    std::size_t input_dim = 1;
    std::size_t hidden_dim = 1;
    double mu = 0.0;
    double s = 1.0;
    double beta = 0.999;
    double eps = 1e-8;
    Schedule schedule = Schedule::Constant;
    std::size_t restart_f = 1;
    Activation activation = Activation::Tanh;
    /// Initial value of the LSTM forget-gate slice of b.
    double forget_bias = 1.0;

    /// Throws std::invalid_argument naming the offending field.
    void validate() const;
    /// Rows of W, b, v and m: h for RNN kinds, 4h for LSTM kinds.
    std::size_t gate_dim() const { return is_lstm(kind) ? 4 * hidden_dim : hidden_dim; }
};

struct CellParams {
    Tensor2 U;   ///< [G x h]
    Tensor2 W;   ///< [G x d]; holds W^ for MomentumRnnAlt
    Tensor1 b;   ///< [G], enters the input drive g
    Tensor1 bh;  ///< [4h] recurrent-side bias, LSTM kinds only

    /// Calls f(name, span) for every parameter tensor in a fixed order.
    template <typename F>
    void visit(F&& f) {
        f(std::string_view("U"), U.data());
        f(std::string_view("W"), W.data());
        f(std::string_view("b"), b.data());
        if (!bh.empty()) f(std::string_view("bh"), bh.data());
    }
    template <typename F>
    void visit(F&& f) const {
        f(std::string_view("U"), U.data());
        f(std::string_view("W"), W.data());
        f(std::string_view("b"), b.data());
        if (!bh.empty()) f(std::string_view("bh"), bh.data());
    }

    bool operator==(const CellParams&) const = default;
};

/// Zero-filled parameters with the shapes of `like`.
CellParams zeros_like(const CellParams& like);
void check_params(const CellSpec& spec, const CellParams& params);

struct CellState {
    Tensor2 h;  ///< [h x B]
    Tensor2 c;  ///< [h x B], LSTM kinds only
    Tensor2 v;  ///< [G x B], momentum and Adam kinds only
    Tensor2 m;  ///< [G x B], Adam and RMSProp kinds only
    std::size_t t = 0;

    std::size_t batch() const { return h.cols(); }
    bool operator==(const CellState&) const = default;
};

CellState fresh_state(const CellSpec& spec, std::size_t batch = 1);

/// Momentum coefficient in force at step t (t >= 1). RMSProp kinds always get 0.
double mu_effective(const CellSpec& spec, std::size_t t);

/// Intermediates of one step that the backward pass needs.
struct StepCache {
    double mu = 0.0;
    Tensor2 g;       ///< W x + b; Adam kinds only
    Tensor2 root_m;  ///< sqrt(m'); Adam kinds only
    Tensor2 z;       ///< h + v'; MomentumRnnAlt only
    Tensor2 gates;   ///< activated (i, f, c~, o); LSTM kinds only
    Tensor2 tanh_c;  ///< tanh(c'); LSTM kinds only
};

/// One step for any kind. x is [d x B]. Fills `cache` when non-null.
CellState step(const CellSpec& spec, const CellParams& params, const CellState& state,
               const Tensor2& x, StepCache* cache = nullptr);
CellState step(const CellSpec& spec, const CellParams& params, const CellState& state,
               const Tensor1& x);

// Kind-checked entry points; each rejects a spec of another kind.
CellState rnn_forward(const CellSpec&, const CellParams&, const CellState&, const Tensor1& x);
CellState momentum_rnn_forward(const CellSpec&, const CellParams&, const CellState&, const Tensor1& x);
CellState momentum_rnn_alt_forward(const CellSpec&, const CellParams&, const CellState&, const Tensor1& x);
CellState lstm_forward(const CellSpec&, const CellParams&, const CellState&, const Tensor1& x);
CellState momentum_lstm_forward(const CellSpec&, const CellParams&, const CellState&, const Tensor1& x);
CellState adam_rnn_forward(const CellSpec&, const CellParams&, const CellState&, const Tensor1& x);
CellState rmsprop_rnn_forward(const CellSpec&, const CellParams&, const CellState&, const Tensor1& x);
CellState adam_lstm_forward(const CellSpec&, const CellParams&, const CellState&, const Tensor1& x);
CellState rmsprop_lstm_forward(const CellSpec&, const CellParams&, const CellState&, const Tensor1& x);

/// W orthogonal, U identity (for LSTM kinds the stacked [4h x h] matrix gets
/// ones on its main diagonal), biases zero except the LSTM forget slice of b.
CellParams init_params(const CellSpec& spec, Rng& rng);

}  // namespace momentum
