// Backpropagation through time for every cell kind, the per-step gradient
// norm diagnostic, and a central-difference oracle that shares nothing with
// the reverse pass except the forward step.

#pragma once

#include "momentum/cells.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace momentum {

/// Forward unroll with everything the reverse pass reads.
struct Trajectory {
    CellSpec spec;
    CellParams params;
    std::vector<Tensor2> inputs;    ///< T entries, [d x B]
    std::vector<CellState> states;  ///< T + 1 entries, states[0] is the initial state
    std::vector<StepCache> caches;  ///< T entries

    std::size_t steps() const { return inputs.size(); }
    const CellState& final_state() const { return states.back(); }
};

/// Gradients share the parameter layout.
using ParamGrads = CellParams;

struct GradFlowRecord {
    std::size_t iteration = 0;
    /// norms[t - 1] = ||dL/dh_t||, Frobenius over the batch, t = 1..T
    std::vector<double> norms;
};

struct BackwardResult {
    ParamGrads grads;
    std::optional<GradFlowRecord> flow;
};

Trajectory unroll(const CellSpec& spec, const CellParams& params, const std::vector<Tensor2>& x_seq,
                  const CellState& initial);
Trajectory unroll(const CellSpec& spec, const CellParams& params, const std::vector<Tensor1>& x_seq,
                  const CellState& initial);

/// Loss applied at the final hidden state only.
BackwardResult backward(const Trajectory& traj, const Tensor2& dl_dh_final, bool record_flow);
BackwardResult backward(const Trajectory& traj, const Tensor1& dl_dh_final, bool record_flow);

/// dl_dh[t - 1] is the direct loss gradient at h_t; an empty tensor means zero.
BackwardResult backward(const Trajectory& traj, const std::vector<Tensor2>& dl_dh, bool record_flow);

/// Central differences (L(p + eps) - L(p - eps)) / (2 eps) over every scalar
/// parameter, unrolling from `initial` (a fresh state when null).
ParamGrads finite_diff_grads(const CellSpec& spec, const CellParams& params,
                             const std::vector<Tensor2>& x_seq,
                             const std::function<double(const Trajectory&)>& loss, double eps,
                             const CellState* initial = nullptr);
ParamGrads finite_diff_grads(const CellSpec& spec, const CellParams& params,
                             const std::vector<Tensor2>& x_seq,
                             const std::function<double(const CellState&)>& loss, double eps,
                             const CellState* initial = nullptr);

/// Numerator-layout Jacobian dh'/dh of one plain RNN step: J_ij = act'(a_i) U_ij.
/// The state must hold a single sequence.
Tensor2 rnn_step_jacobian(const CellSpec& spec, const CellParams& params, const CellState& state,
                          const Tensor1& x);

/// Per-snapshot gradient flow on one fixed input batch. `dl_dh_final` maps a
/// snapshot index and the final state to the loss gradient at h_T.
struct ParamSnapshot {
    std::size_t iteration = 0;
    CellParams params;
};

std::vector<GradFlowRecord> gradient_flow_report(
    const CellSpec& spec, const std::vector<ParamSnapshot>& series,
    const std::vector<Tensor2>& inputs,
    const std::function<Tensor2(std::size_t snapshot, const CellState& final)>& dl_dh_final);

/// |a - n| / max(|a|, |n|, 1e-8)
double relative_error(double analytic, double numeric);

// ---------------------------------------------------------------------------
// Randomized gradient check against the finite-difference oracle.

inline constexpr double kGradCheckTolerance = 1e-5;
inline constexpr double kGradCheckAbsFloor = 1e-8;
inline constexpr double kGradCheckStep = 1e-6;

struct GradCheckResult {
    CellKind kind = CellKind::Rnn;
    std::uint64_t seed = 0;
    std::size_t steps = 0;
    std::size_t input_dim = 0;
    std::size_t hidden_dim = 0;
    /// Largest relative error among elements whose absolute error exceeds the floor.
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
    bool passed = true;
};

/// Random cell of the given kind and shape (batch of two, random hyperparameters,
/// schedule and initial state with m_0 > 0), loss sum(r * h_T) + 0.5 ||h_T||^2. An element passes when its
/// relative error is within tolerance or its absolute error within the floor.
/// `perturb` is added to every analytic gradient entry (negative control).
GradCheckResult gradient_check_instance(CellKind kind, std::uint64_t seed, std::size_t steps,
                                        std::size_t input_dim, std::size_t hidden_dim,
                                        double perturb = 0.0);

}  // namespace momentum
