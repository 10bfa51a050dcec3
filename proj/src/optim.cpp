#include "momentum/training.hpp"

#include <cmath>
#include <stdexcept>

namespace momentum {

std::string_view to_string(OptimizerKind kind) {
    switch (kind) {
        case OptimizerKind::Sgd: return "sgd";
        case OptimizerKind::RmsProp: return "rmsprop";
        case OptimizerKind::Adam: return "adam";
    }
    return "unknown";
}

std::optional<OptimizerKind> parse_optimizer_kind(std::string_view name) {
    if (name == "sgd") return OptimizerKind::Sgd;
    if (name == "rmsprop") return OptimizerKind::RmsProp;
    if (name == "adam") return OptimizerKind::Adam;
    return std::nullopt;
}

void OptimizerConfig::validate() const {
    if (!(lr > 0.0) || !std::isfinite(lr)) throw std::invalid_argument("optim.lr must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("optim.momentum must be in [0, 1)");
    if (!(alpha >= 0.0 && alpha < 1.0)) throw std::invalid_argument("optim.alpha must be in [0, 1)");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw std::invalid_argument("optim.beta1 must be in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw std::invalid_argument("optim.beta2 must be in [0, 1)");
    if (!(eps > 0.0)) throw std::invalid_argument("optim.eps must be > 0");
}

void optimizer_step(const OptimizerConfig& config, OptimizerState& state,
                    std::span<const std::span<double>> params,
                    std::span<const std::span<const double>> grads) {
    if (params.size() != grads.size()) throw ShapeError("optimizer_step: parameter/gradient count mismatch");
    if (state.first.empty()) {
        for (const auto& p : params) {
            state.first.emplace_back(p.size(), 0.0);
            state.second.emplace_back(p.size(), 0.0);
        }
    }
    if (state.first.size() != params.size()) throw ShapeError("optimizer_step: state does not match parameters");
    ++state.t;

    const double bias1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.t));
    const double bias2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.t));

    for (std::size_t k = 0; k < params.size(); ++k) {
        auto theta = params[k];
        const auto g = grads[k];
        auto& m1 = state.first[k];
        auto& m2 = state.second[k];
        if (theta.size() != g.size() || m1.size() != g.size()) {
            throw ShapeError("optimizer_step: shape mismatch in parameter " + std::to_string(k));
        }
        switch (config.kind) {
            case OptimizerKind::Sgd:
                for (std::size_t i = 0; i < g.size(); ++i) {
                    m1[i] = config.momentum * m1[i] + config.lr * g[i];
                    theta[i] -= m1[i];
                }
                break;
            case OptimizerKind::RmsProp:
                for (std::size_t i = 0; i < g.size(); ++i) {
                    m2[i] = config.alpha * m2[i] + (1.0 - config.alpha) * g[i] * g[i];
                    theta[i] -= config.lr * g[i] / (std::sqrt(m2[i]) + config.eps);
                }
                break;
            case OptimizerKind::Adam:
                for (std::size_t i = 0; i < g.size(); ++i) {
                    m1[i] = config.beta1 * m1[i] + (1.0 - config.beta1) * g[i];
                    m2[i] = config.beta2 * m2[i] + (1.0 - config.beta2) * g[i] * g[i];
                    const double mhat = m1[i] / bias1;
                    const double vhat = m2[i] / bias2;
                    theta[i] -= config.lr * mhat / (std::sqrt(vhat) + config.eps);
                }
                break;
        }
    }
}

void optimizer_step(const OptimizerConfig& config, OptimizerState& state, Model& params,
                    const Model& grads) {
    std::vector<std::span<double>> p;
    std::vector<std::span<const double>> g;
    params.visit([&](std::string_view, std::span<double> s) { p.push_back(s); });
    grads.visit([&](std::string_view, std::span<const double> s) { g.push_back(s); });
    optimizer_step(config, state, p, g);
}

}  // namespace momentum
