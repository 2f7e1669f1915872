#pragma once

#include <algorithm>
#include <cmath>
#include <utility>

#include "rpo/errors.hpp"
#include "rpo/market_data.hpp"
#include "rpo/portfolio.hpp"

namespace rpo {

enum class RatioKind { sharpe, sortino };

inline const char* to_string(RatioKind k) { return k == RatioKind::sharpe ? "sharpe" : "sortino"; }

inline RatioKind ratio_kind_from_string(const std::string& name) {
    if (name == "sharpe") return RatioKind::sharpe;
    if (name == "sortino") return RatioKind::sortino;
    throw ConfigError("unknown ratio kind '" + name + "'");
}

/// Exponentially weighted first and second moments driving the differential
/// Sharpe/Sortino reward. A is the return EMA; B tracks the squared return
/// (Sharpe) or squared downside deviation below r_f (Sortino).
struct DifferentialRatioState {
    double A = 0.0;
    double B = 0.0;
    double eta = 1.0 / 252.0;
    RatioKind kind = RatioKind::sharpe;
    double r_f = 0.0;
    long steps = 0;

    /// Updates that only seed the moment estimates and emit reward 0.
    static constexpr long kWarmupSteps = 5;
    /// Floor on B - A^2 below which the reward is defined as 0.
    static constexpr double kVarianceFloor = 1e-12;

    static DifferentialRatioState make(RatioKind kind, double eta, double r_f) {
        if (!(eta > 0.0 && eta <= 1.0)) throw ConfigError("eta must lie in (0, 1]");
        DifferentialRatioState st;
        st.kind = kind;
        st.eta = eta;
        st.r_f = r_f;
        return st;
    }
};

/// One step of the differential ratio recursion. Returns the reward for
/// portfolio return `R_t` and the advanced state:
///
///   D_t = (B * dA - A * dB / 2) / (B - A^2)^(3/2)
///   dA = R_t - A,  dB = R_t^2 - B   (Sortino: dB = min(R_t, r_f)^2 - B)
///
/// The reward is 0 during warm-up and whenever B - A^2 falls below the
/// variance floor (constant-return streams stay total rather than erroring).
inline std::pair<double, DifferentialRatioState> differential_update(const DifferentialRatioState& state, double R_t) {
    const double delta_a = R_t - state.A;
    const double downside = std::min(R_t, state.r_f);
    const double second = state.kind == RatioKind::sharpe ? R_t * R_t : downside * downside;
    const double delta_b = second - state.B;

    double reward = 0.0;
    const double var = state.B - state.A * state.A;
    if (state.steps >= DifferentialRatioState::kWarmupSteps && var > DifferentialRatioState::kVarianceFloor) {
        reward = (state.B * delta_a - 0.5 * state.A * delta_b) / std::pow(var, 1.5);
    }

    DifferentialRatioState next = state;
    next.A += state.eta * delta_a;
    next.B += state.eta * delta_b;
    next.steps += 1;
    return {reward, next};
}

/// Responsibility performance ratio p_r = (w's)/(u's) - 1 with u uniform.
/// Positive when the portfolio scores above the equal-weight benchmark.
inline double performance_ratio(const PortfolioWeights& w, const Eigen::VectorXd& scores_today) {
    if (scores_today.size() != w.size()) throw ConfigError("score vector size mismatch");
    if (scores_today.minCoeff() < 0.0) throw UndefinedScoreError("scores must be non-negative");
    const double mean_score = scores_today.mean();
    if (!(mean_score > 0.0)) throw UndefinedScoreError("responsibility scores sum to zero");
    return w.w.dot(scores_today) / mean_score - 1.0;
}

enum class UtilityMode { none, additive, multiplicative };

inline const char* to_string(UtilityMode m) {
    switch (m) {
        case UtilityMode::none: return "none";
        case UtilityMode::additive: return "additive";
        case UtilityMode::multiplicative: return "multiplicative";
    }
    return "?";
}

inline UtilityMode utility_mode_from_string(const std::string& name) {
    if (name == "none") return UtilityMode::none;
    if (name == "additive") return UtilityMode::additive;
    if (name == "multiplicative") return UtilityMode::multiplicative;
    throw ConfigError("unknown utility mode '" + name + "'");
}

/// How the responsibility term enters the per-step reward.
struct UtilityConfig {
    UtilityMode mode = UtilityMode::none;
    ScoreKind score_kind = ScoreKind::esg;
    double alpha = 0.1;
};

/// Compose the financial reward with the responsibility ratio:
///   none           -> d_t
///   additive       -> d_t + alpha * (w's)/(u's)
///   multiplicative -> d_t * (w's)/(u's)
inline double compose_reward(double d_t, const PortfolioWeights& w, const Eigen::VectorXd& scores_today,
                             const UtilityConfig& config) {
    if (config.mode == UtilityMode::none) return d_t;
    const double ratio = performance_ratio(w, scores_today) + 1.0;
    if (config.mode == UtilityMode::additive) return d_t + config.alpha * ratio;
    return d_t * ratio;
}

}  // namespace rpo
