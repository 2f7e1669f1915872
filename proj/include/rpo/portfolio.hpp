#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "rpo/errors.hpp"

namespace rpo {

/// Long-only, fully invested portfolio weights: w >= 0, sum(w) = 1.
struct PortfolioWeights {
    Eigen::VectorXd w;

    static constexpr double kSumTol = 1e-8;
    static constexpr double kNegTol = 1e-10;

    /// Validate and wrap a weight vector that already satisfies the invariants.
    static PortfolioWeights checked(Eigen::VectorXd v) {
        if (v.size() == 0) throw Error("empty weight vector");
        if (std::abs(v.sum() - 1.0) > kSumTol) throw Error("weights do not sum to 1");
        if (v.minCoeff() < -kNegTol) throw Error("negative weight beyond tolerance");
        return PortfolioWeights{std::move(v)};
    }

    /// Wrap an approximately feasible solver output: clip interior-point noise
    /// (small negatives) to zero and renormalize. Rejects gross violations.
    static PortfolioWeights from_solver(Eigen::VectorXd v, double slack = 1e-6) {
        if (v.size() == 0) throw Error("empty weight vector");
        if (v.minCoeff() < -slack) throw SolverError("solver weight below feasibility slack");
        v = v.cwiseMax(0.0);
        const double total = v.sum();
        if (!(total > 0.0)) throw SolverError("solver weights sum to zero");
        v /= total;
        return PortfolioWeights{std::move(v)};
    }

    static PortfolioWeights uniform(Eigen::Index n) {
        return PortfolioWeights{Eigen::VectorXd::Constant(n, 1.0 / double(n))};
    }

    Eigen::Index size() const { return w.size(); }
};

/// Map an unconstrained action vector onto the open simplex.
inline PortfolioWeights softmax_weights(const Eigen::VectorXd& raw) {
    if (raw.size() == 0) throw InvalidActionError("empty action");
    if (!raw.allFinite()) throw InvalidActionError("action contains NaN or Inf");
    Eigen::VectorXd e = (raw.array() - raw.maxCoeff()).exp();
    e /= e.sum();
    return PortfolioWeights{std::move(e)};
}

}  // namespace rpo
