#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <vector>

#include "rpo/errors.hpp"
#include "rpo/market_data.hpp"
#include "rpo/portfolio.hpp"
#include "rpo/qp.hpp"

namespace rpo {

/// Responsibility preferences shared by the ESG-aware optimizers: which score
/// column to use, the sensitivity alpha, and the uniform benchmark weights.
struct ResponsibilityConfig {
    ScoreKind score_kind = ScoreKind::esg;
    double alpha = 0.0;
    Eigen::VectorXd uniform;

    static ResponsibilityConfig make(ScoreKind kind, double alpha, Eigen::Index n_assets) {
        if (alpha < 0.0) throw ConfigError("alpha must be >= 0");
        if (n_assets <= 0) throw ConfigError("need at least one asset");
        return ResponsibilityConfig{kind, alpha, Eigen::VectorXd::Constant(n_assets, 1.0 / double(n_assets))};
    }
};

namespace mvo_detail {

inline void append_rows(Eigen::MatrixXd& A, Eigen::VectorXd& b, const Eigen::MatrixXd& rows,
                        const Eigen::VectorXd& rhs) {
    const Eigen::Index old = A.rows();
    A.conservativeResize(old + rows.rows(), rows.cols());
    A.bottomRows(rows.rows()) = rows;
    b.conservativeResize(old + rhs.size());
    b.tail(rhs.size()) = rhs;
}

inline PortfolioWeights solve_simplex_qp(const Eigen::MatrixXd& Q, const Eigen::VectorXd& c,
                                         const std::vector<std::pair<Eigen::VectorXd, double>>& extra_ineq) {
    const Eigen::Index n = c.size();
    QpProblem p;
    p.Q = Q;
    p.c = c;
    p.A_eq = Eigen::MatrixXd::Ones(1, n);
    p.b_eq = Eigen::VectorXd::Ones(1);
    p.A_in = Eigen::MatrixXd::Identity(n, n);
    p.b_in = Eigen::VectorXd::Zero(n);
    for (const auto& [row, rhs] : extra_ineq) {
        Eigen::MatrixXd r = row.transpose();
        Eigen::VectorXd v(1);
        v[0] = rhs;
        append_rows(p.A_in, p.b_in, r, v);
    }
    const QpSolution sol = solve_qp(p);
    if (sol.status == QpStatus::infeasible) throw InfeasibleError("portfolio constraints are infeasible");
    if (sol.status != QpStatus::optimal)
        throw SolverError("QP did not converge (kkt residual " + std::to_string(sol.kkt_residual) + ")");
    return PortfolioWeights::from_solver(sol.x);
}

}  // namespace mvo_detail

/// Minimum-variance portfolio: min w'Sw subject to the full-investment and
/// long-only constraints, plus w'mu >= mu_star when a target is given.
inline PortfolioWeights min_variance(const MomentEstimates& moments, std::optional<double> mu_star = std::nullopt) {
    const Eigen::Index n = moments.mu.size();
    std::vector<std::pair<Eigen::VectorXd, double>> extra;
    if (mu_star) {
        if (*mu_star > moments.mu.maxCoeff()) throw InfeasibleError("target return exceeds every asset mean");
        extra.emplace_back(moments.mu, *mu_star);
    }
    return mvo_detail::solve_simplex_qp(2.0 * moments.sigma, Eigen::VectorXd::Zero(n), extra);
}

/// Max-Sharpe (tangency) portfolio with an optional responsibility term,
/// solved through the variable change y = kappa * w that turns the ratio
/// objective into a convex QP:
///
///   min_y y'Sy - alpha * (y's) / (u's)   s.t.  (mu - r_f)'y = 1, y >= 0
///
/// Weights are recovered as w = y / sum(y). With use_semi the downside
/// semicovariance replaces the sample covariance (Sortino-style objective).
inline PortfolioWeights tangency_exact(const MomentEstimates& moments, double r_f, const ResponsibilityConfig& resp,
                                       const Eigen::VectorXd& scores_today, bool use_semi = false) {
    const Eigen::Index n = moments.mu.size();
    if (scores_today.size() != n) throw ConfigError("score vector size mismatch");
    const Eigen::VectorXd mu_hat = moments.mu.array() - r_f;
    if (mu_hat.maxCoeff() <= 0.0) throw DegenerateMarketError("no asset with expected return above r_f");

    const Eigen::MatrixXd& cov = use_semi ? moments.sigma_semi : moments.sigma;

    // Solve in v = gamma*y with gamma = max|mu_hat| so the budget row and the
    // iterates stay well scaled; w = v / sum(v) is invariant to gamma.
    const double gamma = mu_hat.cwiseAbs().maxCoeff();
    const double mean_score = resp.uniform.dot(scores_today);
    Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
    if (resp.alpha != 0.0) {
        if (!(mean_score > 0.0)) throw UndefinedScoreError("responsibility scores sum to zero");
        c = -(resp.alpha * gamma / mean_score) * scores_today;
    }

    QpProblem p;
    p.Q = 2.0 * cov;
    p.c = c;
    p.A_eq = (mu_hat / gamma).transpose();
    p.b_eq = Eigen::VectorXd::Ones(1);
    p.A_in = Eigen::MatrixXd::Identity(n, n);
    p.b_in = Eigen::VectorXd::Zero(n);

    const QpSolution sol = solve_qp(p);
    if (sol.status == QpStatus::infeasible) throw InfeasibleError("tangency transform infeasible");
    if (sol.status != QpStatus::optimal) throw SolverError("tangency QP did not converge");
    const double kappa = sol.x.sum();
    if (!(kappa > 0.0)) throw SolverError("recovered kappa is not positive");
    return PortfolioWeights::from_solver(sol.x / kappa);
}

/// Risk-aversion relaxation of the Sharpe objective:
///
///   max_w mu'w - lambda * w'Sw + alpha * (w's)/(u's)   on the simplex.
inline PortfolioWeights tangency_relaxed(const MomentEstimates& moments, double lambda,
                                         const ResponsibilityConfig& resp, const Eigen::VectorXd& scores_today,
                                         bool use_semi = false) {
    const Eigen::Index n = moments.mu.size();
    if (!(lambda > 0.0)) throw ConfigError("lambda must be positive");
    if (scores_today.size() != n) throw ConfigError("score vector size mismatch");

    const Eigen::MatrixXd& cov = use_semi ? moments.sigma_semi : moments.sigma;
    Eigen::VectorXd c = -moments.mu;
    if (resp.alpha != 0.0) {
        const double mean_score = resp.uniform.dot(scores_today);
        if (!(mean_score > 0.0)) throw UndefinedScoreError("responsibility scores sum to zero");
        c -= (resp.alpha / mean_score) * scores_today;
    }
    return mvo_detail::solve_simplex_qp(2.0 * lambda * cov, c, {});
}

/// One point of an efficient-frontier sweep.
struct FrontierPoint {
    double target_return = 0.0;  // requested floor on w'mu
    double risk = 0.0;           // sqrt(w' Sigma w) at the optimum
    double ret = 0.0;            // achieved w'mu
    Eigen::VectorXd w;
};

/// Sweep min-variance portfolios across `points` target returns between the
/// lowest and highest asset means. With esg_floor set, each solve adds
/// w's >= esg_floor * (u's). Infeasible (or non-converged) targets are
/// skipped; an entirely empty sweep raises EmptyFrontierError.
inline std::vector<FrontierPoint> frontier_sweep(const MomentEstimates& moments, std::optional<double> esg_floor,
                                                 const Eigen::VectorXd& scores_today, int points) {
    const Eigen::Index n = moments.mu.size();
    if (points < 2) throw ConfigError("frontier needs at least 2 points");
    if (scores_today.size() != n) throw ConfigError("score vector size mismatch");

    const double lo = moments.mu.minCoeff();
    const double hi = moments.mu.maxCoeff();
    const double mean_score = scores_today.mean();

    std::vector<FrontierPoint> frontier;
    for (int k = 0; k < points; ++k) {
        const double target = lo + (hi - lo) * double(k) / double(points - 1);
        QpProblem p;
        p.Q = 2.0 * moments.sigma;
        p.c = Eigen::VectorXd::Zero(n);
        p.A_eq = Eigen::MatrixXd::Ones(1, n);
        p.b_eq = Eigen::VectorXd::Ones(1);
        p.A_in = Eigen::MatrixXd::Identity(n, n);
        p.b_in = Eigen::VectorXd::Zero(n);
        Eigen::MatrixXd mu_row = moments.mu.transpose();
        Eigen::VectorXd mu_rhs(1);
        mu_rhs[0] = target;
        mvo_detail::append_rows(p.A_in, p.b_in, mu_row, mu_rhs);
        if (esg_floor) {
            Eigen::MatrixXd s_row = scores_today.transpose();
            Eigen::VectorXd s_rhs(1);
            s_rhs[0] = *esg_floor * mean_score;
            mvo_detail::append_rows(p.A_in, p.b_in, s_row, s_rhs);
        }
        const QpSolution sol = solve_qp(p);
        if (sol.status != QpStatus::optimal) continue;
        FrontierPoint pt;
        pt.target_return = target;
        pt.w = PortfolioWeights::from_solver(sol.x).w;
        pt.risk = std::sqrt(std::max(0.0, pt.w.dot(moments.sigma * pt.w)));
        pt.ret = moments.mu.dot(pt.w);
        frontier.push_back(std::move(pt));
    }
    if (frontier.empty()) throw EmptyFrontierError("every frontier target was infeasible");
    return frontier;
}

}  // namespace rpo
