#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "rpo/errors.hpp"

namespace rpo {

/// Dense convex quadratic program
///
///   minimize   1/2 x'Qx + c'x
///   subject to A_eq x  = b_eq
///              A_in x >= b_in
///
/// Q must be symmetric PSD up to small numerical tolerances; constraint
/// blocks may be empty (0 rows).
struct QpProblem {
    Eigen::MatrixXd Q;
    Eigen::VectorXd c;
    Eigen::MatrixXd A_eq;
    Eigen::VectorXd b_eq;
    Eigen::MatrixXd A_in;
    Eigen::VectorXd b_in;

    Eigen::Index n() const { return c.size(); }

    void validate() const {
        const Eigen::Index nv = n();
        if (nv == 0) throw Error("QP with zero variables");
        if (Q.rows() != nv || Q.cols() != nv) throw Error("Q shape mismatch");
        if ((Q - Q.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, Q.cwiseAbs().maxCoeff()))
            throw Error("Q not symmetric");
        if (A_eq.rows() != b_eq.size() || (A_eq.rows() > 0 && A_eq.cols() != nv))
            throw Error("equality block shape mismatch");
        if (A_in.rows() != b_in.size() || (A_in.rows() > 0 && A_in.cols() != nv))
            throw Error("inequality block shape mismatch");
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (Q + Q.transpose()), Eigen::EigenvaluesOnly);
        if (es.eigenvalues().minCoeff() < -1e-9 * std::max(1.0, Q.cwiseAbs().maxCoeff()))
            throw Error("Q indefinite beyond PSD tolerance");
    }
};

enum class QpStatus { optimal, infeasible, max_iterations };

inline const char* to_string(QpStatus s) {
    switch (s) {
        case QpStatus::optimal: return "optimal";
        case QpStatus::infeasible: return "infeasible";
        case QpStatus::max_iterations: return "max-iterations";
    }
    return "?";
}

struct QpSolution {
    Eigen::VectorXd x;
    double objective = std::numeric_limits<double>::quiet_NaN();
    QpStatus status = QpStatus::max_iterations;
    double kkt_residual = std::numeric_limits<double>::infinity();
    int iterations = 0;
};

namespace qp_detail {

struct IpmState {
    Eigen::VectorXd x, y, z, s;
    bool converged = false;
    int iterations = 0;
};

/// Max norm of the KKT residuals (stationarity, primal feasibility both
/// blocks, dual feasibility, complementarity) at a candidate point.
inline double kkt_residual(const QpProblem& p, const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                           const Eigen::VectorXd& z, double* primal_out = nullptr) {
    Eigen::VectorXd stat = p.Q * x + p.c;
    if (p.A_eq.rows() > 0) stat -= p.A_eq.transpose() * y;
    if (p.A_in.rows() > 0) stat -= p.A_in.transpose() * z;
    double res = stat.cwiseAbs().maxCoeff();
    double primal = 0.0;
    if (p.A_eq.rows() > 0) primal = std::max(primal, (p.A_eq * x - p.b_eq).cwiseAbs().maxCoeff());
    if (p.A_in.rows() > 0) {
        const Eigen::VectorXd slack = p.A_in * x - p.b_in;
        primal = std::max(primal, (-slack).cwiseMax(0.0).maxCoeff());
        res = std::max(res, slack.cwiseProduct(z).cwiseAbs().maxCoeff());
        res = std::max(res, (-z).cwiseMax(0.0).maxCoeff());
    }
    if (primal_out) *primal_out = primal;
    return std::max(res, primal);
}

inline double max_step(const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
    double alpha = 1.0;
    for (Eigen::Index i = 0; i < v.size(); ++i)
        if (dv[i] < 0.0) alpha = std::min(alpha, -v[i] / dv[i]);
    return alpha;
}

/// Mehrotra predictor-corrector on a problem with at least one inequality.
/// `orig` is the unscaled problem used for the stopping test; (obj_scale,
/// eq_row, in_row) map scaled duals back to the original problem.
inline IpmState mehrotra(const QpProblem& p, const QpProblem& orig, double obj_scale, const Eigen::VectorXd& eq_row,
                         const Eigen::VectorXd& in_row, double tol, int max_iter, double* best_kkt) {
    const Eigen::Index n = p.n(), neq = p.A_eq.rows(), nin = p.A_in.rows();
    IpmState st;

    // Start from the least-norm solution of the equalities, slacks pushed
    // strictly positive.
    st.x = Eigen::VectorXd::Zero(n);
    if (neq > 0) st.x = p.A_eq.completeOrthogonalDecomposition().solve(p.b_eq);
    st.y = Eigen::VectorXd::Zero(neq);
    st.z = Eigen::VectorXd::Ones(nin);
    st.s = (p.A_in * st.x - p.b_in).cwiseMax(1.0);

    Eigen::VectorXd best_x = st.x, best_y = st.y, best_z = st.z;
    *best_kkt = std::numeric_limits<double>::infinity();

    const Eigen::Index dim = n + neq;
    Eigen::MatrixXd M(dim, dim);
    Eigen::VectorXd rhs(dim), sol(dim);

    for (st.iterations = 0; st.iterations < max_iter; ++st.iterations) {
        // Stopping test in the original problem's units. Row scaling applied
        // a'_i = rho_i * a_i, so originals take y_i = y'_i * rho_i / beta.
        Eigen::VectorXd y_orig = st.y.cwiseProduct(eq_row) / obj_scale;
        Eigen::VectorXd z_orig = st.z.cwiseProduct(in_row) / obj_scale;
        double primal = 0.0;
        const double res = kkt_residual(orig, st.x, y_orig, z_orig, &primal);
        if (res < *best_kkt) {
            *best_kkt = res;
            best_x = st.x;
            best_y = y_orig;
            best_z = z_orig;
        }
        if (res <= tol && primal <= 1e-9) {
            st.converged = true;
            break;
        }

        const Eigen::VectorXd r_d = p.Q * st.x + p.c - p.A_eq.transpose() * st.y - p.A_in.transpose() * st.z;
        const Eigen::VectorXd r_p = p.A_eq * st.x - p.b_eq;
        const Eigen::VectorXd r_g = p.A_in * st.x - st.s - p.b_in;
        const double mu = st.s.dot(st.z) / double(nin);
        if (!std::isfinite(mu) || mu < 1e-18) break;  // stalled below progress floor

        const Eigen::VectorXd zs = st.z.cwiseQuotient(st.s);
        M.setZero();
        M.topLeftCorner(n, n) = p.Q + p.A_in.transpose() * zs.asDiagonal() * p.A_in;
        // Tiny primal regularization keeps the reduced system factorizable
        // when Q is singular on the equality null space (pure LPs).
        M.topLeftCorner(n, n).diagonal().array() += 1e-11;
        if (neq > 0) {
            M.topRightCorner(n, neq) = p.A_eq.transpose();
            M.bottomLeftCorner(neq, n) = p.A_eq;
        }
        Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
        if (!lu.isInvertible()) break;

        auto solve_direction = [&](const Eigen::VectorXd& r_c, Eigen::VectorXd& dx, Eigen::VectorXd& dy,
                                   Eigen::VectorXd& dz, Eigen::VectorXd& ds) {
            rhs.head(n) = -r_d - p.A_in.transpose() * (zs.cwiseProduct(r_g) + r_c.cwiseQuotient(st.s));
            rhs.tail(neq) = -r_p;
            sol = lu.solve(rhs);
            dx = sol.head(n);
            dy = -sol.tail(neq);
            ds = p.A_in * dx + r_g;
            dz = (-r_c - st.z.cwiseProduct(ds)).cwiseQuotient(st.s);
        };

        Eigen::VectorXd dx, dy, dz, ds;
        solve_direction(st.s.cwiseProduct(st.z), dx, dy, dz, ds);  // affine direction

        const double a_p_aff = max_step(st.s, ds);
        const double a_d_aff = max_step(st.z, dz);
        const double mu_aff = (st.s + a_p_aff * ds).dot(st.z + a_d_aff * dz) / double(nin);
        const double sigma = std::pow(std::clamp(mu_aff / mu, 0.0, 1.0), 3);

        const Eigen::VectorXd r_c =
            st.s.cwiseProduct(st.z) + ds.cwiseProduct(dz) - Eigen::VectorXd::Constant(nin, sigma * mu);
        solve_direction(r_c, dx, dy, dz, ds);

        const double eta = std::max(0.995, 1.0 - mu);
        const double a_p = std::min(1.0, eta * max_step(st.s, ds));
        const double a_d = std::min(1.0, eta * max_step(st.z, dz));
        st.x += a_p * dx;
        st.s += a_p * ds;
        st.y += a_d * dy;
        st.z += a_d * dz;
        if (!st.x.allFinite()) break;
    }

    st.x = best_x;
    st.y = best_y;  // original-problem duals from here on
    st.z = best_z;
    return st;
}

/// Phase-1 feasibility measure: minimize total constraint violation
///   min 1'(u+) + 1'(u-) + 1'v
///   s.t. A_eq x + u+ - u- = b_eq,  A_in x + v >= b_in,  u+, u-, v >= 0.
/// Zero optimum (within tolerance) certifies feasibility of the original set.
inline double phase1_violation(const QpProblem& p) {
    const Eigen::Index n = p.n(), neq = p.A_eq.rows(), nin = p.A_in.rows();
    const Eigen::Index n2 = n + 2 * neq + nin;

    QpProblem lp;
    lp.Q = Eigen::MatrixXd::Zero(n2, n2);
    lp.c = Eigen::VectorXd::Zero(n2);
    lp.c.tail(2 * neq + nin).setOnes();

    lp.A_eq = Eigen::MatrixXd::Zero(neq, n2);
    lp.b_eq = p.b_eq;
    if (neq > 0) {
        lp.A_eq.leftCols(n) = p.A_eq;
        lp.A_eq.middleCols(n, neq) = Eigen::MatrixXd::Identity(neq, neq);
        lp.A_eq.middleCols(n + neq, neq) = -Eigen::MatrixXd::Identity(neq, neq);
    }

    const Eigen::Index m2 = nin + 2 * neq + nin;
    lp.A_in = Eigen::MatrixXd::Zero(m2, n2);
    lp.b_in = Eigen::VectorXd::Zero(m2);
    if (nin > 0) {
        lp.A_in.topLeftCorner(nin, n) = p.A_in;
        lp.A_in.block(0, n + 2 * neq, nin, nin) = Eigen::MatrixXd::Identity(nin, nin);
        lp.b_in.head(nin) = p.b_in;
    }
    lp.A_in.bottomRightCorner(2 * neq + nin, 2 * neq + nin) =
        Eigen::MatrixXd::Identity(2 * neq + nin, 2 * neq + nin);

    double best = std::numeric_limits<double>::infinity();
    const auto ones_eq = Eigen::VectorXd::Ones(neq);
    const auto ones_in = Eigen::VectorXd::Ones(m2);
    const IpmState st = mehrotra(lp, lp, 1.0, ones_eq, ones_in, 1e-9, 200, &best);
    return lp.c.dot(st.x);
}

}  // namespace qp_detail

/// Solve a dense convex QP to certified KKT residuals.
///
/// Status `optimal` guarantees kkt_residual <= min(tolerance, 1e-6) and
/// primal feasibility within 1e-8. When the iteration budget runs out, a
/// phase-1 pass classifies the outcome as `infeasible` (violation > 1e-6)
/// or `max-iterations` (best iterate returned).
inline QpSolution solve_qp(const QpProblem& problem, double tolerance = 1e-9, int max_iter = 100) {
    problem.validate();

    QpProblem p = problem;
    p.Q = 0.5 * (p.Q + p.Q.transpose());
    {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(p.Q, Eigen::EigenvaluesOnly);
        const double lam_min = es.eigenvalues().minCoeff();
        if (lam_min < 0.0) p.Q.diagonal().array() += -lam_min + 1e-12;  // PSD repair
    }
    const QpProblem repaired = p;  // stopping test target

    // Equilibrate: unit objective scale, unit max-norm constraint rows.
    const double obj_mag = std::max(p.Q.cwiseAbs().maxCoeff(), p.c.size() ? p.c.cwiseAbs().maxCoeff() : 0.0);
    const double obj_scale = 1.0 / std::clamp(obj_mag, 1e-8, 1e8);
    p.Q *= obj_scale;
    p.c *= obj_scale;
    Eigen::VectorXd eq_row = Eigen::VectorXd::Ones(p.A_eq.rows());
    Eigen::VectorXd in_row = Eigen::VectorXd::Ones(p.A_in.rows());
    for (Eigen::Index i = 0; i < p.A_eq.rows(); ++i) {
        const double m = p.A_eq.row(i).cwiseAbs().maxCoeff();
        if (m > 0.0) {
            eq_row[i] = 1.0 / m;
            p.A_eq.row(i) *= eq_row[i];
            p.b_eq[i] *= eq_row[i];
        }
    }
    for (Eigen::Index i = 0; i < p.A_in.rows(); ++i) {
        const double m = p.A_in.row(i).cwiseAbs().maxCoeff();
        if (m > 0.0) {
            in_row[i] = 1.0 / m;
            p.A_in.row(i) *= in_row[i];
            p.b_in[i] *= in_row[i];
        }
    }

    QpSolution sol;
    const double opt_tol = std::min(tolerance, 1e-6);

    if (p.A_in.rows() == 0) {
        // Equality-constrained (or unconstrained) QP: one saddle-point solve.
        const Eigen::Index n = p.n(), neq = p.A_eq.rows();
        Eigen::MatrixXd K(n + neq, n + neq);
        K.setZero();
        K.topLeftCorner(n, n) = p.Q;
        if (neq > 0) {
            K.topRightCorner(n, neq) = p.A_eq.transpose();
            K.bottomLeftCorner(neq, n) = p.A_eq;
        }
        Eigen::VectorXd rhs(n + neq);
        rhs.head(n) = -p.c;
        rhs.tail(neq) = p.b_eq;
        const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(K);
        const Eigen::VectorXd u = cod.solve(rhs);
        sol.x = u.head(n);
        sol.iterations = 1;
        double primal = 0.0;
        const Eigen::VectorXd y_unscaled = (-u.tail(neq)).cwiseProduct(eq_row) / obj_scale;
        sol.kkt_residual = qp_detail::kkt_residual(repaired, sol.x, y_unscaled, Eigen::VectorXd(), &primal);
        sol.objective = 0.5 * sol.x.dot(problem.Q * sol.x) + problem.c.dot(sol.x);
        if (sol.kkt_residual <= opt_tol && primal <= 1e-8) {
            sol.status = QpStatus::optimal;
        } else if (neq > 0) {
            // Inconsistent equalities show up as an irreducible residual.
            const Eigen::VectorXd r = p.A_eq * sol.x - p.b_eq;
            sol.status = r.cwiseAbs().maxCoeff() > 1e-6 ? QpStatus::infeasible : QpStatus::max_iterations;
        } else {
            sol.status = QpStatus::max_iterations;
        }
        return sol;
    }

    double best_kkt = std::numeric_limits<double>::infinity();
    const qp_detail::IpmState st =
        qp_detail::mehrotra(p, repaired, obj_scale, eq_row, in_row, std::min(tolerance, 1e-9), max_iter, &best_kkt);

    sol.x = st.x;
    sol.iterations = st.iterations;
    sol.kkt_residual = best_kkt;
    sol.objective = 0.5 * sol.x.dot(problem.Q * sol.x) + problem.c.dot(sol.x);

    double primal = 0.0;
    qp_detail::kkt_residual(repaired, st.x, st.y, st.z, &primal);
    if (st.converged && best_kkt <= opt_tol && primal <= 1e-8) {
        sol.status = QpStatus::optimal;
        return sol;
    }

    const double violation = qp_detail::phase1_violation(p);
    sol.status = violation > 1e-6 ? QpStatus::infeasible : QpStatus::max_iterations;
    return sol;
}

}  // namespace rpo
