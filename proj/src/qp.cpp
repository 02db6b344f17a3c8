#include "spd/qp.hpp"

#include "spd/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace spd {

double KktCertificate::max() const noexcept {
    return std::max({stationarity, feasibility, complementarity});
}

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Normalised problem: min 0.5 ||B pi - d||^2  s.t.  E pi = b, pi >= 0.
struct Problem {
    MatrixXd B;
    VectorXd d;
    MatrixXd E;
    VectorXd b;
};

std::vector<Eigen::Index> support_of(const std::vector<bool>& free) {
    std::vector<Eigen::Index> idx;
    for (std::size_t j = 0; j < free.size(); ++j)
        if (free[j]) idx.push_back(static_cast<Eigen::Index>(j));
    return idx;
}

MatrixXd take_columns(const MatrixXd& m, const std::vector<Eigen::Index>& cols) {
    MatrixXd out(m.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = m.col(cols[k]);
    return out;
}

double half_sq(const Problem& p, const VectorXd& pi) { return 0.5 * (p.B * pi - p.d).squaredNorm(); }

// Orthonormal basis of the null space of `e` (p x k, p small).
MatrixXd null_space(const MatrixXd& e) {
    const Eigen::Index k = e.cols();
    Eigen::ColPivHouseholderQR<MatrixXd> qr(e.transpose());
    qr.setThreshold(1e-13);
    const Eigen::Index rank = qr.rank();
    MatrixXd q = qr.householderQ() * MatrixXd::Identity(k, k);
    return q.rightCols(k - rank);
}

// Feasible starting point: best vertex, or best two-vertex blend that meets
// the extra equality.
VectorXd feasible_start(const Problem& p) {
    const Eigen::Index m = p.B.cols();
    VectorXd best = VectorXd::Zero(m);
    double best_obj = std::numeric_limits<double>::infinity();
    auto consider = [&](Eigen::Index j, Eigen::Index k, double theta) {
        VectorXd r = theta * p.B.col(j) - p.d;
        if (k >= 0) r += (1.0 - theta) * p.B.col(k);
        const double obj = r.squaredNorm();
        if (obj < best_obj) {
            best_obj = obj;
            best.setZero();
            best(j) += theta;
            if (k >= 0) best(k) += 1.0 - theta;
        }
    };
    if (p.E.rows() == 1) {
        for (Eigen::Index j = 0; j < m; ++j) consider(j, -1, 1.0);
        return best;
    }
    const VectorXd& a = p.E.row(1).transpose();
    const double rhs = p.b(1);
    const double tol = 1e-13 * std::max(1.0, std::abs(rhs));
    for (Eigen::Index j = 0; j < m; ++j) {
        if (std::abs(a(j) - rhs) <= tol) consider(j, -1, 1.0);
        for (Eigen::Index k = 0; k < m; ++k) {
            if (a(j) < rhs && rhs < a(k)) consider(j, k, (a(k) - rhs) / (a(k) - a(j)));
        }
    }
    if (!std::isfinite(best_obj))
        throw Error(ErrorCode::Infeasible, "no feasible starting point for the equality constraint");
    return best;
}

struct Multipliers {
    VectorXd lambda;  // bound multipliers, one per variable
};

Multipliers multipliers(const Problem& p, const VectorXd& pi, const std::vector<Eigen::Index>& support) {
    const VectorXd g = p.B.transpose() * (p.B * pi - p.d);
    const MatrixXd es = take_columns(p.E, support);
    VectorXd gs(static_cast<Eigen::Index>(support.size()));
    for (std::size_t k = 0; k < support.size(); ++k) gs(static_cast<Eigen::Index>(k)) = g(support[k]);
    const VectorXd nu = es.transpose().completeOrthogonalDecomposition().solve(gs);
    return {g - p.E.transpose() * nu};
}

KktCertificate certify(const Problem& p, const VectorXd& pi, const std::vector<bool>& free,
                       const VectorXd& lambda) {
    KktCertificate c;
    for (Eigen::Index j = 0; j < pi.size(); ++j) {
        if (free[static_cast<std::size_t>(j)])
            c.stationarity = std::max(c.stationarity, std::abs(lambda(j)));
        else
            c.stationarity = std::max(c.stationarity, std::max(0.0, -lambda(j)));
        c.feasibility = std::max(c.feasibility, std::max(0.0, -pi(j)));
        c.complementarity = std::max(c.complementarity, std::abs(pi(j) * lambda(j)));
    }
    const VectorXd eq = p.E * pi - p.b;
    c.feasibility = std::max(c.feasibility, eq.cwiseAbs().maxCoeff());
    return c;
}

}  // namespace

QpSolution solve_weights_qp(const MatrixXd& design, const VectorXd& prices, const VectorXd& weights,
                            const std::optional<LinearEquality>& equality, double kkt_tol) {
    const Eigen::Index n = design.rows();
    const Eigen::Index m = design.cols();
    if (n == 0 || m == 0) throw Error(ErrorCode::InvalidArgument, "empty QP design matrix");
    if (prices.size() != n || weights.size() != n)
        throw Error(ErrorCode::InvalidArgument, "QP dimension mismatch");
    if (!design.allFinite() || !prices.allFinite() || !weights.allFinite())
        throw Error(ErrorCode::InvalidArgument, "QP inputs must be finite");
    if ((weights.array() < 0.0).any())
        throw Error(ErrorCode::InvalidArgument, "QP weights must be nonnegative");
    if (!(kkt_tol > 0.0)) throw Error(ErrorCode::InvalidArgument, "kkt_tol must be positive");

    Problem p;
    const double wmax = weights.maxCoeff();
    const VectorXd sw = wmax > 0.0 ? VectorXd((weights / wmax).cwiseSqrt()) : VectorXd::Zero(n);
    double scale = std::max(design.cwiseAbs().maxCoeff(), prices.cwiseAbs().maxCoeff());
    if (!(scale > 0.0)) scale = 1.0;
    p.B = sw.asDiagonal() * design / scale;
    p.d = sw.cwiseProduct(prices) / scale;

    const Eigen::Index rows = equality ? 2 : 1;
    p.E = MatrixXd::Ones(rows, m);
    p.b = VectorXd::Ones(rows);
    if (equality) {
        if (equality->coeffs.size() != m || !equality->coeffs.allFinite() || !std::isfinite(equality->rhs))
            throw Error(ErrorCode::InvalidArgument, "equality constraint has wrong size or non-finite entries");
        double sa = equality->coeffs.cwiseAbs().maxCoeff();
        if (!(sa > 0.0)) sa = 1.0;
        p.E.row(1) = equality->coeffs.transpose() / sa;
        p.b(1) = equality->rhs / sa;
        const double lo = p.E.row(1).minCoeff();
        const double hi = p.E.row(1).maxCoeff();
        const double slack = 1e-13 * std::max(1.0, std::abs(p.b(1)));
        if (p.b(1) < lo - slack || p.b(1) > hi + slack)
            throw Error(ErrorCode::Infeasible,
                        "equality target " + std::to_string(equality->rhs) +
                            " lies outside the range attainable on the simplex");
        p.b(1) = std::clamp(p.b(1), lo, hi);
    }

    VectorXd pi = feasible_start(p);
    std::vector<bool> free(static_cast<std::size_t>(m), false);
    for (Eigen::Index j = 0; j < m; ++j) free[static_cast<std::size_t>(j)] = pi(j) > 0.0;

    const int max_iter = static_cast<int>(20 * (n + m) + 100);
    const double add_tol = std::min(0.1 * kkt_tol, 1e-13);
    int iter = 0;
    VectorXd lambda = VectorXd::Zero(m);
    Eigen::Index last_added = -1;

    for (; iter < max_iter; ++iter) {
        const auto support = support_of(free);
        const MatrixXd bs = take_columns(p.B, support);
        const MatrixXd z = null_space(take_columns(p.E, support));

        bool stationary = z.cols() == 0;
        VectorXd step = VectorXd::Zero(m);
        if (!stationary) {
            const VectorXd resid = p.d - p.B * pi;
            const MatrixXd bz = bs * z;
            const VectorXd y = bz.completeOrthogonalDecomposition().solve(resid);
            const VectorXd ps = z * y;
            for (std::size_t k = 0; k < support.size(); ++k) step(support[k]) = ps(static_cast<Eigen::Index>(k));
            stationary = step.cwiseAbs().maxCoeff() <= 1e-14 * std::max(1.0, pi.cwiseAbs().maxCoeff());
        }

        if (!stationary) {
            double alpha = 1.0;
            Eigen::Index blocking = -1;
            for (Eigen::Index j : support) {
                if (step(j) < 0.0) {
                    const double t = -pi(j) / step(j);
                    if (t < alpha) {
                        alpha = t;
                        blocking = j;
                    }
                }
            }
            const VectorXd trial = pi + alpha * step;
            if (half_sq(p, trial) > half_sq(p, pi) && blocking < 0) {
                // Pure rounding noise from a rank-deficient subproblem.
                stationary = true;
            } else if (alpha <= 0.0 && blocking == last_added) {
                stationary = true;
            } else {
                pi = trial;
                if (blocking >= 0) {
                    pi(blocking) = 0.0;
                    free[static_cast<std::size_t>(blocking)] = false;
                }
                for (Eigen::Index j : support) {
                    if (pi(j) <= 0.0) {
                        pi(j) = 0.0;
                        free[static_cast<std::size_t>(j)] = false;
                    }
                }
                last_added = -1;
                if (blocking >= 0) continue;
            }
        }

        const auto sup = support_of(free);
        lambda = multipliers(p, pi, sup).lambda;
        Eigen::Index entering = -1;
        double most_negative = -add_tol;
        for (Eigen::Index j = 0; j < m; ++j) {
            if (!free[static_cast<std::size_t>(j)] && lambda(j) < most_negative) {
                most_negative = lambda(j);
                entering = j;
            }
        }
        if (entering < 0) break;
        if (entering == last_added) {
            // Entered last round and made no progress; cannot do better.
            break;
        }
        free[static_cast<std::size_t>(entering)] = true;
        last_added = entering;
    }

    // Remove the tiny drift left by the null-space steps.
    for (Eigen::Index j = 0; j < m; ++j) pi(j) = std::max(0.0, pi(j));

    QpSolution out;
    out.kkt = certify(p, pi, free, multipliers(p, pi, support_of(free)).lambda);
    out.iterations = iter;
    out.weights = pi;
    const VectorXd r = prices - design * pi;
    out.objective = weights.dot(r.cwiseProduct(r)) / static_cast<double>(n);

    if (out.kkt.max() > kkt_tol) {
        throw NonConvergenceError("QP did not reach the KKT tolerance after " + std::to_string(iter) +
                                      " iterations (residual " + std::to_string(out.kkt.max()) + ")",
                                  out.kkt.max());
    }
    return out;
}

}  // namespace spd
