#pragma once

#include <Eigen/Dense>

#include <optional>

namespace spd {

/// Extra linear equality `coeffs . pi = rhs` on top of the simplex.
struct LinearEquality {
    Eigen::VectorXd coeffs;
    double rhs = 0.0;
};

/// First-order optimality certificate. All three residuals are measured on
/// the internally normalised problem (design and targets divided by their
/// largest magnitude, weights by their maximum) so that `kkt_tol` is a
/// scale-free threshold.
struct KktCertificate {
    double stationarity = 0.0;     ///< gradient mismatch on the support plus negative multipliers off it
    double feasibility = 0.0;      ///< bound and equality violation
    double complementarity = 0.0;  ///< max |pi_j * lambda_j|

    double max() const noexcept;
};

struct QpSolution {
    Eigen::VectorXd weights;
    double objective = 0.0;  ///< (1/n) sum_i w_i (c_i - (A pi)_i)^2 in original units
    KktCertificate kkt;
    int iterations = 0;
};

/// Weighted least squares over the probability simplex:
///
///   min_pi  sum_i w_i (c_i - (A pi)_i)^2   s.t.  pi >= 0,  sum pi = 1,  [eq.coeffs . pi = eq.rhs]
///
/// Primal active-set method. Each subproblem is solved in the null space of
/// the active equalities with a rank-revealing QR, so strongly collinear
/// columns (closely spaced lognormal atoms) do not break it.
///
/// Throws Error(Infeasible) if the equality cannot be met on the simplex and
/// NonConvergenceError if the certificate is not reached within the cap.
QpSolution solve_weights_qp(const Eigen::MatrixXd& design, const Eigen::VectorXd& prices,
                            const Eigen::VectorXd& weights,
                            const std::optional<LinearEquality>& equality = std::nullopt,
                            double kkt_tol = 1e-8);

}  // namespace spd
