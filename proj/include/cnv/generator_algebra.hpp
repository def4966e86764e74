#pragma once

#include <complex>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "cnv/inheritance.hpp"
#include "cnv/observables.hpp"

namespace cnv {

// Closed-form actions of the fast part G1 and slow part G0 of the generator
// G^N = N G1 + G0 + o(1). Every function takes the distribution x explicitly
// and reads the family only through its limit pgf and perturbation pgf.

/// G1 psi_s(x) = 1/2 [ (sum_k x_k psi_s(p_k))^2 - psi_s(x) ].
double g1_psi(std::span<const double> x, const InheritanceFamily& family, double s);
/// G1 (psi_s psi_r) = psi_s G1 psi_r + psi_r G1 psi_s (G1 is first order).
double g1_psi_product(std::span<const double> x, const InheritanceFamily& family, double s, double r);

/// G0 psi_s(x) = (sum_k x_k psi_s(p_k)) (sum_l x_l psi_s(r_l)).
double g0_psi(std::span<const double> x, const InheritanceFamily& family, double s);

/// G0 (psi_s psi_r)(x) = psi_s G0 psi_r + psi_r G0 psi_s
///   + w [ (sum x_k psi_u(p_k))^2 - psi_s (sum x_k psi_r(p_k))^2
///         - psi_r (sum x_k psi_s(p_k))^2 + psi_u(x) ],   u = s + r - s r.
/// The exact second-order term of the generator gives w = 1/2. The
/// commonly quoted display of this identity carries w = 1/4; pass 0.25 to
/// reproduce it.
double g0_psi_product(std::span<const double> x, const InheritanceFamily& family, double s, double r,
                      double second_order_weight = 0.5);

/// Which fifth row of M0 (the G0 action on rho_2 rho_1) to use.
///   derived: obtained from the exact second-order expansion, includes a
///            rho_3 coupling;
///   quoted:  the row as commonly quoted, kept for comparison only. It does
///            not match the exact generator.
enum class MomentMatrixForm { derived, quoted };

using Matrix6 = Eigen::Matrix<double, 6, 6>;
using Vector6 = Eigen::Matrix<double, 6, 1>;

struct MomentMatrices {
  Matrix6 m1;
  Matrix6 m0;
  MomentParams params;
  double n = 0.0;
  MomentMatrixForm form = MomentMatrixForm::derived;

  /// N M1 + M0.
  Matrix6 combined() const { return n * m1 + m0; }
};

MomentMatrices build_moment_matrices(const MomentParams& params, double n,
                                     MomentMatrixForm form = MomentMatrixForm::derived);

MomentVector g1_moments(const MomentVector& m, double a2, double a3);
MomentVector g0_moments(const MomentVector& m, const MomentParams& params,
                        MomentMatrixForm form = MomentMatrixForm::derived);

/// exp(t (N M1 + M0)) m0. Diagonalises when the eigenvector matrix has
/// condition number below 1e8, otherwise falls back to Pade scaling and
/// squaring.
MomentVector moment_flow(const MomentVector& m0, const MomentMatrices& matrices, double t);

/// Eigenvalues of N M1 + M0, sorted by real part (descending), then imaginary.
std::vector<std::complex<double>> eigen_analysis(const MomentMatrices& matrices);

enum class FixedPointKind { poisson, negative_binomial };

/// Fast-equilibrium law with mean z: Poi(z) or NB(2, 2/(2+z)), tabulated
/// until the remaining tail mass is below 1e-12 and the tail no longer moves
/// the first three factorial moments.
struct FixedPointLaw {
  FixedPointKind kind = FixedPointKind::poisson;
  double mean = 0.0;
  Distribution table;
};

FixedPointLaw xi_map(FixedPointKind kind, double z);
/// binomial-biased -> poisson, uniform -> negative_binomial.
FixedPointKind fixed_point_kind(const InheritanceFamily& family);

/// sup over s in {0.02, 0.04, ..., 1} of |psi_{s/2}(x)^2 - psi_s(x)|.
double poisson_residual(std::span<const double> x);
/// sup over t in {0.02, 0.04, ..., 1} of |((1/t) int_0^t psi_s(x) ds)^2 - psi_t(x)|,
/// integral by adaptive Gauss-Kronrod quadrature.
double negbin_residual(std::span<const double> x);

/// G0 (g o Phi)(x) = drift g'(Phi) + 1/2 g''(Phi) half_g2_coefficient with
///   drift = alpha rho_1,  half_g2_coefficient = (a2 + 1/2) rho_2 + rho_1 - 3/4 rho_1^2.
/// The second quantity is also the quadratic-variation rate of Phi.
struct SlowCoefficients {
  double drift = 0.0;
  double half_g2_coefficient = 0.0;
};
SlowCoefficients g0_phi_coefficients(std::span<const double> x, double alpha, double a2);

/// Solution of beta_t^2 - beta_t - t beta_t' = 0 with beta_0 = 1, beta'_0 = -z/2.
struct BetaSolution {
  std::vector<double> times;
  std::vector<double> numeric;
  std::vector<double> closed_form;  ///< 1 / (1 + t z / 2)
};
/// Starts from the power series of the solution at a small t0 (the ODE is
/// singular at t = 0) and integrates with an adaptive Dormand-Prince scheme.
BetaSolution beta_ode(double z, std::span<const double> t_grid);

}  // namespace cnv
