#include "cnv/generator_algebra.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/numeric/odeint.hpp>
#include <unsupported/Eigen/MatrixFunctions>

#include "cnv/error.hpp"

namespace cnv {

namespace {

double mixed_pgf(std::span<const double> x, const InheritanceFamily& family, double s) {
  double acc = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (x[k] != 0.0) acc += x[k] * family.pgf(static_cast<int>(k), s);
  }
  return acc;
}

double mixed_perturbation_pgf(std::span<const double> x, const InheritanceFamily& family, double s) {
  double acc = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (x[k] != 0.0) acc += x[k] * family.perturbation_pgf(static_cast<int>(k), s);
  }
  return acc;
}

Vector6 to_eigen(const MomentVector& m) { return Vector6(m.entries.data()); }

MomentVector from_eigen(const Vector6& v) {
  MomentVector m;
  for (int i = 0; i < 6; ++i) m.entries[i] = v(i);
  return m;
}

std::vector<double> residual_grid() {
  std::vector<double> g;
  for (int i = 1; i <= 50; ++i) g.push_back(0.02 * i);
  return g;
}

}  // namespace

double g1_psi(std::span<const double> x, const InheritanceFamily& family, double s) {
  const double mixed = mixed_pgf(x, family, s);
  return 0.5 * (mixed * mixed - generating_function(x, s));
}

double g1_psi_product(std::span<const double> x, const InheritanceFamily& family, double s, double r) {
  return generating_function(x, s) * g1_psi(x, family, r) + generating_function(x, r) * g1_psi(x, family, s);
}

double g0_psi(std::span<const double> x, const InheritanceFamily& family, double s) {
  return mixed_pgf(x, family, s) * mixed_perturbation_pgf(x, family, s);
}

double g0_psi_product(std::span<const double> x, const InheritanceFamily& family, double s, double r,
                      double second_order_weight) {
  const double u = s + r - s * r;
  const double psi_s = generating_function(x, s);
  const double psi_r = generating_function(x, r);
  const double mix_s = mixed_pgf(x, family, s);
  const double mix_r = mixed_pgf(x, family, r);
  const double mix_u = mixed_pgf(x, family, u);
  const double first = psi_s * g0_psi(x, family, r) + psi_r * g0_psi(x, family, s);
  const double second = mix_u * mix_u - psi_s * mix_r * mix_r - psi_r * mix_s * mix_s + generating_function(x, u);
  return first + second_order_weight * second;
}

MomentMatrices build_moment_matrices(const MomentParams& p, double n, MomentMatrixForm form) {
  MomentMatrices mm;
  mm.params = p;
  mm.n = n;
  mm.form = form;
  const double a = p.alpha;

  mm.m1.setZero();
  mm.m1(2, 1) = 0.25;
  mm.m1(2, 2) = -0.5 * (1.0 - 2.0 * p.a2);
  mm.m1(4, 3) = 0.25;
  mm.m1(4, 4) = -0.5 * (1.0 - 2.0 * p.a2);
  mm.m1(5, 4) = 1.5 * p.a2;
  mm.m1(5, 5) = -0.5 * (1.0 - 2.0 * p.a3);

  mm.m0.setZero();
  mm.m0(0, 0) = a;
  mm.m0(1, 0) = 1.0;
  mm.m0(1, 1) = 2.0 * a - 0.75;
  mm.m0(1, 2) = p.a2 + 0.5;
  mm.m0(2, 1) = a;
  mm.m0(2, 2) = p.b2;
  mm.m0(3, 1) = 3.0;
  mm.m0(3, 3) = 3.0 * a - 2.25;
  mm.m0(3, 4) = 3.0 * (p.a2 + 0.5);
  if (form == MomentMatrixForm::derived) {
    mm.m0(4, 1) = 0.5;
    mm.m0(4, 2) = 2.0 * p.a2 + 1.0;
    mm.m0(4, 3) = a - 0.25;
    mm.m0(4, 4) = a + p.b2 + 0.5 * (p.a2 - 1.0);
    mm.m0(4, 5) = p.a3 + 0.5;
  } else {
    mm.m0(4, 1) = -0.5;
    mm.m0(4, 2) = -(2.0 * p.a2 + 1.0);
    mm.m0(4, 3) = 0.5 * (0.5 + 2.0 * a);
    mm.m0(4, 4) = p.a2 - p.b2 + 0.5 * (1.0 - 2.0 * a);
  }
  mm.m0(5, 4) = 3.0 * a * p.a2 + 1.5 * p.b2;
  mm.m0(5, 5) = p.b3;
  return mm;
}

MomentVector g1_moments(const MomentVector& m, double a2, double a3) {
  MomentParams p;
  p.a2 = a2;
  p.a3 = a3;
  return from_eigen(build_moment_matrices(p, 1.0).m1 * to_eigen(m));
}

MomentVector g0_moments(const MomentVector& m, const MomentParams& params, MomentMatrixForm form) {
  return from_eigen(build_moment_matrices(params, 0.0, form).m0 * to_eigen(m));
}

MomentVector moment_flow(const MomentVector& m0, const MomentMatrices& matrices, double t) {
  if (!(t >= 0.0)) throw ValidationError("moment flow time must be nonnegative");
  if (t == 0.0) return m0;
  const Matrix6 a = matrices.combined();
  Eigen::EigenSolver<Matrix6> es(a);
  if (es.info() == Eigen::Success) {
    const Eigen::Matrix<std::complex<double>, 6, 6> v = es.eigenvectors();
    Eigen::JacobiSVD<Eigen::Matrix<std::complex<double>, 6, 6>> svd(v);
    const auto& sv = svd.singularValues();
    const double cond = sv(0) / sv(5);
    if (std::isfinite(cond) && cond < 1e8) {
      Eigen::Matrix<std::complex<double>, 6, 1> lam = es.eigenvalues();
      for (int i = 0; i < 6; ++i) lam(i) = std::exp(lam(i) * t);
      const Eigen::Matrix<std::complex<double>, 6, 1> coeffs = v.partialPivLu().solve(to_eigen(m0).cast<std::complex<double>>());
      const Eigen::Matrix<std::complex<double>, 6, 1> out = v * lam.cwiseProduct(coeffs);
      return from_eigen(out.real());
    }
  }
  const Matrix6 e = (a * t).exp();
  return from_eigen(e * to_eigen(m0));
}

std::vector<std::complex<double>> eigen_analysis(const MomentMatrices& matrices) {
  Eigen::EigenSolver<Matrix6> es(matrices.combined(), false);
  if (es.info() != Eigen::Success) throw RuntimeLimitError("eigenvalue iteration did not converge");
  std::vector<std::complex<double>> out(es.eigenvalues().data(), es.eigenvalues().data() + 6);
  std::sort(out.begin(), out.end(), [](auto a, auto b) {
    if (a.real() != b.real()) return a.real() > b.real();
    return a.imag() > b.imag();
  });
  return out;
}

FixedPointLaw xi_map(FixedPointKind kind, double z) {
  if (!(z >= 0.0)) throw ValidationError("fixed-point mean must be nonnegative");
  FixedPointLaw law{kind, z, {}};
  if (z == 0.0) {
    law.table = {1.0};
    return law;
  }
  // Stop once the tail mass is below 1e-12 and the current term no longer
  // moves the first three factorial moments.
  constexpr double tail = 1e-12;
  auto more = [&](int k, double cumulative, double mass) {
    const double kk = static_cast<double>(k);
    return cumulative < 1.0 - tail || kk <= z || mass * kk * kk * kk > 1e-18;
  };
  double cumulative = 0.0;
  if (kind == FixedPointKind::poisson) {
    double p = std::exp(-z);
    for (int k = 0; k == 0 || more(k, cumulative, law.table.back()); ++k) {
      law.table.push_back(p);
      cumulative += p;
      p *= z / (k + 1.0);
      if (k > 100000) break;
    }
  } else {
    const double p = 2.0 / (2.0 + z);
    const double q = 1.0 - p;
    double qk = 1.0;
    for (int k = 0; k == 0 || more(k, cumulative, law.table.back()); ++k) {
      const double mass = (k + 1.0) * p * p * qk;
      law.table.push_back(mass);
      cumulative += mass;
      qk *= q;
      if (k > 1000000) break;
    }
  }
  return law;
}

FixedPointKind fixed_point_kind(const InheritanceFamily& family) {
  switch (family.kind()) {
    case FamilyKind::binomial_biased: return FixedPointKind::poisson;
    case FamilyKind::uniform: return FixedPointKind::negative_binomial;
    default: throw ValidationError("only binomial-biased and uniform families have a tabulated fast equilibrium");
  }
}

double poisson_residual(std::span<const double> x) {
  double worst = 0.0;
  for (double s : residual_grid()) {
    const double half = generating_function(x, 0.5 * s);
    worst = std::max(worst, std::abs(half * half - generating_function(x, s)));
  }
  return worst;
}

double negbin_residual(std::span<const double> x) {
  using boost::math::quadrature::gauss_kronrod;
  auto psi = [x](double s) { return generating_function(x, s); };
  double worst = 0.0;
  for (double t : residual_grid()) {
    double error = 0.0;
    const double integral = gauss_kronrod<double, 15>::integrate(psi, 0.0, t, 30, 1e-12, &error);
    const double avg = integral / t;
    worst = std::max(worst, std::abs(avg * avg - generating_function(x, t)));
  }
  return worst;
}

SlowCoefficients g0_phi_coefficients(std::span<const double> x, double alpha, double a2) {
  const double r1 = factorial_moment(x, 1);
  const double r2 = factorial_moment(x, 2);
  return {alpha * r1, (a2 + 0.5) * r2 + r1 - 0.75 * r1 * r1};
}

BetaSolution beta_ode(double z, std::span<const double> t_grid) {
  if (!std::is_sorted(t_grid.begin(), t_grid.end()) || (!t_grid.empty() && t_grid.front() < 0.0)) {
    throw ValidationError("beta ODE grid must be sorted and nonnegative");
  }
  // Power series beta = sum c_n t^n from the ODE itself:
  //   c_0 = 1, c_1 = -z/2, (n - 1) c_n = sum_{i=1}^{n-1} c_i c_{n-i}.
  constexpr int terms = 40;
  std::vector<double> c(terms, 0.0);
  c[0] = 1.0;
  c[1] = -0.5 * z;
  for (int n = 2; n < terms; ++n) {
    double acc = 0.0;
    for (int i = 1; i < n; ++i) acc += c[i] * c[n - i];
    c[n] = acc / (n - 1);
  }
  auto series = [&c](double t) {
    double acc = 0.0;
    for (int n = terms; n-- > 0;) acc = acc * t + c[n];
    return acc;
  };
  // Radius of convergence is 2/z; stay well inside it.
  const double t0 = std::min(1e-3, z > 0.0 ? 0.05 / z : 1e-3);

  BetaSolution out;
  using State = std::array<double, 1>;
  auto rhs = [](const State& b, State& db, double t) { db[0] = b[0] * (b[0] - 1.0) / t; };
  namespace odeint = boost::numeric::odeint;
  auto stepper = odeint::make_controlled(1e-13, 1e-13, odeint::runge_kutta_dopri5<State>());
  State b{series(t0)};
  double t = t0;
  for (double target : t_grid) {
    out.times.push_back(target);
    out.closed_form.push_back(1.0 / (1.0 + 0.5 * target * z));
    if (target <= t0) {
      out.numeric.push_back(series(target));
      continue;
    }
    if (target > t) {
      odeint::integrate_adaptive(stepper, rhs, b, t, target, 1e-3);
      t = target;
    }
    out.numeric.push_back(b[0]);
  }
  return out;
}

}  // namespace cnv
