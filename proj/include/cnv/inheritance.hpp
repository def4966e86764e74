#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string_view>
#include <vector>

#include "cnv/rng.hpp"

namespace cnv {

enum class FamilyKind { binomial_biased, uniform, all_or_nothing, custom_table };

std::string_view to_string(FamilyKind kind);
/// Accepts "binomial-biased", "uniform", "all-or-nothing", "custom-table".
FamilyKind parse_family_kind(std::string_view name);

/// Factorial-moment coefficients of the limit rows p_k and the perturbation
/// rows r_k:
///   rho_1(p_k) = k/2,      rho_2(p_k) = a2 k(k-1),  rho_3(p_k) = a3 k(k-1)(k-2)
///   rho_1(r_k) = alpha k,  rho_2(r_k) = b2 k(k-1),  rho_3(r_k) = b3 k(k-1)(k-2)
struct MomentParams {
  double alpha = 0.0;
  double a2 = 0.0;
  double a3 = 0.0;
  double b2 = 0.0;
  double b3 = 0.0;
};

/// Row k holds the probabilities of transmitting 0..k elements.
using CustomTable = std::vector<std::vector<double>>;

/// Parses plain-text rows `k p0 p1 ... pk`, one per line; '#' starts a comment.
/// Rows must appear for every k = 0..k_max.
CustomTable read_custom_table(const std::filesystem::path& path);

/// A family (p_k^N)_k of inheritance distributions for a population of size N,
/// together with its limit (p_k)_k and first-order perturbation (r_k)_k.
///
/// For binomial-biased families p_k^N = Binomial(k, 1/2 + alpha/N); uniform,
/// all-or-nothing and custom-table families do not depend on N (r_k = 0).
/// Instances are immutable and cheap to copy; sampling only reads shared
/// lookup tables and is safe from any number of threads given separate streams.
class InheritanceFamily {
 public:
  static InheritanceFamily make(FamilyKind kind, double alpha, std::int64_t population_size,
                                CustomTable table = {});

  FamilyKind kind() const { return kind_; }
  double bias_intensity() const { return alpha_; }
  std::int64_t population_size() const { return population_size_; }
  const MomentParams& moment_params() const { return params_; }

  /// For binomial-biased families: b2 = 1/4, b3 = -1/8, the values usually
  /// quoted for this family. They disagree with the finite-N rows (which give
  /// b2 = alpha, b3 = 3 alpha / 4); moment_params() carries the fitted values
  /// and reports carry both.
  std::optional<MomentParams> quoted_moment_params() const;

  /// Same family at a different population size (binomial bias rescales).
  InheritanceFamily with_population_size(std::int64_t population_size) const;

  /// Largest parent type the family can transmit from; unbounded unless custom.
  std::optional<int> max_parent_type() const;

  /// Per-element transmission probability of binomial-biased families.
  double transmission_probability() const;

  std::vector<double> limit_row(int k) const;
  std::vector<double> finite_row(int k) const;

  /// Draws from p_k^N.
  int sample(int k, RandomStream& rng) const;

  /// psi_s(p_k) = sum_j p_k(j) (1 - s)^j of the limit row.
  double pgf(int k, double s) const;
  /// psi_s(p_k^N).
  double finite_pgf(int k, double s) const;
  /// n-th factorial moment of the limit row, n in {1, 2, 3}.
  double factorial_moment(int k, int n) const;
  /// psi_s(r_k), the limit of N (psi_s(p_k^N) - psi_s(p_k)).
  double perturbation_pgf(int k, double s) const;

 private:
  struct Tables;

  InheritanceFamily() = default;
  void build_tables();

  FamilyKind kind_ = FamilyKind::uniform;
  double alpha_ = 0.0;
  std::int64_t population_size_ = 1;
  MomentParams params_;
  std::shared_ptr<const CustomTable> custom_;
  std::shared_ptr<const Tables> tables_;
};

struct PerturbationFit {
  double alpha = 0.0;
  double b2 = 0.0;
  double b3 = 0.0;
  /// Largest absolute deviation from the fitted polynomial form, relative to
  /// max(1, largest fitted value).
  double residual = 0.0;
};

/// Fits N_probe (rho_n(p_k^{N_probe}) - rho_n(p_k)) against k, k(k-1) and
/// k(k-1)(k-2) over k = 1..k_max using the pmf rows directly.
/// Throws ValidationError if N_probe < 1e4 or the residual exceeds 1e-4.
PerturbationFit numeric_perturbation_moments(const InheritanceFamily& family,
                                             std::int64_t n_probe, int k_max = 20);

/// Descending factorial k (k-1) ... (k-n+1).
double falling_factorial(double k, int n);

/// Binomial(k, p) probability mass function as a vector over 0..k.
std::vector<double> binomial_pmf(int k, double p);

}  // namespace cnv
