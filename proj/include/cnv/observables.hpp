#pragma once

#include <array>
#include <span>
#include <vector>

#include "cnv/population.hpp"

namespace cnv {

/// Probability vector on {0, 1, 2, ...}; entry k is the mass at k.
using Distribution = std::vector<double>;

/// (rho_1, rho_1^2, rho_2, rho_1^3, rho_2 rho_1, rho_3), the coordinates the
/// moment matrices act on.
struct MomentVector {
  std::array<double, 6> entries{};

  static MomentVector from_factorial_moments(double rho1, double rho2, double rho3);

  double rho1() const { return entries[0]; }
  double rho1_sq() const { return entries[1]; }
  double rho2() const { return entries[2]; }
  double rho1_cube() const { return entries[3]; }
  double rho2_rho1() const { return entries[4]; }
  double rho3() const { return entries[5]; }
};

/// n-th descending factorial moment sum_k k (k-1) ... (k-n+1) x_k.
double factorial_moment(std::span<const double> x, int n);
/// psi_s(x) = sum_n x_n (1 - s)^n.
double generating_function(std::span<const double> x, double s);
/// Variance rho_2 + rho_1 - rho_1^2.
double variance(std::span<const double> x);

double mean_phi(const PopulationState& state);
MomentVector moment_vector(const PopulationState& state);
MomentVector moment_vector(std::span<const double> x);
double empirical_pgf(const PopulationState& state, double s);

/// Half the l1 distance between the empirical law of the state and a
/// reference law given as a (truncated) probability table.
double tv_distance(std::span<const double> x, std::span<const double> reference);
double tv_distance(const PopulationState& state, std::span<const double> reference);

/// Sum of squared increments of a grid-sampled path.
double quadratic_variation_estimate(std::span<const double> path);

/// e^{-s}-weighted time-state occupation measure on [0, T] x value bins.
///
/// weights[i][j] is the mass of time bin [time_edges[i], time_edges[i+1])
/// and value bin [value_edges[j], value_edges[j+1]). Values below the first
/// edge count toward the first bin, values at or above the last edge toward
/// the last bin.
struct OccupationMeasure {
  std::vector<double> time_edges;
  std::vector<double> value_edges;
  std::vector<std::vector<double>> weights;

  OccupationMeasure(std::vector<double> time_edges, std::vector<double> value_edges);

  /// Adds the mass of the constant value v on [a, b).
  void add_constant(double a, double b, double value, double scale = 1.0);
  double total() const;
  std::size_t value_bin(double value) const;
  /// Marginal on value bins.
  std::vector<double> value_marginal() const;
};

/// Jump path: value[i] holds on [times[i], times[i+1]), the last value up to
/// the horizon. Integrates e^{-s} exactly across constancy intervals.
OccupationMeasure occupation_measure_jump(std::span<const double> times, std::span<const double> values,
                                          double horizon, std::vector<double> time_edges,
                                          std::vector<double> value_edges);

/// Grid-sampled path (diffusions): trapezoidal rule for e^{-s} 1{xi_s in A}.
OccupationMeasure occupation_measure_sampled(std::span<const double> times, std::span<const double> values,
                                             std::vector<double> time_edges, std::vector<double> value_edges);

/// l1 distance between two measures on the same bins.
double occupation_distance(const OccupationMeasure& a, const OccupationMeasure& b);

/// Incrementally integrates a jump path into an occupation measure.
class OccupationAccumulator {
 public:
  OccupationAccumulator(OccupationMeasure& target, double start_value, double scale = 1.0)
      : target_(&target), value_(start_value), scale_(scale) {}
  void jump(double time, double new_value);
  void finish(double horizon);

 private:
  OccupationMeasure* target_;
  double last_time_ = 0.0;
  double value_;
  double scale_;
};

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// Two-sample Kolmogorov-Smirnov test, ties handled by advancing over equal
/// values in both samples before taking the ECDF difference. The p-value uses
/// the asymptotic Kolmogorov distribution with the usual small-sample
/// correction of the effective size.
KsResult ks_two_sample(std::vector<double> a, std::vector<double> b);

/// Sample mean and the standard error of the mean.
struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};
MeanSe mean_and_se(std::span<const double> samples);
double sample_variance(std::span<const double> samples);

}  // namespace cnv
