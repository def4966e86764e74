#include "cnv/observables.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cnv/error.hpp"

namespace cnv {

MomentVector MomentVector::from_factorial_moments(double rho1, double rho2, double rho3) {
  MomentVector m;
  m.entries = {rho1, rho1 * rho1, rho2, rho1 * rho1 * rho1, rho2 * rho1, rho3};
  return m;
}

double factorial_moment(std::span<const double> x, int n) {
  double acc = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    double ff = 1.0;
    for (int i = 0; i < n; ++i) ff *= static_cast<double>(k) - i;
    acc += ff * x[k];
  }
  return acc;
}

double generating_function(std::span<const double> x, double s) {
  const double w = 1.0 - s;
  double acc = 0.0;
  for (std::size_t k = x.size(); k-- > 0;) acc = acc * w + x[k];
  return acc;
}

double variance(std::span<const double> x) {
  const double r1 = factorial_moment(x, 1);
  return factorial_moment(x, 2) + r1 - r1 * r1;
}

double mean_phi(const PopulationState& state) {
  const auto counts = state.counts();
  double acc = 0.0;
  for (std::size_t k = 1; k < counts.size(); ++k) acc += static_cast<double>(k) * static_cast<double>(counts[k]);
  return acc / static_cast<double>(state.size());
}

MomentVector moment_vector(std::span<const double> x) {
  return MomentVector::from_factorial_moments(factorial_moment(x, 1), factorial_moment(x, 2), factorial_moment(x, 3));
}

MomentVector moment_vector(const PopulationState& state) {
  const auto x = state.distribution();
  return moment_vector(std::span<const double>(x));
}

double empirical_pgf(const PopulationState& state, double s) {
  // Horner on the integer counts, so that psi_0 = N / N = 1 exactly.
  const auto counts = state.counts();
  const double w = 1.0 - s;
  double acc = 0.0;
  for (std::size_t k = counts.size(); k-- > 0;) acc = acc * w + static_cast<double>(counts[k]);
  return acc / static_cast<double>(state.size());
}

double tv_distance(std::span<const double> x, std::span<const double> reference) {
  const std::size_t n = std::max(x.size(), reference.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double a = k < x.size() ? x[k] : 0.0;
    const double b = k < reference.size() ? reference[k] : 0.0;
    acc += std::abs(a - b);
  }
  return std::min(1.0, 0.5 * acc);
}

double tv_distance(const PopulationState& state, std::span<const double> reference) {
  const auto x = state.distribution();
  return tv_distance(std::span<const double>(x), reference);
}

double quadratic_variation_estimate(std::span<const double> path) {
  double acc = 0.0;
  for (std::size_t i = 1; i < path.size(); ++i) {
    const double d = path[i] - path[i - 1];
    acc += d * d;
  }
  return acc;
}

OccupationMeasure::OccupationMeasure(std::vector<double> time_edges_in, std::vector<double> value_edges_in)
    : time_edges(std::move(time_edges_in)), value_edges(std::move(value_edges_in)) {
  if (time_edges.size() < 2 || value_edges.size() < 2) {
    throw ValidationError("occupation measure needs at least one time bin and one value bin");
  }
  if (!std::is_sorted(time_edges.begin(), time_edges.end()) ||
      !std::is_sorted(value_edges.begin(), value_edges.end())) {
    throw ValidationError("occupation measure bin edges must be sorted");
  }
  weights.assign(time_edges.size() - 1, std::vector<double>(value_edges.size() - 1, 0.0));
}

std::size_t OccupationMeasure::value_bin(double value) const {
  auto it = std::upper_bound(value_edges.begin(), value_edges.end(), value);
  if (it == value_edges.begin()) return 0;
  return std::min<std::size_t>(static_cast<std::size_t>(it - value_edges.begin()) - 1, value_edges.size() - 2);
}

void OccupationMeasure::add_constant(double a, double b, double value, double scale) {
  if (!(b > a)) return;
  const std::size_t vb = value_bin(value);
  for (std::size_t i = 0; i + 1 < time_edges.size(); ++i) {
    const double lo = std::max(a, time_edges[i]);
    const double hi = std::min(b, time_edges[i + 1]);
    if (hi <= lo) continue;
    weights[i][vb] += scale * (std::exp(-lo) - std::exp(-hi));
  }
}

double OccupationMeasure::total() const {
  double acc = 0.0;
  for (const auto& row : weights) acc = std::accumulate(row.begin(), row.end(), acc);
  return acc;
}

std::vector<double> OccupationMeasure::value_marginal() const {
  std::vector<double> m(value_edges.size() - 1, 0.0);
  for (const auto& row : weights) {
    for (std::size_t j = 0; j < row.size(); ++j) m[j] += row[j];
  }
  return m;
}

OccupationMeasure occupation_measure_jump(std::span<const double> times, std::span<const double> values,
                                          double horizon, std::vector<double> time_edges,
                                          std::vector<double> value_edges) {
  if (times.size() != values.size() || times.empty()) throw ValidationError("jump path needs matching times and values");
  OccupationMeasure m(std::move(time_edges), std::move(value_edges));
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double end = i + 1 < times.size() ? times[i + 1] : horizon;
    m.add_constant(times[i], std::min(end, horizon), values[i]);
  }
  return m;
}

OccupationMeasure occupation_measure_sampled(std::span<const double> times, std::span<const double> values,
                                             std::vector<double> time_edges, std::vector<double> value_edges) {
  if (times.size() != values.size() || times.empty()) throw ValidationError("sampled path needs matching times and values");
  OccupationMeasure m(std::move(time_edges), std::move(value_edges));
  auto time_bin = [&m](double t) {
    auto it = std::upper_bound(m.time_edges.begin(), m.time_edges.end(), t);
    if (it == m.time_edges.begin()) return std::size_t{0};
    return std::min<std::size_t>(static_cast<std::size_t>(it - m.time_edges.begin()) - 1, m.time_edges.size() - 2);
  };
  for (std::size_t i = 0; i + 1 < times.size(); ++i) {
    const double half = 0.5 * (times[i + 1] - times[i]);
    m.weights[time_bin(times[i])][m.value_bin(values[i])] += half * std::exp(-times[i]);
    m.weights[time_bin(times[i + 1])][m.value_bin(values[i + 1])] += half * std::exp(-times[i + 1]);
  }
  return m;
}

double occupation_distance(const OccupationMeasure& a, const OccupationMeasure& b) {
  if (a.weights.size() != b.weights.size() || a.weights.front().size() != b.weights.front().size()) {
    throw ValidationError("occupation measures must share bins");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.weights.size(); ++i) {
    for (std::size_t j = 0; j < a.weights[i].size(); ++j) acc += std::abs(a.weights[i][j] - b.weights[i][j]);
  }
  return acc;
}

void OccupationAccumulator::jump(double time, double new_value) {
  target_->add_constant(last_time_, time, value_, scale_);
  last_time_ = time;
  value_ = new_value;
}

void OccupationAccumulator::finish(double horizon) {
  target_->add_constant(last_time_, horizon, value_, scale_);
  last_time_ = horizon;
}

namespace {

double kolmogorov_q(double lambda) {
  if (lambda < 1e-3) return 1.0;
  double sum = 0.0;
  double sign = 1.0;
  for (int j = 1; j <= 200; ++j) {
    const double term = sign * std::exp(-2.0 * j * j * lambda * lambda);
    sum += term;
    if (std::abs(term) < 1e-16 * std::abs(sum)) break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

}  // namespace

KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw ValidationError("KS test needs two nonempty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const auto na = static_cast<double>(a.size());
  const auto nb = static_cast<double>(b.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < a.size() || j < b.size()) {
    double v;
    if (j >= b.size() || (i < a.size() && a[i] <= b[j])) {
      v = a[i];
    } else {
      v = b[j];
    }
    while (i < a.size() && a[i] == v) ++i;
    while (j < b.size() && b[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  const double ne = std::sqrt(na * nb / (na + nb));
  return {d, kolmogorov_q((ne + 0.12 + 0.11 / ne) * d)};
}

MeanSe mean_and_se(std::span<const double> samples) {
  if (samples.empty()) return {};
  const auto n = static_cast<double>(samples.size());
  const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / n;
  if (samples.size() < 2) return {mean, 0.0};
  return {mean, std::sqrt(sample_variance(samples) / n)};
}

double sample_variance(std::span<const double> samples) {
  if (samples.size() < 2) return 0.0;
  const auto n = static_cast<double>(samples.size());
  const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / n;
  double acc = 0.0;
  for (double s : samples) acc += (s - mean) * (s - mean);
  return acc / (n - 1.0);
}

}  // namespace cnv
