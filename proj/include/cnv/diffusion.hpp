#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cnv/rng.hpp"

namespace cnv {

/// Which limit of the population model a diffusion describes.
enum class LimitCase { binomial_poisson, uniform_negbin };

/// For the uniform/negative-binomial limit two squared diffusion coefficients
/// are in circulation: z(z+2) (`theorem`) and z(z+2)/2 (`derived`, from the
/// variance of the fast equilibrium). Both are simulated side by side.
enum class DiffusionVariant { theorem, derived };

std::string_view to_string(DiffusionVariant variant);

struct DiffusionSpec {
  std::function<double(double)> drift;
  std::function<double(double)> sigma2;
  std::string label;
  double dt = 1e-4;
  /// The origin is absorbing (drift and sigma2 both vanish there).
  bool absorbing_at_zero = true;
};

/// dZ = alpha Z dt + sqrt(Z) dW for the binomial limit;
/// dZ = sqrt(sigma2(Z)) dW with sigma2 per `variant` for the uniform limit.
DiffusionSpec make_limit_spec(LimitCase limit, double alpha, DiffusionVariant variant = DiffusionVariant::derived,
                              double dt = 1e-4);

struct DiffusionPath {
  std::vector<double> times;
  std::vector<double> values;
};

/// Full-truncation Euler-Maruyama: coefficients are evaluated at max(Z, 0).
/// With an absorbing origin a step that crosses zero lands on zero and stays.
/// Records the path every `record_every` (rounded to a multiple of dt), and at
/// t_end.
DiffusionPath simulate_sde(const DiffusionSpec& spec, double z0, double t_end, RandomStream& rng,
                           double record_every = 0.01);

/// Value at t_end only, without storing the path.
double simulate_sde_endpoint(const DiffusionSpec& spec, double z0, double t_end, RandomStream& rng);

struct ToyPath {
  std::vector<double> times;
  std::vector<double> phi;   ///< (X + Y) / 2
  std::vector<double> diff;  ///< X - Y
};

/// dX = N (Y - X) dt + dW1, dY = N (X - Y) dt + dW2, Euler-Maruyama with
/// dt = min(requested, 1 / (20 N)).
ToyPath simulate_toy_diagonal(double x0, double y0, double n, double t_end, RandomStream& rng,
                              double dt = 0.0, double record_every = 0.01);

struct EnsembleStats {
  double mean = 0.0;
  double variance = 0.0;
  double mean_se = 0.0;
  std::vector<double> histogram_edges;
  std::vector<double> histogram;  ///< relative frequencies per bin
};

/// Statistics of the path values at the recorded time closest to t.
EnsembleStats ensemble_stats(std::span<const DiffusionPath> paths, double t, int bins = 20);
EnsembleStats ensemble_stats(std::span<const double> samples, int bins = 20);

}  // namespace cnv
