#include "cnv/diffusion.hpp"

#include <algorithm>
#include <cmath>

#include "cnv/error.hpp"
#include "cnv/observables.hpp"

namespace cnv {

std::string_view to_string(DiffusionVariant variant) {
  return variant == DiffusionVariant::theorem ? "theorem" : "derived";
}

DiffusionSpec make_limit_spec(LimitCase limit, double alpha, DiffusionVariant variant, double dt) {
  if (!(dt > 0.0) || dt > 1e-3) throw ValidationError("diffusion step must lie in (0, 1e-3]");
  DiffusionSpec spec;
  spec.dt = dt;
  if (limit == LimitCase::binomial_poisson) {
    spec.drift = [alpha](double z) { return alpha * z; };
    spec.sigma2 = [](double z) { return z; };
    spec.label = "binomial: dZ = alpha Z dt + sqrt(Z) dW";
  } else if (variant == DiffusionVariant::theorem) {
    spec.drift = [](double) { return 0.0; };
    spec.sigma2 = [](double z) { return z * (z + 2.0); };
    spec.label = "uniform/theorem: dZ = sqrt(Z (Z + 2)) dW";
  } else {
    spec.drift = [](double) { return 0.0; };
    spec.sigma2 = [](double z) { return 0.5 * z * (z + 2.0); };
    spec.label = "uniform/derived: dZ = sqrt(Z (Z + 2) / 2) dW";
  }
  return spec;
}

namespace {

struct EulerMaruyama {
  const DiffusionSpec& spec;
  double sqrt_dt;

  double advance(double z, double h, double sqrt_h, RandomStream& rng) const {
    const double zp = std::max(z, 0.0);
    double next = z + spec.drift(zp) * h + std::sqrt(std::max(spec.sigma2(zp), 0.0)) * sqrt_h * rng.normal();
    if (spec.absorbing_at_zero && next < 0.0) next = 0.0;
    return next;
  }
};

}  // namespace

DiffusionPath simulate_sde(const DiffusionSpec& spec, double z0, double t_end, RandomStream& rng,
                           double record_every) {
  if (!(z0 >= 0.0)) throw ValidationError("initial value must be nonnegative");
  if (!(t_end > 0.0)) throw ValidationError("t_end must be positive");
  const auto steps = static_cast<std::int64_t>(std::ceil(t_end / spec.dt - 1e-9));
  const double h = t_end / static_cast<double>(steps);
  const auto stride = std::max<std::int64_t>(1, std::llround(record_every / h));
  EulerMaruyama em{spec, std::sqrt(h)};
  DiffusionPath path;
  path.times.push_back(0.0);
  path.values.push_back(z0);
  double z = z0;
  for (std::int64_t i = 1; i <= steps; ++i) {
    if (!(spec.absorbing_at_zero && z == 0.0)) z = em.advance(z, h, em.sqrt_dt, rng);
    if (i % stride == 0 || i == steps) {
      path.times.push_back(static_cast<double>(i) * h);
      path.values.push_back(z);
    }
  }
  return path;
}

double simulate_sde_endpoint(const DiffusionSpec& spec, double z0, double t_end, RandomStream& rng) {
  if (!(z0 >= 0.0)) throw ValidationError("initial value must be nonnegative");
  const auto steps = static_cast<std::int64_t>(std::ceil(t_end / spec.dt - 1e-9));
  const double h = t_end / static_cast<double>(steps);
  EulerMaruyama em{spec, std::sqrt(h)};
  double z = z0;
  for (std::int64_t i = 0; i < steps; ++i) {
    if (spec.absorbing_at_zero && z == 0.0) break;
    z = em.advance(z, h, em.sqrt_dt, rng);
  }
  return z;
}

ToyPath simulate_toy_diagonal(double x0, double y0, double n, double t_end, RandomStream& rng, double dt,
                              double record_every) {
  if (!(n > 0.0)) throw ValidationError("toy coupling N must be positive");
  const double cap = 1.0 / (20.0 * n);
  if (!(dt > 0.0) || dt > cap) dt = cap;
  const auto steps = static_cast<std::int64_t>(std::ceil(t_end / dt - 1e-9));
  const double h = t_end / static_cast<double>(steps);
  const double sqrt_h = std::sqrt(h);
  const auto stride = std::max<std::int64_t>(1, std::llround(record_every / h));
  ToyPath path;
  auto record = [&path](double t, double x, double y) {
    path.times.push_back(t);
    path.phi.push_back(0.5 * (x + y));
    path.diff.push_back(x - y);
  };
  double x = x0;
  double y = y0;
  record(0.0, x, y);
  for (std::int64_t i = 1; i <= steps; ++i) {
    const double pull = n * (y - x) * h;
    const double dw1 = sqrt_h * rng.normal();
    const double dw2 = sqrt_h * rng.normal();
    x += pull + dw1;
    y += -pull + dw2;
    if (i % stride == 0 || i == steps) record(static_cast<double>(i) * h, x, y);
  }
  return path;
}

EnsembleStats ensemble_stats(std::span<const double> samples, int bins) {
  EnsembleStats st;
  if (samples.empty()) return st;
  const auto ms = mean_and_se(samples);
  st.mean = ms.mean;
  st.mean_se = ms.se;
  st.variance = sample_variance(samples);
  const auto [lo_it, hi_it] = std::minmax_element(samples.begin(), samples.end());
  const double lo = *lo_it;
  const double hi = *hi_it > lo ? *hi_it : lo + 1.0;
  bins = std::max(bins, 1);
  for (int i = 0; i <= bins; ++i) st.histogram_edges.push_back(lo + (hi - lo) * i / bins);
  st.histogram.assign(static_cast<std::size_t>(bins), 0.0);
  for (double v : samples) {
    auto b = static_cast<int>((v - lo) / (hi - lo) * bins);
    st.histogram[static_cast<std::size_t>(std::clamp(b, 0, bins - 1))] += 1.0 / static_cast<double>(samples.size());
  }
  return st;
}

EnsembleStats ensemble_stats(std::span<const DiffusionPath> paths, double t, int bins) {
  std::vector<double> samples;
  samples.reserve(paths.size());
  for (const auto& p : paths) {
    if (p.times.empty()) continue;
    auto it = std::lower_bound(p.times.begin(), p.times.end(), t);
    std::size_t idx = static_cast<std::size_t>(it - p.times.begin());
    if (idx == p.times.size()) {
      idx = p.times.size() - 1;
    } else if (idx > 0 && std::abs(p.times[idx - 1] - t) < std::abs(p.times[idx] - t)) {
      --idx;
    }
    samples.push_back(p.values[idx]);
  }
  return ensemble_stats(samples, bins);
}

}  // namespace cnv
