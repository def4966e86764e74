#include <doctest.h>

#include <cmath>

#include "cnv/diffusion.hpp"
#include "cnv/error.hpp"
#include "cnv/observables.hpp"

using namespace cnv;

namespace {

struct Moments {
  double mean, var, var_se, skew, kurt;
};

Moments moments_of(const std::vector<double>& v) {
  const auto n = static_cast<double>(v.size());
  double m = 0;
  for (double x : v) m += x;
  m /= n;
  double m2 = 0, m3 = 0, m4 = 0;
  for (double x : v) {
    const double d = x - m;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  return {m, m2 * n / (n - 1), std::sqrt((m4 - m2 * m2) / n), m3 / std::pow(m2, 1.5), m4 / (m2 * m2)};
}

std::vector<double> endpoints(const DiffusionSpec& spec, double z0, double t, int paths, std::uint64_t rep) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(paths));
  for (int i = 0; i < paths; ++i) {
    auto rng = derive_stream(31, StreamTag::unit_test, rep, i);
    out.push_back(simulate_sde_endpoint(spec, z0, t, rng));
  }
  return out;
}

}  // namespace

TEST_CASE("limit diffusion coefficients") {
  const auto s1 = make_limit_spec(LimitCase::binomial_poisson, 0.0);
  CHECK(s1.drift(2.0) == 0.0);
  CHECK(s1.sigma2(2.0) == 2.0);
  const auto s1a = make_limit_spec(LimitCase::binomial_poisson, 1.5);
  CHECK(s1a.drift(2.0) == 3.0);
  const auto th = make_limit_spec(LimitCase::uniform_negbin, 0.0, DiffusionVariant::theorem);
  CHECK(th.sigma2(2.0) == 8.0);
  const auto de = make_limit_spec(LimitCase::uniform_negbin, 0.0, DiffusionVariant::derived);
  CHECK(de.sigma2(2.0) == 4.0);
  CHECK(de.drift(3.0) == 0.0);
  for (const auto* s : {&s1, &s1a, &th, &de}) {
    CHECK(s->drift(0.0) >= 0.0);
    for (double z : {0.0, 0.5, 10.0}) CHECK(s->sigma2(z) >= 0.0);
  }
  CHECK(to_string(DiffusionVariant::theorem) == "theorem");
  CHECK(to_string(DiffusionVariant::derived) == "derived");
  CHECK_THROWS_AS(make_limit_spec(LimitCase::binomial_poisson, 0.0, DiffusionVariant::derived, 2e-3), ValidationError);
  CHECK_THROWS_AS(make_limit_spec(LimitCase::binomial_poisson, 0.0, DiffusionVariant::derived, 0.0), ValidationError);
}

TEST_CASE("paths: absorption at zero, nonnegativity, recording grid") {
  const auto spec = make_limit_spec(LimitCase::binomial_poisson, 0.0);
  auto rng = derive_stream(1, StreamTag::unit_test, 3, 0);
  const auto zero = simulate_sde(spec, 0.0, 1.0, rng);
  for (double v : zero.values) CHECK(v == 0.0);
  CHECK(zero.times.back() == doctest::Approx(1.0));
  CHECK(zero.times.size() == 101);
  CHECK_THROWS_AS(simulate_sde(spec, -1.0, 1.0, rng), ValidationError);

  for (int i = 0; i < 50; ++i) {
    const auto p = simulate_sde(spec, 0.3, 2.0, rng, 0.05);
    bool absorbed = false;
    for (double v : p.values) {
      CHECK(v >= 0.0);
      if (absorbed) CHECK(v == 0.0);
      absorbed = absorbed || v == 0.0;
    }
  }
}

TEST_CASE("ensemble means: e^{alpha t} growth and driftless uniform limits (10^4 paths)") {
  const auto m1 = moments_of(endpoints(make_limit_spec(LimitCase::binomial_poisson, 1.0), 1.0, 1.0, 10'000, 1));
  CHECK(std::abs(m1.mean - std::exp(1.0)) <= 3.0 * std::sqrt(m1.var / 1e4));

  const auto m0 = moments_of(endpoints(make_limit_spec(LimitCase::binomial_poisson, 0.0), 1.0, 1.0, 10'000, 2));
  CHECK(std::abs(m0.mean - 1.0) <= 3.0 * std::sqrt(m0.var / 1e4));
  // Var(Z_t) = int_0^t E[Z_s] ds = t for alpha = 0.
  CHECK(std::abs(m0.var - 1.0) <= 3.0 * m0.var_se);

  for (auto variant : {DiffusionVariant::theorem, DiffusionVariant::derived}) {
    const auto m = moments_of(endpoints(make_limit_spec(LimitCase::uniform_negbin, 0.0, variant), 2.0, 1.0, 10'000,
                                        3 + static_cast<int>(variant)));
    CHECK(std::abs(m.mean - 2.0) <= 3.0 * std::sqrt(m.var / 1e4));
  }
}

TEST_CASE("martingale check along the path: e^{-alpha t} E[Z_t] is constant") {
  const auto spec = make_limit_spec(LimitCase::binomial_poisson, 1.0);
  std::vector<DiffusionPath> paths;
  for (int i = 0; i < 4000; ++i) {
    auto rng = derive_stream(33, StreamTag::unit_test, 0, i);
    paths.push_back(simulate_sde(spec, 1.0, 1.0, rng, 0.25));
  }
  for (double t : {0.25, 0.5, 0.75, 1.0}) {
    const auto st = ensemble_stats(paths, t);
    CHECK(std::abs(std::exp(-t) * st.mean - 1.0) <= 3.0 * std::exp(-t) * st.mean_se);
  }
}

TEST_CASE("halving the step changes the t = 1 statistics by less than one standard error") {
  // Coupled Euler-Maruyama: the coarse path uses the sum of two fine increments.
  for (auto [limit, alpha, variant] :
       {std::tuple{LimitCase::binomial_poisson, 1.0, DiffusionVariant::derived},
        std::tuple{LimitCase::uniform_negbin, 0.0, DiffusionVariant::theorem}}) {
    const auto spec = make_limit_spec(limit, alpha, variant, 1e-3);
    auto advance = [&spec](double z, double h, double dw) {
      const double zp = std::max(z, 0.0);
      return std::max(0.0, z + spec.drift(zp) * h + std::sqrt(spec.sigma2(zp)) * dw);
    };
    std::vector<double> coarse, fine;
    auto rng = derive_stream(35, StreamTag::unit_test, 0, 0);
    const double h = 1e-3;
    for (int p = 0; p < 5000; ++p) {
      double zc = 1.0, zf = 1.0;
      for (int i = 0; i < 1000; ++i) {
        const double w1 = std::sqrt(h / 2) * rng.normal();
        const double w2 = std::sqrt(h / 2) * rng.normal();
        zf = zf > 0 ? advance(advance(zf, h / 2, w1), h / 2, w2) : 0.0;
        zc = zc > 0 ? advance(zc, h, w1 + w2) : 0.0;
      }
      coarse.push_back(zc);
      fine.push_back(zf);
    }
    const auto mc = moments_of(coarse);
    const auto mf = moments_of(fine);
    CHECK(std::abs(mc.mean - mf.mean) < std::sqrt(mc.var / 5000));
    CHECK(std::abs(mc.var - mf.var) < mc.var_se);
  }
}

TEST_CASE("toy diagonal system") {
  constexpr int paths = 10'000;
  std::vector<double> phi, d2;
  for (int i = 0; i < paths; ++i) {
    auto rng = derive_stream(37, StreamTag::unit_test, 0, i);
    const auto p = simulate_toy_diagonal(0.3, 0.3, 100.0, 1.0, rng, 0.0, 1.0);
    REQUIRE(p.times.size() == 2);
    phi.push_back(p.phi.back());
    d2.push_back(p.diff.back() * p.diff.back());
  }
  const auto m = moments_of(phi);
  CHECK(std::abs(m.mean - 0.3) <= 3.0 * std::sqrt(m.var / paths));
  // Phi = Phi_0 + (W1 + W2) / 2 exactly, so Var(Phi_1) = 1/2.
  CHECK(std::abs(m.var - 0.5) <= 3.0 * m.var_se);
  CHECK(std::abs(m.skew) <= 3.0 * std::sqrt(6.0 / paths));
  CHECK(std::abs(m.kurt - 3.0) <= 3.0 * std::sqrt(24.0 / paths));
  const auto md = mean_and_se(d2);
  CHECK(std::abs(md.mean - 1.0 / 200.0) <= 0.2 / 200.0);
}

TEST_CASE("toy: occupation of X - Y concentrates at 0 as N grows") {
  double previous = 0.0;
  for (double n : {10.0, 100.0, 1000.0}) {
    double mass = 0.0;
    for (int i = 0; i < 20; ++i) {
      auto rng = derive_stream(39, StreamTag::unit_test, static_cast<std::uint64_t>(n), i);
      const auto p = simulate_toy_diagonal(0.0, 0.0, n, 5.0, rng, 0.0, 0.001);
      const auto occ = occupation_measure_sampled(p.times, p.diff, {0.0, 5.0}, {-1e9, -0.1, 0.1, 1e9});
      mass += occ.value_marginal()[1] / (1.0 - std::exp(-5.0)) / 20.0;
    }
    CAPTURE(n);
    CHECK(mass > previous);
    previous = mass;
  }
  CHECK(previous > 0.99);
}

TEST_CASE("ensemble statistics") {
  std::vector<DiffusionPath> paths(5, DiffusionPath{{0.0, 0.5, 1.0}, {1.0, 2.0, 3.0}});
  const auto st = ensemble_stats(paths, 0.6);
  CHECK(st.mean == 2.0);
  CHECK(st.variance == 0.0);
  double total = 0.0;
  for (double h : st.histogram) total += h;
  CHECK(total == doctest::Approx(1.0));
  CHECK(ensemble_stats(paths, 5.0).mean == 3.0);

  const std::vector<double> samples{0.0, 1.0, 2.0, 3.0};
  const auto s2 = ensemble_stats(samples, 4);
  CHECK(s2.histogram_edges.size() == 5);
  for (double h : s2.histogram) CHECK(h == 0.25);
  CHECK(s2.variance == doctest::Approx(5.0 / 3.0));
}
