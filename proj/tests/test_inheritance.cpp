#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "cnv/error.hpp"
#include "cnv/inheritance.hpp"
#include "oracles.hpp"

using namespace cnv;

namespace {

std::vector<double> reference_row(const InheritanceFamily& f, int k) {
  switch (f.kind()) {
    case FamilyKind::binomial_biased: return oracle::binomial_row(k, 0.5);
    case FamilyKind::uniform: return oracle::uniform_row(k);
    case FamilyKind::all_or_nothing: return oracle::all_or_nothing_row(k);
    case FamilyKind::custom_table: return f.limit_row(k);
  }
  return {};
}

CustomTable uniform_table(int k_max) {
  CustomTable t;
  for (int k = 0; k <= k_max; ++k) t.push_back(oracle::uniform_row(k));
  return t;
}

std::vector<InheritanceFamily> all_families() {
  return {InheritanceFamily::make(FamilyKind::binomial_biased, 0.0, 100),
          InheritanceFamily::make(FamilyKind::uniform, 0.0, 100),
          InheritanceFamily::make(FamilyKind::all_or_nothing, 0.0, 100),
          InheritanceFamily::make(FamilyKind::custom_table, 0.0, 100, uniform_table(30))};
}

std::filesystem::path write_temp(const std::string& name, const std::string& text) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream(path) << text;
  return path;
}

}  // namespace

TEST_CASE("family names round-trip and unknown names are rejected") {
  for (auto kind : {FamilyKind::binomial_biased, FamilyKind::uniform, FamilyKind::all_or_nothing,
                    FamilyKind::custom_table}) {
    CHECK(parse_family_kind(to_string(kind)) == kind);
  }
  CHECK(parse_family_kind("binomial") == FamilyKind::binomial_biased);
  CHECK_THROWS_AS(parse_family_kind("poisson"), ValidationError);
}

TEST_CASE("binomial bias must keep the transmission probability inside (0, 1)") {
  CHECK_THROWS_AS(InheritanceFamily::make(FamilyKind::binomial_biased, 5.0, 10), ValidationError);
  CHECK_THROWS_AS(InheritanceFamily::make(FamilyKind::binomial_biased, -5.0, 10), ValidationError);
  CHECK_THROWS_AS(InheritanceFamily::make(FamilyKind::uniform, 0.0, 0), ValidationError);
  const auto f = InheritanceFamily::make(FamilyKind::binomial_biased, 1.0, 10);
  CHECK(f.transmission_probability() == doctest::Approx(0.6));
  CHECK(f.with_population_size(100).transmission_probability() == doctest::Approx(0.51));
}

TEST_CASE("limit and finite rows match rows built by definition") {
  for (const auto& f : all_families()) {
    for (int k = 0; k <= 30; ++k) {
      const auto row = f.limit_row(k);
      const auto ref = reference_row(f, k);
      REQUIRE(row.size() == ref.size());
      for (std::size_t j = 0; j < row.size(); ++j) CHECK(row[j] == doctest::Approx(ref[j]).epsilon(1e-12));
    }
  }
  const auto biased = InheritanceFamily::make(FamilyKind::binomial_biased, 2.0, 10);
  for (int k : {0, 1, 7, 30}) {
    const auto row = biased.finite_row(k);
    const auto ref = oracle::binomial_row(k, 0.7);
    for (std::size_t j = 0; j < row.size(); ++j) CHECK(std::abs(row[j] - ref[j]) < 1e-14);
  }
}

TEST_CASE("pgf equals direct summation of the row for k <= 30") {
  for (const auto& f : all_families()) {
    CAPTURE(to_string(f.kind()));
    for (int k = 0; k <= 30; ++k) {
      const auto row = reference_row(f, k);
      for (int i = 0; i <= 10; ++i) {
        const double s = 0.1 * i;
        CHECK(std::abs(f.pgf(k, s) - oracle::pgf_direct(row, s)) < 1e-12);
      }
    }
  }
}

TEST_CASE("uniform pgf at s = 0 is 1 by continuity") {
  const auto f = InheritanceFamily::make(FamilyKind::uniform, 0.0, 10);
  for (int k = 0; k <= 30; ++k) CHECK(f.pgf(k, 0.0) == 1.0);
  CHECK(f.pgf(5, 1e-9) == doctest::Approx(1.0));
}

TEST_CASE("factorial moments match derivatives of the pgf") {
  for (const auto& f : all_families()) {
    CAPTURE(to_string(f.kind()));
    for (int k = 0; k <= 30; ++k) {
      const double h = 0.02 / std::max(k, 1);
      for (int n = 1; n <= 3; ++n) {
        const double sign = n % 2 == 0 ? 1.0 : -1.0;
        const double fd = sign * oracle::derivative_at_zero([&](double s) { return f.pgf(k, s); }, n, h);
        const double exact = f.factorial_moment(k, n);
        CHECK(std::abs(fd - exact) <= 1e-6 * std::max(1.0, std::abs(exact)));
        CHECK(exact == doctest::Approx(oracle::factorial_moment_direct(reference_row(f, k), n)).epsilon(1e-12));
      }
    }
  }
  CHECK_THROWS_AS(all_families()[0].factorial_moment(3, 4), ValidationError);
}

TEST_CASE("published moment coefficients of the closed-form families") {
  const auto bin = InheritanceFamily::make(FamilyKind::binomial_biased, 0.0, 10).moment_params();
  CHECK(bin.a2 == 0.25);
  CHECK(bin.a3 == 0.125);
  const auto uni = InheritanceFamily::make(FamilyKind::uniform, 0.0, 10).moment_params();
  CHECK(uni.a2 == doctest::Approx(1.0 / 3.0));
  CHECK(uni.a3 == 0.25);
  const auto aon = InheritanceFamily::make(FamilyKind::all_or_nothing, 0.0, 10).moment_params();
  CHECK(aon.a2 == 0.5);
  CHECK(aon.a3 == 0.5);
  const auto custom = InheritanceFamily::make(FamilyKind::custom_table, 0.0, 10, uniform_table(12)).moment_params();
  CHECK(custom.a2 == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(custom.a3 == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("sampler matches the pgf on 10^6 draws") {
  auto rng = derive_stream(7, StreamTag::unit_test, 0, 0);
  auto families = all_families();
  families.push_back(InheritanceFamily::make(FamilyKind::binomial_biased, 2.0, 10));
  for (const auto& f : families) {
    CAPTURE(to_string(f.kind()));
    for (int k : {7, 70}) {
      if (f.kind() == FamilyKind::custom_table && k > 30) continue;
      constexpr int draws = 1'000'000;
      double sum3 = 0.0, sum3sq = 0.0, sum7 = 0.0, sum7sq = 0.0;
      for (int i = 0; i < draws; ++i) {
        const int j = f.sample(k, rng);
        REQUIRE(j >= 0);
        REQUIRE(j <= k);
        const double a = std::pow(0.7, j);
        const double b = std::pow(0.3, j);
        sum3 += a;
        sum3sq += a * a;
        sum7 += b;
        sum7sq += b * b;
      }
      auto check = [&](double sum, double sumsq, double s) {
        const double mean = sum / draws;
        const double se = std::sqrt((sumsq / draws - mean * mean) / draws);
        CHECK(std::abs(mean - f.finite_pgf(k, s)) <= 4.0 * se + 1e-12);
      };
      check(sum3, sum3sq, 0.3);
      check(sum7, sum7sq, 0.7);
    }
  }
}

TEST_CASE("finite-N pgf converges to the limit at rate 1/N along the perturbation") {
  for (double alpha : {1.0, -0.5}) {
    const auto f1 = InheritanceFamily::make(FamilyKind::binomial_biased, alpha, 10'000);
    const auto f2 = InheritanceFamily::make(FamilyKind::binomial_biased, alpha, 20'000);
    for (int k : {1, 3, 10}) {
      for (double s : {0.3, 0.7, 1.0}) {
        const double e1 = std::abs(1e4 * (f1.finite_pgf(k, s) - f1.pgf(k, s)) - f1.perturbation_pgf(k, s));
        const double e2 = std::abs(2e4 * (f2.finite_pgf(k, s) - f2.pgf(k, s)) - f2.perturbation_pgf(k, s));
        CAPTURE(k);
        CAPTURE(s);
        if (k == 1) {
          // Linear in the bias: no remainder at all.
          CHECK(e1 < 1e-9);
          CHECK(e2 < 1e-9);
        } else {
          CHECK(e1 / e2 == doctest::Approx(2.0).epsilon(0.05));
        }
      }
    }
  }
  const auto uni = InheritanceFamily::make(FamilyKind::uniform, 0.0, 10);
  CHECK(uni.perturbation_pgf(5, 0.4) == 0.0);
}

TEST_CASE("numeric perturbation moments of the biased binomial family") {
  for (double alpha : {0.0, 1.0, 2.5}) {
    const auto f = InheritanceFamily::make(FamilyKind::binomial_biased, alpha, 200);
    const auto fit = numeric_perturbation_moments(f, 1'000'000);
    // rho_1(p^N_k) = k p, rho_2 = k(k-1) p^2, rho_3 = k(k-1)(k-2) p^3 with p = 1/2 + alpha/N.
    CHECK(fit.alpha == doctest::Approx(alpha).epsilon(1e-6));
    CHECK(std::abs(fit.b2 - alpha) < 1e-5 * std::max(1.0, alpha));
    CHECK(std::abs(fit.b3 - 0.75 * alpha) < 1e-5 * std::max(1.0, alpha));
    CHECK(f.moment_params().b2 == fit.b2);
    CHECK(f.moment_params().b3 == fit.b3);
    const auto quoted = f.quoted_moment_params();
    REQUIRE(quoted.has_value());
    CHECK(quoted->b2 == 0.25);
    CHECK(quoted->b3 == -0.125);
  }
  const auto f = InheritanceFamily::make(FamilyKind::binomial_biased, 1.0, 200);
  CHECK_THROWS_AS(numeric_perturbation_moments(f, 1000), ValidationError);
  CHECK_FALSE(InheritanceFamily::make(FamilyKind::uniform, 0.0, 10).quoted_moment_params().has_value());
}

TEST_CASE("custom tables: parsing and validation") {
  const auto good = write_temp("cnv_custom_good.txt",
                               "# uniform up to 2\n0 1\n2 0.3333333333333333 0.3333333333333333 0.3333333333333334\n"
                               "1 0.5 0.5  # trailing comment\n");
  const auto table = read_custom_table(good);
  REQUIRE(table.size() == 3);
  CHECK(table[2][1] == doctest::Approx(1.0 / 3.0));

  const auto f = InheritanceFamily::make(FamilyKind::custom_table, 0.0, 10, table);
  CHECK(f.max_parent_type() == 2);
  auto rng = derive_stream(1, StreamTag::unit_test, 0, 1);
  CHECK_THROWS_AS(f.sample(3, rng), RuntimeLimitError);
  CHECK_THROWS_AS(f.limit_row(3), ValidationError);

  CHECK_THROWS_AS(read_custom_table(write_temp("cnv_custom_gap.txt", "0 1\n2 0.25 0.5 0.25\n")), ValidationError);
  CHECK_THROWS_AS(read_custom_table(write_temp("cnv_custom_sum.txt", "0 1\n1 0.5 0.4\n")), ValidationError);
  CHECK_THROWS_AS(read_custom_table(write_temp("cnv_custom_neg.txt", "0 1\n1 0.5 0.5\n2 -0.1 1.2 -0.1\n")),
                  ValidationError);
  CHECK_THROWS_AS(read_custom_table(write_temp("cnv_custom_mean.txt", "0 1\n1 0.6 0.4\n")), ValidationError);
  CHECK_THROWS_AS(read_custom_table(write_temp("cnv_custom_len.txt", "0 1\n1 0.5 0.25 0.25\n")), ValidationError);
  CHECK_THROWS_AS(read_custom_table(write_temp("cnv_custom_empty.txt", "# nothing\n")), ValidationError);
  CHECK_THROWS_AS(read_custom_table("/nonexistent/table.txt"), ValidationError);
  CHECK_THROWS_AS(InheritanceFamily::make(FamilyKind::custom_table, 0.0, 10, {}), ValidationError);
}
