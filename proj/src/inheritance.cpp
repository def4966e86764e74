#include "cnv/inheritance.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "cnv/error.hpp"

namespace cnv {

namespace {

constexpr int kCachedRows = 64;
constexpr double kRowTolerance = 1e-12;
constexpr double kMeanTolerance = 1e-9;

std::vector<double> cumulative(const std::vector<double>& row) {
  std::vector<double> c(row.size());
  double acc = 0.0;
  for (std::size_t j = 0; j < row.size(); ++j) {
    acc += row[j];
    c[j] = acc;
  }
  c.back() = 1.0;
  return c;
}

int invert(const std::vector<double>& cdf, double u) {
  auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  if (it == cdf.end()) return static_cast<int>(cdf.size()) - 1;
  return static_cast<int>(it - cdf.begin());
}

double row_factorial_moment(const std::vector<double>& row, int n) {
  double acc = 0.0;
  for (std::size_t j = 0; j < row.size(); ++j) acc += falling_factorial(static_cast<double>(j), n) * row[j];
  return acc;
}

double row_pgf(const std::vector<double>& row, double s) {
  // Horner in (1 - s).
  const double w = 1.0 - s;
  double acc = 0.0;
  for (std::size_t j = row.size(); j-- > 0;) acc = acc * w + row[j];
  return acc;
}

void validate_table(const CustomTable& table) {
  if (table.empty()) throw ValidationError("custom inheritance table is empty");
  for (std::size_t k = 0; k < table.size(); ++k) {
    const auto& row = table[k];
    if (row.size() != k + 1) {
      throw ValidationError("custom table row " + std::to_string(k) + " must have " +
                            std::to_string(k + 1) + " entries");
    }
    double sum = 0.0;
    double mean = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (!(row[j] >= 0.0)) {
        throw ValidationError("custom table row " + std::to_string(k) + " has a negative entry");
      }
      sum += row[j];
      mean += static_cast<double>(j) * row[j];
    }
    if (std::abs(sum - 1.0) > kRowTolerance) {
      throw ValidationError("custom table row " + std::to_string(k) + " does not sum to 1");
    }
    if (std::abs(mean - 0.5 * static_cast<double>(k)) > kMeanTolerance) {
      throw ValidationError("custom table row " + std::to_string(k) + " does not have mean k/2");
    }
  }
}

// Least-squares slope of y on f through the origin, and the scaled residual.
std::pair<double, double> fit_through_origin(const std::vector<double>& f, const std::vector<double>& y) {
  double fy = 0.0;
  double ff = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    fy += f[i] * y[i];
    ff += f[i] * f[i];
  }
  const double c = ff > 0.0 ? fy / ff : 0.0;
  double worst = 0.0;
  double scale = 1.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    worst = std::max(worst, std::abs(y[i] - c * f[i]));
    scale = std::max(scale, std::abs(c * f[i]));
  }
  return {c, worst / scale};
}

}  // namespace

struct InheritanceFamily::Tables {
  // Cumulative rows of p_k^N for k < kCachedRows (binomial with bias, custom).
  std::vector<std::vector<double>> cdf;
};

double falling_factorial(double k, int n) {
  double acc = 1.0;
  for (int i = 0; i < n; ++i) acc *= (k - i);
  return acc;
}

std::vector<double> binomial_pmf(int k, double p) {
  std::vector<double> pmf(static_cast<std::size_t>(k) + 1, 0.0);
  if (p <= 0.0) {
    pmf[0] = 1.0;
    return pmf;
  }
  if (p >= 1.0) {
    pmf[k] = 1.0;
    return pmf;
  }
  if (k <= 500) {
    pmf[0] = std::pow(1.0 - p, k);
    const double ratio = p / (1.0 - p);
    for (int j = 0; j < k; ++j) pmf[j + 1] = pmf[j] * ratio * (k - j) / (j + 1);
    return pmf;
  }
  const double lp = std::log(p);
  const double lq = std::log1p(-p);
  const double lk = std::lgamma(k + 1.0);
  for (int j = 0; j <= k; ++j) {
    pmf[j] = std::exp(lk - std::lgamma(j + 1.0) - std::lgamma(k - j + 1.0) + j * lp + (k - j) * lq);
  }
  return pmf;
}

std::string_view to_string(FamilyKind kind) {
  switch (kind) {
    case FamilyKind::binomial_biased: return "binomial-biased";
    case FamilyKind::uniform: return "uniform";
    case FamilyKind::all_or_nothing: return "all-or-nothing";
    case FamilyKind::custom_table: return "custom-table";
  }
  return "unknown";
}

FamilyKind parse_family_kind(std::string_view name) {
  if (name == "binomial-biased" || name == "binomial") return FamilyKind::binomial_biased;
  if (name == "uniform") return FamilyKind::uniform;
  if (name == "all-or-nothing") return FamilyKind::all_or_nothing;
  if (name == "custom-table") return FamilyKind::custom_table;
  throw ValidationError("unknown family kind '" + std::string(name) + "'");
}

CustomTable read_custom_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open custom table " + path.string());
  std::vector<std::pair<int, std::vector<double>>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    int k = 0;
    if (!(ls >> k)) continue;
    std::vector<double> row;
    double p = 0.0;
    while (ls >> p) row.push_back(p);
    rows.emplace_back(k, std::move(row));
  }
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  CustomTable table;
  for (auto& [k, row] : rows) {
    if (k != static_cast<int>(table.size())) {
      throw ValidationError("custom table " + path.string() + " must list rows k = 0, 1, 2, ... without gaps");
    }
    table.push_back(std::move(row));
  }
  validate_table(table);
  return table;
}

InheritanceFamily InheritanceFamily::make(FamilyKind kind, double alpha, std::int64_t population_size,
                                          CustomTable table) {
  if (population_size < 1) throw ValidationError("population size must be at least 1");
  InheritanceFamily f;
  f.kind_ = kind;
  f.population_size_ = population_size;
  switch (kind) {
    case FamilyKind::binomial_biased: {
      if (!(std::abs(alpha / static_cast<double>(population_size)) < 0.5)) {
        throw ValidationError("binomial bias alpha/N must lie strictly inside (-1/2, 1/2)");
      }
      f.alpha_ = alpha;
      f.params_ = MomentParams{alpha, 0.25, 0.125, 0.0, 0.0};
      break;
    }
    case FamilyKind::uniform:
      f.params_ = MomentParams{0.0, 1.0 / 3.0, 0.25, 0.0, 0.0};
      break;
    case FamilyKind::all_or_nothing:
      f.params_ = MomentParams{0.0, 0.5, 0.5, 0.0, 0.0};
      break;
    case FamilyKind::custom_table: {
      validate_table(table);
      f.custom_ = std::make_shared<const CustomTable>(std::move(table));
      std::vector<double> f2, y2, f3, y3;
      for (std::size_t k = 0; k < f.custom_->size(); ++k) {
        const auto& row = (*f.custom_)[k];
        f2.push_back(falling_factorial(static_cast<double>(k), 2));
        y2.push_back(row_factorial_moment(row, 2));
        f3.push_back(falling_factorial(static_cast<double>(k), 3));
        y3.push_back(row_factorial_moment(row, 3));
      }
      f.params_ = MomentParams{0.0, fit_through_origin(f2, y2).first, fit_through_origin(f3, y3).first, 0.0, 0.0};
      break;
    }
  }
  f.build_tables();
  if (kind == FamilyKind::binomial_biased) {
    const auto fit = numeric_perturbation_moments(f, 1'000'000);
    f.params_.b2 = fit.b2;
    f.params_.b3 = fit.b3;
  }
  return f;
}

void InheritanceFamily::build_tables() {
  auto tables = std::make_shared<Tables>();
  const bool cache = (kind_ == FamilyKind::binomial_biased && transmission_probability() != 0.5) ||
                     kind_ == FamilyKind::custom_table;
  if (cache) {
    int rows = kCachedRows;
    if (custom_) rows = static_cast<int>(custom_->size());
    for (int k = 0; k < rows; ++k) tables->cdf.push_back(cumulative(finite_row(k)));
  }
  tables_ = std::move(tables);
}

std::optional<MomentParams> InheritanceFamily::quoted_moment_params() const {
  if (kind_ != FamilyKind::binomial_biased) return std::nullopt;
  MomentParams q = params_;
  q.b2 = 0.25;
  q.b3 = -0.125;
  return q;
}

InheritanceFamily InheritanceFamily::with_population_size(std::int64_t population_size) const {
  CustomTable table;
  if (custom_) table = *custom_;
  return make(kind_, alpha_, population_size, std::move(table));
}

std::optional<int> InheritanceFamily::max_parent_type() const {
  if (custom_) return static_cast<int>(custom_->size()) - 1;
  return std::nullopt;
}

double InheritanceFamily::transmission_probability() const {
  if (kind_ != FamilyKind::binomial_biased) return 0.5;
  return 0.5 + alpha_ / static_cast<double>(population_size_);
}

std::vector<double> InheritanceFamily::limit_row(int k) const {
  switch (kind_) {
    case FamilyKind::binomial_biased: return binomial_pmf(k, 0.5);
    case FamilyKind::uniform: return std::vector<double>(static_cast<std::size_t>(k) + 1, 1.0 / (k + 1.0));
    case FamilyKind::all_or_nothing: {
      std::vector<double> row(static_cast<std::size_t>(k) + 1, 0.0);
      row[0] += 0.5;
      row[k] += 0.5;
      return row;
    }
    case FamilyKind::custom_table:
      if (k >= static_cast<int>(custom_->size())) {
        throw ValidationError("parent type " + std::to_string(k) + " exceeds the custom table's k_max");
      }
      return (*custom_)[k];
  }
  return {};
}

std::vector<double> InheritanceFamily::finite_row(int k) const {
  if (kind_ == FamilyKind::binomial_biased) return binomial_pmf(k, transmission_probability());
  return limit_row(k);
}

int InheritanceFamily::sample(int k, RandomStream& rng) const {
  if (k == 0) return 0;
  switch (kind_) {
    case FamilyKind::binomial_biased: {
      const double p = transmission_probability();
      if (p == 0.5) {
        int total = 0;
        int remaining = k;
        while (remaining >= 64) {
          total += std::popcount(rng());
          remaining -= 64;
        }
        if (remaining > 0) total += std::popcount(rng() & ((std::uint64_t{1} << remaining) - 1));
        return total;
      }
      if (k < static_cast<int>(tables_->cdf.size())) return invert(tables_->cdf[k], rng.uniform());
      return std::binomial_distribution<int>(k, p)(rng.engine());
    }
    case FamilyKind::uniform: return static_cast<int>(rng.below(static_cast<std::uint64_t>(k) + 1));
    case FamilyKind::all_or_nothing: return rng.coin() ? k : 0;
    case FamilyKind::custom_table:
      if (k >= static_cast<int>(tables_->cdf.size())) {
        throw RuntimeLimitError("parent type " + std::to_string(k) + " exceeds the custom table's k_max");
      }
      return invert(tables_->cdf[k], rng.uniform());
  }
  return 0;
}

double InheritanceFamily::pgf(int k, double s) const {
  switch (kind_) {
    case FamilyKind::binomial_biased: return std::pow(1.0 - 0.5 * s, k);
    case FamilyKind::uniform:
      if (k == 0 || s == 0.0) return 1.0;
      if (s >= 1.0) return (1.0 - std::pow(1.0 - s, k + 1)) / ((k + 1.0) * s);
      // 1 - (1 - s)^(k+1) without cancellation near s = 0.
      return -std::expm1((k + 1.0) * std::log1p(-s)) / ((k + 1.0) * s);
    case FamilyKind::all_or_nothing: return k == 0 ? 1.0 : 0.5 + 0.5 * std::pow(1.0 - s, k);
    case FamilyKind::custom_table: return row_pgf(limit_row(k), s);
  }
  return 1.0;
}

double InheritanceFamily::finite_pgf(int k, double s) const {
  if (kind_ == FamilyKind::binomial_biased) return std::pow(1.0 - s * transmission_probability(), k);
  return pgf(k, s);
}

double InheritanceFamily::factorial_moment(int k, int n) const {
  if (n < 1 || n > 3) throw ValidationError("factorial moment order must be 1, 2 or 3");
  if (kind_ == FamilyKind::custom_table) return row_factorial_moment(limit_row(k), n);
  const double a = n == 1 ? 0.5 : (n == 2 ? params_.a2 : params_.a3);
  return a * falling_factorial(static_cast<double>(k), n);
}

double InheritanceFamily::perturbation_pgf(int k, double s) const {
  if (kind_ != FamilyKind::binomial_biased || k == 0) return 0.0;
  return -alpha_ * k * s * std::pow(1.0 - 0.5 * s, k - 1);
}

PerturbationFit numeric_perturbation_moments(const InheritanceFamily& family, std::int64_t n_probe, int k_max) {
  if (n_probe < 10'000) throw ValidationError("numeric perturbation fit needs N_probe >= 1e4");
  if (auto cap = family.max_parent_type()) k_max = std::min(k_max, *cap);
  const InheritanceFamily probe = family.kind() == FamilyKind::binomial_biased && family.population_size() != n_probe
                                      ? InheritanceFamily::make(family.kind(), family.bias_intensity(), n_probe)
                                      : family;
  const auto n = static_cast<double>(n_probe);
  std::vector<double> f[3], y[3];
  for (int k = 1; k <= k_max; ++k) {
    const auto limit = family.limit_row(k);
    const auto finite = probe.finite_row(k);
    for (int order = 1; order <= 3; ++order) {
      f[order - 1].push_back(falling_factorial(k, order));
      y[order - 1].push_back(n * (row_factorial_moment(finite, order) - row_factorial_moment(limit, order)));
    }
  }
  PerturbationFit fit;
  double* coeff[3] = {&fit.alpha, &fit.b2, &fit.b3};
  for (int i = 0; i < 3; ++i) {
    auto [c, r] = fit_through_origin(f[i], y[i]);
    *coeff[i] = c;
    fit.residual = std::max(fit.residual, r);
  }
  if (fit.residual > 1e-4) {
    throw ValidationError("perturbation moments do not have the polynomial form alpha k, b2 k(k-1), b3 k(k-1)(k-2)");
  }
  return fit;
}

}  // namespace cnv
