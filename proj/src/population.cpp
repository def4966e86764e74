#include "cnv/population.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cnv/error.hpp"

namespace cnv {

PopulationState::PopulationState(std::vector<std::int64_t> counts) : counts_(std::move(counts)) {
  for (auto c : counts_) {
    if (c < 0) throw ValidationError("population counts must be nonnegative");
    size_ += c;
  }
  if (size_ < 1) throw ValidationError("population must contain at least one individual");
  if (counts_.empty()) counts_.push_back(0);
}

int PopulationState::max_type() const {
  for (std::size_t k = counts_.size(); k-- > 0;) {
    if (counts_[k] > 0) return static_cast<int>(k);
  }
  return 0;
}

int PopulationState::occupied_types() const {
  return static_cast<int>(std::count_if(counts_.begin(), counts_.end(), [](auto c) { return c > 0; }));
}

std::vector<double> PopulationState::distribution() const {
  const int top = max_type();
  std::vector<double> x(static_cast<std::size_t>(top) + 1);
  const auto n = static_cast<double>(size_);
  for (int k = 0; k <= top; ++k) x[k] = static_cast<double>(counts_[k]) / n;
  return x;
}

int PopulationState::type_at(std::int64_t rank) const {
  for (std::size_t k = 0; k < counts_.size(); ++k) {
    rank -= counts_[k];
    if (rank < 0) return static_cast<int>(k);
  }
  return max_type();
}

void PopulationState::move(int from, int to) {
  if (from == to) return;
  if (to >= static_cast<int>(counts_.size())) {
    counts_.resize(std::max<std::size_t>(static_cast<std::size_t>(to) + 1, 2 * counts_.size()), 0);
  }
  --counts_[from];
  ++counts_[to];
}

PopulationState init_state(std::int64_t n, const InitialSpec& spec, RandomStream& rng) {
  if (n < 1) throw ValidationError("population size must be at least 1");
  std::vector<std::int64_t> counts(1, 0);
  auto add = [&counts](int k) {
    if (k >= static_cast<int>(counts.size())) counts.resize(static_cast<std::size_t>(k) + 1, 0);
    ++counts[k];
  };
  if (const auto* p = std::get_if<IidPoisson>(&spec)) {
    if (!(p->mean >= 0.0)) throw ValidationError("initial mean must be nonnegative");
    if (p->mean == 0.0) return PopulationState({n});
    std::poisson_distribution<int> law(p->mean);
    for (std::int64_t i = 0; i < n; ++i) add(law(rng.engine()));
  } else if (const auto* nb = std::get_if<IidNegBinomial>(&spec)) {
    if (!(nb->mean >= 0.0)) throw ValidationError("initial mean must be nonnegative");
    if (nb->mean == 0.0) return PopulationState({n});
    std::negative_binomial_distribution<int> law(2, 2.0 / (2.0 + nb->mean));
    for (std::int64_t i = 0; i < n; ++i) add(law(rng.engine()));
  } else {
    const auto& h = std::get<Histogram>(spec);
    if (std::accumulate(h.counts.begin(), h.counts.end(), std::int64_t{0}) != n) {
      throw ValidationError("initial histogram does not sum to N");
    }
    return PopulationState(h.counts);
  }
  return PopulationState(std::move(counts));
}

namespace {

// Draws dying individual, parents and contributions; applies the jump.
void apply_event(PopulationState& state, const InheritanceFamily& family, RandomStream& rng, EventRecord& rec) {
  const auto n = static_cast<std::uint64_t>(state.size());
  rec.dying_type = state.type_at(static_cast<std::int64_t>(rng.below(n)));
  rec.parent_types[0] = state.type_at(static_cast<std::int64_t>(rng.below(n)));
  rec.parent_types[1] = state.type_at(static_cast<std::int64_t>(rng.below(n)));
  rec.contributions[0] = family.sample(rec.parent_types[0], rng);
  rec.contributions[1] = family.sample(rec.parent_types[1], rng);
  rec.offspring_type = rec.contributions[0] + rec.contributions[1];
  state.move(rec.dying_type, rec.offspring_type);
}

double event_rate(const PopulationState& state) {
  const auto n = static_cast<double>(state.size());
  return 0.5 * n * n;
}

}  // namespace

EventRecord step(PopulationState& state, const InheritanceFamily& family, RandomStream& rng) {
  EventRecord rec;
  rec.time = rng.exponential(event_rate(state));
  apply_event(state, family, rng, rec);
  return rec;
}

Trajectory simulate(PopulationState& state, const InheritanceFamily& family, double t_end,
                    std::span<const double> observation_grid, const std::vector<Observer>& observers,
                    RandomStream& rng, const SimulationOptions& options) {
  if (!(t_end > 0.0)) throw ValidationError("t_end must be positive");
  if (!std::is_sorted(observation_grid.begin(), observation_grid.end())) {
    throw ValidationError("observation grid must be sorted");
  }
  Trajectory traj;
  for (const auto& o : observers) traj.names.push_back(o.name);

  std::size_t next_obs = 0;
  auto observe_until = [&](double limit) {
    while (next_obs < observation_grid.size() && observation_grid[next_obs] <= limit) {
      traj.times.push_back(observation_grid[next_obs]);
      std::vector<double> row;
      row.reserve(observers.size());
      for (const auto& o : observers) row.push_back(o.evaluate(state));
      traj.values.push_back(std::move(row));
      ++next_obs;
    }
  };

  const double rate = event_rate(state);
  double t = 0.0;
  std::uint64_t events = 0;
  EventRecord rec;
  while (true) {
    const double t_next = t + rng.exponential(rate);
    if (t_next > t_end) {
      observe_until(t_end);
      break;
    }
    observe_until(t_next);
    if (++events > options.event_cap) {
      throw RuntimeLimitError("event cap of " + std::to_string(options.event_cap) + " exceeded");
    }
    apply_event(state, family, rng, rec);
    t = t_next;
    if (options.event_log) {
      rec.time = t;
      options.event_log->push_back(rec);
    }
    if (options.on_event) options.on_event(t, state);
  }
  return traj;
}

double apply_generator_exact(const PopulationState& state, const InheritanceFamily& family,
                             const std::function<double(std::span<const double>)>& f) {
  if (state.occupied_types() > 50 || state.max_type() > 30) {
    throw RuntimeLimitError("exact generator limited to 50 occupied types and max type 30");
  }
  const int top = state.max_type();
  const auto x = state.distribution();
  std::vector<int> occupied;
  for (int k = 0; k <= top; ++k) {
    if (x[k] > 0.0) occupied.push_back(k);
  }
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(top) + 1);
  for (int k : occupied) rows[k] = family.finite_row(k);

  // Offspring law: sum over parent types (k, l) and contributions (j, j').
  std::vector<double> offspring(2 * static_cast<std::size_t>(top) + 1, 0.0);
  for (int k : occupied) {
    for (int l : occupied) {
      const double weight = x[k] * x[l];
      for (int j = 0; j <= k; ++j) {
        const double wj = weight * rows[k][j];
        if (wj == 0.0) continue;
        for (int jj = 0; jj <= l; ++jj) offspring[j + jj] += wj * rows[l][jj];
      }
    }
  }

  const double base = f(x);
  const auto n = static_cast<double>(state.size());
  std::vector<double> y(offspring.size(), 0.0);
  double total = 0.0;
  for (int dying : occupied) {
    for (std::size_t m = 0; m < offspring.size(); ++m) {
      if (offspring[m] == 0.0 || static_cast<int>(m) == dying) continue;
      std::fill(y.begin(), y.end(), 0.0);
      for (int k = 0; k <= top; ++k) y[k] = static_cast<double>(state.count(k)) / n;
      y[dying] = static_cast<double>(state.count(dying) - 1) / n;
      y[m] = static_cast<double>(state.count(static_cast<int>(m)) + 1) / n;
      total += x[dying] * offspring[m] * (f(y) - base);
    }
  }
  return 0.5 * n * n * total;
}

ZeroCountRates all_or_nothing_rates(std::int64_t n, std::int64_t zero_count) {
  const auto nn = static_cast<double>(n);
  const double y = static_cast<double>(zero_count) / nn;
  const double q = 1.0 - y;
  return {nn * nn * q * (0.25 * q * q + q * y + y * y), nn * nn * y * (0.75 * q * q + q * y)};
}

ZeroCountPath simulate_all_or_nothing(std::int64_t n, std::int64_t zero_count, double t_end, RandomStream& rng,
                                      bool record_path) {
  if (n < 1 || zero_count < 0 || zero_count > n) throw ValidationError("zero count must lie in [0, N]");
  ZeroCountPath path;
  double t = 0.0;
  path.times.push_back(t);
  path.counts.push_back(zero_count);
  while (zero_count < n) {
    const auto rates = all_or_nothing_rates(n, zero_count);
    const double total = rates.up + rates.down;
    t += rng.exponential(total);
    if (t > t_end) break;
    zero_count += rng.uniform() * total < rates.up ? 1 : -1;
    if (record_path) {
      path.times.push_back(t);
      path.counts.push_back(zero_count);
    }
  }
  if (zero_count == n) {
    path.hitting_time = t;
    if (!record_path && t > 0.0) {
      path.times.push_back(t);
      path.counts.push_back(zero_count);
    }
  }
  return path;
}

}  // namespace cnv
