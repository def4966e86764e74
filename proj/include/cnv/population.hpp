#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "cnv/inheritance.hpp"
#include "cnv/rng.hpp"

namespace cnv {

/// Copy-number histogram of N individuals: counts[k] individuals carry k
/// elements. Only counts are stored, so the law of the process is invariant
/// under relabelling individuals.
class PopulationState {
 public:
  /// Throws ValidationError on negative counts or an empty population.
  explicit PopulationState(std::vector<std::int64_t> counts);

  std::int64_t size() const { return size_; }
  std::span<const std::int64_t> counts() const { return counts_; }
  std::int64_t count(int type) const {
    return type < static_cast<int>(counts_.size()) ? counts_[static_cast<std::size_t>(type)] : 0;
  }
  /// Largest type with a nonzero count.
  int max_type() const;
  int occupied_types() const;

  /// x_k = c_k / N, trimmed to max_type() + 1 entries.
  std::vector<double> distribution() const;

  /// Type of the individual with the given rank when individuals are listed
  /// by increasing type.
  int type_at(std::int64_t rank) const;

  /// One individual of type `from` becomes type `to`. Grows the histogram
  /// geometrically when needed; never shrinks.
  void move(int from, int to);

  bool operator==(const PopulationState&) const = default;

 private:
  std::vector<std::int64_t> counts_;
  std::int64_t size_ = 0;
};

struct IidPoisson {
  double mean = 0.0;
};
struct IidNegBinomial {
  double mean = 0.0;  ///< NB(2, 2 / (2 + mean))
};
struct Histogram {
  std::vector<std::int64_t> counts;
};
using InitialSpec = std::variant<IidPoisson, IidNegBinomial, Histogram>;

/// Draws the initial population. Histograms must sum to N.
PopulationState init_state(std::int64_t n, const InitialSpec& spec, RandomStream& rng);

/// Audit record of one reproduction event.
struct EventRecord {
  double time = 0.0;
  int dying_type = 0;
  int parent_types[2] = {0, 0};
  int contributions[2] = {0, 0};
  int offspring_type = 0;
};

/// One reproduction event: waits Exp(N^2/2), draws the dying individual and
/// both parents uniformly with replacement, and replaces the dying individual
/// by an offspring carrying j + j' elements, j ~ p_k^N, j' ~ p_l^N.
/// Events with offspring type equal to the dying type leave counts unchanged.
/// The returned record's time field holds the elapsed waiting time.
EventRecord step(PopulationState& state, const InheritanceFamily& family, RandomStream& rng);

struct Observer {
  std::string name;
  std::function<double(const PopulationState&)> evaluate;
};

/// Grid observations of a path. values[i][j] is observer j at times[i].
struct Trajectory {
  std::vector<double> times;
  std::vector<std::string> names;
  std::vector<std::vector<double>> values;
};

struct SimulationOptions {
  std::uint64_t event_cap = 1'000'000'000;
  /// Called after every event with the new time and state.
  std::function<void(double, const PopulationState&)> on_event;
  /// Receives every event when set.
  std::vector<EventRecord>* event_log = nullptr;
};

/// Runs events until t_end, starting at time 0. Observers are evaluated at
/// every grid time g <= t_end on the state in force just before g (the
/// left limit). `state` holds the state at t_end on return.
/// Throws RuntimeLimitError when the event cap is exceeded.
Trajectory simulate(PopulationState& state, const InheritanceFamily& family, double t_end,
                    std::span<const double> observation_grid, const std::vector<Observer>& observers,
                    RandomStream& rng, const SimulationOptions& options = {});

/// Applies the finite-N generator exactly:
///   G^N f(x) = N^2/2 sum_n x_n sum_{k,l} x_k x_l sum_{j,j'} p_k^N(j) p_l^N(j')
///              [f(x + (e_{j+j'} - e_n)/N) - f(x)]
/// with every (n, k, l, j, j') term enumerated. f receives the distribution
/// vector of the jumped state. Limited to at most 50 occupied types and
/// max type 30; throws RuntimeLimitError beyond that.
double apply_generator_exact(const PopulationState& state, const InheritanceFamily& family,
                             const std::function<double(std::span<const double>)>& f);

/// Path of the zero-type count Y under all-or-nothing inheritance.
struct ZeroCountPath {
  std::vector<double> times;
  std::vector<std::int64_t> counts;
  std::optional<double> hitting_time;  ///< first time Y = N, if before t_end
};

/// Birth-death chain for Y with y = Y/N:
///   Y -> Y + 1 at rate N^2 (1-y) (1/4 (1-y)^2 + (1-y) y + y^2)
///   Y -> Y - 1 at rate N^2 y (3/4 (1-y)^2 + (1-y) y)
/// Stops at t_end or on absorption at N.
ZeroCountPath simulate_all_or_nothing(std::int64_t n, std::int64_t zero_count, double t_end, RandomStream& rng,
                                      bool record_path = true);

struct ZeroCountRates {
  double up = 0.0;
  double down = 0.0;
};
ZeroCountRates all_or_nothing_rates(std::int64_t n, std::int64_t zero_count);

}  // namespace cnv
