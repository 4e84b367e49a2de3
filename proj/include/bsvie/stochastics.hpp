#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "bsvie/timegrid.hpp"

namespace bsvie {

/// Compound Poisson jump measure nu = sum_k rates[k] delta_{marks[k]} with
/// Girsanov jump coefficient beta(s, zeta).
struct JumpSpec {
  std::vector<double> marks;
  std::vector<double> rates;
  std::function<double(double, double)> beta;
  double beta_floor = 1e-9;  // epsilon in beta >= -1 + epsilon

  double total_rate() const;
  std::size_t mark_index(double zeta) const;  // throws when zeta is not a mark
};

JumpSpec make_jump_spec(std::vector<double> marks, std::vector<double> rates,
                        std::function<double(double, double)> beta);
/// One mark with constant beta.
JumpSpec constant_beta_jumps(double beta0, double mark = 1.0, double rate = 1.0);

/// Checks rates and the floor beta >= -1 + eps on every node x mark.
/// A value with 1 + beta <= 0 raises measure-degenerate.
void validate_jump_spec(const JumpSpec& spec, const TimeGrid& grid);

struct JumpEvent {
  double time;
  std::size_t mark;
};

enum class Measure { P, Q };

/// Simulated Brownian increments and jump events on a grid; immutable.
class PathBundle {
 public:
  const TimeGrid& grid() const { return *grid_; }
  std::size_t n_paths() const { return n_paths_; }
  std::uint64_t seed() const { return seed_; }
  Measure measure() const { return measure_; }
  const JumpSpec* jump_spec() const { return jumps_spec_.get(); }
  std::size_t n_marks() const { return jumps_spec_ ? jumps_spec_->marks.size() : 0; }

  double dB(std::size_t path, std::size_t k) const { return dB_[path * intervals_ + k]; }
  std::span<const double> increments(std::size_t path) const {
    return {dB_.data() + path * intervals_, intervals_};
  }
  /// B at node i (B(0) = 0).
  double B(std::size_t path, std::size_t i) const { return B_[path * (intervals_ + 1) + i]; }
  std::span<const JumpEvent> jumps(std::size_t path) const { return jump_events_[path]; }
  /// Expected jump mass of mark m on interval k under the bundle's measure.
  double compensator(std::size_t k, std::size_t mark) const { return compensator_[k * n_marks() + mark]; }

  friend PathBundle simulate_paths(const TimeGrid&, std::size_t, const JumpSpec*, std::uint64_t);
  friend PathBundle q_shifted_increments(const PathBundle&, const std::function<double(double)>&,
                                         const JumpSpec*);

 private:
  std::shared_ptr<const TimeGrid> grid_;
  std::shared_ptr<const JumpSpec> jumps_spec_;
  std::size_t n_paths_ = 0;
  std::size_t intervals_ = 0;
  std::uint64_t seed_ = 0;
  Measure measure_ = Measure::P;
  std::vector<double> dB_;
  std::vector<double> B_;
  std::vector<std::vector<JumpEvent>> jump_events_;
  std::vector<double> compensator_;
};

/// Per-path substreams keyed by (seed, path) make the bundle independent of
/// execution order and thread count.
PathBundle simulate_paths(const TimeGrid& grid, std::size_t n_paths, const JumpSpec* jump_spec,
                          std::uint64_t seed);

/// One path of a bundle, optionally with a bumped Brownian increment and up to
/// two inserted jumps. Cheap to copy; used by Malliavin differences.
class PathView {
 public:
  PathView(const PathBundle& bundle, std::size_t path) : bundle_(&bundle), path_(path) {}

  const PathBundle& bundle() const { return *bundle_; }
  const TimeGrid& grid() const { return bundle_->grid(); }
  std::size_t index() const { return path_; }

  double dB(std::size_t k) const { return bundle_->dB(path_, k) + (k == bump_interval_ ? bump_ : 0.0); }
  double B(std::size_t i) const { return bundle_->B(path_, i) + (i > bump_interval_ ? bump_ : 0.0); }
  /// B at an arbitrary time, linear between nodes.
  double B_at(double t) const;

  /// Number of jumps with time <= t.
  std::size_t jump_count(double t) const;
  /// Sum of jump sizes with time <= t.
  double jump_sum(double t) const;
  /// fn(time, mark index, mark value) for every jump in time order.
  void for_each_jump(const std::function<void(double, std::size_t, double)>& fn) const;

  PathView with_bump(std::size_t interval, double delta) const;
  PathView with_jump(double time, std::size_t mark) const;

 private:
  const PathBundle* bundle_;
  std::size_t path_;
  std::size_t bump_interval_ = std::numeric_limits<std::size_t>::max();
  double bump_ = 0.0;
  std::array<JumpEvent, 2> extra_{};
  std::size_t n_extra_ = 0;
};

/// Deterministic coefficients of the density M, cached on a grid.
class GirsanovModel {
 public:
  GirsanovModel(const TimeGrid& grid, std::function<double(double)> xi, const JumpSpec* jump_spec);

  /// log M at node i along a (possibly perturbed) path.
  double log_density(const PathView& path, std::size_t i) const;
  double xi_left(std::size_t k) const { return xi_left_[k]; }
  double drift_cum(std::size_t i) const { return drift_cum_[i]; }
  const std::function<double(double)>& xi() const { return xi_; }
  bool trivial() const { return trivial_; }

 private:
  std::function<double(double)> xi_;
  const JumpSpec* jumps_;
  std::vector<double> xi_left_;
  std::vector<double> drift_cum_;  // -1/2 int xi^2 - int int beta nu, left-point
  bool trivial_ = true;
};

struct GirsanovWeight {
  Eigen::MatrixXd log_M;  // n_paths x nodes

  double M(std::size_t path, std::size_t i) const { return std::exp(log_M(path, i)); }
  Eigen::VectorXd M_at(std::size_t i) const { return log_M.col(i).array().exp(); }
};

GirsanovWeight girsanov_weights(const PathBundle& paths, const std::function<double(double)>& xi,
                                const JumpSpec* jump_spec);

struct NovikovReport {
  double value = 0.0;        // xi_part + jump_part
  double xi_part = 0.0;      // 1/2 int_0^inf xi^2, with extrapolated tail
  double jump_part = 0.0;    // int_0^T_max int (ln(1+beta) - beta) nu, always <= 0
  double tail_estimate = 0.0;
};

/// Deterministic-coefficient Novikov exponent. The jump part is non-positive
/// and cannot break finiteness, so it is integrated over [0, T_max] only.
/// The xi^2 tail beyond T_max is extrapolated from its decay over [T/2, T];
/// no decay, or a value above cap, raises divergent.
NovikovReport novikov_exponent(const std::function<double(double)>& xi, const JumpSpec* jump_spec,
                               const TimeGrid& grid, double cap = 700.0);

struct Estimate {
  double value = 0.0;
  double ci_halfwidth = 0.0;  // 1.96 sample std / sqrt(n)
  double std_error = 0.0;
};

/// Plain mean with 95% interval.
Estimate mean_estimate(std::span<const double> samples);
/// Density-weighted mean sum M_p(at) F_p / n.
Estimate expect_Q(std::span<const double> functional, const GirsanovWeight& weights, std::size_t at_node);
Estimate expect_Q(std::span<const double> functional, const GirsanovWeight& weights, const TimeGrid& grid,
                  double at);

/// dB_Q = dB - xi dt and Q-compensator (1 + beta) nu dt for the same events.
PathBundle q_shifted_increments(const PathBundle& paths, const std::function<double(double)>& xi,
                                const JumpSpec* jump_spec);

/// Debug dump: path_id,t,B,M,jumps (jumps landing in (t_prev, t]).
void write_path_csv(std::ostream& os, const PathBundle& paths, const GirsanovWeight* weights,
                    std::size_t max_paths);

}  // namespace bsvie
