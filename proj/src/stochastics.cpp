#include "bsvie/stochastics.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>
#include <string>

#include "bsvie/error.hpp"
#include "bsvie/format.hpp"
#include "bsvie/parallel.hpp"
#include "bsvie/rng.hpp"

namespace bsvie {

double JumpSpec::total_rate() const {
  double total = 0.0;
  for (double r : rates) total += r;
  return total;
}

std::size_t JumpSpec::mark_index(double zeta) const {
  for (std::size_t k = 0; k < marks.size(); ++k) {
    if (marks[k] == zeta) return k;
  }
  fail(ErrorKind::invalid_parameter, "jump mark " + format_double(zeta) + " is not in the mark set");
}

JumpSpec make_jump_spec(std::vector<double> marks, std::vector<double> rates,
                        std::function<double(double, double)> beta) {
  require(!marks.empty(), "jump spec: at least one mark required");
  require(marks.size() == rates.size(), "jump spec: marks and rates differ in length");
  for (double r : rates) require(r > 0.0 && std::isfinite(r), "jump spec: rates must be finite and > 0");
  require(static_cast<bool>(beta), "jump spec: beta must be set");
  JumpSpec spec;
  spec.marks = std::move(marks);
  spec.rates = std::move(rates);
  spec.beta = std::move(beta);
  return spec;
}

JumpSpec constant_beta_jumps(double beta0, double mark, double rate) {
  return make_jump_spec({mark}, {rate}, [beta0](double, double) { return beta0; });
}

void validate_jump_spec(const JumpSpec& spec, const TimeGrid& grid) {
  require(!spec.marks.empty() && spec.marks.size() == spec.rates.size(), "jump spec: malformed mark set");
  for (double r : spec.rates) require(r > 0.0 && std::isfinite(r), "jump spec: rates must be finite and > 0");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    for (double zeta : spec.marks) {
      const double b = spec.beta(grid.node(i), zeta);
      if (!std::isfinite(b) || 1.0 + b <= 0.0) {
        fail(ErrorKind::measure_degenerate, "1 + beta <= 0 at s=" + format_double(grid.node(i)) +
                                                ", zeta=" + format_double(zeta));
      }
      if (b < -1.0 + spec.beta_floor) {
        fail(ErrorKind::assumption_violated, "A1 violated: beta >= -1 + eps fails at s=" +
                                                 format_double(grid.node(i)));
      }
    }
  }
}

namespace {

void accumulate_B(std::span<const double> dB, std::span<double> B) {
  B[0] = 0.0;
  for (std::size_t k = 0; k < dB.size(); ++k) B[k + 1] = B[k] + dB[k];
}

}  // namespace

PathBundle simulate_paths(const TimeGrid& grid, std::size_t n_paths, const JumpSpec* jump_spec,
                          std::uint64_t seed) {
  require(n_paths >= 1, "simulate_paths: n_paths must be >= 1");
  require(grid.size() >= 2, "simulate_paths: empty grid");
  if (jump_spec) validate_jump_spec(*jump_spec, grid);

  PathBundle out;
  out.grid_ = std::make_shared<const TimeGrid>(grid);
  if (jump_spec) out.jumps_spec_ = std::make_shared<const JumpSpec>(*jump_spec);
  out.n_paths_ = n_paths;
  out.intervals_ = grid.intervals();
  out.seed_ = seed;
  out.dB_.resize(n_paths * out.intervals_);
  out.B_.resize(n_paths * grid.size());
  out.jump_events_.resize(n_paths);

  const std::size_t n_int = out.intervals_;
  std::vector<double> sqrt_dt(n_int);
  for (std::size_t k = 0; k < n_int; ++k) sqrt_dt[k] = std::sqrt(grid.dt(k));

  parallel_for(n_paths, [&](std::size_t p) {
    auto rng = substream(seed, p, streams::brownian);
    std::normal_distribution<double> normal(0.0, 1.0);
    double* dB = out.dB_.data() + p * n_int;
    for (std::size_t k = 0; k < n_int; ++k) dB[k] = sqrt_dt[k] * normal(rng);
    accumulate_B({dB, n_int}, {out.B_.data() + p * grid.size(), grid.size()});

    if (jump_spec) {
      auto jrng = substream(seed, p, streams::jumps);
      std::uniform_real_distribution<double> uniform(0.0, grid.t_max());
      auto& events = out.jump_events_[p];
      for (std::size_t m = 0; m < jump_spec->marks.size(); ++m) {
        std::poisson_distribution<long> count(jump_spec->rates[m] * grid.t_max());
        const long n = count(jrng);
        for (long j = 0; j < n; ++j) events.push_back({uniform(jrng), m});
      }
      std::sort(events.begin(), events.end(), [](const JumpEvent& a, const JumpEvent& b) {
        return a.time < b.time || (a.time == b.time && a.mark < b.mark);
      });
    }
  });

  if (jump_spec) {
    const std::size_t nm = jump_spec->marks.size();
    out.compensator_.resize(n_int * nm);
    for (std::size_t k = 0; k < n_int; ++k)
      for (std::size_t m = 0; m < nm; ++m) out.compensator_[k * nm + m] = jump_spec->rates[m] * grid.dt(k);
  }
  return out;
}

double PathView::B_at(double t) const {
  const TimeGrid& g = grid();
  if (t <= 0.0) return 0.0;
  const std::size_t k = g.interval_containing(t);
  const double x0 = g.node(k);
  const double x1 = g.node(k + 1);
  const double u = std::clamp((t - x0) / (x1 - x0), 0.0, 1.0);
  return (1.0 - u) * B(k) + u * B(k + 1);
}

std::size_t PathView::jump_count(double t) const {
  std::size_t n = 0;
  for (const JumpEvent& e : bundle_->jumps(path_)) {
    if (e.time > t) break;
    ++n;
  }
  for (std::size_t j = 0; j < n_extra_; ++j) n += extra_[j].time <= t ? 1 : 0;
  return n;
}

double PathView::jump_sum(double t) const {
  double total = 0.0;
  for_each_jump([&](double time, std::size_t, double zeta) {
    if (time <= t) total += zeta;
  });
  return total;
}

void PathView::for_each_jump(const std::function<void(double, std::size_t, double)>& fn) const {
  const JumpSpec* spec = bundle_->jump_spec();
  const auto base = bundle_->jumps(path_);
  std::array<JumpEvent, 2> extra = extra_;
  std::sort(extra.begin(), extra.begin() + static_cast<std::ptrdiff_t>(n_extra_),
            [](const JumpEvent& a, const JumpEvent& b) { return a.time < b.time; });
  std::size_t i = 0, j = 0;
  while (i < base.size() || j < n_extra_) {
    const bool take_base = j >= n_extra_ || (i < base.size() && base[i].time <= extra[j].time);
    const JumpEvent& e = take_base ? base[i++] : extra[j++];
    fn(e.time, e.mark, spec->marks[e.mark]);
  }
}

PathView PathView::with_bump(std::size_t interval, double delta) const {
  require(interval < grid().intervals(), "with_bump: interval out of range");
  require(bump_interval_ == std::numeric_limits<std::size_t>::max() || bump_interval_ == interval,
          "with_bump: only one bumped interval per view");
  PathView v = *this;
  v.bump_interval_ = interval;
  v.bump_ += delta;
  return v;
}

PathView PathView::with_jump(double time, std::size_t mark) const {
  require(bundle_->jump_spec() != nullptr, "with_jump: bundle has no jump measure");
  require(mark < bundle_->n_marks(), "with_jump: mark index out of range");
  require(time >= 0.0 && time <= grid().t_max(), "with_jump: time outside [0, T_max]");
  require(n_extra_ < extra_.size(), "with_jump: too many inserted jumps");
  PathView v = *this;
  v.extra_[v.n_extra_++] = {time, mark};
  return v;
}

GirsanovModel::GirsanovModel(const TimeGrid& grid, std::function<double(double)> xi, const JumpSpec* jump_spec)
    : xi_(std::move(xi)), jumps_(jump_spec) {
  require(static_cast<bool>(xi_), "girsanov: xi must be set");
  const std::size_t n_int = grid.intervals();
  xi_left_.resize(n_int);
  drift_cum_.assign(grid.size(), 0.0);
  trivial_ = jump_spec == nullptr;
  for (std::size_t k = 0; k < n_int; ++k) {
    const double s = grid.node(k);
    const double x = xi_(s);
    if (!std::isfinite(x)) fail(ErrorKind::numeric_error, "girsanov: xi is not finite at s=" + format_double(s));
    xi_left_[k] = x;
    if (x != 0.0) trivial_ = false;
    double rate = -0.5 * x * x;
    if (jump_spec) {
      for (std::size_t m = 0; m < jump_spec->marks.size(); ++m) {
        const double b = jump_spec->beta(s, jump_spec->marks[m]);
        if (!(1.0 + b > 0.0)) {
          fail(ErrorKind::measure_degenerate, "1 + beta <= 0 at s=" + format_double(s));
        }
        rate -= b * jump_spec->rates[m];
      }
    }
    drift_cum_[k + 1] = drift_cum_[k] + rate * grid.dt(k);
  }
}

namespace {

double log_jump_factor(const JumpSpec& spec, double time, double zeta) {
  const double b = spec.beta(time, zeta);
  if (!(1.0 + b > 0.0)) {
    fail(ErrorKind::measure_degenerate, "1 + beta <= 0 at jump time " + format_double(time));
  }
  return std::log1p(b);
}

}  // namespace

double GirsanovModel::log_density(const PathView& path, std::size_t i) const {
  if (trivial_) return 0.0;
  double acc = drift_cum_[i];
  for (std::size_t k = 0; k < i; ++k) acc += xi_left_[k] * path.dB(k);
  if (jumps_) {
    const double t = path.grid().node(i);
    path.for_each_jump([&](double time, std::size_t, double zeta) {
      if (time <= t) acc += log_jump_factor(*jumps_, time, zeta);
    });
  }
  return acc;
}

GirsanovWeight girsanov_weights(const PathBundle& paths, const std::function<double(double)>& xi,
                                const JumpSpec* jump_spec) {
  const TimeGrid& grid = paths.grid();
  const GirsanovModel model(grid, xi, jump_spec);
  GirsanovWeight out;
  out.log_M = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(paths.n_paths()),
                                    static_cast<Eigen::Index>(grid.size()));
  if (model.trivial()) return out;
  if (jump_spec && !paths.jump_spec()) {
    fail(ErrorKind::invalid_parameter, "girsanov_weights: beta given but paths carry no jumps");
  }
  parallel_for(paths.n_paths(), [&](std::size_t p) {
    const auto r = static_cast<Eigen::Index>(p);
    const auto events = paths.jumps(p);
    std::size_t next = 0;
    double acc = 0.0;
    out.log_M(r, 0) = 0.0;
    for (std::size_t k = 0; k < grid.intervals(); ++k) {
      acc += model.xi_left(k) * paths.dB(p, k);
      if (jump_spec) {
        const double t = grid.node(k + 1);
        while (next < events.size() && events[next].time <= t) {
          acc += log_jump_factor(*jump_spec, events[next].time, jump_spec->marks[events[next].mark]);
          ++next;
        }
      }
      out.log_M(r, static_cast<Eigen::Index>(k + 1)) = acc;
    }
  });
  // Deterministic drift part, shared by all paths.
  Eigen::RowVectorXd drift(static_cast<Eigen::Index>(grid.size()));
  for (std::size_t i = 0; i < grid.size(); ++i) drift(static_cast<Eigen::Index>(i)) = model.drift_cum(i);
  out.log_M.rowwise() += drift;
  return out;
}

NovikovReport novikov_exponent(const std::function<double(double)>& xi, const JumpSpec* jump_spec,
                               const TimeGrid& grid, double cap) {
  NovikovReport rep;
  const auto x = grid.nodes();
  const auto w = grid.weights();
  auto xi2 = [&](double s) {
    const double v = xi(s);
    if (!std::isfinite(v)) fail(ErrorKind::numeric_error, "novikov: xi not finite at s=" + format_double(s));
    return v * v;
  };
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (w[i] != 0.0) rep.xi_part += 0.5 * w[i] * xi2(x[i]);
  }
  // Exponential tail extrapolation from the behaviour over [T/2, T].
  const double T = grid.t_max();
  const double f_end = xi2(T);
  if (f_end > 0.0) {
    const double f_mid = xi2(0.5 * T);
    const double rate = std::log(f_mid / f_end) / (0.5 * T);
    if (!(rate > 0.0)) {
      fail(ErrorKind::divergent, "Novikov exponent diverges: xi^2 does not decay (A3 violated)");
    }
    rep.tail_estimate = 0.5 * f_end / rate;
    rep.xi_part += rep.tail_estimate;
  }
  if (jump_spec) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (w[i] == 0.0) continue;
      for (std::size_t m = 0; m < jump_spec->marks.size(); ++m) {
        const double b = jump_spec->beta(x[i], jump_spec->marks[m]);
        if (!(1.0 + b > 0.0)) fail(ErrorKind::measure_degenerate, "1 + beta <= 0 at s=" + format_double(x[i]));
        rep.jump_part += w[i] * jump_spec->rates[m] * (std::log1p(b) - b);
      }
    }
  }
  rep.value = rep.xi_part + rep.jump_part;
  if (rep.xi_part > cap) {
    fail(ErrorKind::divergent, "Novikov exponent " + format_double(rep.xi_part) + " exceeds cap " +
                                   format_double(cap) + " (A3 violated)");
  }
  return rep;
}

Estimate mean_estimate(std::span<const double> samples) {
  Estimate e;
  const std::size_t n = samples.size();
  if (n == 0) return e;
  double sum = 0.0;
  for (double v : samples) sum += v;
  e.value = sum / static_cast<double>(n);
  if (n > 1) {
    double ss = 0.0;
    for (double v : samples) ss += (v - e.value) * (v - e.value);
    e.std_error = std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n));
    e.ci_halfwidth = 1.96 * e.std_error;
  }
  return e;
}

Estimate expect_Q(std::span<const double> functional, const GirsanovWeight& weights, std::size_t at_node) {
  const auto n = static_cast<std::size_t>(weights.log_M.rows());
  require(functional.size() == n, "expect_Q: functional and weights differ in path count");
  require(at_node < static_cast<std::size_t>(weights.log_M.cols()), "expect_Q: node out of range");
  std::vector<double> weighted(n);
  for (std::size_t p = 0; p < n; ++p) {
    if (!std::isfinite(functional[p])) fail(ErrorKind::numeric_error, "expect_Q: non-finite functional value");
    weighted[p] = weights.M(p, at_node) * functional[p];
  }
  return mean_estimate(weighted);
}

Estimate expect_Q(std::span<const double> functional, const GirsanovWeight& weights, const TimeGrid& grid,
                  double at) {
  return expect_Q(functional, weights, grid.require_node(at));
}

PathBundle q_shifted_increments(const PathBundle& paths, const std::function<double(double)>& xi,
                                const JumpSpec* jump_spec) {
  const TimeGrid& grid = paths.grid();
  PathBundle out = paths;
  out.measure_ = Measure::Q;
  std::vector<double> shift(grid.intervals());
  for (std::size_t k = 0; k < shift.size(); ++k) shift[k] = xi(grid.node(k)) * grid.dt(k);
  parallel_for(paths.n_paths(), [&](std::size_t p) {
    double* dB = out.dB_.data() + p * out.intervals_;
    for (std::size_t k = 0; k < out.intervals_; ++k) dB[k] -= shift[k];
    accumulate_B({dB, out.intervals_}, {out.B_.data() + p * grid.size(), grid.size()});
  });
  if (jump_spec && paths.jump_spec()) {
    const std::size_t nm = paths.n_marks();
    for (std::size_t k = 0; k < out.intervals_; ++k)
      for (std::size_t m = 0; m < nm; ++m)
        out.compensator_[k * nm + m] =
            (1.0 + jump_spec->beta(grid.node(k), jump_spec->marks[m])) * jump_spec->rates[m] * grid.dt(k);
  }
  return out;
}

void write_path_csv(std::ostream& os, const PathBundle& paths, const GirsanovWeight* weights,
                    std::size_t max_paths) {
  const TimeGrid& grid = paths.grid();
  os << "path_id,t,B,M,jumps\n";
  const std::size_t n = std::min(max_paths, paths.n_paths());
  for (std::size_t p = 0; p < n; ++p) {
    const auto events = paths.jumps(p);
    std::size_t next = 0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      std::size_t landed = 0;
      while (next < events.size() && events[next].time <= grid.node(i)) {
        ++landed;
        ++next;
      }
      os << p << ',' << format_double(grid.node(i)) << ',' << format_double(paths.B(p, i)) << ','
         << format_double(weights ? weights->M(p, i) : 1.0) << ',' << landed << '\n';
    }
  }
}

}  // namespace bsvie
