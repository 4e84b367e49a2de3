#include "bsvie/timegrid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "bsvie/error.hpp"

namespace bsvie {

GaussRule gauss_legendre(std::size_t n) {
  require(n >= 1, "gauss_legendre: need at least one point");
  GaussRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const std::size_t half = (n + 1) / 2;
  for (std::size_t i = 0; i < half; ++i) {
    // Tricomi initial guess, then Newton on P_n.
    double z = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) /
                        (static_cast<double>(n) + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0;
      double p1 = z;
      for (std::size_t k = 2; k <= n; ++k) {
        const double pk = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / static_cast<double>(k);
        p0 = p1;
        p1 = pk;
      }
      dp = static_cast<double>(n) * (z * p1 - p0) / (z * z - 1.0);
      const double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    // Recompute derivative at the converged root.
    double p0 = 1.0;
    double p1 = z;
    for (std::size_t k = 2; k <= n; ++k) {
      const double pk = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / static_cast<double>(k);
      p0 = p1;
      p1 = pk;
    }
    dp = static_cast<double>(n) * (z * p1 - p0) / (z * z - 1.0);
    const double w = 2.0 / ((1.0 - z * z) * dp * dp);
    rule.nodes[i] = -z;
    rule.nodes[n - 1 - i] = z;
    rule.weights[i] = w;
    rule.weights[n - 1 - i] = w;
  }
  if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
  return rule;
}

/// Reference-panel rules on z = {-1, gauss..., +1}: entry (i, j) integrates
/// over [z_i, z_j] with the points z_i..z_j only.
struct TimeGrid::LocalRules {
  std::size_t m = 0;
  std::vector<double> z;
  std::vector<std::vector<double>> table;  // index i * (m + 2) + j

  const std::vector<double>& at(std::size_t i, std::size_t j) const { return table[i * (m + 2) + j]; }
};

namespace {

// Weights of the interpolant through pts, integrated over [lo, hi].
std::vector<double> interpolatory_weights(std::span<const double> pts, double lo, double hi) {
  const std::size_t k = pts.size();
  std::vector<double> w(k, 0.0);
  const GaussRule g = gauss_legendre(k);
  const double mid = 0.5 * (hi + lo);
  const double half = 0.5 * (hi - lo);
  for (std::size_t q = 0; q < g.nodes.size(); ++q) {
    const double x = mid + half * g.nodes[q];
    for (std::size_t l = 0; l < k; ++l) {
      double basis = 1.0;
      for (std::size_t r = 0; r < k; ++r) {
        if (r != l) basis *= (x - pts[r]) / (pts[l] - pts[r]);
      }
      w[l] += half * g.weights[q] * basis;
    }
  }
  return w;
}

// Gap-by-gap rule over [pts.front(), pts.back()]; each gap uses a window of at
// most kWindow neighbouring points. A single global interpolant on clustered
// Gauss subsets has huge alternating weights once m grows past ~10.
constexpr std::size_t kWindow = 6;

std::vector<double> composite_weights(std::span<const double> pts) {
  const std::size_t n = pts.size();
  std::vector<double> w(n, 0.0);
  const std::size_t q = std::min(n, kWindow);
  for (std::size_t gap = 0; gap + 1 < n; ++gap) {
    const std::size_t lead = q / 2 - 1;
    const std::size_t first = std::min(gap > lead ? gap - lead : 0, n - q);
    const auto local = interpolatory_weights(pts.subspan(first, q), pts[gap], pts[gap + 1]);
    for (std::size_t l = 0; l < q; ++l) w[first + l] += local[l];
  }
  return w;
}

std::shared_ptr<const TimeGrid::LocalRules> make_local_rules(std::size_t m) {
  auto rules = std::make_shared<TimeGrid::LocalRules>();
  rules->m = m;
  const GaussRule g = gauss_legendre(m);
  rules->z.reserve(m + 2);
  rules->z.push_back(-1.0);
  rules->z.insert(rules->z.end(), g.nodes.begin(), g.nodes.end());
  rules->z.push_back(1.0);
  rules->table.assign((m + 2) * (m + 2), {});
  for (std::size_t i = 0; i + 1 < m + 2; ++i) {
    for (std::size_t j = i + 1; j < m + 2; ++j) {
      std::vector<double>& w = rules->table[i * (m + 2) + j];
      if (i == 0 && j == m + 1) {
        w.assign(m + 2, 0.0);
        std::copy(g.weights.begin(), g.weights.end(), w.begin() + 1);
      } else {
        w = composite_weights(std::span<const double>(rules->z).subspan(i, j - i + 1));
      }
    }
  }
  return rules;
}

}  // namespace

TimeGrid build_graded_grid(double t_max, std::size_t n_panels, std::size_t pts_per_panel,
                           double grading_rate, double lambda) {
  if (!(t_max > 0.0) || !std::isfinite(t_max)) fail(ErrorKind::invalid_parameter, "grid: t_max must be > 0");
  if (n_panels < 1) fail(ErrorKind::invalid_parameter, "grid: n_panels must be >= 1");
  if (pts_per_panel < 2) fail(ErrorKind::invalid_parameter, "grid: pts_per_panel must be >= 2");
  if (!(grading_rate >= 1.0)) fail(ErrorKind::invalid_parameter, "grid: grading_rate must be >= 1");
  if (!(lambda > 0.0)) fail(ErrorKind::invalid_parameter, "grid: lambda must be > 0");

  TimeGrid grid;
  grid.spec_ = GridSpec{t_max, n_panels, pts_per_panel, grading_rate, lambda};
  grid.rules_ = make_local_rules(pts_per_panel);

  const double p = static_cast<double>(n_panels);
  const double first = grading_rate == 1.0 ? t_max / p
                                           : t_max * (grading_rate - 1.0) / (std::pow(grading_rate, p) - 1.0);
  grid.breaks_.resize(n_panels + 1);
  grid.breaks_[0] = 0.0;
  double width = first;
  for (std::size_t k = 1; k < n_panels; ++k) {
    grid.breaks_[k] = grid.breaks_[k - 1] + width;
    width *= grading_rate;
  }
  grid.breaks_[n_panels] = t_max;

  const auto& z = grid.rules_->z;
  const std::size_t m = pts_per_panel;
  grid.nodes_.reserve(n_panels * (m + 1) + 1);
  grid.weights_.reserve(n_panels * (m + 1) + 1);
  for (std::size_t k = 0; k < n_panels; ++k) {
    const double lo = grid.breaks_[k];
    const double hi = grid.breaks_[k + 1];
    const double mid = 0.5 * (lo + hi);
    const double half = 0.5 * (hi - lo);
    const auto& gw = grid.rules_->at(0, m + 1);
    grid.nodes_.push_back(lo);
    grid.weights_.push_back(0.0);
    for (std::size_t i = 1; i <= m; ++i) {
      grid.nodes_.push_back(mid + half * z[i]);
      grid.weights_.push_back(half * gw[i]);
    }
  }
  grid.nodes_.push_back(t_max);
  grid.weights_.push_back(0.0);
  return grid;
}

TimeGrid build_graded_grid(const GridSpec& spec) {
  return build_graded_grid(spec.t_max, spec.n_panels, spec.pts_per_panel, spec.grading_rate, spec.lambda);
}

std::optional<std::size_t> TimeGrid::index_of(double t, double tol) const {
  auto it = std::lower_bound(nodes_.begin(), nodes_.end(), t - tol);
  if (it != nodes_.end() && std::abs(*it - t) <= tol) return static_cast<std::size_t>(it - nodes_.begin());
  return std::nullopt;
}

std::size_t TimeGrid::require_node(double t, double tol) const {
  const auto idx = index_of(t, tol);
  if (!idx) fail(ErrorKind::invalid_parameter, "time " + std::to_string(t) + " is not a grid node");
  return *idx;
}

std::size_t TimeGrid::interval_containing(double t) const {
  if (t <= nodes_.front()) return 0;
  if (t >= nodes_.back()) return intervals() - 1;
  auto it = std::upper_bound(nodes_.begin(), nodes_.end(), t);
  return static_cast<std::size_t>(it - nodes_.begin()) - 1;
}

void TimeGrid::clipped_weights(std::size_t a, std::size_t b, std::span<double> out) const {
  require(a <= b && b < nodes_.size(), "clipped_weights: need a <= b < size");
  require(out.size() >= b - a + 1, "clipped_weights: output too small");
  std::fill(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(b - a + 1), 0.0);
  if (a == b) return;

  const std::size_t m = spec_.pts_per_panel;
  const std::size_t stride = m + 1;
  const std::size_t pa = a / stride;
  const std::size_t la = a % stride;
  const std::size_t pb = (b - 1) / stride;
  const std::size_t lb = b - pb * stride;

  auto add_local = [&](std::size_t panel, std::size_t i, std::size_t j) {
    const double half = 0.5 * (breaks_[panel + 1] - breaks_[panel]);
    const auto& w = rules_->at(i, j);
    const std::size_t first = panel * stride + i;
    for (std::size_t k = 0; k < w.size(); ++k) out[first + k - a] += half * w[k];
  };

  if (pa == pb) {
    add_local(pa, la, lb);
    return;
  }
  add_local(pa, la, m + 1);
  for (std::size_t p = pa + 1; p < pb; ++p) add_local(p, 0, m + 1);
  add_local(pb, 0, lb);
}

std::vector<double> TimeGrid::clipped_weights(std::size_t a, std::size_t b) const {
  std::vector<double> w(b - a + 1);
  clipped_weights(a, b, w);
  return w;
}

std::vector<double> TimeGrid::clipped_weight_table(std::size_t a) const {
  const std::size_t n = nodes_.size() - a;
  std::vector<double> table(n * n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    clipped_weights(a, a + j, std::span<double>(table).subspan(j * n, j + 1));
  }
  return table;
}

double TimeGrid::integrate(std::span<const double> values, std::size_t a, std::size_t b) const {
  std::vector<double> w(b - a + 1);
  clipped_weights(a, b, w);
  double acc = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) acc += w[k] * values[a + k];
  return acc;
}

double truncation_horizon(double decay_rate, double prefactor, double tol) {
  if (!(decay_rate > 0.0)) fail(ErrorKind::invalid_parameter, "truncation_horizon: decay_rate must be > 0");
  if (!(prefactor > 0.0)) fail(ErrorKind::invalid_parameter, "truncation_horizon: prefactor must be > 0");
  if (!(tol > 0.0) || !(tol < prefactor))
    fail(ErrorKind::invalid_parameter, "truncation_horizon: need 0 < tol < prefactor");
  return std::max(0.0, std::log(prefactor / (tol * decay_rate)) / decay_rate);
}

TailedIntegral integrate_semi_infinite(const std::function<double(double)>& f, const TimeGrid& grid,
                                       double tail_prefactor, double tail_rate) {
  TailedIntegral out;
  const auto x = grid.nodes();
  const auto w = grid.weights();
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (w[i] == 0.0) continue;
    const double v = f(x[i]);
    if (!std::isfinite(v)) fail(ErrorKind::numeric_error, "integrate_semi_infinite: non-finite integrand");
    out.value += w[i] * v;
  }
  out.tail_bound = tail_rate > 0.0 ? tail_prefactor * std::exp(-tail_rate * grid.t_max()) / tail_rate
                                   : std::numeric_limits<double>::infinity();
  return out;
}

double integrate_triangle(const std::function<double(double, double)>& g, double t, const TimeGrid& grid) {
  const std::size_t a = grid.require_node(t);
  const std::size_t n = grid.size();
  const auto x = grid.nodes();
  std::vector<double> outer(n - a);
  grid.clipped_weights(a, n - 1, outer);
  std::vector<double> inner(n - a);
  double total = 0.0;
  for (std::size_t j = a + 1; j < n; ++j) {
    if (outer[j - a] == 0.0) continue;
    grid.clipped_weights(a, j, inner);
    double acc = 0.0;
    for (std::size_t i = a; i <= j; ++i) {
      if (inner[i - a] == 0.0) continue;
      const double v = g(x[i], x[j]);
      if (!std::isfinite(v)) fail(ErrorKind::numeric_error, "integrate_triangle: non-finite integrand");
      acc += inner[i - a] * v;
    }
    total += outer[j - a] * acc;
  }
  return total;
}

double weighted_l2_squared(const TimeGrid& grid, std::span<const double> y, double exponent) {
  const auto x = grid.nodes();
  const auto w = grid.weights();
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    acc += w[i] * std::exp(-exponent * grid.lambda() * x[i]) * y[i] * y[i];
  }
  return acc;
}

}  // namespace bsvie
