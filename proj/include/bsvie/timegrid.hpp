#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

namespace bsvie {

/// Gauss-Legendre nodes and weights on [-1, 1], ascending.
struct GaussRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

GaussRule gauss_legendre(std::size_t n);

struct GridSpec {
  double t_max = 20.0;
  std::size_t n_panels = 20;
  std::size_t pts_per_panel = 10;
  double grading_rate = 1.0;
  double lambda = 2.0;
};

/// Composite graded Gauss-Legendre grid on [0, t_max].
///
/// Node layout: every panel contributes its left boundary followed by its
/// Gauss points; the final node is t_max. Boundary markers carry zero weight
/// in the full-range rule, Gauss points carry the panel Gauss weights.
///
/// Sub-range integrals over [nodes[a], nodes[b]] use only nodes a..b:
/// complete panels keep their Gauss rule, clipped panels use interpolatory
/// weights on the nodes that survive the clip.
class TimeGrid {
 public:
  TimeGrid() = default;

  std::span<const double> nodes() const { return nodes_; }
  std::span<const double> weights() const { return weights_; }
  std::span<const double> breaks() const { return breaks_; }
  double node(std::size_t i) const { return nodes_[i]; }
  std::size_t size() const { return nodes_.size(); }
  std::size_t intervals() const { return nodes_.empty() ? 0 : nodes_.size() - 1; }
  double dt(std::size_t k) const { return nodes_[k + 1] - nodes_[k]; }

  double t_max() const { return spec_.t_max; }
  double lambda() const { return spec_.lambda; }
  const GridSpec& spec() const { return spec_; }
  std::size_t n_panels() const { return breaks_.size() - 1; }
  std::size_t pts_per_panel() const { return spec_.pts_per_panel; }

  bool is_boundary(std::size_t i) const { return i % (spec_.pts_per_panel + 1) == 0; }

  /// Index of the node equal to t (within tol), if any.
  std::optional<std::size_t> index_of(double t, double tol = 1e-12) const;
  /// Like index_of but throws invalid-parameter when t is not a node.
  std::size_t require_node(double t, double tol = 1e-12) const;
  /// k with nodes[k] <= t < nodes[k+1]; the last interval for t >= t_max.
  std::size_t interval_containing(double t) const;

  /// Weights of the clipped rule for [nodes[a], nodes[b]], written to
  /// out[0 .. b-a]. a == b yields zeros.
  void clipped_weights(std::size_t a, std::size_t b, std::span<double> out) const;
  std::vector<double> clipped_weights(std::size_t a, std::size_t b) const;

  /// Dense row of clipped rules: W(j, i-a) for the interval [a, j], j >= a.
  /// Stored row-major with stride size()-a.
  std::vector<double> clipped_weight_table(std::size_t a) const;

  /// Integral of node values over [nodes[a], nodes[b]]; values indexed globally.
  double integrate(std::span<const double> values, std::size_t a, std::size_t b) const;

  friend TimeGrid build_graded_grid(double, std::size_t, std::size_t, double, double);

  /// Reference-panel interpolatory rules; opaque outside timegrid.cpp.
  struct LocalRules;

 private:

  GridSpec spec_;
  std::vector<double> nodes_;
  std::vector<double> weights_;
  std::vector<double> breaks_;
  std::shared_ptr<const LocalRules> rules_;
};

/// Panels grow geometrically by grading_rate and sum to t_max.
TimeGrid build_graded_grid(double t_max, std::size_t n_panels, std::size_t pts_per_panel,
                           double grading_rate, double lambda);
TimeGrid build_graded_grid(const GridSpec& spec);

/// Horizon T with prefactor * integral_T^inf exp(-rate s) ds <= tol,
/// i.e. ln(prefactor / (tol * rate)) / rate, clamped at 0.
double truncation_horizon(double decay_rate, double prefactor, double tol);

struct TailedIntegral {
  double value = 0.0;
  double tail_bound = 0.0;
};

/// Quadrature over [0, t_max] plus the exponential tail bound beyond t_max.
TailedIntegral integrate_semi_infinite(const std::function<double(double)>& f, const TimeGrid& grid,
                                       double tail_prefactor, double tail_rate);

/// integral_t^{t_max} integral_t^s g(u, s) du ds with the clipped inner rule; t must be a node.
double integrate_triangle(const std::function<double(double, double)>& g, double t,
                          const TimeGrid& grid);

/// sum_i w_i exp(-exponent * lambda * x_i) |y_i|^2 over the full rule; the
/// squared weighted L2 norm of a grid curve. exponent is 1 for the H^2_lambda
/// norm and 0.5 for the convention used by the contraction constant.
double weighted_l2_squared(const TimeGrid& grid, std::span<const double> y, double exponent = 1.0);

}  // namespace bsvie
