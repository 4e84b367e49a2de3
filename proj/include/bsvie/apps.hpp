#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bsvie/kernels.hpp"
#include "bsvie/solver.hpp"
#include "bsvie/stochastics.hpp"
#include "bsvie/timegrid.hpp"

namespace bsvie {

struct Check {
  std::string name;
  double error = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct Report {
  std::string title;
  std::vector<Check> checks;
  /// Named scalars in insertion order.
  std::vector<std::pair<std::string, double>> values;
  std::vector<std::string> warnings;

  bool passed() const;
  void add_check(std::string name, double error, double tolerance);
  double value(const std::string& name) const;
};

struct Example1Options {
  double tol = 1e-6;         // relative, for kernels and resolvent
  double y_tol = 1e-6;       // absolute, Y curve
  double cross_tol = 1e-8;   // series vs Nystrom
  double series_tol = 1e-22;
  int max_n = 5;
};

/// Phi = alpha e^{-gamma (s-t)}, h(t, s) = e^{-mu s}: iterated kernels,
/// resolvent (both methods), L(lambda) and the Y curve against closed forms.
Report example1_report(double alpha, double gamma, double mu, double lambda, const TimeGrid& grid,
                       const Example1Options& options = {});

/// Y(t) = int_t^inf (1 + alpha/(gamma-alpha) (1 - e^{-(gamma-alpha)(s-t)})) e^{-mu s} ds
double example1_y_closed_form(double alpha, double gamma, double mu, double t);

struct Example2Spec {
  std::function<double(double)> phi;
  /// Optional antiderivative of phi.
  std::function<double(double)> phi_antiderivative;
  double phi_bound = 1.0;
  double phi_decay = 0.0;
  std::function<double(double)> h;
  double h_prefactor = 1.0;
  double h_rate = 1.0;
  double lambda = 8.0;
};

struct Example2MC {
  std::size_t n_paths = 4000;
  std::uint64_t seed = 1;
  std::size_t degree = 2;
  std::vector<double> t_rows{0.0, 1.0, 2.0};
};

struct Example2Options {
  double tol = 1e-6;
  double series_tol = 1e-22;
  /// RK4 step for the backward ODE oracle.
  double ode_step = 1e-3;
  std::optional<Example2MC> mc;
};

/// Phi(t, s) = phi(s), h(t, s) = h(s): Y(t) = int_t^inf exp(int_t^s phi) h(s) ds
/// via quadrature of the formula, the resolvent pipeline and the backward ODE
/// y' = -phi y - h, y(T_max) = 0. With mc set, also the stochastic driver
/// e^{-s} cos(B(s)) scaled by h's envelope and the t-independence of Z rows.
Report example2_report(const Example2Spec& spec, const TimeGrid& grid, const Example2Options& options = {});

/// Example-2 formula by adaptive quadrature on [t, inf).
double example2_formula(const Example2Spec& spec, double t);
/// Backward ODE oracle on the grid nodes, y(T_max) = 0.
std::vector<double> example2_ode(const Example2Spec& spec, const TimeGrid& grid, double step);

struct ControlProblem {
  double a = -1.0;
  /// Memory kernel b(r) = b0 e^{-kappa r}.
  double b0 = 0.0;
  double kappa = 1.0;
  double c = 0.0;
  double rho = 1.0;
  double sigma = 1.0;
  double x0 = 1.0;
  double explosion_cap = 1e6;

  double b(double r) const;
  /// int_0^r b
  double b_integral(double r) const;
};

/// Control u at node i from the state history X[0..i] on one path.
using Control = std::function<double(std::size_t i, std::span<const double> x_history, const PathView& path)>;

struct ControlResult {
  Estimate J;
  double tail_estimate = 0.0;
  std::vector<double> mean_x;  // per node
  std::vector<double> sd_x;
  double max_abs_x = 0.0;
  std::vector<double> path_cost;
};

void validate_control_problem(const ControlProblem& problem);

/// Exponential Euler for dX = (aX + int_0^t b(t-r) X dr + c u) dt + sigma dW on
/// the grid (history by left-point sums; exact in law when b = 0) and the
/// discounted cost int e^{-rho t}(X^2 + u^2) dt by the grid rule.
ControlResult simulate_control(const ControlProblem& problem, const PathBundle& paths, const Control& control);

/// Adjoint kernel e^{-rho(s-t)} (a + int_0^{s-t} b).
TwoTimeKernel adjoint_kernel(const ControlProblem& problem);

enum class AdjointDriver { zero, discounted_mean_state };

/// Mean uncontrolled state (sigma = 0 path) on the grid.
std::vector<double> mean_state(const ControlProblem& problem, const TimeGrid& grid);

struct AdjointSolution {
  BSVIEProblem bsvie;
  AssumptionReport assumptions;
  std::vector<double> Y;
  /// u = -c Y on the grid.
  std::vector<double> u;
};

/// Builds and solves the adjoint BSVIE. With the `zero` driver Y = 0 and the
/// candidate control vanishes; `discounted_mean_state` uses e^{-rho(s-t)} xbar(s).
AdjointSolution solve_adjoint(const ControlProblem& problem, const TimeGrid& grid, AdjointDriver driver,
                              double lambda);

struct StationarityProbe {
  std::string direction;
  double eps = 0.0;
  double derivative = 0.0;  // [J(u + eps v) - J(u)] / eps, common paths
  double std_error = 0.0;
};

struct ControlDemo {
  AdjointSolution adjoint;
  std::vector<std::pair<std::string, ControlResult>> ranked;  // by J, ascending
  std::vector<StationarityProbe> probes;
};

/// J for u = 0, the candidate u = -cY and a random bounded control, ranked,
/// plus stationarity probes of the candidate in directions e^{-t} and
/// e^{-t/2} cos t at eps = 0.1, 0.01.
ControlDemo control_demo(const ControlProblem& problem, const PathBundle& paths, AdjointDriver driver,
                         double lambda, double random_bound = 1.0);

}  // namespace bsvie
