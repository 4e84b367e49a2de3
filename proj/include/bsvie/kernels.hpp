#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bsvie/timegrid.hpp"

namespace bsvie {

/// Kernel on the Volterra triangle {0 <= t <= s} with the decay envelope
/// |eval(t, s)| <= c_phi * exp(-alpha (s - t)). alpha == 0 marks a kernel
/// that is only bounded; the contraction constant is then the operative check.
struct TwoTimeKernel {
  std::function<double(double, double)> eval;
  double c_phi = 0.0;
  double alpha = 0.0;
  std::string label;

  double operator()(double t, double s) const { return eval(t, s); }
};

TwoTimeKernel make_kernel(std::function<double(double, double)> eval, double c_phi, double alpha,
                          std::string label);

/// Largest ratio |eval(t,s)| / (c_phi e^{-alpha(s-t)}) over grid pairs. A
/// value above 1 (plus roundoff) violates the decay envelope.
double decay_envelope_ratio(const TwoTimeKernel& kernel, const TimeGrid& grid);

/// Throws assumption-violated ("A1") when the envelope fails on the grid.
void check_decay_envelope(const TwoTimeKernel& kernel, const TimeGrid& grid);

/// Upper-triangular tabulation K(i, j) = kernel(x_i, x_j), i <= j.
Eigen::MatrixXd tabulate_kernel(const TwoTimeKernel& kernel, const TimeGrid& grid);

/// sup_t integral_t^inf exp(-exponent * lambda * s) |Phi(t, s)| ds over grid rows,
/// including the envelope tail beyond t_max. exponent = 0.5 gives L(lambda).
double weighted_norm_L(const TwoTimeKernel& kernel, double lambda, const TimeGrid& grid,
                       double exponent = 0.5);

/// Per-row weighted L1 norms of an upper-triangular table (no tail term).
std::vector<double> weighted_row_norms(const Eigen::MatrixXd& table, double lambda, const TimeGrid& grid,
                                       double exponent = 0.5);

/// Phi^(n)(t, s) by recursive quadrature on a local grid over [t, s] with
/// the same points per panel as `grid`.
double iterated_kernel(const TwoTimeKernel& kernel, int n, double t, double s, const TimeGrid& grid);

enum class ResolventMethod { series, nystrom };

struct ResolventOptions {
  /// Accept 1/2 <= L < 1 with a warning instead of failing.
  bool relaxed_contraction = false;
  int max_terms = 400;
  double weight_exponent = 0.5;
};

/// Fails with contraction-violated unless L < 1/2; relaxed mode accepts
/// L < 1 and records a warning.
void enforce_contraction(double L, const ResolventOptions& options, std::vector<std::string>& warnings);

struct ResolventTable {
  TimeGrid grid;
  ResolventMethod method = ResolventMethod::nystrom;
  Eigen::MatrixXd values;  // Psi(x_i, x_j) for i <= j, zero below the diagonal
  int series_terms_used = 0;
  double truncation_bound = 0.0;  // L^{N+1} / (1 - L) for the series, 0 for Nystrom
  double tail_estimate = 0.0;     // envelope bound on the weighted mass beyond t_max
  double L_lambda = 0.0;
  /// iterated_norms(n-1, i): weighted L1 norm of Phi^(n)(x_i, .), series only.
  Eigen::MatrixXd iterated_norms;
  std::vector<std::string> warnings;

  double operator()(std::size_t i, std::size_t j) const { return values(i, j); }
  /// Bilinear interpolation on the triangle; clamps to [0, t_max] and t <= s.
  double at(double t, double s) const;
};

ResolventTable resolvent_series(const TwoTimeKernel& kernel, double lambda, double tol, const TimeGrid& grid,
                                const ResolventOptions& options = {});

ResolventTable resolvent_nystrom(const TwoTimeKernel& kernel, const TimeGrid& grid,
                                 const ResolventOptions& options = {});

/// max over grid pairs of |Psi - Phi - integral_t^s Psi(t,u) Phi(u,s) du|.
double resolvent_residual(const ResolventTable& table, const TwoTimeKernel& kernel);

/// Per-pair residual matrix (same layout as table.values).
Eigen::MatrixXd resolvent_residual_matrix(const ResolventTable& table, const TwoTimeKernel& kernel);

double max_abs_difference(const ResolventTable& a, const ResolventTable& b);

/// CSV with header t,s,psi,phi,residual; one row per grid pair t <= s.
void write_resolvent_csv(std::ostream& out, const ResolventTable& table, const TwoTimeKernel& kernel);

/// Phi(t, s) = alpha e^{-gamma (s - t)} with closed-form companions.
struct Example1Kernel {
  double alpha = 0.0;
  double gamma = 0.0;
  TwoTimeKernel kernel;

  double iterated(int n, double t, double s) const;
  double resolvent(double t, double s) const;
  /// alpha / (gamma + lambda / 2).
  double contraction_constant(double lambda) const;
};

Example1Kernel make_example1_kernel(double alpha, double gamma);

/// Phi(t, s) = phi(s). The companion resolvent is phi(s) exp(integral_t^s phi).
struct SeparableKernel {
  std::function<double(double)> phi;
  /// Optional antiderivative of phi; a composite Gauss rule is used otherwise.
  std::function<double(double)> phi_antiderivative;
  TwoTimeKernel kernel;

  double integral_phi(double t, double s) const;
  double resolvent(double t, double s) const;
};

/// bound and decay describe |phi(s)| <= bound e^{-decay s}; decay may be 0.
SeparableKernel make_separable_kernel(std::function<double(double)> phi, double bound, double decay,
                                      std::function<double(double)> antiderivative = {},
                                      std::string label = "separable");

}  // namespace bsvie
