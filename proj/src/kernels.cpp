#include "bsvie/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

#include "bsvie/error.hpp"
#include "bsvie/format.hpp"
#include "bsvie/parallel.hpp"

namespace bsvie {

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

/// One Volterra convolution step along row a:
/// out_j = sum_{i in [a, j]} W(j, i) in_i K(i, j).
void convolve_row(const Eigen::MatrixXd& K, std::size_t a, const std::vector<double>& wtable,
                  const std::vector<double>& in, std::vector<double>& out) {
  const std::size_t n = static_cast<std::size_t>(K.rows()) - a;
  for (std::size_t j = 0; j < n; ++j) {
    const double* w = wtable.data() + j * n;
    double acc = 0.0;
    for (std::size_t i = 0; i <= j; ++i) acc += w[i] * in[i] * K(a + i, a + j);
    out[j] = acc;
  }
}

double row_weighted_norm(const std::vector<double>& row, std::size_t a, const std::vector<double>& wtable,
                         double lambda, double exponent, const TimeGrid& grid) {
  const std::size_t n = grid.size() - a;
  const double* w = wtable.data() + (n - 1) * n;
  double acc = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    acc += w[j] * std::exp(-exponent * lambda * grid.node(a + j)) * std::abs(row[j]);
  }
  return acc;
}

double horizon_tail(const TwoTimeKernel& kernel, double lambda, double exponent, const TimeGrid& grid) {
  const double c = kernel.c_phi;
  if (c == 0.0) return 0.0;
  const double d = kernel.alpha - c;
  const double rate = d + exponent * lambda;
  if (!(rate > 0.0)) return std::numeric_limits<double>::infinity();
  const double t_max = grid.t_max();
  if (d >= 0.0) return c * std::exp(-exponent * lambda * t_max) / rate;
  return c * std::exp(-rate * t_max) / rate;
}

}  // namespace

void enforce_contraction(double L, const ResolventOptions& options, std::vector<std::string>& warnings) {
  if (!std::isfinite(L)) fail(ErrorKind::numeric_error, "contraction constant is not finite");
  if (L < 0.5) return;
  if (options.relaxed_contraction && L < 1.0) {
    warnings.push_back("relaxed contraction: L(lambda)=" + fmt(L) + " >= 1/2 (A2 not satisfied)");
    return;
  }
  fail(ErrorKind::contraction_violated, "contraction condition violated: L(lambda)=" + fmt(L) +
                                            (options.relaxed_contraction ? " >= 1 (A2)" : " >= 1/2 (A2)"));
}

TwoTimeKernel make_kernel(std::function<double(double, double)> eval, double c_phi, double alpha,
                          std::string label) {
  require(static_cast<bool>(eval), "kernel: eval must be callable");
  require(c_phi >= 0.0 && std::isfinite(c_phi), "kernel: c_phi must be finite and >= 0");
  require(alpha >= 0.0 && std::isfinite(alpha), "kernel: alpha must be finite and >= 0");
  return TwoTimeKernel{std::move(eval), c_phi, alpha, std::move(label)};
}

double decay_envelope_ratio(const TwoTimeKernel& kernel, const TimeGrid& grid) {
  const auto x = grid.nodes();
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = i; j < x.size(); ++j) {
      const double v = std::abs(kernel(x[i], x[j]));
      if (v == 0.0) continue;
      const double env = kernel.c_phi * std::exp(-kernel.alpha * (x[j] - x[i]));
      worst = std::max(worst, env > 0.0 ? v / env : std::numeric_limits<double>::infinity());
    }
  }
  return worst;
}

void check_decay_envelope(const TwoTimeKernel& kernel, const TimeGrid& grid) {
  const double ratio = decay_envelope_ratio(kernel, grid);
  if (ratio > 1.0 + 1e-9) {
    fail(ErrorKind::assumption_violated,
         "A1 violated: |Phi(t,s)| exceeds c_phi*exp(-alpha(s-t)) by factor " + fmt(ratio) + " for kernel '" +
             kernel.label + "'");
  }
}

Eigen::MatrixXd tabulate_kernel(const TwoTimeKernel& kernel, const TimeGrid& grid) {
  const std::size_t n = grid.size();
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  const auto x = grid.nodes();
  parallel_for(n, [&](std::size_t i) {
    for (std::size_t j = i; j < n; ++j) {
      const double v = kernel(x[i], x[j]);
      if (!std::isfinite(v)) fail(ErrorKind::numeric_error, "kernel '" + kernel.label + "' is not finite");
      K(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
    }
  });
  return K;
}

double weighted_norm_L(const TwoTimeKernel& kernel, double lambda, const TimeGrid& grid, double exponent) {
  require(lambda > 0.0, "weighted_norm_L: lambda must be > 0");
  const std::size_t n = grid.size();
  const auto x = grid.nodes();
  std::vector<double> rows(n, 0.0);
  parallel_for(n, [&](std::size_t a) {
    std::vector<double> w(n - a);
    grid.clipped_weights(a, n - 1, w);
    double acc = 0.0;
    for (std::size_t j = a; j < n; ++j) {
      if (w[j - a] == 0.0) continue;
      const double v = kernel(x[a], x[j]);
      if (!std::isfinite(v)) fail(ErrorKind::numeric_error, "weighted_norm_L: kernel is not finite");
      acc += w[j - a] * std::exp(-exponent * lambda * x[j]) * std::abs(v);
    }
    if (kernel.c_phi > 0.0) {
      const double rate = kernel.alpha + exponent * lambda;
      acc += kernel.c_phi * std::exp(-exponent * lambda * grid.t_max() - kernel.alpha * (grid.t_max() - x[a])) /
             rate;
    }
    rows[a] = acc;
  });
  return *std::max_element(rows.begin(), rows.end());
}

std::vector<double> weighted_row_norms(const Eigen::MatrixXd& table, double lambda, const TimeGrid& grid,
                                       double exponent) {
  const std::size_t n = grid.size();
  std::vector<double> out(n, 0.0);
  const auto x = grid.nodes();
  parallel_for(n, [&](std::size_t a) {
    std::vector<double> w(n - a);
    grid.clipped_weights(a, n - 1, w);
    double acc = 0.0;
    for (std::size_t j = a; j < n; ++j) {
      acc += w[j - a] * std::exp(-exponent * lambda * x[j]) *
             std::abs(table(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(j)));
    }
    out[a] = acc;
  });
  return out;
}

double iterated_kernel(const TwoTimeKernel& kernel, int n, double t, double s, const TimeGrid& grid) {
  if (n < 1) fail(ErrorKind::invalid_parameter, "iterated_kernel: n must be >= 1");
  if (t > s) fail(ErrorKind::invalid_parameter, "iterated_kernel: need t <= s");
  if (n == 1) return kernel(t, s);
  if (t == s) return 0.0;

  const double span = s - t;
  const double panel_width = grid.t_max() / static_cast<double>(grid.n_panels());
  const auto panels = static_cast<std::size_t>(std::max(1.0, std::ceil(span / panel_width)));
  const TimeGrid local = build_graded_grid(span, panels, grid.pts_per_panel(), 1.0, grid.lambda());
  const TwoTimeKernel shifted{[&](double u, double v) { return kernel(t + u, t + v); }, kernel.c_phi,
                              kernel.alpha, kernel.label};
  const Eigen::MatrixXd K = tabulate_kernel(shifted, local);
  const std::vector<double> wtable = local.clipped_weight_table(0);
  const std::size_t m = local.size();
  std::vector<double> term(m);
  std::vector<double> next(m);
  for (std::size_t j = 0; j < m; ++j) term[j] = K(0, static_cast<Eigen::Index>(j));
  for (int k = 1; k < n; ++k) {
    convolve_row(K, 0, wtable, term, next);
    std::swap(term, next);
  }
  return term[m - 1];
}

ResolventTable resolvent_series(const TwoTimeKernel& kernel, double lambda, double tol, const TimeGrid& grid,
                                const ResolventOptions& options) {
  require(tol > 0.0, "resolvent_series: tol must be > 0");
  ResolventTable table;
  table.grid = grid;
  table.method = ResolventMethod::series;
  table.L_lambda = weighted_norm_L(kernel, lambda, grid, options.weight_exponent);
  enforce_contraction(table.L_lambda, options, table.warnings);

  const double L = table.L_lambda;
  int terms = 1;
  if (L > 0.0) {
    while (std::pow(L, terms + 1) / (1.0 - L) >= tol) {
      if (terms >= options.max_terms) {
        table.warnings.push_back("series truncated at max_terms before reaching tol");
        break;
      }
      ++terms;
    }
  }
  table.series_terms_used = terms;
  table.truncation_bound = std::pow(L, terms + 1) / (1.0 - L);
  table.tail_estimate = horizon_tail(kernel, lambda, options.weight_exponent, grid);

  const std::size_t n = grid.size();
  const Eigen::MatrixXd K = tabulate_kernel(kernel, grid);
  table.values = Eigen::MatrixXd::Zero(K.rows(), K.cols());
  table.iterated_norms = Eigen::MatrixXd::Zero(terms, static_cast<Eigen::Index>(n));

  parallel_for(n, [&](std::size_t a) {
    const std::vector<double> wtable = grid.clipped_weight_table(a);
    const std::size_t len = n - a;
    std::vector<double> term(len);
    std::vector<double> next(len);
    std::vector<double> psi(len);
    for (std::size_t j = 0; j < len; ++j) term[j] = K(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(a + j));
    psi = term;
    table.iterated_norms(0, static_cast<Eigen::Index>(a)) =
        row_weighted_norm(term, a, wtable, lambda, options.weight_exponent, grid);
    for (int k = 1; k < terms; ++k) {
      convolve_row(K, a, wtable, term, next);
      std::swap(term, next);
      for (std::size_t j = 0; j < len; ++j) psi[j] += term[j];
      table.iterated_norms(k, static_cast<Eigen::Index>(a)) =
          row_weighted_norm(term, a, wtable, lambda, options.weight_exponent, grid);
    }
    for (std::size_t j = 0; j < len; ++j) {
      if (!std::isfinite(psi[j])) fail(ErrorKind::numeric_error, "resolvent_series: non-finite value");
      table.values(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(a + j)) = psi[j];
    }
  });
  return table;
}

ResolventTable resolvent_nystrom(const TwoTimeKernel& kernel, const TimeGrid& grid,
                                 const ResolventOptions& options) {
  ResolventTable table;
  table.grid = grid;
  table.method = ResolventMethod::nystrom;
  table.L_lambda = weighted_norm_L(kernel, grid.lambda(), grid, options.weight_exponent);
  enforce_contraction(table.L_lambda, options, table.warnings);
  table.tail_estimate = horizon_tail(kernel, grid.lambda(), options.weight_exponent, grid);

  const std::size_t n = grid.size();
  const Eigen::MatrixXd K = tabulate_kernel(kernel, grid);
  table.values = Eigen::MatrixXd::Zero(K.rows(), K.cols());

  parallel_for(n, [&](std::size_t a) {
    const std::vector<double> wtable = grid.clipped_weight_table(a);
    const std::size_t len = n - a;
    const auto A = static_cast<Eigen::Index>(a);
    std::vector<double> psi(len);
    psi[0] = K(A, A);
    // Forward substitution in s; the diagonal weight makes each step implicit.
    for (std::size_t j = 1; j < len; ++j) {
      const double* w = wtable.data() + j * len;
      const auto J = static_cast<Eigen::Index>(a + j);
      double rhs = K(A, J);
      for (std::size_t i = 0; i < j; ++i) rhs += w[i] * psi[i] * K(static_cast<Eigen::Index>(a + i), J);
      const double pivot = 1.0 - w[j] * K(J, J);
      if (!std::isfinite(pivot) || pivot == 0.0 || !std::isfinite(rhs)) {
        fail(ErrorKind::singular_system, "resolvent_nystrom: degenerate pivot at row " + std::to_string(a));
      }
      psi[j] = rhs / pivot;
    }
    for (std::size_t j = 0; j < len; ++j) table.values(A, static_cast<Eigen::Index>(a + j)) = psi[j];
  });
  return table;
}

Eigen::MatrixXd resolvent_residual_matrix(const ResolventTable& table, const TwoTimeKernel& kernel) {
  const TimeGrid& grid = table.grid;
  const std::size_t n = grid.size();
  const Eigen::MatrixXd K = tabulate_kernel(kernel, grid);
  Eigen::MatrixXd R = Eigen::MatrixXd::Zero(K.rows(), K.cols());
  parallel_for(n, [&](std::size_t a) {
    const std::vector<double> wtable = grid.clipped_weight_table(a);
    const std::size_t len = n - a;
    const auto A = static_cast<Eigen::Index>(a);
    for (std::size_t j = 0; j < len; ++j) {
      const double* w = wtable.data() + j * len;
      const auto J = static_cast<Eigen::Index>(a + j);
      double conv = 0.0;
      for (std::size_t i = 0; i <= j; ++i) {
        conv += w[i] * table.values(A, static_cast<Eigen::Index>(a + i)) * K(static_cast<Eigen::Index>(a + i), J);
      }
      R(A, J) = table.values(A, J) - K(A, J) - conv;
    }
  });
  return R;
}

double resolvent_residual(const ResolventTable& table, const TwoTimeKernel& kernel) {
  return resolvent_residual_matrix(table, kernel).cwiseAbs().maxCoeff();
}

double max_abs_difference(const ResolventTable& a, const ResolventTable& b) {
  require(a.values.rows() == b.values.rows(), "max_abs_difference: tables on different grids");
  return (a.values - b.values).cwiseAbs().maxCoeff();
}

double ResolventTable::at(double t, double s) const {
  const double t_max = grid.t_max();
  t = std::clamp(t, 0.0, t_max);
  s = std::clamp(std::max(s, t), 0.0, t_max);
  const std::size_t i = grid.interval_containing(t);
  const std::size_t j = grid.interval_containing(s);
  const auto x = grid.nodes();
  auto v = [&](std::size_t r, std::size_t c) {
    return values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  };
  if (i == j) {
    const double h = x[i + 1] - x[i];
    const double u = (t - x[i]) / h;
    const double w = (s - x[i]) / h;
    return v(i, i) + w * (v(i, i + 1) - v(i, i)) + u * (v(i + 1, i + 1) - v(i, i + 1));
  }
  const double u = (t - x[i]) / (x[i + 1] - x[i]);
  const double w = (s - x[j]) / (x[j + 1] - x[j]);
  return (1 - u) * (1 - w) * v(i, j) + (1 - u) * w * v(i, j + 1) + u * (1 - w) * v(i + 1, j) +
         u * w * v(i + 1, j + 1);
}

void write_resolvent_csv(std::ostream& out, const ResolventTable& table, const TwoTimeKernel& kernel) {
  const Eigen::MatrixXd R = resolvent_residual_matrix(table, kernel);
  const Eigen::MatrixXd K = tabulate_kernel(kernel, table.grid);
  const auto x = table.grid.nodes();
  out << "t,s,psi,phi,residual\n";
  for (Eigen::Index i = 0; i < table.values.rows(); ++i) {
    for (Eigen::Index j = i; j < table.values.cols(); ++j) {
      out << format_double(x[static_cast<std::size_t>(i)]) << ',' << format_double(x[static_cast<std::size_t>(j)])
          << ',' << format_double(table.values(i, j)) << ',' << format_double(K(i, j)) << ','
          << format_double(R(i, j)) << '\n';
    }
  }
}

double Example1Kernel::iterated(int n, double t, double s) const {
  require(n >= 1 && t <= s, "Example1Kernel::iterated: need n >= 1 and t <= s");
  const double sigma = s - t;
  if (n == 1) return alpha * std::exp(-gamma * sigma);
  if (sigma == 0.0) return 0.0;
  return std::exp(n * std::log(alpha) - gamma * sigma + (n - 1) * std::log(sigma) - std::lgamma(n));
}

double Example1Kernel::resolvent(double t, double s) const { return alpha * std::exp(-(gamma - alpha) * (s - t)); }

double Example1Kernel::contraction_constant(double lambda) const { return alpha / (gamma + 0.5 * lambda); }

Example1Kernel make_example1_kernel(double alpha, double gamma) {
  if (!(alpha > 0.0) || !(gamma > 0.0)) {
    fail(ErrorKind::invalid_parameter, "example1 kernel: alpha and gamma must be > 0");
  }
  Example1Kernel k;
  k.alpha = alpha;
  k.gamma = gamma;
  k.kernel = make_kernel([alpha, gamma](double t, double s) { return alpha * std::exp(-gamma * (s - t)); }, alpha,
                         gamma, "example1");
  return k;
}

double SeparableKernel::integral_phi(double t, double s) const {
  if (phi_antiderivative) return phi_antiderivative(s) - phi_antiderivative(t);
  if (s <= t) return 0.0;
  static const GaussRule rule = gauss_legendre(12);
  const auto panels = static_cast<std::size_t>(std::max(4.0, std::ceil(4.0 * (s - t))));
  const double h = (s - t) / static_cast<double>(panels);
  double acc = 0.0;
  for (std::size_t p = 0; p < panels; ++p) {
    const double mid = t + (static_cast<double>(p) + 0.5) * h;
    for (std::size_t q = 0; q < rule.nodes.size(); ++q) acc += 0.5 * h * rule.weights[q] * phi(mid + 0.5 * h * rule.nodes[q]);
  }
  return acc;
}

double SeparableKernel::resolvent(double t, double s) const { return phi(s) * std::exp(integral_phi(t, s)); }

SeparableKernel make_separable_kernel(std::function<double(double)> phi, double bound, double decay,
                                      std::function<double(double)> antiderivative, std::string label) {
  require(static_cast<bool>(phi), "separable kernel: phi must be callable");
  SeparableKernel k;
  k.phi = phi;
  k.phi_antiderivative = std::move(antiderivative);
  // |phi(s)| <= bound e^{-decay s} <= bound e^{-decay (s - t)} for t >= 0.
  k.kernel = make_kernel([phi](double, double s) { return phi(s); }, bound, decay, std::move(label));
  return k;
}

}  // namespace bsvie
