#include "bsvie/malliavin.hpp"

#include <cfloat>
#include <cmath>

#include "bsvie/error.hpp"
#include "bsvie/format.hpp"
#include "bsvie/parallel.hpp"

namespace bsvie {

double fd_step(double dt) {
  const double raw = std::cbrt(DBL_EPSILON) * std::max(1.0, std::sqrt(std::max(dt, 0.0)));
  return std::exp2(std::floor(std::log2(raw)));
}

double brownian_malliavin_fd_interval(const PathFunctional& F, const PathView& path, std::size_t k, double eps) {
  const TimeGrid& g = path.grid();
  require(k < g.intervals(), "brownian_malliavin_fd: interval out of range");
  const double h = eps > 0.0 ? eps : fd_step(g.dt(k));
  const double up = F(path.with_bump(k, h));
  const double down = F(path.with_bump(k, -h));
  if (!std::isfinite(up) || !std::isfinite(down)) {
    fail(ErrorKind::numeric_error, "brownian_malliavin_fd: non-finite bumped value for " + F.description);
  }
  return (up - down) / (2.0 * h);
}

double brownian_malliavin_fd(const PathFunctional& F, const PathView& path, double s, double eps) {
  const std::size_t j = path.grid().require_node(s);
  require(j >= 1, "brownian_malliavin_fd: s must be an interior node (s > 0)");
  return brownian_malliavin_fd_interval(F, path, j - 1, eps);
}

double jump_difference(const PathFunctional& F, const PathView& path, double s, double zeta) {
  const JumpSpec* spec = path.bundle().jump_spec();
  require(spec != nullptr, "jump_difference: paths carry no jump measure");
  const std::size_t m = spec->mark_index(zeta);
  const double with = F(path.with_jump(s, m));
  const double without = F(path);
  if (!std::isfinite(with) || !std::isfinite(without)) {
    fail(ErrorKind::numeric_error, "jump_difference: non-finite value for " + F.description);
  }
  return with - without;
}

Eigen::MatrixXd regression_state(const PathBundle& paths, std::size_t node, bool include_jump_count) {
  const bool jumps = include_jump_count && paths.jump_spec() != nullptr;
  const auto n = static_cast<Eigen::Index>(paths.n_paths());
  Eigen::MatrixXd X(n, jumps ? 2 : 1);
  const double t = paths.grid().node(node);
  for (Eigen::Index p = 0; p < n; ++p) {
    const auto pi = static_cast<std::size_t>(p);
    X(p, 0) = paths.B(pi, node);
    if (jumps) X(p, 1) = static_cast<double>(PathView(paths, pi).jump_count(t));
  }
  return X;
}

ClarkOconeResult condition_integrands(Eigen::VectorXd values, const Eigen::MatrixXd& raw_z,
                                      const std::vector<Eigen::MatrixXd>& raw_k, const PathBundle& paths,
                                      const GirsanovWeight& weights, const ClarkOconeOptions& opts) {
  const TimeGrid& g = paths.grid();
  const std::size_t n = paths.n_paths();
  const std::size_t nodes = g.size();
  require(opts.from_node + 1 < nodes, "clark_ocone: from_node leaves no increments");
  require(static_cast<std::size_t>(weights.log_M.rows()) == n, "clark_ocone: weights do not match paths");
  require(static_cast<std::size_t>(values.size()) == n && static_cast<std::size_t>(raw_z.rows()) == n &&
              static_cast<std::size_t>(raw_z.cols()) == nodes,
          "clark_ocone: raw derivative shape mismatch");
  require(raw_k.size() == paths.n_marks(), "clark_ocone: mark count mismatch");
  const auto N = static_cast<Eigen::Index>(n);
  const auto J = static_cast<Eigen::Index>(nodes);

  ClarkOconeResult out;
  out.values = std::move(values);
  out.mean = expect_Q({out.values.data(), n}, weights, nodes - 1);
  out.z = Eigen::MatrixXd::Zero(N, J);
  out.k.assign(raw_k.size(), Eigen::MatrixXd::Zero(N, J));
  out.degree_used.assign(nodes, 0);

  const Eigen::VectorXd w = weights.M_at(nodes - 1);
  for (std::size_t j = opts.from_node + 1; j < nodes; ++j) {
    const auto c = static_cast<Eigen::Index>(j);
    const double s = g.node(j);
    const Eigen::MatrixXd state = regression_state(paths, j - 1, opts.basis.include_jump_count);
    RegressionFit fit = weighted_regression(state, raw_z.col(c), w, opts.basis.degree);
    out.z.col(c) = fit.result.fitted;
    out.degree_used[j] = fit.result.degree_used;
    for (auto& msg : fit.result.warnings) out.warnings.push_back("s=" + format_double(s) + ": " + msg);
    for (std::size_t m = 0; m < raw_k.size(); ++m) {
      RegressionFit fk = weighted_regression(state, raw_k[m].col(c), w, opts.basis.degree);
      out.k[m].col(c) = fk.result.fitted;
      for (auto& msg : fk.result.warnings) out.warnings.push_back("s=" + format_double(s) + ": " + msg);
    }
  }
  const auto first = static_cast<Eigen::Index>(opts.from_node + 1);
  for (Eigen::Index j = 0; j < first; ++j) {
    out.z.col(j) = out.z.col(first);
    for (auto& km : out.k) km.col(j) = km.col(first);
    out.degree_used[static_cast<std::size_t>(j)] = out.degree_used[static_cast<std::size_t>(first)];
  }
  return out;
}

ClarkOconeResult clark_ocone_integrands(const PathFunctional& F, const PathBundle& paths,
                                        const GirsanovWeight& weights, const ClarkOconeOptions& opts) {
  const TimeGrid& g = paths.grid();
  const std::size_t n = paths.n_paths();
  const std::size_t nodes = g.size();
  require(opts.from_node + 1 < nodes, "clark_ocone: from_node leaves no increments");
  const auto N = static_cast<Eigen::Index>(n);
  const auto J = static_cast<Eigen::Index>(nodes);
  const JumpSpec* spec = paths.jump_spec();
  const std::size_t marks = paths.n_marks();

  Eigen::VectorXd values(N);
  Eigen::MatrixXd raw = Eigen::MatrixXd::Zero(N, J);
  std::vector<Eigen::MatrixXd> raw_k(marks, Eigen::MatrixXd::Zero(N, J));
  parallel_for(n, [&](std::size_t p) {
    const PathView view(paths, p);
    const auto r = static_cast<Eigen::Index>(p);
    const double v = F(view);
    if (!std::isfinite(v)) fail(ErrorKind::numeric_error, "clark_ocone: non-finite F for " + F.description);
    values(r) = v;
    for (std::size_t j = opts.from_node + 1; j < nodes; ++j) {
      const auto c = static_cast<Eigen::Index>(j);
      raw(r, c) = brownian_malliavin_fd_interval(F, view, j - 1, opts.eps);
      for (std::size_t m = 0; m < marks; ++m) raw_k[m](r, c) = jump_difference(F, view, g.node(j), spec->marks[m]);
    }
  });
  return condition_integrands(std::move(values), raw, raw_k, paths, weights, opts);
}

Eigen::VectorXd representation_residual(const Eigen::VectorXd& values, double mean, const Eigen::MatrixXd& z,
                                        const std::vector<Eigen::MatrixXd>& k, const PathBundle& q_paths,
                                        std::size_t from_node) {
  const TimeGrid& g = q_paths.grid();
  const std::size_t n = q_paths.n_paths();
  require(static_cast<std::size_t>(values.size()) == n, "representation_residual: size mismatch");
  require(k.size() == q_paths.n_marks(), "representation_residual: mark count mismatch");
  Eigen::VectorXd res(static_cast<Eigen::Index>(n));
  parallel_for(n, [&](std::size_t p) {
    const auto r = static_cast<Eigen::Index>(p);
    double acc = values(r) - mean;
    for (std::size_t j = from_node + 1; j < g.size(); ++j) {
      const auto c = static_cast<Eigen::Index>(j);
      acc -= z(r, c) * q_paths.dB(p, j - 1);
      for (std::size_t m = 0; m < k.size(); ++m) acc += k[m](r, c) * q_paths.compensator(j - 1, m);
    }
    if (!k.empty()) {
      const double lo = g.node(from_node);
      for (const JumpEvent& e : q_paths.jumps(p)) {
        if (e.time <= lo) continue;
        const std::size_t j = g.interval_containing(e.time) + 1;
        // Jumps exactly on a node belong to the interval ending there.
        const std::size_t col = (e.time == g.node(j - 1) && j > 1) ? j - 1 : j;
        acc -= k[e.mark](r, static_cast<Eigen::Index>(col));
      }
    }
    res(r) = acc;
  });
  return res;
}

Eigen::VectorXd density_malliavin(const GirsanovModel& model, const GirsanovWeight& weights, const TimeGrid& grid,
                                  double s, double t) {
  const std::size_t js = grid.require_node(s);
  const std::size_t jt = grid.require_node(t);
  require(js >= 1, "density_malliavin: s must be an interior node (s > 0)");
  const auto n = weights.log_M.rows();
  if (js > jt) return Eigen::VectorXd::Zero(n);
  return weights.M_at(jt) * model.xi_left(js - 1);
}

double general_z_integrand(double DsU, double U, const RandomCoefficientFields& fields, double s,
                           const PathView& q_path) {
  require(static_cast<bool>(fields.D_xi), "general_z_integrand: D_xi field required");
  const TimeGrid& g = q_path.grid();
  double stoch = 0.0;
  for (std::size_t k = 0; k < g.intervals(); ++k) {
    if (g.node(k) < s) continue;
    stoch += fields.D_xi(s, g.node(k), q_path) * q_path.dB(k);
  }
  return DsU - U * stoch;
}

double h_tilde(const RandomCoefficientFields& fields, const JumpSpec& jumps, double s, double zeta,
               const PathView& path, std::size_t quadrature_points) {
  require(static_cast<bool>(fields.D_beta), "h_tilde: D_beta field required");
  double log_h = 0.0;
  if (s > 0.0) {
    const GaussRule rule = gauss_legendre(quadrature_points);
    for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
      const double r = 0.5 * s * (rule.nodes[q] + 1.0);
      for (std::size_t m = 0; m < jumps.marks.size(); ++m)
        log_h += 0.5 * s * rule.weights[q] * jumps.rates[m] * fields.D_beta(s, zeta, r, jumps.marks[m], path);
    }
  }
  bool degenerate = false;
  path.for_each_jump([&](double time, std::size_t, double z2) {
    if (time > s) return;
    const double ratio = fields.D_beta(s, zeta, time, z2, path) / (1.0 + jumps.beta(time, z2));
    if (!(1.0 - ratio > 0.0)) degenerate = true;
    else log_h += std::log1p(-ratio);
  });
  if (degenerate) fail(ErrorKind::measure_degenerate, "h_tilde: 1 - D beta / (1 + beta) <= 0");
  return std::exp(log_h);
}

double general_k_integrand(double U, double DszU, double Htilde) { return U * (Htilde - 1.0) + Htilde * DszU; }

}  // namespace bsvie
