#include "bsvie/solver.hpp"

#include <array>
#include <cmath>
#include <ostream>
#include <random>

#include "bsvie/error.hpp"
#include "bsvie/format.hpp"
#include "bsvie/parallel.hpp"
#include "bsvie/rng.hpp"

namespace bsvie {

Driver make_deterministic_driver(std::function<double(double, double)> h, double prefactor, double rate,
                                 bool depends_on_t, std::string label) {
  require(static_cast<bool>(h), "driver: h must be callable");
  require(prefactor >= 0.0 && rate >= 0.0, "driver: prefactor and rate must be >= 0");
  Driver d;
  d.deterministic = std::move(h);
  d.prefactor = prefactor;
  d.rate = rate;
  d.depends_on_t = depends_on_t;
  d.label = std::move(label);
  return d;
}

Driver make_path_driver(std::function<double(double, double, const PathView&)> h, double prefactor, double rate,
                        bool depends_on_t, std::string label) {
  require(static_cast<bool>(h), "driver: h must be callable");
  require(prefactor >= 0.0 && rate >= 0.0, "driver: prefactor and rate must be >= 0");
  Driver d;
  d.path = std::move(h);
  d.prefactor = prefactor;
  d.rate = rate;
  d.depends_on_t = depends_on_t;
  d.label = std::move(label);
  return d;
}

Driver make_state_driver(std::function<double(double, double, double, double)> h, double prefactor, double rate,
                         bool depends_on_t, std::string label) {
  require(static_cast<bool>(h), "driver: h must be callable");
  Driver d = make_path_driver(
      [h](double t, double s, const PathView& v) {
        return h(t, s, v.B_at(s), static_cast<double>(v.jump_count(s)));
      },
      prefactor, rate, depends_on_t, std::move(label));
  d.state = std::move(h);
  return d;
}

Driver zero_driver() {
  return make_deterministic_driver([](double, double) { return 0.0; }, 0.0, 1.0, false, "zero");
}

namespace {

Eigen::Index idx(std::size_t i) { return static_cast<Eigen::Index>(i); }

bool xi_vanishes(const BSVIEProblem& problem, const TimeGrid& grid) {
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (problem.xi(grid.node(i)) != 0.0) return false;
  return true;
}

Eigen::MatrixXd tabulate_driver(const Driver& h, const TimeGrid& grid, const PathView* view) {
  const std::size_t n = grid.size();
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(idx(n), idx(n));
  for (std::size_t a = 0; a < n; ++a) {
    if (!h.depends_on_t && a > 0) {
      H.row(idx(a)).tail(idx(n - a)) = H.row(0).tail(idx(n - a));
      continue;
    }
    for (std::size_t j = a; j < n; ++j) {
      const double v = h(grid.node(a), grid.node(j), view);
      if (!std::isfinite(v)) {
        fail(ErrorKind::numeric_error, "driver '" + h.label + "' is not finite at (t,s)=(" +
                                           format_double(grid.node(a)) + "," + format_double(grid.node(j)) + ")");
      }
      H(idx(a), idx(j)) = v;
    }
  }
  return H;
}

/// h along the grid for t-independent drivers.
Eigen::VectorXd driver_vector(const Driver& h, const TimeGrid& grid, const PathView* view) {
  Eigen::VectorXd v(idx(grid.size()));
  for (std::size_t j = 0; j < grid.size(); ++j) {
    v(idx(j)) = h(0.0, grid.node(j), view);
    if (!std::isfinite(v(idx(j)))) {
      fail(ErrorKind::numeric_error, "driver '" + h.label + "' is not finite at s=" + format_double(grid.node(j)));
    }
  }
  return v;
}

}  // namespace

AssumptionReport validate_problem(const BSVIEProblem& problem, const TimeGrid& grid,
                                  const ResolventOptions& options) {
  AssumptionReport rep;
  require(problem.lambda > 0.0, "problem: lambda must be > 0");
  require(static_cast<bool>(problem.kernel.eval), "problem: kernel missing");
  require(problem.h.is_deterministic() || static_cast<bool>(problem.h.path), "problem: driver missing");

  rep.kernel_envelope_ratio = decay_envelope_ratio(problem.kernel, grid);
  check_decay_envelope(problem.kernel, grid);

  if (problem.h.is_deterministic()) {
    double worst = 0.0;
    for (std::size_t a = 0; a < grid.size(); ++a) {
      if (!problem.h.depends_on_t && a > 0) break;
      for (std::size_t j = a; j < grid.size(); ++j) {
        const double v = std::abs(problem.h.deterministic(grid.node(a), grid.node(j)));
        if (v == 0.0) continue;
        const double env = problem.h.prefactor * std::exp(-problem.h.rate * grid.node(j));
        worst = std::max(worst, env > 0.0 ? v / env : std::numeric_limits<double>::infinity());
      }
    }
    rep.driver_envelope_ratio = worst;
    if (worst > 1.0 + 1e-9) {
      fail(ErrorKind::assumption_violated, "A1 violated: |h(t,s)| exceeds prefactor*exp(-rate*s) by factor " +
                                               format_double(worst) + " for driver '" + problem.h.label + "'");
    }
  }

  rep.L_lambda = weighted_norm_L(problem.kernel, problem.lambda, grid, options.weight_exponent);
  enforce_contraction(rep.L_lambda, options, rep.warnings);

  if (problem.jumps) validate_jump_spec(*problem.jumps, grid);
  if (problem.random_coefficients) {
    rep.warnings.push_back("A3 not checked: Novikov check requires deterministic coefficients");
  } else if (problem.jumps || !xi_vanishes(problem, grid)) {
    try {
      rep.novikov = novikov_exponent(problem.xi, problem.jump_spec(), grid);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::divergent) throw;
      if (!options.relaxed_contraction) {
        fail(ErrorKind::assumption_violated, std::string("A3 violated: ") + e.what());
      }
      rep.warnings.push_back(std::string("A3 holds only on [0, T_max] (truncated-horizon density): ") + e.what());
    }
  }
  return rep;
}

void check_adaptedness(const BSVIEProblem& problem, const PathBundle& paths, std::size_t n_checks,
                       std::uint64_t seed) {
  if (problem.h.is_deterministic()) return;
  const TimeGrid& g = paths.grid();
  const std::size_t n = g.size();
  if (n < 3) return;
  for (std::size_t c = 0; c < n_checks; ++c) {
    auto rng = substream(seed, c, streams::spot_check);
    const std::size_t p = std::uniform_int_distribution<std::size_t>(0, paths.n_paths() - 1)(rng);
    const std::size_t j = std::uniform_int_distribution<std::size_t>(0, n - 2)(rng);
    const std::size_t a = std::uniform_int_distribution<std::size_t>(0, j)(rng);
    const std::size_t k = std::uniform_int_distribution<std::size_t>(j, n - 2)(rng);
    const PathView base(paths, p);
    const double t = g.node(a), s = g.node(j);
    const double v0 = problem.h(t, s, &base);
    PathView moved = base.with_bump(k, 0.5);
    if (paths.jump_spec()) {
      const double tau = std::uniform_real_distribution<double>(s, g.t_max())(rng);
      if (tau > s) moved = moved.with_jump(tau, 0);
    }
    const double v1 = problem.h(t, s, &moved);
    if (v0 != v1) {
      fail(ErrorKind::assumption_violated, "A1 violated: driver '" + problem.h.label +
                                               "' is not adapted (h(t,s) changed after perturbing the path past s=" +
                                               format_double(s) + ")");
    }
  }
}

YOperator::YOperator(const TimeGrid& grid, const ResolventTable& psi)
    : grid_(std::make_shared<const TimeGrid>(grid)), psi_(psi.values) {
  const std::size_t n = grid.size();
  require(static_cast<std::size_t>(psi.values.rows()) == n, "YOperator: resolvent grid mismatch");
  w_end_ = Eigen::MatrixXd::Zero(idx(n), idx(n));
  compact_ = Eigen::MatrixXd::Zero(idx(n), idx(n));
  std::vector<double> row_l1(n, 0.0);
  parallel_for(n, [&](std::size_t a) {
    const std::size_t m = n - a;
    const auto wend = grid.clipped_weights(a, n - 1);
    const auto table = grid.clipped_weight_table(a);
    double l1 = 0.0;
    for (std::size_t j = a; j < n; ++j) {
      const double* wr = table.data() + (j - a) * m;
      double R = 0.0;
      for (std::size_t u = a; u <= j; ++u) R += wr[u - a] * psi_(idx(a), idx(u));
      w_end_(idx(a), idx(j)) = wend[j - a];
      compact_(idx(a), idx(j)) = wend[j - a] * (1.0 + R);
      l1 += std::abs(wend[j - a] * psi_(idx(a), idx(j)));
    }
    row_l1[a] = l1;
  });
  for (double v : row_l1) psi_row_l1_ = std::max(psi_row_l1_, v);
}

Eigen::VectorXd YOperator::apply(const Eigen::MatrixXd& H) const {
  const std::size_t n = grid_->size();
  Eigen::VectorXd out(idx(n));
  parallel_for(n, [&](std::size_t a) {
    const std::size_t m = n - a;
    const auto table = grid_->clipped_weight_table(a);
    double acc = 0.0;
    for (std::size_t j = a; j < n; ++j) {
      const double* wr = table.data() + (j - a) * m;
      double inner = 0.0;
      for (std::size_t u = a; u <= j; ++u) inner += wr[u - a] * psi_(idx(a), idx(u)) * H(idx(u), idx(j));
      acc += w_end_(idx(a), idx(j)) * (H(idx(a), idx(j)) + inner);
    }
    out(idx(a)) = acc;
  });
  return out;
}

YCurve solve_y_deterministic(const BSVIEProblem& problem, const ResolventTable& resolvent, const TimeGrid& grid) {
  require(problem.h.is_deterministic(), "solve_y_deterministic: driver must be deterministic");
  const YOperator op(grid, resolvent);
  Eigen::VectorXd Y;
  if (!problem.h.depends_on_t) {
    Y = op.compact() * driver_vector(problem.h, grid, nullptr);
  } else {
    Y = op.apply(tabulate_driver(problem.h, grid, nullptr));
  }
  YCurve out;
  out.values.assign(Y.data(), Y.data() + Y.size());
  out.tail_bound = problem.h.rate > 0.0
                       ? problem.h.prefactor * std::exp(-problem.h.rate * grid.t_max()) / problem.h.rate *
                             (1.0 + op.psi_row_l1())
                       : std::numeric_limits<double>::infinity();
  return out;
}

double YMonteCarlo::at(std::size_t i, const PathView& view) const {
  if (i == 0) return Y0.value;
  const std::array<double, 2> state{view.B(i), include_jump_count
                                                   ? static_cast<double>(view.jump_count(view.grid().node(i)))
                                                   : 0.0};
  return fits[i].predict(state);
}

namespace {

constexpr std::size_t kMaxNodesTimeDependent = 300;

Estimate self_normalized(const Eigen::VectorXd& values, const Eigen::VectorXd& w) {
  const double n = static_cast<double>(values.size());
  const double wsum = w.sum();
  if (!(wsum > 0.0)) fail(ErrorKind::numeric_error, "self-normalized estimate: zero total weight");
  Estimate e;
  e.value = w.dot(values) / wsum;
  if (values.size() > 1) {
    const double wbar = wsum / n;
    const double ss = (w.array() * (values.array() - e.value)).square().sum();
    e.std_error = std::sqrt(ss / (n - 1.0) / n) / wbar;
    e.ci_halfwidth = 1.96 * e.std_error;
  }
  return e;
}

}  // namespace

YMonteCarlo solve_y_mc(const BSVIEProblem& problem, const ResolventTable& resolvent, const PathBundle& paths,
                       const GirsanovWeight& weights, const MCOptions& options) {
  const TimeGrid& g = paths.grid();
  const std::size_t n = g.size();
  const std::size_t np = paths.n_paths();
  require(static_cast<std::size_t>(weights.log_M.rows()) == np, "solve_y_mc: weights do not match paths");
  const YOperator op(g, resolvent);

  YMonteCarlo out;
  out.include_jump_count = options.basis.include_jump_count && paths.jump_spec() != nullptr;
  out.integrand.resize(idx(np), idx(n));

  if (!problem.h.depends_on_t) {
    Eigen::MatrixXd HV(idx(np), idx(n));
    parallel_for(np, [&](std::size_t p) {
      const PathView view(paths, p);
      HV.row(idx(p)) = driver_vector(problem.h, g, &view).transpose();
    });
    out.integrand.noalias() = HV * op.compact().transpose().triangularView<Eigen::Lower>();
  } else {
    if (n > kMaxNodesTimeDependent && !problem.h.is_deterministic()) {
      fail(ErrorKind::invalid_parameter, "solve_y_mc: t-dependent path drivers are limited to " +
                                             std::to_string(kMaxNodesTimeDependent) + " grid nodes");
    }
    if (problem.h.is_deterministic()) {
      const Eigen::VectorXd I = op.apply(tabulate_driver(problem.h, g, nullptr));
      out.integrand = I.transpose().replicate(idx(np), 1);
    } else {
      for (std::size_t p = 0; p < np; ++p) {
        const PathView view(paths, p);
        out.integrand.row(idx(p)) = op.apply(tabulate_driver(problem.h, g, &view)).transpose();
      }
    }
  }

  const Eigen::VectorXd w = weights.M_at(n - 1);
  out.Y0 = self_normalized(out.integrand.col(0), w);
  out.Y.resize(idx(np), idx(n));
  out.Y.col(0).setConstant(out.Y0.value);
  out.fits.resize(n);
  out.mean_curve.assign(n, 0.0);
  out.mean_curve[0] = out.Y0.value;
  for (std::size_t a = 1; a < n; ++a) {
    const Eigen::MatrixXd state = regression_state(paths, a, out.include_jump_count);
    out.fits[a] = weighted_regression(state, out.integrand.col(idx(a)), w, options.basis.degree);
    out.Y.col(idx(a)) = out.fits[a].result.fitted;
    out.fits[a].result.fitted.resize(0);  // kept once, in Y
    out.mean_curve[a] = w.dot(out.Y.col(idx(a))) / w.sum();
    for (const auto& msg : out.fits[a].result.warnings)
      out.warnings.push_back("t=" + format_double(g.node(a)) + ": " + msg);
  }
  return out;
}

PicardResult picard_iterate(const BSVIEProblem& problem, const TimeGrid& grid, std::size_t k_max, double tol) {
  require(problem.h.is_deterministic(), "picard_iterate: driver must be deterministic");
  require(k_max >= 1 && tol > 0.0, "picard_iterate: need k_max >= 1 and tol > 0");
  const std::size_t n = grid.size();
  const Eigen::MatrixXd K = tabulate_kernel(problem.kernel, grid);
  const Eigen::MatrixXd H = tabulate_driver(problem.h, grid, nullptr);
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(idx(n), idx(n));
  for (std::size_t a = 0; a < n; ++a) {
    const auto w = grid.clipped_weights(a, n - 1);
    for (std::size_t j = a; j < n; ++j) W(idx(a), idx(j)) = w[j - a];
  }
  const Eigen::MatrixXd A = W.cwiseProduct(K);
  const Eigen::VectorXd hv = W.cwiseProduct(H).rowwise().sum();

  PicardResult out;
  Eigen::VectorXd Y = Eigen::VectorXd::Zero(idx(n));
  for (std::size_t k = 1; k <= k_max; ++k) {
    const Eigen::VectorXd next = A * Y + hv;
    const Eigen::VectorXd diff = next - Y;
    const double err = std::sqrt(weighted_l2_squared(grid, {diff.data(), n}, 1.0));
    if (!std::isfinite(err)) fail(ErrorKind::numeric_error, "picard_iterate: iterate is not finite");
    out.history.push_back(err);
    Y = next;
    out.iterations = k;
    if (err < tol) {
      out.Y.assign(Y.data(), Y.data() + n);
      return out;
    }
  }
  fail(ErrorKind::no_convergence, "picard_iterate: no convergence after " + std::to_string(k_max) +
                                      " iterations (last update " + format_double(out.history.back()) + ")");
}

std::vector<double> compute_U(const BSVIEProblem& problem, std::span<const double> Y, const TimeGrid& grid) {
  require(problem.h.is_deterministic(), "compute_U: deterministic overload needs a deterministic driver");
  const std::size_t n = grid.size();
  require(Y.size() == n, "compute_U: Y does not match grid");
  const Eigen::MatrixXd K = tabulate_kernel(problem.kernel, grid);
  const Eigen::MatrixXd H = tabulate_driver(problem.h, grid, nullptr);
  std::vector<double> U(n);
  for (std::size_t a = 0; a < n; ++a) {
    const auto w = grid.clipped_weights(a, n - 1);
    double acc = 0.0;
    for (std::size_t j = a; j < n; ++j) acc += w[j - a] * (K(idx(a), idx(j)) * Y[j] + H(idx(a), idx(j)));
    U[a] = acc - Y[a];
  }
  return U;
}

Eigen::MatrixXd compute_U(const BSVIEProblem& problem, const YMonteCarlo& y, const PathBundle& paths) {
  const TimeGrid& g = paths.grid();
  const std::size_t n = g.size();
  const std::size_t np = paths.n_paths();
  const Eigen::MatrixXd K = tabulate_kernel(problem.kernel, g);
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(idx(n), idx(n));
  for (std::size_t a = 0; a < n; ++a) {
    const auto w = g.clipped_weights(a, n - 1);
    for (std::size_t j = a; j < n; ++j) W(idx(a), idx(j)) = w[j - a];
  }
  const Eigen::MatrixXd A = W.cwiseProduct(K);
  Eigen::MatrixXd U = -y.Y;
  U.noalias() += y.Y * A.transpose().triangularView<Eigen::Lower>();
  if (!problem.h.depends_on_t) {
    Eigen::MatrixXd HV(idx(np), idx(n));
    parallel_for(np, [&](std::size_t p) {
      const PathView view(paths, p);
      HV.row(idx(p)) = driver_vector(problem.h, g, &view).transpose();
    });
    U.noalias() += HV * W.transpose().triangularView<Eigen::Lower>();
  } else {
    parallel_for(np, [&](std::size_t p) {
      const PathView view(paths, p);
      const Eigen::MatrixXd H = tabulate_driver(problem.h, g, &view);
      U.row(idx(p)) += W.cwiseProduct(H).rowwise().sum().transpose();
    });
  }
  return U;
}

PathFunctional make_U_functional(const BSVIEProblem& problem, const YMonteCarlo& y, const TimeGrid& grid,
                                 std::size_t a) {
  const std::size_t n = grid.size();
  require(a < n, "make_U_functional: node out of range");
  const auto w = grid.clipped_weights(a, n - 1);
  std::vector<double> kw(n - a), hw(w.begin(), w.end()), s(n - a);
  for (std::size_t j = a; j < n; ++j) {
    kw[j - a] = w[j - a] * problem.kernel(grid.node(a), grid.node(j));
    s[j - a] = grid.node(j);
  }
  const double t = grid.node(a);
  const Driver h = problem.h;
  const YMonteCarlo* yp = &y;
  return {[=](const PathView& view) {
            double acc = -yp->at(a, view);
            for (std::size_t j = 0; j < kw.size(); ++j) {
              if (hw[j] == 0.0) continue;
              acc += kw[j] * yp->at(a + j, view) + hw[j] * h(t, s[j], &view);
            }
            return acc;
          },
          "U(" + format_double(t) + ")"};
}

namespace {

void guard_coefficients(const BSVIEProblem& problem) {
  if (problem.random_coefficients) {
    fail(ErrorKind::assumption_violated, "deterministic coefficients required for Z/K extraction");
  }
}

/// Raw derivatives of U(x_a) from per-node sensitivities.
ClarkOconeResult zk_row_by_state(const BSVIEProblem& problem, const YMonteCarlo& y, const PathBundle& paths,
                                 const GirsanovWeight& weights, std::size_t a, const BasisSpec& basis) {
  const TimeGrid& g = paths.grid();
  const std::size_t n = g.size();
  const std::size_t np = paths.n_paths();
  const std::size_t marks = paths.n_marks();
  const double t = g.node(a);
  const auto wend = g.clipped_weights(a, n - 1);
  std::vector<double> phi(n - a);
  for (std::size_t i = a; i < n; ++i) phi[i - a] = problem.kernel(t, g.node(i));
  const double eps = fd_step(1.0);

  auto y_at = [&](std::size_t i, double B, double N) {
    if (i == 0) return y.Y0.value;
    const std::array<double, 2> st{B, y.include_jump_count ? N : 0.0};
    return y.fits[i].predict(st);
  };
  auto h_at = [&](std::size_t i, double B, double N) {
    return problem.h.state ? problem.h.state(t, g.node(i), B, N) : problem.h.deterministic(t, g.node(i));
  };
  auto term = [&](std::size_t i, double B, double N) {
    return wend[i - a] * (phi[i - a] * y_at(i, B, N) + h_at(i, B, N));
  };

  const auto N = static_cast<Eigen::Index>(np);
  const auto J = static_cast<Eigen::Index>(n);
  Eigen::VectorXd values(N);
  Eigen::MatrixXd raw = Eigen::MatrixXd::Zero(N, J);
  std::vector<Eigen::MatrixXd> raw_k(marks, Eigen::MatrixXd::Zero(N, J));
  parallel_for(np, [&](std::size_t p) {
    const PathView view(paths, p);
    const auto r = static_cast<Eigen::Index>(p);
    double u = -y_at(a, paths.B(p, a), static_cast<double>(view.jump_count(t)));
    double dz = 0.0, dk = 0.0;
    for (std::size_t i = n; i-- > a;) {
      if (wend[i - a] != 0.0) {
        const double B = paths.B(p, i);
        const double cnt = marks ? static_cast<double>(view.jump_count(g.node(i))) : 0.0;
        const double base = term(i, B, cnt);
        u += base;
        dz += (term(i, B + eps, cnt) - term(i, B - eps, cnt)) / (2.0 * eps);
        if (marks) dk += term(i, B, cnt + 1.0) - base;
      }
      if (i > a) {
        raw(r, static_cast<Eigen::Index>(i)) = dz;
        for (auto& km : raw_k) km(r, static_cast<Eigen::Index>(i)) = dk;
      }
    }
    if (!std::isfinite(u)) fail(ErrorKind::numeric_error, "solve_zk: non-finite U(" + format_double(t) + ")");
    values(r) = u;
  });
  ClarkOconeOptions opts;
  opts.basis = basis;
  opts.from_node = a;
  return condition_integrands(std::move(values), raw, raw_k, paths, weights, opts);
}

}  // namespace

std::vector<ZKRow> solve_zk_generic(const BSVIEProblem& problem, const YMonteCarlo& y, const PathBundle& paths,
                                    const GirsanovWeight& weights, std::span<const std::size_t> t_nodes,
                                    const BasisSpec& basis) {
  guard_coefficients(problem);
  const TimeGrid& g = paths.grid();
  std::vector<ZKRow> rows;
  for (std::size_t a : t_nodes) {
    require(a + 1 < g.size(), "solve_zk: t row must leave at least one increment");
    ClarkOconeOptions opts;
    opts.basis = basis;
    opts.from_node = a;
    rows.push_back({a, clark_ocone_integrands(make_U_functional(problem, y, g, a), paths, weights, opts)});
  }
  return rows;
}

std::vector<ZKRow> solve_zk(const BSVIEProblem& problem, const YMonteCarlo& y, const PathBundle& paths,
                            const GirsanovWeight& weights, std::span<const std::size_t> t_nodes,
                            const BasisSpec& basis) {
  guard_coefficients(problem);
  if (!problem.h.is_deterministic() && !problem.h.state) {
    return solve_zk_generic(problem, y, paths, weights, t_nodes, basis);
  }
  std::vector<ZKRow> rows;
  for (std::size_t a : t_nodes) {
    require(a + 1 < paths.grid().size(), "solve_zk: t row must leave at least one increment");
    rows.push_back({a, zk_row_by_state(problem, y, paths, weights, a, basis)});
  }
  return rows;
}

namespace {

double rms(const Eigen::VectorXd& v) { return std::sqrt(v.squaredNorm() / static_cast<double>(v.size())); }

/// Delta-method half-width for the RMS of per-path residuals.
double rms_ci(const Eigen::VectorXd& v) {
  const Eigen::VectorXd sq = v.array().square().matrix();
  const Estimate e = mean_estimate({sq.data(), static_cast<std::size_t>(sq.size())});
  const double r = std::sqrt(e.value);
  return r > 0.0 ? e.ci_halfwidth / (2.0 * r) : 0.0;
}

}  // namespace

RepresentationReport verify_martingale_representation(const Eigen::VectorXd& U, const ZKRow& row,
                                                       const PathBundle& paths, const GirsanovWeight& weights,
                                                       const BSVIEProblem& problem, const BasisSpec& basis) {
  const PathBundle q = q_shifted_increments(paths, problem.xi, problem.jump_spec());
  const auto& co = row.integrands;
  const Eigen::VectorXd res = representation_residual(U, 0.0, co.z, co.k, q, row.t_node);
  RepresentationReport rep;
  rep.rms = rms(res);
  rep.rms_ci = rms_ci(res);
  rep.rms_U = rms(U);
  const TimeGrid& g = paths.grid();
  const Eigen::VectorXd w = weights.M_at(g.size() - 1);
  if (row.t_node == 0) {
    rep.conditional_mean_rms = std::abs(w.dot(U) / w.sum());
  } else {
    const bool jumps = basis.include_jump_count && paths.jump_spec() != nullptr;
    const RegressionFit fit = weighted_regression(regression_state(paths, row.t_node, jumps), U, w, basis.degree);
    rep.conditional_mean_rms = rms(fit.result.fitted);
  }
  return rep;
}

MSolutionReport verify_m_solution(const Eigen::VectorXd& U_t1, const ZKRow& row, const PathBundle& paths,
                                  const BSVIEProblem& problem, std::size_t t2_node) {
  require(t2_node >= row.t_node && t2_node < paths.grid().size(), "verify_m_solution: need t1 <= t2 on the grid");
  const auto& co = row.integrands;
  MSolutionReport rep;
  const PathBundle q = q_shifted_increments(paths, problem.xi, problem.jump_spec());
  rep.equation_rms = rms(representation_residual(U_t1, 0.0, co.z, co.k, q, row.t_node));
  rep.p_form_rms = rms(representation_residual(U_t1, 0.0, co.z, co.k, paths, row.t_node));
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(U_t1.size());
  const Eigen::VectorXd literal = representation_residual(zero, 0.0, co.z, co.k, paths, t2_node);
  rep.literal_rms = rms(literal);
  rep.literal_ci = rms_ci(literal);
  return rep;
}

double verify_m_solution_deterministic(const BSVIEProblem& problem, std::span<const double> Y,
                                       const TimeGrid& grid) {
  double worst = 0.0;
  for (double u : compute_U(problem, Y, grid)) worst = std::max(worst, std::abs(u));
  return worst;
}

void write_y_csv(std::ostream& os, const TimeGrid& grid, std::span<const double> Y) {
  os << "t,Y\n";
  for (std::size_t i = 0; i < grid.size(); ++i) os << format_double(grid.node(i)) << ',' << format_double(Y[i]) << '\n';
}

void write_z_csv(std::ostream& os, const TimeGrid& grid, const std::vector<ZKRow>& rows,
                 const GirsanovWeight& weights) {
  const Eigen::VectorXd w = weights.M_at(grid.size() - 1);
  const double wsum = w.sum();
  os << "t,s,Z\n";
  for (const ZKRow& r : rows) {
    for (std::size_t j = r.t_node + 1; j < grid.size(); ++j) {
      os << format_double(grid.node(r.t_node)) << ',' << format_double(grid.node(j)) << ','
         << format_double(w.dot(r.integrands.z.col(idx(j))) / wsum) << '\n';
    }
  }
}

void write_k_csv(std::ostream& os, const TimeGrid& grid, const std::vector<ZKRow>& rows,
                 const GirsanovWeight& weights, const JumpSpec& jumps) {
  const Eigen::VectorXd w = weights.M_at(grid.size() - 1);
  const double wsum = w.sum();
  os << "t,s,zeta,K\n";
  for (const ZKRow& r : rows) {
    for (std::size_t j = r.t_node + 1; j < grid.size(); ++j) {
      for (std::size_t m = 0; m < r.integrands.k.size(); ++m) {
        os << format_double(grid.node(r.t_node)) << ',' << format_double(grid.node(j)) << ','
           << format_double(jumps.marks[m]) << ',' << format_double(w.dot(r.integrands.k[m].col(idx(j))) / wsum)
           << '\n';
      }
    }
  }
}

}  // namespace bsvie
