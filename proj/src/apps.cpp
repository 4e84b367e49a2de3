#include "bsvie/apps.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/numeric/odeint.hpp>

#include "bsvie/error.hpp"
#include "bsvie/format.hpp"
#include "bsvie/parallel.hpp"
#include "bsvie/rng.hpp"

namespace bsvie {

bool Report::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
}

void Report::add_check(std::string name, double error, double tolerance) {
  checks.push_back({std::move(name), error, tolerance, std::isfinite(error) && error <= tolerance});
}

double Report::value(const std::string& name) const {
  for (const auto& [k, v] : values)
    if (k == name) return v;
  fail(ErrorKind::invalid_parameter, "report has no value '" + name + "'");
}

namespace {

double max_relative(const ResolventTable& table, const std::function<double(double, double)>& exact) {
  const TimeGrid& g = table.grid;
  double worst = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (std::size_t j = i; j < g.size(); ++j) {
      const double e = exact(g.node(i), g.node(j));
      const double d = std::abs(table(i, j) - e);
      worst = std::max(worst, e != 0.0 ? d / std::abs(e) : d);
    }
  }
  return worst;
}

/// max |Psi - exact| e^{-omega lambda (s-t)} / max |exact|; omega = 0 gives
/// the plain normwise error.
double max_weighted(const ResolventTable& table, const std::function<double(double, double)>& exact, double rate) {
  const TimeGrid& g = table.grid;
  double worst = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (std::size_t j = i; j < g.size(); ++j) {
      const double e = exact(g.node(i), g.node(j));
      scale = std::max(scale, std::abs(e));
      worst = std::max(worst, std::abs(table(i, j) - e) * std::exp(-rate * (g.node(j) - g.node(i))));
    }
  }
  return scale > 0.0 ? worst / scale : worst;
}

}  // namespace

double example1_y_closed_form(double alpha, double gamma, double mu, double t) {
  const double d = gamma - alpha;
  return std::exp(-mu * t) * (1.0 / mu + alpha / d * (1.0 / mu - 1.0 / (mu + d)));
}

Report example1_report(double alpha, double gamma, double mu, double lambda, const TimeGrid& grid,
                       const Example1Options& options) {
  require(alpha > 0.0 && gamma > 0.0 && mu > 0.0 && lambda > 0.0, "example1: parameters must be > 0");
  Report rep;
  rep.title = "example1";
  const Example1Kernel k = make_example1_kernel(alpha, gamma);
  ResolventOptions ro;
  const double L = weighted_norm_L(k.kernel, lambda, grid, ro.weight_exponent);
  enforce_contraction(L, ro, rep.warnings);
  if (gamma <= alpha) {
    fail(ErrorKind::contraction_violated, "contraction condition violated: gamma=" + format_double(gamma) +
                                              " <= alpha=" + format_double(alpha) + ", resolvent does not decay");
  }
  rep.values = {{"alpha", alpha}, {"gamma", gamma}, {"mu", mu}, {"lambda", lambda}, {"L_lambda", L},
                {"L_expected", k.contraction_constant(lambda)}};
  rep.add_check("L_lambda", std::abs(L - k.contraction_constant(lambda)), 1e-10);

  // Iterated kernels on a few (t, s) pairs, relative to the closed form.
  for (int n = 1; n <= options.max_n; ++n) {
    double worst = 0.0;
    for (double t : {0.0, 1.0}) {
      for (double span : {0.5, 1.0, 2.0, 4.0}) {
        const double s = t + span;
        if (s > grid.t_max()) continue;
        const double e = k.iterated(n, t, s);
        worst = std::max(worst, std::abs(iterated_kernel(k.kernel, n, t, s, grid) - e) / std::abs(e));
      }
    }
    rep.add_check("iterated_kernel_n" + std::to_string(n), worst, options.tol);
  }

  const ResolventTable series = resolvent_series(k.kernel, lambda, options.series_tol, grid, ro);
  const ResolventTable nystrom = resolvent_nystrom(k.kernel, grid, ro);
  auto exact = [&](double t, double s) { return k.resolvent(t, s); };
  rep.add_check("resolvent_series", max_relative(series, exact), options.tol);
  rep.add_check("resolvent_nystrom", max_relative(nystrom, exact), options.tol);
  const double cross = max_abs_difference(series, nystrom);
  rep.add_check("cross_method", cross, options.cross_tol);
  rep.values.emplace_back("series_terms", series.series_terms_used);
  rep.values.emplace_back("cross_method_max_diff", cross);

  BSVIEProblem p;
  p.kernel = k.kernel;
  p.h = make_deterministic_driver([mu](double, double s) { return std::exp(-mu * s); }, 1.0, mu, false, "exp");
  p.lambda = lambda;
  const YCurve y = solve_y_deterministic(p, nystrom, grid);
  double worst = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i)
    worst = std::max(worst, std::abs(y.values[i] - example1_y_closed_form(alpha, gamma, mu, grid.node(i))));
  rep.add_check("Y_curve", worst, options.y_tol);
  rep.add_check("Y0", std::abs(y.values[0] - example1_y_closed_form(alpha, gamma, mu, 0.0)), options.y_tol);
  rep.values.emplace_back("Y0", y.values[0]);
  rep.values.emplace_back("Y0_expected", example1_y_closed_form(alpha, gamma, mu, 0.0));
  rep.values.emplace_back("Y_tail_bound", y.tail_bound);
  return rep;
}

namespace {

/// int_t^s phi, from the antiderivative when given.
double phi_integral(const Example2Spec& spec, double t, double s) {
  if (spec.phi_antiderivative) return spec.phi_antiderivative(s) - spec.phi_antiderivative(t);
  if (s <= t) return 0.0;
  return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(spec.phi, t, s, 10, 1e-14);
}

void validate_example2(const Example2Spec& spec) {
  require(static_cast<bool>(spec.phi) && static_cast<bool>(spec.h), "example2: phi and h are required");
  require(spec.lambda > 0.0, "example2: lambda must be > 0");
}

SeparableKernel example2_kernel(const Example2Spec& spec) {
  return make_separable_kernel(spec.phi, spec.phi_bound, spec.phi_decay, spec.phi_antiderivative, "example2");
}

}  // namespace

double example2_formula(const Example2Spec& spec, double t) {
  validate_example2(spec);
  auto f = [&](double u) {
    // u in (0, inf) is s - t
    const double s = t + u;
    return std::exp(phi_integral(spec, t, s)) * spec.h(s);
  };
  boost::math::quadrature::exp_sinh<double> integrator;
  return integrator.integrate(f, 0.0, std::numeric_limits<double>::infinity(), 1e-13);
}

std::vector<double> example2_ode(const Example2Spec& spec, const TimeGrid& grid, double step) {
  validate_example2(spec);
  require(step > 0.0, "example2_ode: step must be > 0");
  using State = std::array<double, 1>;
  boost::numeric::odeint::runge_kutta4<State> rk4;
  auto rhs = [&](const State& y, State& dy, double t) { dy[0] = -spec.phi(t) * y[0] - spec.h(t); };
  std::vector<double> out(grid.size(), 0.0);
  State y{0.0};
  for (std::size_t i = grid.size() - 1; i-- > 0;) {
    const double hi = grid.node(i + 1), lo = grid.node(i);
    const auto sub = static_cast<std::size_t>(std::max(1.0, std::ceil((hi - lo) / step)));
    const double dt = (lo - hi) / static_cast<double>(sub);
    double t = hi;
    for (std::size_t k = 0; k < sub; ++k) {
      rk4.do_step(rhs, y, t, dt);
      t = hi + static_cast<double>(k + 1) * dt;
    }
    out[i] = y[0];
  }
  return out;
}

Report example2_report(const Example2Spec& spec, const TimeGrid& grid, const Example2Options& options) {
  validate_example2(spec);
  Report rep;
  rep.title = "example2";
  const SeparableKernel k = example2_kernel(spec);
  BSVIEProblem p;
  p.kernel = k.kernel;
  p.h = make_deterministic_driver([h = spec.h](double, double s) { return h(s); }, spec.h_prefactor, spec.h_rate,
                                  false, "h");
  p.lambda = spec.lambda;
  ResolventOptions ro;
  const AssumptionReport ar = validate_problem(p, grid, ro);
  rep.values.emplace_back("L_lambda", ar.L_lambda);

  const ResolventTable series = resolvent_series(k.kernel, spec.lambda, options.series_tol, grid, ro);
  const ResolventTable nystrom = resolvent_nystrom(k.kernel, grid, ro);
  auto exact = [&](double t, double s) { return k.resolvent(t, s); };
  // Without decay in Phi the series terms are huge far from the diagonal and
  // only the weighted error is controlled.
  rep.add_check("resolvent_series_weighted", max_weighted(series, exact, ro.weight_exponent * spec.lambda),
                options.tol);
  rep.add_check("resolvent_nystrom_normwise", max_weighted(nystrom, exact, 0.0), options.tol);
  rep.values.emplace_back("series_terms", series.series_terms_used);

  const YCurve y = solve_y_deterministic(p, nystrom, grid);
  const std::vector<double> ode = example2_ode(spec, grid, options.ode_step);
  double d_fr = 0.0, d_fo = 0.0, d_ro = 0.0;
  double y0_formula = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double f = example2_formula(spec, grid.node(i));
    if (i == 0) y0_formula = f;
    d_fr = std::max(d_fr, std::abs(f - y.values[i]));
    d_fo = std::max(d_fo, std::abs(f - ode[i]));
    d_ro = std::max(d_ro, std::abs(y.values[i] - ode[i]));
  }
  rep.add_check("formula_vs_resolvent", d_fr, options.tol);
  rep.add_check("formula_vs_ode", d_fo, options.tol);
  rep.add_check("resolvent_vs_ode", d_ro, options.tol);
  rep.values.emplace_back("Y0_formula", y0_formula);
  rep.values.emplace_back("Y0_resolvent", y.values[0]);
  rep.values.emplace_back("Y0_ode", ode[0]);

  if (options.mc) {
    const Example2MC& mc = *options.mc;
    BSVIEProblem sp = p;
    const double c = spec.h_prefactor, mu = spec.h_rate;
    sp.h = make_state_driver([c, mu](double, double s, double B, double) { return c * std::exp(-mu * s) * std::cos(B); },
                             c, mu, false, "exp-cos");
    const PathBundle paths = simulate_paths(grid, mc.n_paths, nullptr, mc.seed);
    const GirsanovWeight w = girsanov_weights(paths, sp.xi, nullptr);
    MCOptions mo;
    mo.basis.degree = mc.degree;
    const YMonteCarlo ym = solve_y_mc(sp, nystrom, paths, w, mo);
    rep.values.emplace_back("Y0_mc", ym.Y0.value);
    rep.values.emplace_back("Y0_mc_ci", ym.Y0.ci_halfwidth);
    std::vector<std::size_t> rows;
    for (double t : mc.t_rows) rows.push_back(grid.require_node(t));
    const auto zk = solve_zk(sp, ym, paths, w, rows, mo.basis);
    double worst = 0.0;
    for (std::size_t r = 1; r < zk.size(); ++r) {
      const std::size_t from = std::max(zk[r].t_node, zk[0].t_node) + 1;
      for (std::size_t j = from; j < grid.size(); ++j) {
        const auto c0 = static_cast<Eigen::Index>(j);
        worst = std::max(worst, (zk[r].integrands.z.col(c0) - zk[0].integrands.z.col(c0)).cwiseAbs().maxCoeff());
      }
    }
    rep.add_check("Z_rows_t_independent", worst, 1e-8);
    for (auto& m : ym.warnings) rep.warnings.push_back(m);
  }
  for (auto& m : ar.warnings) rep.warnings.push_back(m);
  return rep;
}

double ControlProblem::b(double r) const { return b0 * std::exp(-kappa * r); }

double ControlProblem::b_integral(double r) const {
  return kappa > 0.0 ? b0 * -std::expm1(-kappa * r) / kappa : b0 * r;
}

void validate_control_problem(const ControlProblem& problem) {
  require(problem.rho > 0.0, "control: rho must be > 0");
  require(problem.kappa > 0.0 || problem.b0 == 0.0, "control: kappa must be > 0 for a nonzero memory kernel");
  require(problem.sigma >= 0.0, "control: sigma must be >= 0");
  require(problem.explosion_cap > 0.0, "control: explosion cap must be > 0");
}

namespace {

/// One exponential-Euler step: exact for the linear part, left-point for the
/// memory and control terms.
struct Stepper {
  const ControlProblem& pr;
  double operator()(double x, double memory, double u, double dt, double dB) const {
    const double z = pr.a * dt;
    const double e = std::exp(z);
    const double phi1 = z != 0.0 ? std::expm1(z) / z : 1.0;
    const double var = z != 0.0 ? std::expm1(2.0 * z) / (2.0 * z) : 1.0;
    return e * x + phi1 * dt * (memory + pr.c * u) + pr.sigma * std::sqrt(var) * dB;
  }
};

[[noreturn]] void explode(const ControlProblem& pr, double t, double x) {
  fail(ErrorKind::instability_detected,
       "state exceeded explosion cap " + format_double(pr.explosion_cap) + " at t=" + format_double(t) +
           " (|X|=" + format_double(std::abs(x)) + ", a=" + format_double(pr.a) + ", b0=" + format_double(pr.b0) +
           ", kappa=" + format_double(pr.kappa) + ", c=" + format_double(pr.c) + ")");
}

}  // namespace

ControlResult simulate_control(const ControlProblem& problem, const PathBundle& paths, const Control& control) {
  validate_control_problem(problem);
  const TimeGrid& g = paths.grid();
  const std::size_t n = g.size();
  const std::size_t np = paths.n_paths();
  const Stepper step{problem};
  const auto w = g.weights();

  std::vector<double> X(np * n), cost(np), last_integrand(np);
  parallel_for(np, [&](std::size_t p) {
    const PathView view(paths, p);
    double* x = X.data() + p * n;
    x[0] = problem.x0;
    double memory = 0.0, J = 0.0, u = 0.0;
    for (std::size_t i = 0;; ++i) {
      u = control(i, {x, i + 1}, view);
      if (!std::isfinite(u)) fail(ErrorKind::numeric_error, "control: non-finite u at t=" + format_double(g.node(i)));
      J += w[i] * std::exp(-problem.rho * g.node(i)) * (x[i] * x[i] + u * u);
      if (i + 1 == n) break;
      const double dt = g.dt(i);
      x[i + 1] = step(x[i], memory, u, dt, paths.dB(p, i));
      if (!(std::abs(x[i + 1]) <= problem.explosion_cap)) explode(problem, g.node(i + 1), x[i + 1]);
      if (problem.b0 != 0.0) {
        const double decay = std::exp(-problem.kappa * dt);
        memory = decay * (memory + problem.b0 * x[i] * dt);
      }
    }
    cost[p] = J;
    last_integrand[p] = x[n - 1] * x[n - 1] + u * u;
  });

  ControlResult out;
  out.J = mean_estimate(cost);
  out.path_cost = std::move(cost);
  double tail = 0.0;
  for (double v : last_integrand) tail += v;
  out.tail_estimate = std::exp(-problem.rho * g.t_max()) / problem.rho * tail / static_cast<double>(np);
  out.mean_x.assign(n, 0.0);
  out.sd_x.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0, ss = 0.0;
    for (std::size_t p = 0; p < np; ++p) {
      const double v = X[p * n + i];
      s += v;
      ss += v * v;
      out.max_abs_x = std::max(out.max_abs_x, std::abs(v));
    }
    const double m = s / static_cast<double>(np);
    out.mean_x[i] = m;
    out.sd_x[i] = np > 1 ? std::sqrt(std::max(0.0, (ss - s * m) / static_cast<double>(np - 1))) : 0.0;
  }
  return out;
}

TwoTimeKernel adjoint_kernel(const ControlProblem& problem) {
  validate_control_problem(problem);
  const double bound = std::abs(problem.a) + (problem.kappa > 0.0 ? std::abs(problem.b0) / problem.kappa : 0.0);
  return make_kernel(
      [pr = problem](double t, double s) { return std::exp(-pr.rho * (s - t)) * (pr.a + pr.b_integral(s - t)); },
      bound, problem.rho, "adjoint");
}

std::vector<double> mean_state(const ControlProblem& problem, const TimeGrid& grid) {
  validate_control_problem(problem);
  const Stepper step{problem};
  std::vector<double> x(grid.size());
  x[0] = problem.x0;
  double memory = 0.0;
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    const double dt = grid.dt(i);
    x[i + 1] = step(x[i], memory, 0.0, dt, 0.0);
    if (!(std::abs(x[i + 1]) <= problem.explosion_cap)) explode(problem, grid.node(i + 1), x[i + 1]);
    if (problem.b0 != 0.0) memory = std::exp(-problem.kappa * dt) * (memory + problem.b0 * x[i] * dt);
  }
  return x;
}

AdjointSolution solve_adjoint(const ControlProblem& problem, const TimeGrid& grid, AdjointDriver driver,
                              double lambda) {
  AdjointSolution out;
  out.bsvie.kernel = adjoint_kernel(problem);
  out.bsvie.lambda = lambda;
  if (driver == AdjointDriver::zero) {
    out.bsvie.h = zero_driver();
  } else {
    const std::vector<double> xbar = mean_state(problem, grid);
    // envelope |xbar(s)| <= C e^{-mu s}, mu from the decay over the horizon
    const double x_end = std::max(std::abs(xbar.back()), 1e-300);
    const double x_start = std::max(std::abs(problem.x0), 1e-300);
    const double mu = 0.5 * std::log(x_start / x_end) / grid.t_max();
    if (!(mu > 0.0)) {
      fail(ErrorKind::assumption_violated,
           "A1 violated: mean state does not decay (a=" + format_double(problem.a) + "), adjoint driver has no envelope");
    }
    double C = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) C = std::max(C, std::abs(xbar[i]) * std::exp(mu * grid.node(i)));
    const double rho = problem.rho;
    auto h = [xbar, rho, g = std::make_shared<const TimeGrid>(grid)](double t, double s) {
      return std::exp(-rho * (s - t)) * xbar[g->require_node(s)];
    };
    out.bsvie.h = make_deterministic_driver(h, C * (1.0 + 1e-12), mu, true, "discounted-mean-state");
  }
  out.assumptions = validate_problem(out.bsvie, grid);
  const ResolventTable psi = resolvent_nystrom(out.bsvie.kernel, grid);
  out.Y = solve_y_deterministic(out.bsvie, psi, grid).values;
  out.u.resize(out.Y.size());
  for (std::size_t i = 0; i < out.Y.size(); ++i) out.u[i] = -problem.c * out.Y[i];
  return out;
}

ControlDemo control_demo(const ControlProblem& problem, const PathBundle& paths, AdjointDriver driver,
                         double lambda, double random_bound) {
  require(random_bound >= 0.0, "control_demo: random bound must be >= 0");
  const TimeGrid& g = paths.grid();
  ControlDemo demo;
  demo.adjoint = solve_adjoint(problem, g, driver, lambda);
  const std::vector<double> cand = demo.adjoint.u;

  auto zero = [](std::size_t, std::span<const double>, const PathView&) { return 0.0; };
  auto candidate = [&cand](std::size_t i, std::span<const double>, const PathView&) { return cand[i]; };
  const std::uint64_t seed = paths.seed();
  auto random = [seed, random_bound](std::size_t i, std::span<const double>, const PathView& v) {
    // counter-based draw per (path, node): independent of the future and of threads
    const std::uint64_t key = splitmix64(seed ^ splitmix64((static_cast<std::uint64_t>(v.index()) << 32) ^ i ^
                                                           (streams::control << 60)));
    const double u01 = static_cast<double>(key >> 11) * 0x1.0p-53;
    return random_bound * (2.0 * u01 - 1.0);
  };

  std::vector<std::pair<std::string, ControlResult>> results;
  results.emplace_back("zero", simulate_control(problem, paths, zero));
  results.emplace_back("candidate", simulate_control(problem, paths, candidate));
  results.emplace_back("random_bounded", simulate_control(problem, paths, random));
  std::stable_sort(results.begin(), results.end(),
                   [](const auto& x, const auto& y) { return x.second.J.value < y.second.J.value; });

  const ControlResult* base = nullptr;
  for (const auto& r : results)
    if (r.first == "candidate") base = &r.second;
  const std::vector<std::pair<std::string, std::function<double(double)>>> dirs{
      {"exp(-t)", [](double t) { return std::exp(-t); }},
      {"exp(-t/2)cos(t)", [](double t) { return std::exp(-0.5 * t) * std::cos(t); }}};
  for (const auto& [name, v] : dirs) {
    for (double eps : {1e-1, 1e-2}) {
      auto moved = [&cand, &g, v = v, eps](std::size_t i, std::span<const double>, const PathView&) {
        return cand[i] + eps * v(g.node(i));
      };
      const ControlResult r = simulate_control(problem, paths, moved);
      std::vector<double> diff(r.path_cost.size());
      for (std::size_t p = 0; p < diff.size(); ++p) diff[p] = (r.path_cost[p] - base->path_cost[p]) / eps;
      const Estimate e = mean_estimate(diff);
      demo.probes.push_back({name, eps, e.value, e.std_error});
    }
  }
  demo.ranked = std::move(results);
  return demo;
}

}  // namespace bsvie
