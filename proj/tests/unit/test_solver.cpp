#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "doctest.h"

#include "bsvie/error.hpp"
#include "bsvie/solver.hpp"

using namespace bsvie;

namespace {

BSVIEProblem example1_problem() {
  BSVIEProblem p;
  p.kernel = make_example1_kernel(0.5, 2.0).kernel;
  p.h = make_deterministic_driver([](double, double s) { return std::exp(-s); }, 1.0, 1.0, false, "exp");
  return p;
}

/// Y(t) = int_t^inf (1 + (1 - e^{-1.5(s-t)}) / 3) e^{-s} ds
double example1_y(double t) { return 1.2 * std::exp(-t); }

Driver cos_driver() {
  return make_state_driver([](double, double s, double B, double) { return std::exp(-s) * std::cos(B); }, 1.0, 1.0,
                           false, "exp-cos");
}

}  // namespace

TEST_CASE("explicit Y for the exponential kernel") {
  const TimeGrid g = build_graded_grid(16.0, 64, 10, 1.0, 2.0);
  const BSVIEProblem p = example1_problem();
  const AssumptionReport rep = validate_problem(p, g);
  CHECK(std::abs(rep.L_lambda - 1.0 / 6.0) < 1e-10);
  CHECK(rep.driver_envelope_ratio <= 1.0 + 1e-12);
  CHECK_FALSE(rep.novikov.has_value());

  const ResolventTable psi = resolvent_nystrom(p.kernel, g);
  const YCurve y = solve_y_deterministic(p, psi, g);
  CHECK(std::abs(y.values[0] - 1.2) < 1e-6);
  double worst = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) worst = std::max(worst, std::abs(y.values[i] - example1_y(g.node(i))));
  CHECK(worst < 1e-6);
  CHECK(y.tail_bound < 1e-6);
  CHECK(verify_m_solution_deterministic(p, y.values, g) < 1e-6);

  // the tabulated t-dependent path through apply() agrees with the compact formula
  BSVIEProblem q = p;
  q.h.depends_on_t = true;
  const YCurve y2 = solve_y_deterministic(q, psi, g);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(std::abs(y2.values[i] - y.values[i]) < 1e-12);
}

TEST_CASE("zero driver gives zero Y and U") {
  const TimeGrid g = build_graded_grid(8.0, 8, 6, 1.0, 2.0);
  BSVIEProblem p = example1_problem();
  p.h = zero_driver();
  const ResolventTable psi = resolvent_nystrom(p.kernel, g);
  const YCurve y = solve_y_deterministic(p, psi, g);
  for (double v : y.values) CHECK(v == 0.0);
  for (double u : compute_U(p, y.values, g)) CHECK(u == 0.0);
  const PicardResult pr = picard_iterate(p, g, 5, 1e-12);
  CHECK(pr.iterations == 1);
  for (double v : pr.Y) CHECK(v == 0.0);
}

TEST_CASE("Picard iteration converges to the explicit curve") {
  const TimeGrid g = build_graded_grid(16.0, 32, 10, 1.0, 2.0);
  const BSVIEProblem p = example1_problem();
  const PicardResult pr = picard_iterate(p, g, 200, 1e-12);
  CHECK(std::abs(pr.Y[0] - 1.2) < 1e-5);
  const YCurve y = solve_y_deterministic(p, resolvent_nystrom(p.kernel, g), g);
  // both are quadrature approximations of the same curve
  double gap = 0.0, err = 0.0, err_y = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    gap = std::max(gap, std::abs(pr.Y[i] - y.values[i]));
    err = std::max(err, std::abs(pr.Y[i] - example1_y(g.node(i))));
    err_y = std::max(err_y, std::abs(y.values[i] - example1_y(g.node(i))));
  }
  CHECK(err < 1e-5);
  CHECK(gap <= 1e-8 + err + err_y);
  const double L = 1.0 / 6.0;
  for (std::size_t k = 2; k < pr.history.size(); ++k) CHECK(pr.history[k] / pr.history[k - 1] <= L + 0.05);
  MESSAGE("picard iterations " << pr.iterations << " ratio " << pr.history[3] / pr.history[2]);

  CHECK_THROWS_AS(picard_iterate(p, g, 3, 1e-14), Error);
  try {
    picard_iterate(p, g, 3, 1e-14);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::no_convergence);
  }
}

TEST_CASE("Example 2 reduction: separable kernel") {
  const TimeGrid g = build_graded_grid(16.0, 48, 10, 1.0, 8.0);
  BSVIEProblem p;
  p.kernel = make_separable_kernel([](double) { return -1.0; }, 1.0, 0.0, [](double s) { return -s; }).kernel;
  p.h = make_deterministic_driver([](double, double s) { return std::exp(-s); }, 1.0, 1.0, false, "exp");
  p.lambda = 8.0;
  const AssumptionReport rep = validate_problem(p, g);
  CHECK(std::abs(rep.L_lambda - 0.25) < 1e-8);
  const YCurve y = solve_y_deterministic(p, resolvent_nystrom(p.kernel, g), g);
  CHECK(std::abs(y.values[0] - 0.5) < 1e-6);
  // Y(t) = e^{-t} / 2
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(std::abs(y.values[i] - 0.5 * std::exp(-g.node(i))) < 1e-6);
}

TEST_CASE("assumption checks") {
  const TimeGrid g = build_graded_grid(8.0, 8, 6, 1.0, 2.0);
  BSVIEProblem p = example1_problem();

  SUBCASE("driver envelope") {
    p.h = make_deterministic_driver([](double, double s) { return 2.0 * std::exp(-s); }, 1.0, 1.0, false, "big");
    try {
      validate_problem(p, g);
      FAIL("expected A1");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::assumption_violated);
      CHECK(std::string(e.what()).find("A1") != std::string::npos);
    }
  }
  SUBCASE("contraction") {
    p.kernel = make_example1_kernel(0.8, 0.5).kernel;
    try {
      validate_problem(p, g);
      FAIL("expected A2");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::contraction_violated);
    }
  }
  SUBCASE("Novikov on decaying xi") {
    p.xi = [](double s) { return std::exp(-0.5 * s); };
    const AssumptionReport rep = validate_problem(p, g);
    REQUIRE(rep.novikov.has_value());
    CHECK(std::abs(rep.novikov->value - 0.5) < 1e-3);
  }
  SUBCASE("constant xi only holds on the truncated horizon") {
    p.xi = [](double) { return 0.3; };
    try {
      validate_problem(p, g);
      FAIL("expected A3");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::assumption_violated);
      CHECK(std::string(e.what()).find("A3") != std::string::npos);
    }
    ResolventOptions relaxed;
    relaxed.relaxed_contraction = true;
    const AssumptionReport rep = validate_problem(p, g, relaxed);
    CHECK_FALSE(rep.warnings.empty());
  }
  SUBCASE("degenerate jumps") {
    p.jumps = constant_beta_jumps(-1.0);
    CHECK_THROWS_AS(validate_problem(p, g), Error);
  }
}

TEST_CASE("adaptedness spot check") {
  const TimeGrid g = build_graded_grid(4.0, 4, 4, 1.0, 2.0);
  const JumpSpec js = constant_beta_jumps(0.5);
  const PathBundle paths = simulate_paths(g, 50, &js, 7);
  BSVIEProblem p = example1_problem();
  p.h = cos_driver();
  CHECK_NOTHROW(check_adaptedness(p, paths, 200, 1));
  p.h = make_path_driver([](double, double s, const PathView& v) { return std::exp(-s) * std::cos(v.B_at(4.0)); },
                         1.0, 1.0, false, "peeking");
  try {
    check_adaptedness(p, paths, 200, 1);
    FAIL("expected adaptedness failure");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::assumption_violated);
  }
  p.h = make_path_driver(
      [](double, double s, const PathView& v) { return std::exp(-s) * static_cast<double>(v.jump_count(4.0)); },
      1.0, 1.0, false, "peeking-jumps");
  CHECK_THROWS_AS(check_adaptedness(p, paths, 200, 1), Error);
}

TEST_CASE("Monte Carlo Y with a deterministic driver is measure independent") {
  const TimeGrid g = build_graded_grid(8.0, 8, 6, 1.0, 2.0);
  BSVIEProblem p = example1_problem();
  const ResolventTable psi = resolvent_nystrom(p.kernel, g);
  const YCurve ydet = solve_y_deterministic(p, psi, g);
  const PathBundle paths = simulate_paths(g, 2000, nullptr, 11);
  for (double x : {0.0, 0.3}) {
    p.xi = [x](double) { return x; };
    const GirsanovWeight w = girsanov_weights(paths, p.xi, nullptr);
    const YMonteCarlo y = solve_y_mc(p, psi, paths, w);
    CHECK(std::abs(y.Y0.value - ydet.values[0]) < 1e-12);
    CHECK(y.Y0.ci_halfwidth < 1e-12);
    for (std::size_t i = 1; i < g.size(); ++i) CHECK(std::abs(y.mean_curve[i] - ydet.values[i]) < 1e-10);

    const Eigen::MatrixXd U = compute_U(p, y, paths);
    CHECK(U.cwiseAbs().maxCoeff() < 1e-3);
    const std::vector<std::size_t> rows{0, 6};
    const auto zk = solve_zk(p, y, paths, w, rows, {});
    for (const auto& r : zk) CHECK(r.integrands.z.cwiseAbs().maxCoeff() < 1e-6);
    const RepresentationReport rep = verify_martingale_representation(U.col(0), zk[0], paths, w, p, {});
    CHECK(rep.rms < 1e-4);
  }
}

TEST_CASE("jumps with a deterministic driver give U = 0 and K = 0") {
  const TimeGrid g = build_graded_grid(6.0, 6, 4, 1.0, 2.0);
  BSVIEProblem p = example1_problem();
  p.jumps = constant_beta_jumps(0.5);
  const ResolventTable psi = resolvent_nystrom(p.kernel, g);
  const PathBundle paths = simulate_paths(g, 1000, p.jump_spec(), 3);
  const GirsanovWeight w = girsanov_weights(paths, p.xi, p.jump_spec());
  const YMonteCarlo y = solve_y_mc(p, psi, paths, w);
  const Eigen::MatrixXd U = compute_U(p, y, paths);
  const std::vector<std::size_t> rows{0};
  const auto zk = solve_zk(p, y, paths, w, rows, {});
  REQUIRE(zk[0].integrands.k.size() == 1);
  CHECK(zk[0].integrands.k[0].cwiseAbs().maxCoeff() < 1e-6);
  const RepresentationReport rep = verify_martingale_representation(U.col(0), zk[0], paths, w, p, {});
  CHECK(rep.rms < 1e-4);
  const MSolutionReport ms = verify_m_solution(U.col(0), zk[0], paths, p, 3);
  CHECK(ms.equation_rms < 1e-4);
  CHECK(ms.literal_rms < 1e-4);
}

TEST_CASE("stochastic driver: Y, U and the representation") {
  BSVIEProblem p = example1_problem();
  p.h = cos_driver();

  struct Level {
    std::size_t panels, degree;
    double rms, rms_U;
  };
  std::vector<Level> levels{{6, 2, 0, 0}, {12, 4, 0, 0}};
  for (Level& lv : levels) {
    const TimeGrid g = build_graded_grid(3.0, lv.panels, 4, 1.0, 2.0);
    const ResolventTable psi = resolvent_nystrom(p.kernel, g);
    MCOptions mc;
    mc.basis.degree = lv.degree;
    const PathBundle a = simulate_paths(g, 4000, nullptr, 21);
    const GirsanovWeight wa = girsanov_weights(a, p.xi, nullptr);
    const YMonteCarlo ya = solve_y_mc(p, psi, a, wa, mc);
    CHECK(ya.warnings.empty());

    const Eigen::MatrixXd U = compute_U(p, ya, a);
    const std::size_t one = g.require_node(1.0);
    const std::vector<std::size_t> rows{0, one};
    const auto zk = solve_zk(p, ya, a, wa, rows, mc.basis);
    CHECK(zk[0].integrands.k.empty());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto col = U.col(static_cast<Eigen::Index>(rows[r]));
      CHECK((zk[r].integrands.values - col).cwiseAbs().maxCoeff() < 1e-12);
      const RepresentationReport rep = verify_martingale_representation(col, zk[r], a, wa, p, mc.basis);
      CHECK(rep.rms < 0.6 * rep.rms_U);
      // E_Q[U(t) | F_t] = 0
      CHECK(rep.conditional_mean_rms < 0.05 * rep.rms_U);
      const MSolutionReport ms = verify_m_solution(col, zk[r], a, p, rows[r]);
      // xi = 0: P and Q forms coincide, and t1 = t2 is the representation itself
      CHECK(std::abs(ms.equation_rms - rep.rms) < 1e-12);
      CHECK(std::abs(ms.p_form_rms - rep.rms) < 1e-12);
      if (r == 0) {
        lv.rms = rep.rms;
        lv.rms_U = rep.rms_U;
      }
    }
  }
  CHECK(levels[1].rms < levels[0].rms);
  CHECK(levels[1].rms / levels[1].rms_U < levels[0].rms / levels[0].rms_U);
}

TEST_CASE("stochastic driver: Y(0) agrees across seeds") {
  const TimeGrid g = build_graded_grid(6.0, 6, 4, 1.0, 2.0);
  BSVIEProblem p = example1_problem();
  p.h = cos_driver();
  const ResolventTable psi = resolvent_nystrom(p.kernel, g);
  std::vector<Estimate> est;
  for (std::uint64_t seed : {21u, 22u, 23u}) {
    const PathBundle paths = simulate_paths(g, 4000, nullptr, seed);
    est.push_back(solve_y_mc(p, psi, paths, girsanov_weights(paths, p.xi, nullptr)).Y0);
  }
  for (std::size_t i = 1; i < est.size(); ++i)
    CHECK(std::abs(est[i].value - est[0].value) < est[i].ci_halfwidth + est[0].ci_halfwidth);
  // h = e^{-s} cos B(s): E cos B(s) = e^{-s/2}, so Y(0) is the deterministic
  // solution for the driver e^{-1.5 s}
  BSVIEProblem d = example1_problem();
  d.h = make_deterministic_driver([](double, double s) { return std::exp(-1.5 * s); }, 1.0, 1.5, false, "mean");
  const double y0 = solve_y_deterministic(d, psi, g).values[0];
  CHECK(std::abs(est[0].value - y0) < 3.0 * est[0].std_error + 1e-3);
}

TEST_CASE("suffix-sum Z/K route matches full re-evaluation") {
  const TimeGrid g = build_graded_grid(3.0, 3, 3, 1.0, 2.0);
  BSVIEProblem p = example1_problem();
  p.h = make_state_driver([](double, double s, double B, double N) { return std::exp(-s) * std::cos(B + 0.3 * N); },
                          1.0, 1.0, false, "exp-cos-jumps");
  p.jumps = constant_beta_jumps(0.5);
  const ResolventTable psi = resolvent_nystrom(p.kernel, g);
  const PathBundle paths = simulate_paths(g, 500, p.jump_spec(), 5);
  const GirsanovWeight w = girsanov_weights(paths, p.xi, p.jump_spec());
  const YMonteCarlo y = solve_y_mc(p, psi, paths, w);
  const std::vector<std::size_t> rows{0, 4};
  const auto fast = solve_zk(p, y, paths, w, rows, {});
  const auto slow = solve_zk_generic(p, y, paths, w, rows, {});
  const Eigen::MatrixXd U = compute_U(p, y, paths);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    CHECK((fast[r].integrands.values - slow[r].integrands.values).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((fast[r].integrands.values - U.col(static_cast<Eigen::Index>(rows[r]))).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((fast[r].integrands.z - slow[r].integrands.z).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((fast[r].integrands.k[0] - slow[r].integrands.k[0]).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(fast[r].integrands.k[0].cwiseAbs().maxCoeff() > 1e-3);
  }
}

TEST_CASE("random coefficients block Z/K extraction") {
  const TimeGrid g = build_graded_grid(4.0, 4, 4, 1.0, 2.0);
  BSVIEProblem p = example1_problem();
  p.random_coefficients = RandomCoefficientFields{};
  const ResolventTable psi = resolvent_nystrom(p.kernel, g);
  const PathBundle paths = simulate_paths(g, 100, nullptr, 1);
  const GirsanovWeight w = girsanov_weights(paths, p.xi, nullptr);
  const YMonteCarlo y = solve_y_mc(p, psi, paths, w);
  const std::vector<std::size_t> rows{0};
  try {
    solve_zk(p, y, paths, w, rows, {});
    FAIL("expected guard");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::assumption_violated);
    CHECK(std::string(e.what()) == "deterministic coefficients required for Z/K extraction");
  }
}

TEST_CASE("CSV writers") {
  const TimeGrid g = build_graded_grid(2.0, 1, 2, 1.0, 2.0);
  std::ostringstream os;
  const std::vector<double> y(g.size(), 1.5);
  write_y_csv(os, g, y);
  const std::string text = os.str();
  CHECK(text.rfind("t,Y\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == static_cast<long>(g.size() + 1));
}
