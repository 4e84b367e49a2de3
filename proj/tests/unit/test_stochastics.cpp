#include <cmath>
#include <sstream>
#include <vector>

#include "doctest.h"

#include "bsvie/error.hpp"
#include "bsvie/parallel.hpp"
#include "bsvie/stochastics.hpp"

using namespace bsvie;

namespace {

std::vector<double> column(const PathBundle& b, std::size_t node) {
  std::vector<double> v(b.n_paths());
  for (std::size_t p = 0; p < b.n_paths(); ++p) v[p] = b.B(p, node);
  return v;
}

std::vector<double> terminal_M(const GirsanovWeight& w) {
  const Eigen::VectorXd m = w.M_at(static_cast<std::size_t>(w.log_M.cols() - 1));
  return {m.data(), m.data() + m.size()};
}

}  // namespace

TEST_CASE("Brownian increments have the right moments") {
  const TimeGrid g = build_graded_grid(4.0, 4, 3, 1.2, 2.0);
  const std::size_t n = 10000;
  const PathBundle b = simulate_paths(g, n, nullptr, 42);
  const auto bt = column(b, g.size() - 1);
  const Estimate e = mean_estimate(bt);
  CHECK(std::abs(e.value) <= 5.0 * std::sqrt(4.0 / n));
  for (std::size_t k = 0; k < g.intervals(); ++k) {
    double sum = 0.0, ss = 0.0;
    for (std::size_t p = 0; p < n; ++p) sum += b.dB(p, k);
    const double mean = sum / n;
    for (std::size_t p = 0; p < n; ++p) ss += (b.dB(p, k) - mean) * (b.dB(p, k) - mean);
    const double var = ss / (n - 1);
    const double dt = g.dt(k);
    CHECK(std::abs(mean) <= 5.0 * std::sqrt(dt / n));
    CHECK(std::abs(var - dt) <= 5.0 * dt * std::sqrt(2.0 / (n - 1)));
  }
  for (std::size_t p = 0; p < 10; ++p) CHECK(b.B(p, 0) == 0.0);
}

TEST_CASE("jump counts are Poisson with mean rate * T") {
  const TimeGrid g = build_graded_grid(10.0, 5, 3, 1.0, 2.0);
  const JumpSpec spec = make_jump_spec({1.0, -0.5}, {0.75, 0.25}, [](double, double) { return 0.2; });
  const std::size_t n = 10000;
  const PathBundle b = simulate_paths(g, n, &spec, 3);
  std::vector<double> counts(n);
  for (std::size_t p = 0; p < n; ++p) {
    counts[p] = static_cast<double>(b.jumps(p).size());
    for (std::size_t j = 1; j < b.jumps(p).size(); ++j) CHECK(b.jumps(p)[j - 1].time <= b.jumps(p)[j].time);
  }
  const Estimate e = mean_estimate(counts);
  CHECK(std::abs(e.value - 10.0) <= 5.0 * std::sqrt(10.0 / n));
  CHECK(b.compensator(0, 1) == doctest::Approx(0.25 * g.dt(0)).epsilon(1e-15));
}

TEST_CASE("simulation is reproducible and independent of thread count") {
  const TimeGrid g = build_graded_grid(3.0, 3, 4, 1.0, 2.0);
  const JumpSpec spec = constant_beta_jumps(0.5);
  set_thread_count(1);
  const PathBundle a = simulate_paths(g, 257, &spec, 11);
  set_thread_count(4);
  const PathBundle b = simulate_paths(g, 257, &spec, 11);
  set_thread_count(0);
  const PathBundle c = simulate_paths(g, 257, &spec, 12);
  bool same = true, differs = false;
  for (std::size_t p = 0; p < 257; ++p) {
    for (std::size_t k = 0; k < g.intervals(); ++k) {
      same = same && a.dB(p, k) == b.dB(p, k);
      differs = differs || a.dB(p, k) != c.dB(p, k);
    }
    same = same && a.jumps(p).size() == b.jumps(p).size();
    for (std::size_t j = 0; j < a.jumps(p).size() && same; ++j) same = a.jumps(p)[j].time == b.jumps(p)[j].time;
  }
  CHECK(same);
  CHECK(differs);
  // Prefix stability: path p does not depend on n_paths.
  const PathBundle shorter = simulate_paths(g, 10, &spec, 11);
  CHECK(shorter.dB(9, 3) == a.dB(9, 3));
}

TEST_CASE("Girsanov density basics") {
  const TimeGrid g = build_graded_grid(5.0, 5, 4, 1.0, 2.0);
  const PathBundle b = simulate_paths(g, 100, nullptr, 1);
  const GirsanovWeight trivial = girsanov_weights(b, [](double) { return 0.0; }, nullptr);
  CHECK(trivial.log_M.cwiseAbs().maxCoeff() == 0.0);

  const GirsanovWeight w = girsanov_weights(b, [](double s) { return 0.3 * std::cos(s); }, nullptr);
  CHECK(w.log_M.col(0).cwiseAbs().maxCoeff() == 0.0);
  CHECK(w.log_M.array().isFinite().all());
  // Agrees with the per-path evaluator used for perturbed paths.
  const GirsanovModel model(g, [](double s) { return 0.3 * std::cos(s); }, nullptr);
  for (std::size_t p = 0; p < 5; ++p)
    for (std::size_t i = 0; i < g.size(); i += 3)
      CHECK(model.log_density(PathView(b, p), i) == doctest::Approx(w.log_M(p, i)).epsilon(1e-13));

  const JumpSpec bad = constant_beta_jumps(-1.5);
  try {
    simulate_paths(g, 10, &bad, 1);
    FAIL("expected measure-degenerate");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::measure_degenerate);
  }
}

TEST_CASE("E[M(T)] = 1 within 3 sigma at 1e5 paths") {
  const TimeGrid g = build_graded_grid(5.0, 5, 4, 1.0, 2.0);
  const std::size_t n = 100000;
  const JumpSpec jumps = constant_beta_jumps(0.5, 1.0, 1.0);

  const PathBundle plain = simulate_paths(g, n, nullptr, 2024);
  const PathBundle with_jumps = simulate_paths(g, n, &jumps, 2024);
  struct Case {
    const PathBundle* paths;
    std::function<double(double)> xi;
    const JumpSpec* spec;
  };
  const std::vector<Case> cases = {
      {&plain, [](double) { return 0.3; }, nullptr},
      {&with_jumps, [](double) { return 0.0; }, &jumps},
      {&with_jumps, [](double s) { return std::exp(-0.5 * s); }, &jumps},
  };
  for (const Case& c : cases) {
    const GirsanovWeight w = girsanov_weights(*c.paths, c.xi, c.spec);
    CHECK((w.log_M.array().exp() > 0.0).all());
    const Estimate e = mean_estimate(terminal_M(w));
    CHECK(std::abs(e.value - 1.0) <= 3.0 * e.std_error);
  }
}

TEST_CASE("novikov exponent") {
  const TimeGrid g = build_graded_grid(30.0, 15, 10, 1.0, 2.0);
  const NovikovReport r = novikov_exponent([](double s) { return std::exp(-0.5 * s); }, nullptr, g);
  CHECK(std::abs(r.value - 0.5) < 1e-8);
  // xi0 = 2, delta = 0.25 -> xi0^2 / (4 delta) = 4
  const NovikovReport r2 = novikov_exponent([](double s) { return 2.0 * std::exp(-0.25 * s); }, nullptr, g);
  CHECK(std::abs(r2.value - 4.0) < 1e-8);
  CHECK(novikov_exponent([](double) { return 0.0; }, nullptr, g).value == 0.0);

  const JumpSpec zero_beta = constant_beta_jumps(0.0);
  CHECK(novikov_exponent([](double) { return 0.0; }, &zero_beta, g).value == 0.0);
  const JumpSpec half = constant_beta_jumps(0.5, 1.0, 2.0);
  const NovikovReport rj = novikov_exponent([](double) { return 0.0; }, &half, g);
  CHECK(rj.jump_part == doctest::Approx(2.0 * 30.0 * (std::log(1.5) - 0.5)).epsilon(1e-12));
  CHECK(rj.jump_part < 0.0);

  try {
    novikov_exponent([](double) { return 0.1; }, nullptr, g);
    FAIL("expected divergent");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::divergent);
  }
}

TEST_CASE("expect_Q closed forms") {
  const TimeGrid g = build_graded_grid(2.0, 2, 4, 1.0, 2.0);
  const std::size_t n = 40000;
  const PathBundle b = simulate_paths(g, n, nullptr, 77);
  const std::size_t i1 = g.require_node(1.0);
  const std::size_t iT = g.size() - 1;

  const GirsanovWeight none = girsanov_weights(b, [](double) { return 0.0; }, nullptr);
  std::vector<double> expB(n);
  for (std::size_t p = 0; p < n; ++p) expB[p] = std::exp(b.B(p, i1));
  const Estimate lognormal = expect_Q(expB, none, i1);
  CHECK(std::abs(lognormal.value - std::exp(0.5)) <= lognormal.ci_halfwidth * 3.0 / 1.96);

  const double c = 0.4;
  const GirsanovWeight shift = girsanov_weights(b, [c](double) { return c; }, nullptr);
  const std::vector<double> ones(n, 1.0);
  const Estimate norm = expect_Q(ones, shift, iT);
  CHECK(std::abs(norm.value - 1.0) <= 3.0 * norm.std_error);
  const auto bt = column(b, iT);
  const Estimate drift = expect_Q(bt, shift, g, 2.0);
  CHECK(std::abs(drift.value - c * 2.0) <= 3.0 * drift.std_error);

  // Density weighting vs paths simulated with the drift added.
  std::vector<double> g_weighted(n), g_drifted(n);
  for (std::size_t p = 0; p < n; ++p) {
    g_weighted[p] = std::tanh(bt[p]);
    g_drifted[p] = std::tanh(bt[p] + c * 2.0);
  }
  const Estimate lhs = expect_Q(g_weighted, shift, iT);
  const Estimate rhs = mean_estimate(g_drifted);
  CHECK(std::abs(lhs.value - rhs.value) <= 3.0 * (lhs.std_error + rhs.std_error));
}

TEST_CASE("q_shifted_increments") {
  const TimeGrid g = build_graded_grid(2.0, 2, 3, 1.0, 2.0);
  const JumpSpec spec = constant_beta_jumps(0.5, 1.0, 2.0);
  const PathBundle b = simulate_paths(g, 20, &spec, 5);
  const PathBundle same = q_shifted_increments(b, [](double) { return 0.0; }, nullptr);
  for (std::size_t k = 0; k < g.intervals(); ++k) CHECK(same.dB(3, k) == b.dB(3, k));
  CHECK(same.measure() == Measure::Q);

  const PathBundle q = q_shifted_increments(b, [](double) { return 0.25; }, &spec);
  for (std::size_t k = 0; k < g.intervals(); ++k) {
    CHECK(q.dB(7, k) == b.dB(7, k) - 0.25 * g.dt(k));
    CHECK(q.compensator(k, 0) == doctest::Approx(1.5 * 2.0 * g.dt(k)).epsilon(1e-15));
  }
  CHECK(q.B(7, g.size() - 1) == doctest::Approx(b.B(7, g.size() - 1) - 0.5).epsilon(1e-12));
  CHECK(q.jumps(7).size() == b.jumps(7).size());
}

TEST_CASE("PathView perturbations") {
  const TimeGrid g = build_graded_grid(2.0, 2, 3, 1.0, 2.0);
  const JumpSpec spec = make_jump_spec({1.0, 2.5}, {1.0, 1.0}, [](double, double) { return 0.0; });
  const PathBundle b = simulate_paths(g, 4, &spec, 9);
  const PathView v(b, 2);
  const PathView bumped = v.with_bump(3, 0.125);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(bumped.B(i) == v.B(i) + (i > 3 ? 0.125 : 0.0));
  CHECK(bumped.dB(3) == v.dB(3) + 0.125);

  const PathView jumped = v.with_jump(0.7, 1);
  CHECK(jumped.jump_count(2.0) == v.jump_count(2.0) + 1);
  CHECK(jumped.jump_sum(2.0) == doctest::Approx(v.jump_sum(2.0) + 2.5));
  CHECK(jumped.jump_count(0.5) == v.jump_count(0.5));
  double last = -1.0;
  jumped.for_each_jump([&](double t, std::size_t, double) {
    CHECK(t >= last);
    last = t;
  });
  CHECK(v.B_at(g.node(4)) == v.B(4));
  CHECK(spec.mark_index(2.5) == 1);
  CHECK_THROWS_AS(spec.mark_index(3.0), Error);
}

TEST_CASE("path CSV dump") {
  const TimeGrid g = build_graded_grid(1.0, 1, 2, 1.0, 2.0);
  const PathBundle b = simulate_paths(g, 3, nullptr, 1);
  std::ostringstream os;
  write_path_csv(os, b, nullptr, 2);
  const std::string s = os.str();
  CHECK(s.rfind("path_id,t,B,M,jumps\n", 0) == 0);
  CHECK(std::count(s.begin(), s.end(), '\n') == 1 + 2 * static_cast<long>(g.size()));
}
