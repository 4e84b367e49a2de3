#include <cmath>
#include <functional>
#include <vector>

#include "doctest.h"

#include "bsvie/error.hpp"
#include "bsvie/kernels.hpp"

using namespace bsvie;

namespace {

/// Brute-force nested composite Simpson oracle for Phi^(n)(t, s),
/// independent of the grid machinery.
double simpson(const std::function<double(double)>& f, double a, double b, int m) {
  if (b <= a) return 0.0;
  const double h = (b - a) / m;
  double acc = f(a) + f(b);
  for (int i = 1; i < m; ++i) acc += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return acc * h / 3.0;
}

double brute_iterated(const std::function<double(double, double)>& phi, int n, double t, double s) {
  if (n == 1) return phi(t, s);
  return simpson([&](double u) { return brute_iterated(phi, n - 1, t, u) * phi(u, s); }, t, s, 64);
}

TimeGrid example_grid() { return build_graded_grid(16.0, 16, 10, 1.0, 2.0); }

}  // namespace

TEST_CASE("weighted_norm_L for the exponential kernel") {
  const TimeGrid g = example_grid();
  const Example1Kernel k = make_example1_kernel(0.5, 2.0);
  const double L = weighted_norm_L(k.kernel, 2.0, g);
  CHECK(std::abs(L - 1.0 / 6.0) < 1e-10);
  CHECK(std::abs(L - k.contraction_constant(2.0)) < 1e-10);
  // 2 alpha - gamma < 0, so every lambda > 0 keeps L below 1/2.
  for (double lambda : {0.01, 0.5, 1.0, 5.0}) CHECK(weighted_norm_L(k.kernel, lambda, g) < 0.5);

  const TwoTimeKernel zero = make_kernel([](double, double) { return 0.0; }, 0.0, 1.0, "zero");
  CHECK(weighted_norm_L(zero, 2.0, g) == 0.0);
}

TEST_CASE("decay envelope check") {
  const TimeGrid g = build_graded_grid(5.0, 5, 4, 1.0, 2.0);
  const Example1Kernel k = make_example1_kernel(0.5, 2.0);
  CHECK_NOTHROW(check_decay_envelope(k.kernel, g));
  const TwoTimeKernel lying = make_kernel([](double t, double s) { return std::exp(-(s - t)); }, 1.0, 2.0, "lying");
  try {
    check_decay_envelope(lying, g);
    FAIL("expected A1 violation");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::assumption_violated);
    CHECK(std::string(e.what()).find("A1") != std::string::npos);
  }
}

TEST_CASE("iterated kernel against closed form and brute-force quadrature") {
  const TimeGrid g = example_grid();
  const Example1Kernel k = make_example1_kernel(0.5, 2.0);
  const double closed = 0.25 * std::exp(-2.0);
  CHECK(k.iterated(2, 0.0, 1.0) == doctest::Approx(closed).epsilon(1e-15));
  CHECK(std::abs(iterated_kernel(k.kernel, 2, 0.0, 1.0, g) - 0.0338338208091532) < 1e-12);
  CHECK(std::abs(brute_iterated(k.kernel.eval, 2, 0.0, 1.0) - closed) < 1e-9);

  for (int n = 2; n <= 5; ++n) {
    for (auto [t, s] : {std::pair{0.0, 1.0}, std::pair{0.3, 2.7}, std::pair{1.0, 6.5}}) {
      const double num = iterated_kernel(k.kernel, n, t, s, g);
      CHECK(num == doctest::Approx(k.iterated(n, t, s)).epsilon(1e-10));
      if (n <= 3) CHECK(num == doctest::Approx(brute_iterated(k.kernel.eval, n, t, s)).epsilon(1e-7));
    }
  }
  CHECK(iterated_kernel(k.kernel, 1, 0.2, 0.9, g) == k.kernel(0.2, 0.9));
  CHECK(iterated_kernel(k.kernel, 3, 1.5, 1.5, g) == 0.0);
  CHECK_THROWS_AS(iterated_kernel(k.kernel, 0, 0.0, 1.0, g), Error);
  CHECK_THROWS_AS(iterated_kernel(k.kernel, 2, 1.0, 0.5, g), Error);
}

TEST_CASE("resolvent by series and Nystrom on the exponential kernel") {
  const TimeGrid g = example_grid();
  const Example1Kernel k = make_example1_kernel(0.5, 2.0);
  const ResolventTable series = resolvent_series(k.kernel, 2.0, 1e-22, g);
  const ResolventTable nys = resolvent_nystrom(k.kernel, g);
  const std::size_t i0 = *g.index_of(0.0);
  const std::size_t i1 = *g.index_of(1.0);
  CHECK(std::abs(series(i0, i1) - 0.5 * std::exp(-1.5)) < 1e-9);
  CHECK(std::abs(nys(i0, i1) - 0.1115650800742149) < 1e-9);
  CHECK(max_abs_difference(series, nys) <= 1e-8);

  double worst_rel = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    CHECK(nys(i, i) == k.kernel(g.node(i), g.node(i)));
    CHECK(series(i, i) == k.kernel(g.node(i), g.node(i)));
    for (std::size_t j = i; j < g.size(); ++j) {
      const double exact = k.resolvent(g.node(i), g.node(j));
      worst_rel = std::max({worst_rel, std::abs(nys(i, j) - exact) / exact, std::abs(series(i, j) - exact) / exact});
    }
  }
  // Two-point spans limit this coarse grid to ~3e-5; finer grids reach 1e-6.
  CHECK(worst_rel <= 5e-5);

  CHECK(resolvent_residual(nys, k.kernel) <= 1e-10);
  CHECK(resolvent_residual(series, k.kernel) <= 1e-12);

  // Induction bound and geometric tail.
  const double L = series.L_lambda;
  for (Eigen::Index n = 0; n < series.iterated_norms.rows(); ++n) {
    CHECK(series.iterated_norms.row(n).maxCoeff() <= std::pow(L, static_cast<double>(n + 1)) + (n + 1) * 1e-10);
  }
  const auto psi_norms = weighted_row_norms(nys.values, 2.0, g);
  for (double v : psi_norms) CHECK(v <= L / (1.0 - L) + 1e-8);

  // Interpolation reproduces node values and stays between neighbours.
  CHECK(nys.at(g.node(3), g.node(40)) == doctest::Approx(nys(3, 40)).epsilon(1e-14));
  const double mid = nys.at(0.0, 1.05);
  CHECK(mid == doctest::Approx(k.resolvent(0.0, 1.05)).epsilon(1e-3));
}

TEST_CASE("zero kernel gives zero resolvent") {
  const TimeGrid g = build_graded_grid(4.0, 4, 4, 1.0, 2.0);
  const TwoTimeKernel zero = make_kernel([](double, double) { return 0.0; }, 0.0, 1.0, "zero");
  const ResolventTable series = resolvent_series(zero, 2.0, 1e-12, g);
  CHECK(series.series_terms_used == 1);
  CHECK(series.values.cwiseAbs().maxCoeff() == 0.0);
  const ResolventTable nys = resolvent_nystrom(zero, g);
  CHECK(nys.values.cwiseAbs().maxCoeff() == 0.0);
  CHECK(resolvent_residual(nys, zero) == 0.0);
}

TEST_CASE("contraction guard") {
  const TimeGrid g = build_graded_grid(4.0, 4, 4, 1.0, 2.0);
  const Example1Kernel k = make_example1_kernel(2.0, 1.0);
  try {
    resolvent_series(k.kernel, 2.0, 1e-10, g);
    FAIL("expected contraction-violated");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::contraction_violated);
    CHECK(std::string(e.what()).find("contraction condition violated: L(lambda)=") == 0);
  }
  CHECK_THROWS_AS(resolvent_nystrom(k.kernel, g), Error);

  // 1/2 <= L < 1 passes only in relaxed mode.
  const Example1Kernel mid = make_example1_kernel(0.5, 0.5);  // L = 0.5 / 1.5 at lambda = 2
  const TimeGrid g2 = build_graded_grid(4.0, 4, 4, 1.0, 2.0);
  CHECK_NOTHROW(resolvent_nystrom(mid.kernel, g2));
  const Example1Kernel high = make_example1_kernel(0.8, 0.5);  // L = 0.8 / 1.5
  CHECK_THROWS_AS(resolvent_nystrom(high.kernel, g2), Error);
  const Example1Kernel over = make_example1_kernel(1.0, 0.5);  // L = 1 / 1.5
  ResolventOptions relaxed;
  relaxed.relaxed_contraction = true;
  const ResolventTable t = resolvent_nystrom(over.kernel, g2, relaxed);
  CHECK(t.warnings.size() == 1);
}

TEST_CASE("separable kernels") {
  const TimeGrid g = build_graded_grid(12.0, 24, 10, 1.0, 8.0);
  const SeparableKernel minus_one =
      make_separable_kernel([](double) { return -1.0; }, 1.0, 0.0, [](double s) { return -s; }, "phi=-1");
  CHECK(minus_one.resolvent(0.0, 1.0) == doctest::Approx(-std::exp(-1.0)).epsilon(1e-14));
  CHECK(std::abs(minus_one.resolvent(0.0, 1.0) + 0.3678794) < 1e-7);
  const ResolventTable nys = resolvent_nystrom(minus_one.kernel, g);
  double worst = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i)
    for (std::size_t j = i; j < g.size(); ++j) {
      const double exact = -std::exp(-(g.node(j) - g.node(i)));
      worst = std::max(worst, std::abs(nys(i, j) - exact) / std::abs(exact));
    }
  CHECK(worst < 5e-5);

  const SeparableKernel zero = make_separable_kernel([](double) { return 0.0; }, 0.0, 0.0);
  CHECK(zero.resolvent(0.0, 3.0) == 0.0);
  CHECK(resolvent_nystrom(zero.kernel, g).values.cwiseAbs().maxCoeff() == 0.0);

  const SeparableKernel decaying = make_separable_kernel([](double s) { return -std::exp(-s); }, 1.0, 1.0);
  const double expected = -std::exp(-1.0) * std::exp(std::exp(-1.0) - 1.0);
  CHECK(decaying.resolvent(0.0, 1.0) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(std::abs(expected + 0.19551) < 1e-5);
  const ResolventTable dn = resolvent_nystrom(decaying.kernel, g);
  CHECK(dn(0, *g.index_of(1.0)) == doctest::Approx(expected).epsilon(1e-8));
  const ResolventTable ds = resolvent_series(decaying.kernel, 8.0, 1e-16, g);
  CHECK(max_abs_difference(ds, dn) < 1e-8);
}
