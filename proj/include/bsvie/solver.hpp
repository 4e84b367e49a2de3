#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bsvie/kernels.hpp"
#include "bsvie/malliavin.hpp"
#include "bsvie/regression.hpp"
#include "bsvie/stochastics.hpp"
#include "bsvie/timegrid.hpp"

namespace bsvie {

/// Driver h(t, s), deterministic or path-dependent, with the decay envelope
/// |h(t, s)| <= prefactor * exp(-rate * s).
struct Driver {
  std::function<double(double, double)> deterministic;
  std::function<double(double, double, const PathView&)> path;
  /// Set for drivers that see the path only through (B(s), N(s)); enables the
  /// suffix-sum route in solve_zk.
  std::function<double(double, double, double, double)> state;
  double prefactor = 0.0;
  double rate = 0.0;
  bool depends_on_t = true;
  std::string label;

  bool is_deterministic() const { return static_cast<bool>(deterministic); }
  double operator()(double t, double s, const PathView* view) const {
    return deterministic ? deterministic(t, s) : path(t, s, *view);
  }
};

Driver make_deterministic_driver(std::function<double(double, double)> h, double prefactor, double rate,
                                 bool depends_on_t, std::string label);
Driver make_path_driver(std::function<double(double, double, const PathView&)> h, double prefactor, double rate,
                        bool depends_on_t, std::string label);
/// h(t, s, B(s), N(s)) with N the jump count.
Driver make_state_driver(std::function<double(double, double, double, double)> h, double prefactor, double rate,
                         bool depends_on_t, std::string label);
Driver zero_driver();

struct BSVIEProblem {
  TwoTimeKernel kernel;
  Driver h;
  std::function<double(double)> xi = [](double) { return 0.0; };
  std::optional<JumpSpec> jumps;
  double lambda = 2.0;
  /// Present when xi / beta are random; Z/K extraction then requires them.
  std::optional<RandomCoefficientFields> random_coefficients;

  const JumpSpec* jump_spec() const { return jumps ? &*jumps : nullptr; }
};

struct AssumptionReport {
  double L_lambda = 0.0;
  double kernel_envelope_ratio = 0.0;
  double driver_envelope_ratio = 0.0;
  std::optional<NovikovReport> novikov;
  std::vector<std::string> warnings;
};

/// Fail-fast A1-A3 checks on the grid. Violations raise assumption-violated or
/// contraction-violated with the assumption named in the message.
AssumptionReport validate_problem(const BSVIEProblem& problem, const TimeGrid& grid,
                                  const ResolventOptions& options = {});

/// Spot check that h(t, s, .) ignores the path after s: bumps a later
/// increment and inserts a later jump on random (t, s, path) triples.
void check_adaptedness(const BSVIEProblem& problem, const PathBundle& paths, std::size_t n_checks,
                       std::uint64_t seed);

/// Quadrature operators built from the grid and resolvent.
class YOperator {
 public:
  YOperator(const TimeGrid& grid, const ResolventTable& psi);

  const TimeGrid& grid() const { return *grid_; }
  /// W_end(a, j): clipped rule for [x_a, T_max].
  const Eigen::MatrixXd& tail_weights() const { return w_end_; }
  /// C(a, j) = W_end(a, j) (1 + int_{x_a}^{x_j} Psi(x_a, u) du); for
  /// t-independent drivers I = C hv.
  const Eigen::MatrixXd& compact() const { return compact_; }
  /// sup_a int_{x_a}^{T_max} |Psi(x_a, u)| du
  double psi_row_l1() const { return psi_row_l1_; }

  /// I(x_a) = int_{x_a} (h(x_a, s) + int_{x_a}^s Psi(x_a, u) h(u, s) du) ds for
  /// a tabulated driver H(u, s) (upper triangular).
  Eigen::VectorXd apply(const Eigen::MatrixXd& H) const;

 private:
  std::shared_ptr<const TimeGrid> grid_;
  Eigen::MatrixXd psi_;
  Eigen::MatrixXd w_end_;
  Eigen::MatrixXd compact_;
  double psi_row_l1_ = 0.0;
};

struct YCurve {
  std::vector<double> values;
  double tail_bound = 0.0;
};

/// Explicit formula for deterministic h.
YCurve solve_y_deterministic(const BSVIEProblem& problem, const ResolventTable& resolvent, const TimeGrid& grid);

struct MCOptions {
  BasisSpec basis;
};

struct YMonteCarlo {
  Estimate Y0;                      // self-normalized density-weighted mean
  Eigen::MatrixXd Y;                // paths x nodes, regression estimates of E_Q[.|F_t]
  Eigen::MatrixXd integrand;        // paths x nodes, the unconditioned inner integrals
  std::vector<RegressionFit> fits;  // per node (node 0 unused)
  std::vector<double> mean_curve;   // Q-mean of Y per node
  bool include_jump_count = true;
  std::vector<std::string> warnings;

  /// Y(x_i) on a (possibly perturbed) path.
  double at(std::size_t i, const PathView& view) const;
};

YMonteCarlo solve_y_mc(const BSVIEProblem& problem, const ResolventTable& resolvent, const PathBundle& paths,
                       const GirsanovWeight& weights, const MCOptions& options = {});

struct PicardResult {
  std::vector<double> Y;
  std::vector<double> history;  // weighted H^2_lambda norms of Y_{k+1} - Y_k
  std::size_t iterations = 0;
};

/// Y_0 = 0, Y_{k+1}(t) = int_t (Phi(t, s) Y_k(s) + h(t, s)) ds until the
/// weighted norm of the update drops below tol; no-convergence otherwise.
PicardResult picard_iterate(const BSVIEProblem& problem, const TimeGrid& grid, std::size_t k_max, double tol);

/// U(t) = int_t (Phi Y + h) ds - Y(t) for a deterministic Y curve.
std::vector<double> compute_U(const BSVIEProblem& problem, std::span<const double> Y, const TimeGrid& grid);
/// Per-path U (paths x nodes) from Monte Carlo Y.
Eigen::MatrixXd compute_U(const BSVIEProblem& problem, const YMonteCarlo& y, const PathBundle& paths);
/// U(x_a) as a path functional for Malliavin differentiation.
PathFunctional make_U_functional(const BSVIEProblem& problem, const YMonteCarlo& y, const TimeGrid& grid,
                                 std::size_t a);

struct ZKRow {
  std::size_t t_node = 0;
  ClarkOconeResult integrands;  // z, k per path for s > t
};

/// Z(t, s) = E_Q[D_s U(t) | F_s], K(t, s, zeta) = E_Q[D_{s,zeta} U(t) | F_s]
/// for the requested t rows (deterministic coefficients only). Deterministic
/// and state drivers make every term of U(t) a function of the state at its
/// own node, so a bump at s shifts all later terms alike and the derivatives
/// are suffix sums of per-node sensitivities; other drivers go through full
/// path re-evaluation.
std::vector<ZKRow> solve_zk(const BSVIEProblem& problem, const YMonteCarlo& y, const PathBundle& paths,
                            const GirsanovWeight& weights, std::span<const std::size_t> t_nodes,
                            const BasisSpec& basis);

/// Same rows through full re-evaluation of U(t) on bumped paths, for any driver.
std::vector<ZKRow> solve_zk_generic(const BSVIEProblem& problem, const YMonteCarlo& y, const PathBundle& paths,
                                    const GirsanovWeight& weights, std::span<const std::size_t> t_nodes,
                                    const BasisSpec& basis);

struct RepresentationReport {
  double rms = 0.0;          // U(t) - int Z dB_Q - int int K dN_Q~
  double rms_ci = 0.0;
  double rms_U = 0.0;
  double conditional_mean_rms = 0.0;  // regression estimate of E_Q[U(t)|F_t]
};

RepresentationReport verify_martingale_representation(const Eigen::VectorXd& U, const ZKRow& row,
                                                       const PathBundle& paths, const GirsanovWeight& weights,
                                                       const BSVIEProblem& problem, const BasisSpec& basis);

struct MSolutionReport {
  double equation_rms = 0.0;  // Q-form equation at t1 (the representation residual)
  double p_form_rms = 0.0;    // same identity with P-integrals dB, N~
  double literal_rms = 0.0;   // Y(t1) - E[Y(t1)|F_t2] - tail integrals from t2
  double literal_ci = 0.0;
};

/// Reports the three readings of the M-solution identity for t1 <= t2. By
/// adaptedness E[Y(t1)|F_t2] = Y(t1), so the literal residual reduces to the
/// tail stochastic integrals and vanishes only when Z, K do.
MSolutionReport verify_m_solution(const Eigen::VectorXd& U_t1, const ZKRow& row, const PathBundle& paths,
                                  const BSVIEProblem& problem, std::size_t t2_node);

/// Deterministic-problem M-solution residual: max_t |U(t)|.
double verify_m_solution_deterministic(const BSVIEProblem& problem, std::span<const double> Y,
                                       const TimeGrid& grid);

void write_y_csv(std::ostream& os, const TimeGrid& grid, std::span<const double> Y);
/// t,s,Z with Z the Q-mean over paths.
void write_z_csv(std::ostream& os, const TimeGrid& grid, const std::vector<ZKRow>& rows,
                 const GirsanovWeight& weights);
void write_k_csv(std::ostream& os, const TimeGrid& grid, const std::vector<ZKRow>& rows,
                 const GirsanovWeight& weights, const JumpSpec& jumps);

}  // namespace bsvie
