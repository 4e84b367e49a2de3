#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bsvie/regression.hpp"
#include "bsvie/stochastics.hpp"

namespace bsvie {

struct PathFunctional {
  std::function<double(const PathView&)> eval;
  std::string description;

  double operator()(const PathView& path) const { return eval(path); }
};

/// Central-difference step cbrt(DBL_EPSILON) * max(1, sqrt(dt)), rounded down
/// to a power of two so that bumps of O(1) path values are exact.
double fd_step(double dt);

// Grid convention: a node s_j (j >= 1) stands for the Brownian increment on
// (s_{j-1}, s_j]. Derivatives at s_j therefore see 1_{s_j <= T} exactly.

/// dF / d(increment on interval k) by central differences; eps <= 0 selects fd_step.
double brownian_malliavin_fd_interval(const PathFunctional& F, const PathView& path, std::size_t k,
                                      double eps = 0.0);
/// D_s F at a grid node s > 0.
double brownian_malliavin_fd(const PathFunctional& F, const PathView& path, double s, double eps = 0.0);

/// F(path + jump (s, zeta)) - F(path).
double jump_difference(const PathFunctional& F, const PathView& path, double s, double zeta);

struct ClarkOconeOptions {
  BasisSpec basis;
  std::size_t from_node = 0;  // integrands for s > nodes[from_node]
  double eps = 0.0;
};

struct ClarkOconeResult {
  Estimate mean;                   // E_Q[F]
  Eigen::VectorXd values;          // F per path
  Eigen::MatrixXd z;               // paths x nodes; column j is the integrand on (s_{j-1}, s_j]
  std::vector<Eigen::MatrixXd> k;  // per mark, same layout; jump inserted at s_j
  std::vector<std::size_t> degree_used;  // per node
  std::vector<std::string> warnings;
};

/// Regression state at node i: (B(s_i), N(s_i)); N is dropped without jumps.
Eigen::MatrixXd regression_state(const PathBundle& paths, std::size_t node, bool include_jump_count);

/// Deterministic-coefficient Clark-Ocone integrands under Q:
/// z(s) = E_Q[D_s F | F_s], k(s, zeta) = E_Q[D_{s,zeta} F | F_s], estimated by
/// least squares weighted with M(T_max) on the state at the left end of each
/// increment. Columns up to from_node copy the first computed column.
ClarkOconeResult clark_ocone_integrands(const PathFunctional& F, const PathBundle& paths,
                                        const GirsanovWeight& weights, const ClarkOconeOptions& opts = {});

/// The conditioning half of clark_ocone_integrands for derivatives computed
/// elsewhere: raw_z(p, j) is D F for the increment ending at s_j, raw_k[m](p, j)
/// the difference for a mark-m jump inserted at s_j.
ClarkOconeResult condition_integrands(Eigen::VectorXd values, const Eigen::MatrixXd& raw_z,
                                      const std::vector<Eigen::MatrixXd>& raw_k, const PathBundle& paths,
                                      const GirsanovWeight& weights, const ClarkOconeOptions& opts);

/// Per-path F - E_Q[F] - sum z dB_Q - sum k dN_Q~ over (s_from, T_max], where
/// q_paths carries dB_Q increments and the Q-compensator.
Eigen::VectorXd representation_residual(const Eigen::VectorXd& values, double mean, const Eigen::MatrixXd& z,
                                        const std::vector<Eigen::MatrixXd>& k, const PathBundle& q_paths,
                                        std::size_t from_node);

/// Closed form D_s M(t) = M(t) xi(s) 1_{s <= t}, with xi read at the left end
/// of the increment ending at s to match the discrete density.
Eigen::VectorXd density_malliavin(const GirsanovModel& model, const GirsanovWeight& weights, const TimeGrid& grid,
                                  double s, double t);

// Random-coefficient plumbing. Unused unless callers supply the derivative
// fields; no default inference.

struct RandomCoefficientFields {
  /// D_s xi(r) along a path.
  std::function<double(double s, double r, const PathView&)> D_xi;
  /// D_{s,zeta} beta(r, zeta') along a path.
  std::function<double(double s, double zeta, double r, double zeta2, const PathView&)> D_beta;
};

/// D_s U - U * int_s^inf D_s xi(r) dB_Q(r), before conditioning.
double general_z_integrand(double DsU, double U, const RandomCoefficientFields& fields, double s,
                           const PathView& q_path);

/// H~_s. The Q-compensator of the N~_Q term cancels the (1 + beta) nu dr term,
/// leaving exp(int int D beta nu dr + sum_jumps ln(1 - D beta / (1 + beta))).
double h_tilde(const RandomCoefficientFields& fields, const JumpSpec& jumps, double s, double zeta,
               const PathView& path, std::size_t quadrature_points = 64);

/// U (H~ - 1) + H~ D_{s,zeta} U, before conditioning.
double general_k_integrand(double U, double DszU, double Htilde);

}  // namespace bsvie
