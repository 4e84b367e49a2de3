#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace bsvie {

/// Polynomial basis on the regression state: all monomials of total degree
/// <= degree in the standardized state variables.
struct BasisSpec {
  std::size_t degree = 2;
  bool include_jump_count = true;
};

struct RegressionResult {
  Eigen::VectorXd fitted;        // per-sample conditional-expectation estimate
  Eigen::VectorXd coefficients;  // in the standardized monomial basis
  std::size_t degree_used = 0;
  std::size_t n_features = 0;
  std::vector<std::string> warnings;
};

/// Fixed standardization + monomial exponents; evaluates the basis at new
/// states so a fit can be reused on perturbed paths.
class PolynomialBasis {
 public:
  PolynomialBasis() = default;
  /// Columns with (near) zero spread are dropped.
  PolynomialBasis(const Eigen::MatrixXd& states, std::size_t degree);

  std::size_t size() const { return exponents_.size(); }
  std::size_t degree() const { return degree_; }
  Eigen::MatrixXd design(const Eigen::MatrixXd& states) const;
  double evaluate(const Eigen::VectorXd& coefficients, std::span<const double> state) const;

 private:
  std::size_t degree_ = 0;
  std::vector<Eigen::Index> active_;
  std::vector<double> mean_;
  std::vector<double> scale_;
  std::vector<std::vector<int>> exponents_;
};

struct RegressionFit {
  PolynomialBasis basis;
  RegressionResult result;

  double predict(std::span<const double> state) const { return basis.evaluate(result.coefficients, state); }
};

/// Weighted least squares of y on the polynomial basis of `states` (n x d).
/// Rank deficiency lowers the degree with a warning; failure at degree 0
/// raises regression-singular.
RegressionFit weighted_regression(const Eigen::MatrixXd& states, const Eigen::VectorXd& y,
                                  const Eigen::VectorXd& weights, std::size_t degree);

}  // namespace bsvie
