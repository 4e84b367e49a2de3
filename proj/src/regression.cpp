#include "bsvie/regression.hpp"

#include <cmath>
#include <functional>
#include <string>

#include "bsvie/error.hpp"

namespace bsvie {

namespace {

void enumerate_exponents(std::size_t dims, std::size_t degree, std::vector<std::vector<int>>& out) {
  // Graded order: total degree 0, 1, ..., degree; lexicographic within a degree.
  std::vector<int> current(dims, 0);
  for (std::size_t total = 0; total <= degree; ++total) {
    std::function<void(std::size_t, int)> rec = [&](std::size_t dim, int left) {
      if (dim + 1 == dims || dims == 0) {
        if (dims > 0) current[dim] = left;
        if (dims > 0 || left == 0) out.push_back(current);
        return;
      }
      for (int e = left; e >= 0; --e) {
        current[dim] = e;
        rec(dim + 1, left - e);
      }
    };
    rec(0, static_cast<int>(total));
  }
}

}  // namespace

PolynomialBasis::PolynomialBasis(const Eigen::MatrixXd& states, std::size_t degree) : degree_(degree) {
  const double n = static_cast<double>(states.rows());
  for (Eigen::Index c = 0; c < states.cols(); ++c) {
    const double mean = states.col(c).mean();
    const double var = (states.col(c).array() - mean).square().sum() / std::max(1.0, n);
    const double sd = std::sqrt(var);
    if (sd > 1e-12 * (1.0 + std::abs(mean))) {
      active_.push_back(c);
      mean_.push_back(mean);
      scale_.push_back(sd);
    }
  }
  enumerate_exponents(active_.size(), active_.empty() ? 0 : degree, exponents_);
}

Eigen::MatrixXd PolynomialBasis::design(const Eigen::MatrixXd& states) const {
  Eigen::MatrixXd X(states.rows(), static_cast<Eigen::Index>(exponents_.size()));
  std::vector<double> z(active_.size());
  for (Eigen::Index r = 0; r < states.rows(); ++r) {
    for (std::size_t a = 0; a < active_.size(); ++a) z[a] = (states(r, active_[a]) - mean_[a]) / scale_[a];
    for (std::size_t f = 0; f < exponents_.size(); ++f) {
      double v = 1.0;
      for (std::size_t a = 0; a < active_.size(); ++a)
        for (int e = 0; e < exponents_[f][a]; ++e) v *= z[a];
      X(r, static_cast<Eigen::Index>(f)) = v;
    }
  }
  return X;
}

double PolynomialBasis::evaluate(const Eigen::VectorXd& coefficients, std::span<const double> state) const {
  double acc = 0.0;
  for (std::size_t f = 0; f < exponents_.size(); ++f) {
    double v = coefficients(static_cast<Eigen::Index>(f));
    for (std::size_t a = 0; a < active_.size(); ++a) {
      const double z = (state[static_cast<std::size_t>(active_[a])] - mean_[a]) / scale_[a];
      for (int e = 0; e < exponents_[f][a]; ++e) v *= z;
    }
    acc += v;
  }
  return acc;
}

RegressionFit weighted_regression(const Eigen::MatrixXd& states, const Eigen::VectorXd& y,
                                  const Eigen::VectorXd& weights, std::size_t degree) {
  require(states.rows() == y.size() && y.size() == weights.size(), "regression: size mismatch");
  require(y.size() > 0, "regression: no samples");
  if (!y.allFinite()) fail(ErrorKind::numeric_error, "regression: non-finite response");
  if ((weights.array() < 0.0).any() || !weights.allFinite())
    fail(ErrorKind::numeric_error, "regression: weights must be finite and >= 0");

  RegressionFit fit;
  const Eigen::ArrayXd sw = weights.array().sqrt();
  for (std::size_t d = degree + 1; d-- > 0;) {
    PolynomialBasis basis(states, d);
    const Eigen::MatrixXd X = basis.design(states);
    if (X.rows() >= X.cols()) {
      const Eigen::MatrixXd A = X.array().colwise() * sw;
      const Eigen::VectorXd b = (y.array() * sw).matrix();
      Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
      qr.setThreshold(1e-10);
      if (qr.rank() == A.cols()) {
        fit.basis = std::move(basis);
        fit.result.coefficients = qr.solve(b);
        fit.result.fitted = X * fit.result.coefficients;
        fit.result.degree_used = d;
        fit.result.n_features = static_cast<std::size_t>(X.cols());
        return fit;
      }
    }
    if (d == 0) break;
    fit.result.warnings.push_back("regression-singular: rank deficient at degree " + std::to_string(d) +
                                  ", falling back to degree " + std::to_string(d - 1));
  }
  fail(ErrorKind::regression_singular, "regression: design matrix rank deficient at degree 0");
}

}  // namespace bsvie
