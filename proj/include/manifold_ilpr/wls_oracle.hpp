#ifndef MANIFOLD_ILPR_WLS_ORACLE_HPP
#define MANIFOLD_ILPR_WLS_ORACLE_HPP

// Reference solver for the local polynomial problem in f-coordinates,
//   min_beta sum_i K_h(X_i - x) || f(Y_i) - sum_r beta_r d_r(X_i - x) ||_F^2,
// solved one matrix entry at a time through the normal equations. It shares
// no code with the closed-form estimator and exists to check it.

#include <cmath>
#include <vector>

#include <Eigen/LU>

#include "manifold_ilpr/errors.hpp"
#include "manifold_ilpr/ilpr.hpp"
#include "manifold_ilpr/spd.hpp"

namespace milpr {

namespace detail {

/// Monomials of u up to `degree`, in the order (u^{(x)0}, u^{(x)1}, ...),
/// where entry (a_1, ..., a_j) of u^{(x)j} sits at index a_1 p^{j-1} + ... + a_j.
inline std::vector<double> monomial_row(const Vector& u, int degree) {
  std::vector<double> row{1.0};
  std::vector<double> prev{1.0};
  for (int j = 1; j <= degree; ++j) {
    std::vector<double> cur;
    cur.reserve(prev.size() * static_cast<std::size_t>(u.size()));
    for (Index a = 0; a < u.size(); ++a)
      for (double v : prev) cur.push_back(u(a) * v);
    row.insert(row.end(), cur.begin(), cur.end());
    prev = std::move(cur);
  }
  return row;
}

}  // namespace detail

/// Coefficient blocks beta_r (n x n, f-coordinates) in design-row order.
/// Kernel weights are scaled to unit mass and cfg.ridge adds ridge^2 to the
/// normal-equation diagonal; with ridge = 0 a singular system raises
/// NumericError.
inline std::vector<Matrix> wls_oracle(const Dataset& data, const Vector& x, const FitConfig& cfg,
                                      const EpmMetric& metric) {
  cfg.validate();
  if (x.size() != data.p()) throw DimensionError("wls_oracle: query dimension mismatch");
  const auto count = data.size();
  std::vector<std::vector<double>> rows;
  std::vector<double> w;
  std::vector<Matrix> f;
  for (std::size_t i = 0; i < count; ++i) {
    const Vector u = data[i].x - x;
    rows.push_back(detail::monomial_row(u, cfg.degree));
    w.push_back(std::exp(-u.squaredNorm() / (2.0 * cfg.bandwidth * cfg.bandwidth)));
    f.push_back(epm_forward(metric, data[i].y));
  }
  double mass = 0.0;
  for (double v : w) mass += v;
  if (!(mass >= kEmptyNeighborhoodMass)) throw EmptyNeighborhoodError("wls_oracle: no kernel weight at x");
  for (double& v : w) v /= mass;
  const Index q = static_cast<Index>(rows.front().size());
  Matrix normal = Matrix::Zero(q, q);
  for (std::size_t i = 0; i < count; ++i)
    for (Index a = 0; a < q; ++a)
      for (Index b = 0; b < q; ++b) normal(a, b) += w[i] * rows[i][a] * rows[i][b];
  normal.diagonal().array() += cfg.ridge * cfg.ridge;

  const Eigen::FullPivLU<Matrix> lu(normal);
  if (!lu.isInvertible()) throw NumericError("wls_oracle: singular normal equations");

  const Index n = data.n();
  std::vector<Matrix> beta(static_cast<std::size_t>(q), Matrix::Zero(n, n));
  Vector rhs(q);
  for (Index r = 0; r < n; ++r) {
    for (Index c = 0; c < n; ++c) {
      rhs.setZero();
      for (std::size_t i = 0; i < count; ++i)
        for (Index a = 0; a < q; ++a) rhs(a) += w[i] * rows[i][a] * f[i](r, c);
      const Vector sol = lu.solve(rhs);
      for (Index a = 0; a < q; ++a) beta[static_cast<std::size_t>(a)](r, c) = sol(a);
    }
  }
  return beta;
}

/// Weighted residual sum of squares of a coefficient set; used to spot-check
/// optimality of oracle solutions.
inline double wls_objective(const Dataset& data, const Vector& x, const FitConfig& cfg, const EpmMetric& metric,
                            const std::vector<Matrix>& beta) {
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Vector u = data[i].x - x;
    const auto row = detail::monomial_row(u, cfg.degree);
    Matrix fit = Matrix::Zero(data.n(), data.n());
    for (std::size_t a = 0; a < row.size(); ++a) fit += row[a] * beta[a];
    const double w = std::exp(-u.squaredNorm() / (2.0 * cfg.bandwidth * cfg.bandwidth));
    total += w * (epm_forward(metric, data[i].y) - fit).squaredNorm();
  }
  return total;
}

}  // namespace milpr

#endif  // MANIFOLD_ILPR_WLS_ORACLE_HPP
