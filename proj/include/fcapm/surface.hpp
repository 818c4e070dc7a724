#pragma once

#include "fcapm/basis.hpp"

namespace fcapm {

// Bivariate coefficient surface beta(u,v) = B(u)' coef B(v) in the tensor
// B-spline basis; u indexes the predictor (market) time, v the response
// time. With `causal` set the surface is read as zero above the diagonal
// (u > v), so predictions at v only integrate market history up to v.
struct BetaSurface {
  Matrix coef;  // n_basis x n_basis
  BasisSystem basis;
  bool causal = false;

  double operator()(double u, double v) const {
    if (causal && u > v) return 0.0;
    Vector bu = basis.eval_at(u);
    Vector bv = basis.eval_at(v);
    return bu.dot(coef * bv);
  }

  // dense 78x78 evaluation; rows are u, columns are v
  Matrix grid_eval() const {
    Matrix g = basis.eval * coef * basis.eval.transpose();
    if (causal) {
      for (int i = 0; i < kGridSize; ++i)
        for (int j = 0; j < i; ++j) g(i, j) = 0.0;
    }
    return g;
  }
};

// Quadrature contraction of the surface against a predictor curve given by
// its coefficient vector: yhat(v_j) = sum_i w_i beta(u_i, v_j) x(u_i). In
// causal mode the weights are masked above the diagonal.
inline Vector predict_on_grid(const BetaSurface& s, const Vector& x_coef) {
  if (x_coef.size() != s.basis.n_basis) fail("predict_on_grid: coefficient size mismatch");
  Vector x_grid = s.basis.eval * x_coef;
  Matrix beta = s.basis.eval * s.coef * s.basis.eval.transpose();
  const Vector& w = s.basis.quad_w;
  Vector out(kGridSize);
  for (int j = 0; j < kGridSize; ++j) {
    double acc = 0.0;
    int imax = s.causal ? j : kGridSize - 1;
    for (int i = 0; i <= imax; ++i) acc += w[i] * beta(i, j) * x_grid[i];
    out[j] = acc;
  }
  return out;
}

// same contraction, projected back onto the basis as a coefficient vector
inline Vector predict_coefs(const BetaSurface& s, const Vector& x_coef) {
  return fit_coefs_one(s.basis, predict_on_grid(s, x_coef));
}

}  // namespace fcapm
