#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "fcapm/grid.hpp"

namespace fcapm {

// Gauss-Legendre nodes/weights on [-1,1]; exact for polynomials of degree
// 2n-1. Newton iteration on the Legendre recurrence.
inline std::pair<Vector, Vector> gauss_legendre(int n) {
  if (n < 1) fail("gauss_legendre: need n >= 1");
  constexpr double pi = 3.14159265358979323846;
  Vector x(n), w(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p1 = 1.0, p2 = 0.0;
      for (int j = 0; j < n; ++j) {
        double p3 = p2;
        p2 = p1;
        p1 = ((2.0 * j + 1.0) * z * p2 - j * p3) / (j + 1.0);
      }
      dp = n * (z * p1 - p2) / (z * z - 1.0);
      double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-15) break;
    }
    x[i] = -z;
    x[n - 1 - i] = z;
    w[i] = w[n - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
  }
  return {x, w};
}

// All n_basis B-spline values (or deriv-th derivatives) at u over a clamped
// knot vector. Cox-de Boor bottom-up, then the derivative recurrence lifts
// the remaining orders. The last interval is right-closed so the basis sums
// to one at the domain end too.
inline Vector bspline_all(const std::vector<double>& t, int n_basis, int order,
                          double u, int deriv = 0) {
  const int K = int(t.size());  // n_basis + order
  if (deriv < 0) fail("bspline_all: negative derivative");
  if (deriv >= order) return Vector::Zero(n_basis);
  if (u < t.front()) u = t.front();
  if (u > t.back()) u = t.back();

  // order-1 indicators; count K-1
  std::vector<double> v(size_t(K - 1), 0.0);
  if (u >= t[size_t(K - 1)]) {
    for (int k = K - 2; k >= 0; --k)
      if (t[size_t(k)] < t[size_t(k + 1)]) {
        v[size_t(k)] = 1.0;
        break;
      }
  } else {
    for (int k = 0; k < K - 1; ++k)
      if (t[size_t(k)] <= u && u < t[size_t(k + 1)]) {
        v[size_t(k)] = 1.0;
        break;
      }
  }

  const int m0 = order - deriv;  // plain recursion up to this order
  for (int m = 2; m <= m0; ++m) {
    for (int k = 0; k < K - m; ++k) {
      double a = 0.0, b = 0.0;
      double d1 = t[size_t(k + m - 1)] - t[size_t(k)];
      if (d1 > 0.0) a = (u - t[size_t(k)]) / d1 * v[size_t(k)];
      double d2 = t[size_t(k + m)] - t[size_t(k + 1)];
      if (d2 > 0.0) b = (t[size_t(k + m)] - u) / d2 * v[size_t(k + 1)];
      v[size_t(k)] = a + b;
    }
  }
  for (int m = m0 + 1; m <= order; ++m) {
    for (int k = 0; k < K - m; ++k) {
      double a = 0.0, b = 0.0;
      double d1 = t[size_t(k + m - 1)] - t[size_t(k)];
      if (d1 > 0.0) a = v[size_t(k)] / d1;
      double d2 = t[size_t(k + m)] - t[size_t(k + 1)];
      if (d2 > 0.0) b = v[size_t(k + 1)] / d2;
      v[size_t(k)] = (m - 1) * (a - b);
    }
  }

  Vector out(n_basis);
  for (int k = 0; k < n_basis; ++k) out[k] = v[size_t(k)];
  return out;
}

// B-spline system on [0,1]: clamped uniform knots, evaluation matrix on the
// 78-point grid, exact Gram and second-derivative penalty via per-span
// Gauss-Legendre with `order` points (enough for products of the splines).
struct BasisSystem {
  int n_basis = 20;
  int order = 4;
  std::vector<double> knots;
  Vector grid;     // 78 abscissae on [0,1]
  Vector quad_w;   // trapezoid weights on the grid
  Matrix eval;     // 78 x n_basis
  Matrix gram;     // integral of B_k B_l
  Matrix penalty;  // integral of B_k'' B_l''

  Vector eval_at(double u, int deriv = 0) const {
    return bspline_all(knots, n_basis, order, u, deriv);
  }
};

inline BasisSystem make_basis(int n_basis = 20, int order = 4) {
  if (order < 1) fail("make_basis: order must be >= 1");
  if (n_basis < order)
    fail("make_basis: n_basis (" + std::to_string(n_basis) +
         ") must be >= order (" + std::to_string(order) + ")");
  BasisSystem bs;
  bs.n_basis = n_basis;
  bs.order = order;

  int interior = n_basis - order;
  bs.knots.assign(size_t(order), 0.0);
  for (int i = 1; i <= interior; ++i)
    bs.knots.push_back(double(i) / (interior + 1));
  bs.knots.insert(bs.knots.end(), size_t(order), 1.0);

  bs.grid = intraday_grid();
  bs.quad_w = trapezoid_weights(bs.grid);

  bs.eval.resize(kGridSize, n_basis);
  for (int i = 0; i < kGridSize; ++i)
    bs.eval.row(i) = bs.eval_at(bs.grid[i]).transpose();

  auto [gx, gw] = gauss_legendre(order);
  bs.gram = Matrix::Zero(n_basis, n_basis);
  bs.penalty = Matrix::Zero(n_basis, n_basis);
  for (size_t s = 0; s + 1 < bs.knots.size(); ++s) {
    double a = bs.knots[s], b = bs.knots[s + 1];
    if (!(b > a)) continue;
    for (int q = 0; q < order; ++q) {
      double u = 0.5 * (a + b) + 0.5 * (b - a) * gx[q];
      double w = 0.5 * (b - a) * gw[q];
      Vector v0 = bs.eval_at(u, 0);
      bs.gram.noalias() += w * v0 * v0.transpose();
      Vector v2 = bs.eval_at(u, 2);
      bs.penalty.noalias() += w * v2 * v2.transpose();
    }
  }
  return bs;
}

// least-squares projection of grid curves onto the basis; rows are days
inline Matrix fit_coefs(const BasisSystem& bs, const Matrix& curves) {
  if (curves.cols() != kGridSize) fail("fit_coefs: curves must have 78 columns");
  Eigen::ColPivHouseholderQR<Matrix> qr(bs.eval);
  if (qr.rank() < bs.n_basis)
    fail("fit_coefs: basis evaluation matrix is rank-deficient; use fewer basis functions");
  return qr.solve(curves.transpose()).transpose();
}

inline Vector fit_coefs_one(const BasisSystem& bs, const Vector& curve) {
  Matrix m = curve.transpose();
  return fit_coefs(bs, m).row(0).transpose();
}

// Symmetric square root and inverse root of the Gram matrix. Eigenvalues are
// clamped at 1e-12 before the roots so the pair stays mutual inverses even
// when the Gram is barely positive.
struct GramSqrt {
  Matrix sqrt;
  Matrix inv_sqrt;
};

inline GramSqrt gram_sqrt(const Matrix& gram) {
  if (gram.rows() != gram.cols()) fail("gram_sqrt: matrix must be square");
  Eigen::SelfAdjointEigenSolver<Matrix> es(gram);
  if (es.info() != Eigen::Success) fail("gram_sqrt: eigendecomposition failed");
  Vector ev = es.eigenvalues();
  if (ev.minCoeff() < -1e-8)
    fail("gram_sqrt: matrix is not positive semidefinite (min eigenvalue " +
         std::to_string(ev.minCoeff()) + ")");
  Vector root(ev.size()), inv_root(ev.size());
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    double lam = std::max(ev[i], 1e-12);
    root[i] = std::sqrt(lam);
    inv_root[i] = 1.0 / root[i];
  }
  const Matrix& V = es.eigenvectors();
  GramSqrt out;
  out.sqrt = V * root.asDiagonal() * V.transpose();
  out.inv_sqrt = V * inv_root.asDiagonal() * V.transpose();
  return out;
}

}  // namespace fcapm
