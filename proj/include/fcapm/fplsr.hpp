#pragma once

#include <vector>

#include "fcapm/basis.hpp"
#include "fcapm/surface.hpp"

namespace fcapm {

// Functional PLS: both coefficient panels are pushed through the Gram square
// root so that Euclidean inner products in the transformed space equal L2
// inner products of the curves, then multivariate NIPALS runs on the
// transformed blocks. The surface comes back through the inverse roots:
// beta = G^{-1/2} Omega G^{-1/2}.
struct PlsModel {
  int n_components = 0;  // actually extracted (may stop early on rank exhaustion)
  Matrix omega;          // p x p regression matrix in the transformed space
  Vector x_mean, y_mean; // transformed-space training means
  GramSqrt gs;
  BetaSurface surface;
};

namespace detail {

struct NipalsLoadings {
  Matrix W, P, Q;  // p x h each
  int extracted = 0;
};

// multivariate NIPALS with predictor-block deflation; X and Y must be centered
inline NipalsLoadings nipals(Matrix X, Matrix Y, int max_components) {
  const Eigen::Index p = X.cols();
  NipalsLoadings L;
  L.W.resize(p, max_components);
  L.P.resize(p, max_components);
  L.Q.resize(p, max_components);
  const double x_scale = X.norm(), y_scale = Y.norm();
  for (int h = 0; h < max_components; ++h) {
    if ((X.transpose() * Y).norm() < 1e-12 * std::max(1e-300, x_scale * y_scale)) break;
    // start from the response column with the largest norm
    Eigen::Index jstart = 0;
    Y.colwise().squaredNorm().maxCoeff(&jstart);
    Vector u = Y.col(jstart);
    Vector t = Vector::Zero(X.rows());
    Vector w(p);
    for (int iter = 0; iter < 500; ++iter) {
      w = X.transpose() * u;
      double wn = w.norm();
      if (!(wn > 0.0)) break;
      w /= wn;
      Vector t_new = X * w;
      Vector c = Y.transpose() * t_new / t_new.squaredNorm();
      u = Y * c / c.squaredNorm();
      if ((t_new - t).norm() <= 1e-13 * std::max(1.0, t_new.norm())) {
        t = t_new;
        break;
      }
      t = t_new;
    }
    double tt = t.squaredNorm();
    if (!(tt > 1e-28 * std::max(1.0, x_scale * x_scale))) break;
    Vector pl = X.transpose() * t / tt;
    Vector q = Y.transpose() * t / tt;
    X.noalias() -= t * pl.transpose();
    Y.noalias() -= t * q.transpose();
    L.W.col(h) = w;
    L.P.col(h) = pl;
    L.Q.col(h) = q;
    ++L.extracted;
  }
  L.W.conservativeResize(p, L.extracted);
  L.P.conservativeResize(p, L.extracted);
  L.Q.conservativeResize(p, L.extracted);
  return L;
}

// regression matrix from the first k loading columns
inline Matrix nipals_omega(const NipalsLoadings& L, int k) {
  if (k <= 0 || L.extracted == 0) return Matrix::Zero(L.W.rows(), L.W.rows());
  k = std::min(k, L.extracted);
  Matrix Wk = L.W.leftCols(k), Pk = L.P.leftCols(k), Qk = L.Q.leftCols(k);
  return Wk * (Pk.transpose() * Wk).partialPivLu().solve(Qk.transpose());
}

}  // namespace detail

inline PlsModel fit_fplsr(const Matrix& x_coefs, const Matrix& y_coefs,
                          const BasisSystem& bs, int n_components, bool causal = false) {
  const Eigen::Index n = x_coefs.rows(), p = x_coefs.cols();
  if (y_coefs.rows() != n) fail("fit_fplsr: predictor/response day counts differ");
  if (n_components < 1) fail("fit_fplsr: need at least one component");
  if (n_components > int(p) || n_components > int(n))
    fail("fit_fplsr: n_components (" + std::to_string(n_components) +
         ") exceeds the limit min(n_basis=" + std::to_string(p) +
         ", n_days=" + std::to_string(n) + ")");

  PlsModel m;
  m.gs = gram_sqrt(bs.gram);
  Matrix X = x_coefs * m.gs.sqrt;
  Matrix Y = y_coefs * m.gs.sqrt;
  m.x_mean = X.colwise().mean().transpose();
  m.y_mean = Y.colwise().mean().transpose();
  X.rowwise() -= m.x_mean.transpose();
  Y.rowwise() -= m.y_mean.transpose();

  detail::NipalsLoadings L = detail::nipals(X, Y, n_components);
  m.n_components = L.extracted;
  m.omega = detail::nipals_omega(L, L.extracted);
  m.surface.coef = m.gs.inv_sqrt * m.omega * m.gs.inv_sqrt;
  m.surface.basis = bs;
  m.surface.causal = causal;
  return m;
}

inline Vector fplsr_predict_coefs(const PlsModel& m, const Vector& x_coef) {
  if (m.surface.causal) {
    Vector x_mean_raw = m.gs.inv_sqrt * m.x_mean;
    Vector y_mean_raw = m.gs.inv_sqrt * m.y_mean;
    return y_mean_raw + predict_coefs(m.surface, x_coef - x_mean_raw);
  }
  Vector xt = m.gs.sqrt * x_coef - m.x_mean;
  Vector yt = m.y_mean + m.omega.transpose() * xt;
  return m.gs.inv_sqrt * yt;
}

inline Matrix fplsr_fitted_coefs(const PlsModel& m, const Matrix& x_coefs) {
  Matrix X = x_coefs * m.gs.sqrt;
  X.rowwise() -= m.x_mean.transpose();
  Matrix Yt = X * m.omega;
  Yt.rowwise() += m.y_mean.transpose();
  return Yt * m.gs.inv_sqrt;
}

// Component count by K-fold cross-validation on contiguous day blocks
// (time-series data, so folds are not shuffled). Score is the mean integrated
// squared prediction error; ties resolve toward fewer components at 1e-8
// relative tolerance, and the floor is one component.
inline int select_components(const Matrix& x_coefs, const Matrix& y_coefs,
                             const BasisSystem& bs, int max_components,
                             int n_folds = 5) {
  const int n = int(x_coefs.rows());
  if (n_folds < 2) fail("select_components: need at least 2 folds");
  if (n < n_folds) fail("select_components: fewer days than folds");
  max_components = std::min({max_components, int(x_coefs.cols()), n - n / n_folds});
  if (max_components < 1) fail("select_components: no admissible component count");

  GramSqrt gs = gram_sqrt(bs.gram);
  std::vector<double> total_ispe(size_t(max_components) + 1, 0.0);
  for (int f = 0; f < n_folds; ++f) {
    int lo = f * n / n_folds, hi = (f + 1) * n / n_folds;
    int n_train = n - (hi - lo);
    Matrix Xtr(n_train, x_coefs.cols()), Ytr(n_train, y_coefs.cols());
    int r = 0;
    for (int i = 0; i < n; ++i) {
      if (i >= lo && i < hi) continue;
      Xtr.row(r) = x_coefs.row(i);
      Ytr.row(r) = y_coefs.row(i);
      ++r;
    }
    Matrix X = Xtr * gs.sqrt, Y = Ytr * gs.sqrt;
    Vector xm = X.colwise().mean().transpose(), ym = Y.colwise().mean().transpose();
    X.rowwise() -= xm.transpose();
    Y.rowwise() -= ym.transpose();
    detail::NipalsLoadings L = detail::nipals(X, Y, max_components);
    for (int k = 1; k <= max_components; ++k) {
      Matrix omega = detail::nipals_omega(L, k);
      for (int i = lo; i < hi; ++i) {
        Vector xt = gs.sqrt * x_coefs.row(i).transpose() - xm;
        Vector zhat = gs.inv_sqrt * (ym + omega.transpose() * xt);
        Vector diff = zhat - y_coefs.row(i).transpose();
        total_ispe[size_t(k)] += diff.dot(bs.gram * diff);
      }
    }
  }
  int best = 1;
  for (int k = 2; k <= max_components; ++k)
    if (total_ispe[size_t(k)] < total_ispe[size_t(best)]) best = k;
  double tol = 1e-8 * (1.0 + total_ispe[size_t(best)]);
  for (int k = 1; k < best; ++k)
    if (total_ispe[size_t(k)] <= total_ispe[size_t(best)] + tol) return k;
  return best;
}

}  // namespace fcapm
