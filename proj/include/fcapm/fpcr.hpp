#pragma once

#include "fcapm/fpca.hpp"
#include "fcapm/surface.hpp"

namespace fcapm {

// Functional principal component regression: OLS of response scores on
// predictor scores, with the surface assembled from the two eigenbases.
struct FpcrModel {
  FpcaResult x;       // predictor-side FPCA (scores, eigensystem, mean)
  FpcaResult y;       // response side
  Matrix beta;        // M x K score-space coefficients
  BetaSurface surface;
};

inline FpcrModel fit_fpcr(const FpcaResult& xf, const FpcaResult& yf,
                          const BasisSystem& bs, bool causal = false) {
  if (xf.scores.rows() != yf.scores.rows())
    fail("fit_fpcr: predictor/response day counts differ");
  FpcrModel m;
  m.x = xf;
  m.y = yf;
  Matrix dtd = xf.scores.transpose() * xf.scores;
  Eigen::SelfAdjointEigenSolver<Matrix> es(dtd);
  double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || hi / lo > 1e12)
    fail("fit_fpcr: singular score cross-product (condition number " +
         std::to_string(lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity()) + ")");
  m.beta = dtd.ldlt().solve(xf.scores.transpose() * yf.scores);
  m.surface.coef = xf.eig.coefs * m.beta * yf.eig.coefs.transpose();
  m.surface.basis = bs;
  m.surface.causal = causal;
  return m;
}

// Score-space prediction for one predictor curve given by its coefficient
// vector. Centering by the training means is restored on the way out. In
// causal mode the surface contraction replaces the exact score route.
inline Vector fpcr_predict_coefs(const FpcrModel& m, const BasisSystem& bs,
                                 const Vector& x_coef) {
  if (m.surface.causal) {
    Vector centered = x_coef - m.x.mean_coefs;
    return m.y.mean_coefs + predict_coefs(m.surface, centered);
  }
  Vector d = m.x.eig.coefs.transpose() * bs.gram * (x_coef - m.x.mean_coefs);
  Vector c = m.beta.transpose() * d;
  return m.y.mean_coefs + m.y.eig.coefs * c;
}

// in-sample fitted coefficient panel (one row per training day)
inline Matrix fpcr_fitted_coefs(const FpcrModel& m) {
  Matrix fitted_scores = m.x.scores * m.beta;
  return reconstruct(m.y.eig, fitted_scores, m.y.mean_coefs);
}

}  // namespace fcapm
