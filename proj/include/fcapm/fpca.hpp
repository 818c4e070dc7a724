#pragma once

#include <algorithm>
#include <cmath>

#include "fcapm/basis.hpp"

namespace fcapm {

// Functional PCA of a coefficient panel under the basis Gram geometry.
// The Gram-weighted eigenproblem G^{1/2} Sigma G^{1/2} keeps the problem
// symmetric; eigenvectors map back through G^{-1/2} so the eigenfunctions
// are orthonormal in the L2 inner product.
struct EigenSystem {
  Vector eigenvalues;  // all of them, descending, clamped at zero
  Matrix coefs;        // n_basis x n_components, retained eigenfunction coefficients
  int n_components = 0;
  double explained = 0.0;  // cumulative variance share at n_components
};

struct FpcaResult {
  EigenSystem eig;
  Matrix scores;      // n_days x n_components, centered-curve projections
  Vector mean_coefs;  // training mean coefficient vector
};

// threshold: cumulative-variance cutoff in (0,1]; at least one component is
// always retained. force_k > 0 overrides the threshold (capped at the count
// of numerically positive eigenvalues).
inline FpcaResult fpca(const Matrix& coefs, const Matrix& gram, double threshold = 0.95,
                       int force_k = 0) {
  const Eigen::Index n = coefs.rows(), p = coefs.cols();
  if (n < 1) fail("fpca: empty panel");
  if (!(threshold > 0.0 && threshold <= 1.0)) fail("fpca: threshold must be in (0,1]");

  FpcaResult out;
  out.mean_coefs = coefs.colwise().mean().transpose();
  Matrix centered = coefs.rowwise() - out.mean_coefs.transpose();
  // covariance with divisor n, matching the sample-covariance convention used
  // for the eigenvalue/variance identities
  Matrix sigma = centered.transpose() * centered / double(n);

  GramSqrt gs = gram_sqrt(gram);
  Matrix T = gs.sqrt * sigma * gs.sqrt;
  T = 0.5 * (T + T.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(T);
  if (es.info() != Eigen::Success) fail("fpca: eigendecomposition failed");

  // Eigen returns ascending order; flip to descending
  Vector ev = es.eigenvalues().reverse();
  Matrix W = es.eigenvectors().rowwise().reverse();

  double total = ev.sum();
  if (!(total > 0.0)) fail("fpca: zero total variance");
  if (ev.minCoeff() < -1e-10 * std::max(1.0, ev.maxCoeff()))
    fail("fpca: covariance produced a significantly negative eigenvalue");
  for (Eigen::Index i = 0; i < ev.size(); ++i) ev[i] = std::max(ev[i], 0.0);

  // numerically positive: roundoff-scale trailing eigenvalues do not count
  int positive = 0;
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    if (ev[i] > 1e-12 * ev[0]) ++positive;

  int k = 0;
  if (force_k > 0) {
    k = std::min({force_k, int(p), std::max(positive, 1)});
  } else {
    double cum = 0.0;
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
      cum += ev[i];
      ++k;
      if (cum >= threshold * total * (1.0 - 1e-12)) break;
    }
  }
  k = std::max(k, 1);

  Matrix phi = gs.inv_sqrt * W.leftCols(k);
  // sign convention: largest-magnitude coefficient entry positive
  for (int j = 0; j < k; ++j) {
    Eigen::Index imax = 0;
    phi.col(j).cwiseAbs().maxCoeff(&imax);
    if (phi(imax, j) < 0.0) phi.col(j) = -phi.col(j);
  }

  out.eig.eigenvalues = ev;
  out.eig.coefs = phi;
  out.eig.n_components = k;
  out.eig.explained = ev.head(k).sum() / total;
  out.scores = centered * gram * phi;
  return out;
}

// coefficient panel from scores: mean + scores * eigenfunction coefs'
inline Matrix reconstruct(const EigenSystem& eig, const Matrix& scores,
                          const Vector& mean_coefs) {
  if (scores.cols() != eig.coefs.cols())
    fail("reconstruct: score width does not match retained components");
  Matrix out = scores * eig.coefs.transpose();
  out.rowwise() += mean_coefs.transpose();
  return out;
}

}  // namespace fcapm
