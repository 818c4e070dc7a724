#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "fcapm/basis.hpp"
#include "fcapm/csv.hpp"
#include "fcapm/surface.hpp"

namespace fcapm {

inline Matrix kron(const Matrix& A, const Matrix& B) {
  Matrix out(A.rows() * B.rows(), A.cols() * B.cols());
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    for (Eigen::Index j = 0; j < A.cols(); ++j)
      out.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
  return out;
}

// Tensor-product roughness penalty on vec(b) with the response-basis index
// fastest: J(beta) = b' (G (x) P + P (x) G) b penalizes curvature in both
// directions, weighted by the mass of the other direction.
struct PenaltySpec {
  Matrix penalty;  // n_basis^2 x n_basis^2
};

inline PenaltySpec make_penalty(const BasisSystem& bs) {
  PenaltySpec ps;
  ps.penalty = kron(bs.gram, bs.penalty) + kron(bs.penalty, bs.gram);
  return ps;
}

// Raw BIC of a residual matrix: N ln(SSR) + ln N with N the number of scalar
// residuals. No complexity term, so it only ranks fits of equal complexity;
// smoothing selection uses the df-augmented variant inside fit_pflm. An exact
// fit (SSR == 0) returns -infinity as a sentinel.
inline double bic(const Matrix& residuals) {
  const double N = double(residuals.size());
  if (N < 1.0) fail("bic: empty residuals");
  double ssr = residuals.squaredNorm();
  if (ssr == 0.0) return -std::numeric_limits<double>::infinity();
  return N * std::log(ssr) + std::log(N);
}

// 21 log-spaced smoothing parameters, 1e-6 .. 1e4
inline std::vector<double> default_kappa_grid() {
  std::vector<double> g;
  for (int i = 0; i < 21; ++i) g.push_back(std::pow(10.0, -6.0 + 0.5 * i));
  return g;
}

// quadrature contraction of the basis against each day's smoothed predictor:
// gamma_tilde(t,m) = sum_i w_i B_m(u_i) x_t(u_i) = (E' W E a_t)_m
inline Matrix pflm_gamma_tilde(const BasisSystem& bs, const Matrix& x_coefs) {
  Matrix ewe = bs.eval.transpose() * bs.quad_w.asDiagonal() * bs.eval;
  return x_coefs * ewe;  // ewe is symmetric
}

struct PflmFit {
  Matrix b;  // n_basis x n_basis; rows index the response basis, columns the predictor basis
  double kappa_star = 0.0;
  int i_star = 0;
  bool exact_fit = false;  // some kappa reached SSR == 0 (BIC sentinel -inf)
  // per-kappa traces, aligned with `kappas`
  std::vector<double> kappas, ssr, penalty_value, df, bic_sel;
  BetaSurface surface;
};

namespace detail {

// normal matrix of the stacked design via the Kronecker identity:
// sum_{t,i} (g_t (x) pi_i)(g_t (x) pi_i)' = (G~'G~) (x) (E'E)
inline Matrix pflm_normal_matrix(const BasisSystem& bs, const Matrix& gamma) {
  return kron(gamma.transpose() * gamma, bs.eval.transpose() * bs.eval);
}

inline Vector pflm_rhs(const BasisSystem& bs, const Matrix& gamma, const Matrix& y_grid) {
  const int p = bs.n_basis;
  Matrix R = bs.eval.transpose() * y_grid.transpose() * gamma;  // p x p, (k, m)
  Vector rhs(p * p);
  for (int m = 0; m < p; ++m)
    for (int k = 0; k < p; ++k) rhs[m * p + k] = R(k, m);
  return rhs;
}

}  // namespace detail

// Penalized function-on-function fit. The response side is the raw grid
// panel (not pre-smoothed); the predictor side enters through gamma_tilde.
// Each kappa solves (A + kappa/2 * Pen) vec(b) = rhs; kappa is selected by
// minimizing N ln(SSR) + ln(N) * df(kappa), df the trace of the hat matrix.
// (The df-free form N ln SSR + ln N is monotone in SSR, hence in kappa, and
// would always pick the grid minimum; see bic() for that reduced form.)
inline PflmFit fit_pflm(const Matrix& x_coefs, const Matrix& y_grid, const BasisSystem& bs,
                        const std::vector<double>& kappa_grid, bool causal = false) {
  const Eigen::Index n = x_coefs.rows();
  const int p = bs.n_basis;
  if (y_grid.rows() != n) fail("fit_pflm: predictor/response day counts differ");
  if (y_grid.cols() != kGridSize) fail("fit_pflm: response panel must have 78 columns");
  if (kappa_grid.empty()) fail("fit_pflm: empty kappa grid");
  for (double k : kappa_grid)
    if (k < 0.0) fail("fit_pflm: negative kappa");

  Matrix gamma = pflm_gamma_tilde(bs, x_coefs);
  Matrix A = detail::pflm_normal_matrix(bs, gamma);
  Vector rhs = detail::pflm_rhs(bs, gamma, y_grid);
  PenaltySpec pen = make_penalty(bs);
  const double N = double(n) * kGridSize;
  const double rhs_norm = rhs.norm();
  const double a_norm = A.norm(), pen_norm = pen.penalty.norm();

  PflmFit fit;
  double best = std::numeric_limits<double>::infinity();
  bool have_best = false;
  Matrix b_best;
  for (double kappa : kappa_grid) {
    Matrix M = A + (kappa / 2.0) * pen.penalty;
    Eigen::LDLT<Matrix> ldlt(M);
    Vector vecb = ldlt.solve(rhs);
    // residual judged on the backward-stable scale ||M||*||b|| + ||rhs||,
    // so an ill-conditioned but solvable large-kappa system is not rejected;
    // a rank-deficient unpenalized system is consistent (rhs lies in the
    // design range) and leaves no residual, so kappa = 0 also checks rcond
    bool singular = ldlt.info() != Eigen::Success || !vecb.allFinite();
    if (!singular) {
      double scale = (a_norm + 0.5 * kappa * pen_norm) * vecb.norm() + rhs_norm;
      singular = (M * vecb - rhs).norm() > 1e-8 * std::max(1.0, scale);
    }
    if (!singular && kappa == 0.0) singular = ldlt.rcond() < 1e-13;
    if (singular) {
      if (kappa == 0.0)
        fail("fit_pflm: singular system at kappa = 0 with a rank-deficient design; "
             "use a positive kappa floor (e.g. 1e-12)");
      fail("fit_pflm: singular penalized system at kappa = " + std::to_string(kappa));
    }
    Matrix b(p, p);
    for (int m = 0; m < p; ++m)
      for (int k = 0; k < p; ++k) b(k, m) = vecb[m * p + k];

    Matrix fitted = gamma * b.transpose() * bs.eval.transpose();
    double ssr = (y_grid - fitted).squaredNorm();
    double jval = vecb.dot(pen.penalty * vecb);
    double df = ldlt.solve(A).trace();
    double crit;
    if (ssr == 0.0) {
      crit = -std::numeric_limits<double>::infinity();
      fit.exact_fit = true;
    } else {
      crit = N * std::log(ssr) + std::log(N) * df;
    }
    fit.kappas.push_back(kappa);
    fit.ssr.push_back(ssr);
    fit.penalty_value.push_back(jval);
    fit.df.push_back(df);
    fit.bic_sel.push_back(crit);
    if (!have_best || crit < best) {
      best = crit;
      have_best = true;
      fit.i_star = int(fit.kappas.size()) - 1;
      fit.kappa_star = kappa;
      b_best = b;
    }
  }
  fit.b = b_best;
  fit.surface.coef = b_best.transpose();  // (u,v) indexing: predictor rows, response cols
  fit.surface.basis = bs;
  fit.surface.causal = causal;
  return fit;
}

inline Vector pflm_predict_grid(const PflmFit& fit, const BasisSystem& bs,
                                const Vector& x_coef) {
  if (fit.surface.causal) return predict_on_grid(fit.surface, x_coef);
  Matrix ewe = bs.eval.transpose() * bs.quad_w.asDiagonal() * bs.eval;
  Vector gamma = ewe * x_coef;
  return bs.eval * (fit.b * gamma);
}

inline Matrix pflm_fitted_grid(const PflmFit& fit, const BasisSystem& bs,
                               const Matrix& x_coefs) {
  Matrix gamma = pflm_gamma_tilde(bs, x_coefs);
  return gamma * fit.b.transpose() * bs.eval.transpose();
}

// bic_trace rows as CSV: kappa,bic
inline std::string pflm_bic_trace_csv(const PflmFit& fit) {
  std::string out = "kappa,bic\n";
  for (size_t i = 0; i < fit.kappas.size(); ++i)
    out += fmt_g17(fit.kappas[i]) + "," + fmt_g17(fit.bic_sel[i]) + "\n";
  return out;
}

}  // namespace fcapm
