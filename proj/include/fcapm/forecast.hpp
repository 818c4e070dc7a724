#pragma once

#include <functional>
#include <limits>
#include <vector>

#include "fcapm/capm.hpp"
#include "fcapm/evaluation.hpp"
#include "fcapm/fpcr.hpp"
#include "fcapm/fplsr.hpp"
#include "fcapm/pflm.hpp"

namespace fcapm {

enum class Method { capm, fpcr, fplsr, pflm, zero };

inline const char* method_name(Method m) {
  switch (m) {
    case Method::capm: return "capm";
    case Method::fpcr: return "fpcr";
    case Method::fplsr: return "fplsr";
    case Method::pflm: return "pflm";
    case Method::zero: return "zero";
  }
  fail("method_name: bad method");
}

inline Method method_from_string(const std::string& s) {
  for (Method m : {Method::capm, Method::fpcr, Method::fplsr, Method::pflm, Method::zero})
    if (s == method_name(m)) return m;
  fail("unknown method '" + s + "' (want capm, fpcr, fplsr, pflm or zero)");
}

struct MethodConfig {
  double fpca_threshold = 0.95;
  int fpca_force_k = 0;       // >0 overrides the threshold on both sides
  int pls_components = 0;     // 0 selects by cross-validation
  int pls_max_components = 10;
  int pls_folds = 5;
  std::vector<double> kappa_grid = default_kappa_grid();
  bool causal = false;
};

// Fit one estimator on training panels of grid curves and return a closure
// mapping a new predictor grid curve to a predicted response grid curve.
// The classical CAPM trains on the 16:00 scalar of each curve and predicts a
// flat curve (broadcast reporting convention); it cannot represent intraday
// shape. "zero" always predicts the zero curve.
inline std::function<Vector(const Vector&)> make_predictor(
    Method method, const MethodConfig& cfg, const BasisSystem& bs,
    const Matrix& x_train, const Matrix& y_train) {
  if (x_train.rows() != y_train.rows()) fail("make_predictor: day count mismatch");
  switch (method) {
    case Method::zero:
      return [](const Vector&) { return Vector::Zero(kGridSize); };
    case Method::capm: {
      Vector x_end = x_train.col(kGridSize - 1);
      Vector y_end = y_train.col(kGridSize - 1);
      CapmFit f = fit_capm(y_end, x_end);
      return [f](const Vector& x_curve) {
        double pred = f.alpha + f.beta * x_curve[kGridSize - 1];
        return Vector::Constant(kGridSize, pred).eval();
      };
    }
    case Method::fpcr: {
      Matrix xc = fit_coefs(bs, x_train), yc = fit_coefs(bs, y_train);
      FpcaResult xf = fpca(xc, bs.gram, cfg.fpca_threshold, cfg.fpca_force_k);
      FpcaResult yf = fpca(yc, bs.gram, cfg.fpca_threshold, cfg.fpca_force_k);
      FpcrModel m = fit_fpcr(xf, yf, bs, cfg.causal);
      return [m, bs](const Vector& x_curve) {
        Vector a = fit_coefs_one(bs, x_curve);
        return (bs.eval * fpcr_predict_coefs(m, bs, a)).eval();
      };
    }
    case Method::fplsr: {
      Matrix xc = fit_coefs(bs, x_train), yc = fit_coefs(bs, y_train);
      int k = cfg.pls_components;
      if (k <= 0) k = select_components(xc, yc, bs, cfg.pls_max_components, cfg.pls_folds);
      PlsModel m = fit_fplsr(xc, yc, bs, k, cfg.causal);
      return [m, bs](const Vector& x_curve) {
        Vector a = fit_coefs_one(bs, x_curve);
        return (bs.eval * fplsr_predict_coefs(m, a)).eval();
      };
    }
    case Method::pflm: {
      Matrix xc = fit_coefs(bs, x_train);
      PflmFit m = fit_pflm(xc, y_train, bs, cfg.kappa_grid, cfg.causal);
      return [m, bs](const Vector& x_curve) {
        Vector a = fit_coefs_one(bs, x_curve);
        return pflm_predict_grid(m, bs, a);
      };
    }
  }
  fail("make_predictor: bad method");
}

// in-sample fitted panel, used by the fit command's goodness-of-fit tables
inline Matrix fit_in_sample(Method method, const MethodConfig& cfg, const BasisSystem& bs,
                            const Matrix& x_panel, const Matrix& y_panel) {
  if (method == Method::fpcr && !cfg.causal) {
    Matrix xc = fit_coefs(bs, x_panel), yc = fit_coefs(bs, y_panel);
    FpcaResult xf = fpca(xc, bs.gram, cfg.fpca_threshold, cfg.fpca_force_k);
    FpcaResult yf = fpca(yc, bs.gram, cfg.fpca_threshold, cfg.fpca_force_k);
    FpcrModel m = fit_fpcr(xf, yf, bs, false);
    return fpcr_fitted_coefs(m) * bs.eval.transpose();
  }
  if (method == Method::fplsr && !cfg.causal) {
    Matrix xc = fit_coefs(bs, x_panel), yc = fit_coefs(bs, y_panel);
    int k = cfg.pls_components;
    if (k <= 0) k = select_components(xc, yc, bs, cfg.pls_max_components, cfg.pls_folds);
    PlsModel m = fit_fplsr(xc, yc, bs, k, false);
    return fplsr_fitted_coefs(m, xc) * bs.eval.transpose();
  }
  if (method == Method::pflm && !cfg.causal) {
    Matrix xc = fit_coefs(bs, x_panel);
    PflmFit m = fit_pflm(xc, y_panel, bs, cfg.kappa_grid, false);
    return pflm_fitted_grid(m, bs, xc);
  }
  auto predictor = make_predictor(method, cfg, bs, x_panel, y_panel);
  Matrix fitted(y_panel.rows(), kGridSize);
  for (Eigen::Index t = 0; t < x_panel.rows(); ++t)
    fitted.row(t) = predictor(x_panel.row(t).transpose()).transpose();
  return fitted;
}

// ---------- expanding-window protocol ----------

struct ForecastOutcome {
  Vector rmspe_curve;        // sqrt of mean squared prediction error per grid point
  double rmspe_total = 0.0;  // quadrature over [0,1]
  int n_failed = 0;          // windows whose fit threw; skipped, not fatal
  Matrix predicted;          // n_test x 78, NaN rows for failed windows
  Matrix realized;           // n_test x 78
  std::vector<int> test_days;
};

// Fit on days 0..z-1, predict day z from its realized predictor curve, then
// grow the window by one day; test days are n_train..n_days-1.
inline ForecastOutcome expanding_window(const Matrix& x, const Matrix& y,
                                        const BasisSystem& bs, Method method,
                                        const MethodConfig& cfg, int n_train) {
  const int n = int(x.rows());
  if (y.rows() != n) fail("expanding_window: day count mismatch");
  if (n_train < 1 || n_train >= n)
    fail("expanding_window: n_train must be in [1, n_days-1]");
  const int n_test = n - n_train;

  ForecastOutcome out;
  out.predicted = Matrix::Constant(n_test, kGridSize, std::numeric_limits<double>::quiet_NaN());
  out.realized.resize(n_test, kGridSize);
  Vector sq_sum = Vector::Zero(kGridSize);
  int n_ok = 0;
  for (int z = n_train; z < n; ++z) {
    int r = z - n_train;
    out.test_days.push_back(z);
    out.realized.row(r) = y.row(z);
    try {
      auto predictor = make_predictor(method, cfg, bs, x.topRows(z), y.topRows(z));
      Vector pred = predictor(x.row(z).transpose());
      out.predicted.row(r) = pred.transpose();
      sq_sum += (pred - y.row(z).transpose()).array().square().matrix();
      ++n_ok;
    } catch (const Error&) {
      ++out.n_failed;
    }
  }
  if (n_ok == 0) fail("expanding_window: every window failed");
  out.rmspe_curve = (sq_sum / double(n_ok)).cwiseSqrt();
  out.rmspe_total = trapz(bs.quad_w, out.rmspe_curve);
  return out;
}

}  // namespace fcapm
