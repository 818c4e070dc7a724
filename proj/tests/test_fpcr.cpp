#include "helpers.hpp"

using namespace fcapm;
using Catch::Matchers::ContainsSubstring;

TEST_CASE("regressing a panel on itself gives the identity in score space", "[fpcr]") {
  BasisSystem bs = make_basis(20, 4);
  Matrix coefs = th::random_normal(50, 20, 71);
  FpcaResult f = fpca(coefs, bs.gram, 0.95);
  FpcrModel m = fit_fpcr(f, f, bs);
  REQUIRE(th::max_abs_diff(m.beta, Matrix::Identity(m.beta.rows(), m.beta.cols())) < 1e-8);
}

TEST_CASE("zero response scores give the zero surface", "[fpcr]") {
  BasisSystem bs = make_basis(20, 4);
  Matrix coefs = th::random_normal(40, 20, 72);
  FpcaResult xf = fpca(coefs, bs.gram, 0.95);
  FpcaResult yf = xf;
  yf.scores.setZero();
  FpcrModel m = fit_fpcr(xf, yf, bs);
  REQUIRE(m.beta.cwiseAbs().maxCoeff() < 1e-12);
  REQUIRE(m.surface.coef.cwiseAbs().maxCoeff() < 1e-12);
  REQUIRE(predict_on_grid(m.surface, th::random_normal(20, 1, 73)).cwiseAbs().maxCoeff() <
          1e-12);
}

TEST_CASE("full-threshold fit equals centered least squares", "[fpcr]") {
  BasisSystem bs = make_basis(20, 4);
  Matrix xc = th::random_normal(60, 20, 74);
  Matrix yc = 0.8 * xc * th::random_normal(20, 20, 75) + th::random_normal(60, 20, 76, 0.3);

  FpcaResult xf = fpca(xc, bs.gram, 1.0);
  FpcaResult yf = fpca(yc, bs.gram, 1.0);
  FpcrModel m = fit_fpcr(xf, yf, bs);
  Matrix fitted = fpcr_fitted_coefs(m);
  REQUIRE(th::max_abs_diff(fitted, th::centered_ols_fitted(xc, yc)) < 1e-6);

  // residual scores orthogonal to predictor scores
  Matrix resid_scores = yf.scores - xf.scores * m.beta;
  double scale = std::max(1.0, xf.scores.cwiseAbs().maxCoeff());
  REQUIRE((xf.scores.transpose() * resid_scores).cwiseAbs().maxCoeff() < 1e-8 * scale * 60);
}

TEST_CASE("in-sample prediction matches the fitted panel row", "[fpcr]") {
  SimScenario sc;
  sc.surface = "smooth_coef";
  sc.n_days = 80;
  sc.seed = 7;
  SimData d = simulate(sc);
  const BasisSystem& bs = d.basis;

  Matrix xc = fit_coefs(bs, d.x), yc = fit_coefs(bs, d.ys[0]);
  FpcrModel m = fit_fpcr(fpca(xc, bs.gram, 1.0), fpca(yc, bs.gram, 1.0), bs);
  Matrix fitted = fpcr_fitted_coefs(m);

  Vector p10 = fpcr_predict_coefs(m, bs, xc.row(10).transpose());
  REQUIRE((p10 - fitted.row(10).transpose()).cwiseAbs().maxCoeff() < 1e-10);

  // noiseless linear truth: fitted curves reproduce the simulated responses
  REQUIRE(th::max_abs_diff(fitted * bs.eval.transpose(), d.ys[0]) < 1e-6);
}

TEST_CASE("planted smooth surface is recovered from noiseless data", "[fpcr]") {
  SimScenario sc;
  sc.surface = "sin_cos";
  sc.n_days = 250;
  sc.seed = 9;
  // the anchor would zero the response at v=0 where the planted surface is
  // nonzero; recovery needs the data to embody the closed form exactly
  sc.anchor = false;
  SimData d = simulate(sc);
  const BasisSystem& bs = d.basis;

  Matrix xc = fit_coefs(bs, d.x), yc = fit_coefs(bs, d.ys[0]);
  FpcrModel m = fit_fpcr(fpca(xc, bs.gram, 1.0), fpca(yc, bs.gram, 1.0), bs);
  double err = surface_error(m.surface.grid_eval(), d.beta_grid, bs.quad_w);
  REQUIRE(err < 0.05);
}

TEST_CASE("singular score cross-products are rejected with a condition number", "[fpcr]") {
  BasisSystem bs = make_basis(20, 4);
  Matrix coefs = th::random_normal(30, 20, 77);
  FpcaResult xf = fpca(coefs, bs.gram, 0.95, 3);
  xf.scores.col(2) = xf.scores.col(1);  // exactly collinear
  FpcaResult yf = fpca(coefs, bs.gram, 0.95, 3);
  REQUIRE_THROWS_WITH(fit_fpcr(xf, yf, bs), ContainsSubstring("condition"));
  REQUIRE_THROWS_AS(fit_fpcr(fpca(coefs, bs.gram, 0.95),
                             fpca(th::random_normal(29, 20, 78), bs.gram, 0.95), bs),
                    Error);
}

TEST_CASE("masked and unmasked quadrature agree on a causal surface", "[fpcr]") {
  SimScenario sc;
  sc.surface = "triangular_coef";
  SimData d = simulate(sc);
  const BasisSystem& bs = d.basis;

  BetaSurface plain;
  plain.coef = Matrix::Zero(20, 20);
  plain.coef(1, 18) = 1.0;  // u-support ends before the v-support begins
  plain.basis = bs;
  plain.causal = false;
  BetaSurface masked = plain;
  masked.causal = true;

  // the planted grid really is upper-triangular
  for (int i = 0; i < kGridSize; ++i)
    for (int j = 0; j < i; ++j) REQUIRE(d.beta_grid(i, j) == 0.0);

  Vector x_coef = th::random_normal(20, 1, 79);
  Vector a = predict_on_grid(plain, x_coef);
  Vector b = predict_on_grid(masked, x_coef);
  REQUIRE((a - b).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("causal surfaces evaluate to zero above the diagonal", "[fpcr]") {
  BasisSystem bs = make_basis(20, 4);
  BetaSurface s;
  s.coef = th::random_normal(20, 20, 80);
  s.basis = bs;
  s.causal = true;
  REQUIRE(s(0.9, 0.2) == 0.0);
  REQUIRE(s(0.2, 0.9) != 0.0);
  Matrix g = s.grid_eval();
  for (int i = 0; i < kGridSize; ++i)
    for (int j = 0; j < i; ++j) REQUIRE(g(i, j) == 0.0);
  // diagonal and above follow the bilinear form
  BetaSurface open = s;
  open.causal = false;
  Matrix go = open.grid_eval();
  for (int i = 0; i < kGridSize; ++i)
    for (int j = i; j < kGridSize; ++j) REQUIRE(g(i, j) == go(i, j));
}

TEST_CASE("causal estimation leaves no mass below the diagonal", "[fpcr]") {
  SimScenario sc;
  sc.surface = "triangular_coef";
  sc.n_days = 60;
  sc.seed = 81;
  SimData d = simulate(sc);
  const BasisSystem& bs = d.basis;

  Matrix xc = fit_coefs(bs, d.x), yc = fit_coefs(bs, d.ys[0]);
  FpcrModel m = fit_fpcr(fpca(xc, bs.gram, 1.0), fpca(yc, bs.gram, 1.0), bs, false);
  Matrix g = m.surface.grid_eval();
  double top = g.cwiseAbs().maxCoeff();
  double below = 0.0;
  for (int i = 0; i < kGridSize; ++i)
    for (int j = 0; j < i; ++j) below = std::max(below, std::abs(g(i, j)));
  REQUIRE(below < 1e-6 * top);
}

TEST_CASE("surface evaluation agrees between coefficient representations", "[fpcr]") {
  BasisSystem bs = make_basis(20, 4);
  Matrix xc = th::random_normal(60, 20, 82);
  Matrix yc = xc * th::random_normal(20, 20, 83);
  FpcaResult xf = fpca(xc, bs.gram, 1.0), yf = fpca(yc, bs.gram, 1.0);
  FpcrModel m = fit_fpcr(xf, yf, bs);

  for (double u : {0.1, 0.4, 0.9})
    for (double v : {0.2, 0.5, 0.8}) {
      double via_surface = m.surface(u, v);
      Vector left = xf.eig.coefs.transpose() * bs.eval_at(u);
      Vector right = yf.eig.coefs.transpose() * bs.eval_at(v);
      double via_eigen = left.dot(m.beta * right);
      REQUIRE(std::abs(via_surface - via_eigen) < 1e-8);
    }
}
