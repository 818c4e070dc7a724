#include "helpers.hpp"

using namespace fcapm;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

// stacked design built longhand: one row per (day, grid point), entry
// [m*p+k] = gamma(t,m) * E(i,k); the reference for the Kronecker shortcuts
Matrix explicit_design(const BasisSystem& bs, const Matrix& gamma) {
  const int p = bs.n_basis;
  const Eigen::Index n = gamma.rows();
  Matrix Z(n * kGridSize, p * p);
  for (Eigen::Index t = 0; t < n; ++t)
    for (int i = 0; i < kGridSize; ++i)
      for (int m = 0; m < p; ++m)
        for (int k = 0; k < p; ++k)
          Z(t * kGridSize + i, m * p + k) = gamma(t, m) * bs.eval(i, k);
  return Z;
}

Vector stack_rows(const Matrix& y) {
  Vector v(y.size());
  for (Eigen::Index t = 0; t < y.rows(); ++t)
    for (Eigen::Index i = 0; i < y.cols(); ++i) v[t * y.cols() + i] = y(t, i);
  return v;
}

Vector vec_b(const Matrix& b) {
  const Eigen::Index p = b.rows();
  Vector v(p * p);
  for (Eigen::Index m = 0; m < p; ++m)
    for (Eigen::Index k = 0; k < p; ++k) v[m * p + k] = b(k, m);
  return v;
}

}  // namespace

TEST_CASE("kronecker product lays out scaled blocks", "[pflm]") {
  Matrix A(2, 2), B(2, 2);
  A << 1, 2, 3, 4;
  B << 0, 1, 1, 0;
  Matrix K = kron(A, B);
  REQUIRE(K.rows() == 4);
  Matrix want(4, 4);
  want << 0, 1, 0, 2,
          1, 0, 2, 0,
          0, 3, 0, 4,
          3, 0, 4, 0;
  REQUIRE(th::max_abs_diff(K, want) == 0.0);
}

TEST_CASE("bic follows the log formula", "[pflm]") {
  Matrix r = Matrix::Ones(2, 5);  // N = 10, SSR = 10
  REQUIRE_THAT(bic(r), WithinAbs(10.0 * std::log(10.0) + std::log(10.0), 1e-12));
  REQUIRE_THAT(bic(r), WithinAbs(25.328, 5e-4));

  Matrix r2 = th::random_normal(4, 7, 111);
  double c = 3.25;
  REQUIRE_THAT(bic(c * r2), WithinAbs(bic(r2) + double(r2.size()) * 2.0 * std::log(c), 1e-10));

  REQUIRE(bic(Matrix::Zero(3, 3)) == -std::numeric_limits<double>::infinity());
  REQUIRE_THROWS_AS(bic(Matrix(0, 0)), Error);
}

TEST_CASE("default smoothing grid spans 1e-6 to 1e4 in half decades", "[pflm]") {
  std::vector<double> g = default_kappa_grid();
  REQUIRE(g.size() == 21);
  REQUIRE_THAT(g.front(), WithinRel(1e-6, 1e-12));
  REQUIRE_THAT(g.back(), WithinRel(1e4, 1e-12));
  for (size_t i = 1; i < g.size(); ++i)
    REQUIRE_THAT(g[i] / g[i - 1], WithinRel(std::sqrt(10.0), 1e-10));
}

TEST_CASE("penalty annihilates bilinear surfaces and nothing more", "[pflm]") {
  BasisSystem bs = make_basis(10, 4);
  PenaltySpec ps = make_penalty(bs);
  REQUIRE(th::max_abs_diff(ps.penalty, ps.penalty.transpose()) < 1e-12);
  Eigen::SelfAdjointEigenSolver<Matrix> es(ps.penalty);
  REQUIRE(es.eigenvalues().minCoeff() > -1e-8 * es.eigenvalues().maxCoeff());

  Vector greville(10);
  for (int k = 0; k < 10; ++k)
    greville[k] =
        (bs.knots[size_t(k) + 1] + bs.knots[size_t(k) + 2] + bs.knots[size_t(k) + 3]) / 3.0;
  Vector ones = Vector::Ones(10);

  // a + b u + c v + d uv, here with a=0.7, b=-1.2, c=0.4, d=2.1 (u = predictor
  // = column index of b, v = response = row index)
  Matrix b = 0.7 * ones * ones.transpose() - 1.2 * ones * greville.transpose() +
             0.4 * greville * ones.transpose() + 2.1 * greville * greville.transpose();
  Vector v = vec_b(b);
  REQUIRE(std::abs(v.dot(ps.penalty * v)) < 1e-8);

  // u^2 has curvature energy exactly 4 once integrated over v
  Vector usq(kGridSize);
  for (int i = 0; i < kGridSize; ++i) usq[i] = bs.grid[i] * bs.grid[i];
  Vector c = fit_coefs_one(bs, usq);
  Matrix bu2 = Vector::Ones(10) * c.transpose();  // b(k,m) = c_m
  Vector v2 = vec_b(bu2);
  REQUIRE_THAT(v2.dot(ps.penalty * v2), WithinAbs(4.0, 1e-6));
}

TEST_CASE("kronecker shortcut equals the explicit stacked design", "[pflm]") {
  BasisSystem bs = make_basis(6, 3);
  Matrix xc = th::random_normal(5, 6, 112);
  Matrix y = th::random_normal(5, kGridSize, 113);

  Matrix gamma = pflm_gamma_tilde(bs, xc);
  Matrix Z = explicit_design(bs, gamma);
  REQUIRE(th::max_abs_diff(detail::pflm_normal_matrix(bs, gamma), Z.transpose() * Z) <
          1e-10);
  Vector rhs = detail::pflm_rhs(bs, gamma, y);
  REQUIRE((rhs - Z.transpose() * stack_rows(y)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("unpenalized fit equals stacked least squares", "[pflm]") {
  BasisSystem bs = make_basis(8, 4);
  Matrix xc = th::random_normal(40, 8, 114);
  Matrix y = th::random_normal(40, 8, 115) * bs.eval.transpose() +
             th::random_normal(40, kGridSize, 116, 0.2);

  PflmFit fit = fit_pflm(xc, y, bs, {0.0});
  REQUIRE(fit.kappa_star == 0.0);

  Matrix gamma = pflm_gamma_tilde(bs, xc);
  Matrix Z = explicit_design(bs, gamma);
  Vector beta = th::pinv(Z) * stack_rows(y);
  Matrix fitted_oracle(40, kGridSize);
  Vector fv = Z * beta;
  for (int t = 0; t < 40; ++t)
    for (int i = 0; i < kGridSize; ++i) fitted_oracle(t, i) = fv[t * kGridSize + i];
  REQUIRE(th::max_abs_diff(pflm_fitted_grid(fit, bs, xc), fitted_oracle) < 1e-6);
}

TEST_CASE("rank-deficient design at kappa zero asks for a floor", "[pflm]") {
  BasisSystem bs = make_basis(12, 4);
  Matrix xc = th::random_normal(30, 12, 117);
  xc.col(0).setZero();  // dead column, so the design cannot identify it
  Matrix y = th::random_normal(30, kGridSize, 118, 0.5);
  REQUIRE_THROWS_WITH(fit_pflm(xc, y, bs, {0.0}), ContainsSubstring("positive kappa"));
  // the advised floor succeeds on the same inputs
  PflmFit fit = fit_pflm(xc, y, bs, {1e-12});
  REQUIRE(fit.b.allFinite());
}

TEST_CASE("huge kappa collapses onto the bilinear null space", "[pflm]") {
  BasisSystem bs = make_basis(10, 4);
  Matrix xc = th::random_normal(35, 10, 119);
  Matrix y = th::random_normal(35, 10, 120) * bs.eval.transpose() +
             th::random_normal(35, kGridSize, 121, 0.3);

  // 1e8 is deep inside the limit; much larger kappas only add solver roundoff
  PflmFit fit = fit_pflm(xc, y, bs, {1e8});
  PenaltySpec ps = make_penalty(bs);
  Vector v = vec_b(fit.b);
  REQUIRE(v.dot(ps.penalty * v) < 1e-6);

  // oracle: least squares restricted to the bilinear span
  Vector greville(10);
  for (int k = 0; k < 10; ++k)
    greville[k] =
        (bs.knots[size_t(k) + 1] + bs.knots[size_t(k) + 2] + bs.knots[size_t(k) + 3]) / 3.0;
  Vector ones = Vector::Ones(10);
  Matrix gamma = pflm_gamma_tilde(bs, xc);
  Matrix Z = explicit_design(bs, gamma);
  Matrix bases[4] = {ones * ones.transpose(), ones * greville.transpose(),
                     greville * ones.transpose(), greville * greville.transpose()};
  Matrix D(Z.rows(), 4);
  for (int a = 0; a < 4; ++a) D.col(a) = Z * vec_b(bases[a]);
  Vector theta = th::pinv(D) * stack_rows(y);
  Vector fitted_oracle = D * theta;
  Vector fitted = stack_rows(pflm_fitted_grid(fit, bs, xc));
  REQUIRE((fitted - fitted_oracle).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("bic trace matches an independent recomputation", "[pflm]") {
  BasisSystem bs = make_basis(6, 3);
  Matrix xc = th::random_normal(12, 6, 122);
  Matrix y = th::random_normal(12, 6, 123) * bs.eval.transpose() +
             th::random_normal(12, kGridSize, 124, 0.4);
  std::vector<double> grid = {1e-6, 1e-2, 1.0, 1e2, 1e4};

  PflmFit fit = fit_pflm(xc, y, bs, grid);

  Matrix gamma = pflm_gamma_tilde(bs, xc);
  Matrix Z = explicit_design(bs, gamma);
  Matrix ZtZ = Z.transpose() * Z;
  Vector Zty = Z.transpose() * stack_rows(y);
  PenaltySpec ps = make_penalty(bs);
  const double N = double(y.size());

  int best = -1;
  double best_val = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < grid.size(); ++i) {
    Matrix M = ZtZ + 0.5 * grid[i] * ps.penalty;
    Eigen::FullPivLU<Matrix> lu(M);
    Vector b = lu.solve(Zty);
    double ssr = (stack_rows(y) - Z * b).squaredNorm();
    double df = lu.solve(ZtZ).trace();
    double crit = N * std::log(ssr) + std::log(N) * df;
    REQUIRE_THAT(fit.ssr[i], WithinRel(ssr, 1e-8));
    REQUIRE_THAT(fit.df[i], WithinRel(df, 1e-6));
    REQUIRE_THAT(fit.bic_sel[i], WithinRel(crit, 1e-9));
    if (crit < best_val) {
      best_val = crit;
      best = int(i);
    }
  }
  REQUIRE(fit.i_star == best);
  REQUIRE(fit.kappa_star == grid[size_t(best)]);

  // exported trace round-trips
  std::string csv = pflm_bic_trace_csv(fit);
  th::TempDir td("bic");
  write_text_file(td.file("trace.csv"), csv);
  CsvTable t = read_csv(td.file("trace.csv"));
  REQUIRE(t.header == std::vector<std::string>{"kappa", "bic"});
  REQUIRE(t.rows.size() == grid.size());
  for (size_t i = 0; i < grid.size(); ++i) {
    REQUIRE(parse_number(t.rows[i][0], "kappa") == fit.kappas[i]);
    REQUIRE(parse_number(t.rows[i][1], "bic") == fit.bic_sel[i]);
  }
}

TEST_CASE("smoothing path is monotone in the penalty and the residual", "[pflm]") {
  SimScenario sc;
  sc.surface = "smooth_coef";
  sc.n_days = 60;
  sc.noise_sigma = 0.5;
  sc.seed = 125;
  SimData d = simulate(sc);
  Matrix xc = fit_coefs(d.basis, d.x);

  PflmFit fit = fit_pflm(xc, d.ys[0], d.basis, default_kappa_grid());
  for (size_t i = 1; i < fit.kappas.size(); ++i) {
    REQUIRE(fit.penalty_value[i] <=
            fit.penalty_value[i - 1] + 1e-10 * (1.0 + std::abs(fit.penalty_value[i - 1])));
    REQUIRE(fit.ssr[i] >= fit.ssr[i - 1] - 1e-10 * (1.0 + std::abs(fit.ssr[i - 1])));
  }
  REQUIRE(fit.kappa_star == fit.kappas[size_t(fit.i_star)]);
  for (double c : fit.bic_sel) REQUIRE(fit.bic_sel[size_t(fit.i_star)] <= c);
}

TEST_CASE("selected solution is the strict minimum of the objective", "[pflm]") {
  BasisSystem bs = make_basis(10, 4);
  Matrix xc = th::random_normal(30, 10, 126);
  Matrix y = th::random_normal(30, 10, 127) * bs.eval.transpose() +
             th::random_normal(30, kGridSize, 128, 0.5);
  PflmFit fit = fit_pflm(xc, y, bs, {1.0});

  Matrix gamma = pflm_gamma_tilde(bs, xc);
  PenaltySpec ps = make_penalty(bs);
  auto objective = [&](const Matrix& b) {
    Matrix fitted = gamma * b.transpose() * bs.eval.transpose();
    Vector v = vec_b(b);
    return (y - fitted).squaredNorm() + 0.5 * fit.kappa_star * v.dot(ps.penalty * v);
  };
  double at_min = objective(fit.b);
  std::mt19937_64 gen(129);
  std::normal_distribution<double> dn(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    Matrix dir(10, 10);
    for (int i = 0; i < 10; ++i)
      for (int j = 0; j < 10; ++j) dir(i, j) = dn(gen);
    dir *= 1e-3 / dir.norm();
    REQUIRE(objective(fit.b + dir) > at_min);
  }
}

TEST_CASE("zero response is an exact fit with the sentinel criterion", "[pflm]") {
  BasisSystem bs = make_basis(8, 4);
  Matrix xc = th::random_normal(20, 8, 130);
  PflmFit fit = fit_pflm(xc, Matrix::Zero(20, kGridSize), bs, {1e-6, 1e-2});
  REQUIRE(fit.exact_fit);
  REQUIRE(fit.b.cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(fit.i_star == 0);
  REQUIRE(fit.bic_sel[0] == -std::numeric_limits<double>::infinity());
}

TEST_CASE("prediction agrees with the fitted panel and masks causality", "[pflm]") {
  BasisSystem bs = make_basis(10, 4);
  Matrix xc = th::random_normal(25, 10, 131);
  Matrix y = th::random_normal(25, 10, 132) * bs.eval.transpose();
  PflmFit fit = fit_pflm(xc, y, bs, {1e-4});

  Matrix fitted = pflm_fitted_grid(fit, bs, xc);
  Vector p3 = pflm_predict_grid(fit, bs, xc.row(3).transpose());
  REQUIRE((p3 - fitted.row(3).transpose()).cwiseAbs().maxCoeff() < 1e-10);

  PflmFit cfit = fit_pflm(xc, y, bs, {1e-4}, true);
  Matrix g = cfit.surface.grid_eval();
  for (int i = 0; i < kGridSize; ++i)
    for (int j = 0; j < i; ++j) REQUIRE(g(i, j) == 0.0);
  Vector pc = pflm_predict_grid(cfit, bs, xc.row(3).transpose());
  REQUIRE(pc.allFinite());
}

TEST_CASE("input shapes and grids are validated", "[pflm]") {
  BasisSystem bs = make_basis(8, 4);
  Matrix xc = th::random_normal(10, 8, 133);
  Matrix y = th::random_normal(10, kGridSize, 134);
  REQUIRE_THROWS_AS(fit_pflm(xc, y, bs, {}), Error);
  REQUIRE_THROWS_AS(fit_pflm(xc, y, bs, {-1.0}), Error);
  REQUIRE_THROWS_AS(fit_pflm(xc, th::random_normal(9, kGridSize, 135), bs, {1.0}), Error);
  REQUIRE_THROWS_AS(fit_pflm(xc, th::random_normal(10, 77, 136), bs, {1.0}), Error);
}
