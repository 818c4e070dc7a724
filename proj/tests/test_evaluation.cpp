#include "helpers.hpp"

using namespace fcapm;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("fit metrics match a longhand per-column computation", "[evaluation]") {
  Matrix obs = th::random_normal(15, kGridSize, 301);
  Matrix fitted = obs + th::random_normal(15, kGridSize, 302, 0.3);
  Vector w = trapezoid_weights(intraday_grid());
  FitMetrics m = fit_metrics(obs, fitted, w);

  double r2_sum = 0.0;
  for (int j = 0; j < kGridSize; ++j) {
    double mean = 0.0;
    for (int t = 0; t < 15; ++t) mean += obs(t, j);
    mean /= 15.0;
    double sst = 0.0, sse = 0.0;
    for (int t = 0; t < 15; ++t) {
      sst += (obs(t, j) - mean) * (obs(t, j) - mean);
      sse += (obs(t, j) - fitted(t, j)) * (obs(t, j) - fitted(t, j));
    }
    REQUIRE_THAT(m.rmse_curve[j], WithinAbs(std::sqrt(sse / 15.0), 1e-12));
    REQUIRE_THAT(m.r2_curve[j], WithinAbs(1.0 - sse / sst, 1e-12));
    r2_sum += 1.0 - sse / sst;
  }
  REQUIRE_THAT(m.r2_total, WithinAbs(r2_sum / kGridSize, 1e-12));
  REQUIRE_THAT(m.rmse_total, WithinAbs(trapz(w, m.rmse_curve), 1e-15));
  REQUIRE(m.n_excluded == 0);
  REQUIRE(m.warning.empty());

  // R^2 and RMSE are tied per column through the total variance
  for (int j = 0; j < kGridSize; ++j) {
    double mean = obs.col(j).mean();
    double sst = (obs.col(j).array() - mean).square().sum();
    double rmse_from_r2 = std::sqrt((1.0 - m.r2_curve[j]) * sst / 15.0);
    REQUIRE_THAT(m.rmse_curve[j], WithinAbs(rmse_from_r2, 1e-8));
  }
}

TEST_CASE("zero-variance columns are excluded with a warning", "[evaluation]") {
  Matrix obs = th::random_normal(10, kGridSize, 303);
  obs.col(0).setZero();  // anchored panels always have this column
  Matrix fitted = obs + th::random_normal(10, kGridSize, 304, 0.1);
  FitMetrics m = fit_metrics(obs, fitted, trapezoid_weights(intraday_grid()));
  REQUIRE(std::isnan(m.r2_curve[0]));
  REQUIRE(m.n_excluded == 1);
  REQUIRE_THAT(m.warning, ContainsSubstring("1 zero-variance column"));

  double r2_sum = 0.0;
  for (int j = 1; j < kGridSize; ++j) r2_sum += m.r2_curve[j];
  REQUIRE_THAT(m.r2_total, WithinAbs(r2_sum / (kGridSize - 1), 1e-12));

  Matrix f5 = th::random_normal(5, kGridSize, 306);
  REQUIRE_THROWS_WITH(fit_metrics(Matrix::Ones(5, kGridSize), f5, trapezoid_weights(intraday_grid())),
                      ContainsSubstring("zero variance"));
}

TEST_CASE("a perfect fit scores one and zero", "[evaluation]") {
  Matrix obs = th::random_normal(8, kGridSize, 305);
  FitMetrics m = fit_metrics(obs, obs, trapezoid_weights(intraday_grid()));
  REQUIRE_THAT(m.r2_total, WithinAbs(1.0, 1e-15));
  REQUIRE(m.rmse_total == 0.0);
}

TEST_CASE("fit metrics validate their inputs", "[evaluation]") {
  Matrix obs = th::random_normal(5, kGridSize, 306);
  REQUIRE_THROWS_AS(fit_metrics(obs, th::random_normal(4, kGridSize, 307), trapezoid_weights(intraday_grid())),
                    Error);
  REQUIRE_THROWS_AS(fit_metrics(Matrix(0, kGridSize), Matrix(0, kGridSize), trapezoid_weights(intraday_grid())),
                    Error);
  REQUIRE_THROWS_AS(fit_metrics(obs, obs, Vector::Ones(10)), Error);
}

TEST_CASE("student t tail probabilities match reference values", "[evaluation]") {
  // classical table entries: P(|T| > t) at the 5% and 1% points
  REQUIRE_THAT(student_t_p_two_sided(12.706, 1.0), WithinAbs(0.05, 2e-4));
  REQUIRE_THAT(student_t_p_two_sided(2.228, 10.0), WithinAbs(0.05, 2e-4));
  REQUIRE_THAT(student_t_p_two_sided(2.086, 20.0), WithinAbs(0.05, 2e-4));
  REQUIRE_THAT(student_t_p_two_sided(2.845, 20.0), WithinAbs(0.01, 1e-4));
  REQUIRE_THAT(student_t_p_two_sided(0.0, 7.0), WithinAbs(1.0, 1e-14));
  // large df approaches the normal tail
  REQUIRE_THAT(student_t_p_two_sided(1.959964, 1e6), WithinAbs(0.05, 1e-4));
  // symmetry in t
  REQUIRE_THAT(student_t_p_two_sided(-2.5, 9.0),
               WithinAbs(student_t_p_two_sided(2.5, 9.0), 1e-15));
  REQUIRE_THROWS_AS(student_t_p_two_sided(1.0, 0.0), Error);
}

TEST_CASE("stars use strict thresholds", "[evaluation]") {
  REQUIRE(significance_stars(0.0005) == "***");
  REQUIRE(significance_stars(0.001) == "**");
  REQUIRE(significance_stars(0.009) == "**");
  REQUIRE(significance_stars(0.01) == "*");
  REQUIRE(significance_stars(0.049) == "*");
  REQUIRE(significance_stars(0.05) == "");
  REQUIRE(significance_stars(0.9) == "");
}

TEST_CASE("welch t matches a longhand computation", "[evaluation]") {
  Vector a(6), b(8);
  a << 1.1, 2.3, 0.7, 1.9, 2.5, 1.4;
  b << 0.2, 0.9, -0.3, 0.5, 0.1, 0.8, -0.1, 0.4;
  TTestResult r = two_sample_t(a, b);

  double m1 = a.mean(), m2 = b.mean();
  double v1 = (a.array() - m1).square().sum() / 5.0;
  double v2 = (b.array() - m2).square().sum() / 7.0;
  double se2 = v1 / 6.0 + v2 / 8.0;
  double t = (m1 - m2) / std::sqrt(se2);
  double df = se2 * se2 / (v1 * v1 / (36.0 * 5.0) + v2 * v2 / (64.0 * 7.0));
  REQUIRE_THAT(r.t, WithinAbs(t, 1e-12));
  REQUIRE_THAT(r.df, WithinAbs(df, 1e-12));
  REQUIRE_THAT(r.p, WithinAbs(student_t_p_two_sided(t, df), 1e-15));
  REQUIRE(r.stars == significance_stars(r.p));
}

TEST_CASE("degenerate welch inputs are handled explicitly", "[evaluation]") {
  Vector a = Vector::Constant(4, 1.5), b = Vector::Constant(6, 1.5);
  TTestResult r = two_sample_t(a, b);
  REQUIRE(r.t == 0.0);
  REQUIRE(r.p == 1.0);
  REQUIRE(r.df == 8.0);
  REQUIRE(r.stars.empty());

  Vector c = Vector::Constant(6, 2.0);
  REQUIRE_THROWS_WITH(two_sample_t(a, c), ContainsSubstring("different means"));
  REQUIRE_THROWS_AS(two_sample_t(Vector::Ones(1), b), Error);

  // identical draws in both groups: t is exactly zero
  Vector d = th::random_normal(12, 1, 308).col(0);
  TTestResult same = two_sample_t(d, d);
  REQUIRE_THAT(same.t, WithinAbs(0.0, 1e-14));
  REQUIRE_THAT(same.p, WithinAbs(1.0, 1e-12));
}

TEST_CASE("sector report averages within sectors and then across them", "[evaluation]") {
  std::vector<StockMetric> rows = {
      {"A1", "Tech", {1.0, 2.0, 3.0, 4.0}},
      {"A2", "Tech", {3.0, 4.0, 5.0, 6.0}},
      {"B1", "Energy", {10.0, 20.0, 30.0, 40.0}},
      {"C1", "Retail", {0.0, 1.0, 2.0, 3.0}},
  };
  SectorTable t = sector_report(rows);
  REQUIRE(t.sectors == std::vector<std::string>{"Energy", "Retail", "Tech"});
  REQUIRE(t.values[2] == std::array<double, 4>{2.0, 3.0, 4.0, 5.0});
  REQUIRE(t.values[0] == std::array<double, 4>{10.0, 20.0, 30.0, 40.0});
  // Mean/Median rows summarize the three sector rows, not the stocks
  REQUIRE_THAT(t.mean_row[0], WithinAbs((10.0 + 0.0 + 2.0) / 3.0, 1e-12));
  REQUIRE_THAT(t.median_row[0], WithinAbs(2.0, 1e-12));
  REQUIRE_THAT(t.median_row[3], WithinAbs(5.0, 1e-12));

  std::string csv = t.to_csv();
  REQUIRE_THAT(csv, ContainsSubstring("sector,capm,fpcr,fplsr,pflm\n"));
  REQUIRE_THAT(csv, ContainsSubstring("Energy,10.000,20.000,30.000,40.000\n"));
  REQUIRE_THAT(csv, ContainsSubstring("Mean,4.000,8.000,12.000,16.000\n"));
  REQUIRE_THAT(csv, ContainsSubstring("Median,2.000,3.000,4.000,5.000\n"));

  REQUIRE_THROWS_WITH(sector_report({{"X", "", {1, 1, 1, 1}}}), ContainsSubstring("sector"));
  REQUIRE_THROWS_AS(sector_report({}), Error);
}

TEST_CASE("median handles odd and even lengths", "[evaluation]") {
  REQUIRE(median_of({3.0, 1.0, 2.0}) == 2.0);
  REQUIRE(median_of({4.0, 1.0, 2.0, 3.0}) == 2.5);
  REQUIRE(median_of({7.0}) == 7.0);
}
