#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "fcapm/csv.hpp"
#include "fcapm/grid.hpp"

namespace fcapm {

// ---------- goodness of fit ----------

// Pointwise R^2(v) and RMSE(v) across days, plus scalar reductions:
// r2_total is the plain mean over grid points (zero-variance columns are
// excluded and counted; the 09:30 anchor column always lands here), while
// rmse_total integrates the curve over [0,1] by quadrature. Applied to
// (realized, predicted) forecast pairs the rmse fields are the RMSPE.
struct FitMetrics {
  Vector r2_curve;    // NaN where SST == 0
  Vector rmse_curve;
  double r2_total = 0.0;
  double rmse_total = 0.0;
  int n_excluded = 0;
  std::string warning;
};

inline FitMetrics fit_metrics(const Matrix& observed, const Matrix& fitted,
                              const Vector& quad_w) {
  if (observed.rows() != fitted.rows() || observed.cols() != fitted.cols())
    fail("fit_metrics: observed/fitted shape mismatch");
  if (observed.rows() < 1) fail("fit_metrics: empty panel");
  if (quad_w.size() != observed.cols()) fail("fit_metrics: weight size mismatch");
  const Eigen::Index n = observed.rows(), g = observed.cols();

  FitMetrics m;
  m.r2_curve.resize(g);
  m.rmse_curve.resize(g);
  double r2_sum = 0.0;
  int r2_count = 0;
  for (Eigen::Index j = 0; j < g; ++j) {
    double mean = observed.col(j).mean();
    double sst = (observed.col(j).array() - mean).square().sum();
    double sse = (observed.col(j) - fitted.col(j)).squaredNorm();
    m.rmse_curve[j] = std::sqrt(sse / double(n));
    if (sst > 0.0) {
      m.r2_curve[j] = 1.0 - sse / sst;
      r2_sum += m.r2_curve[j];
      ++r2_count;
    } else {
      m.r2_curve[j] = std::numeric_limits<double>::quiet_NaN();
      ++m.n_excluded;
    }
  }
  if (r2_count == 0) fail("fit_metrics: every column has zero variance");
  m.r2_total = r2_sum / r2_count;
  m.rmse_total = trapz(quad_w, m.rmse_curve);
  if (m.n_excluded > 0)
    m.warning = std::to_string(m.n_excluded) +
                " zero-variance column(s) excluded from the R^2 mean";
  return m;
}

// ---------- Welch two-sample t ----------

namespace detail {

inline double betacf(double a, double b, double x) {
  const int maxit = 300;
  const double eps = 3e-14, fpmin = 1e-300;
  double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0, d = 1.0 - qab * x / qap;
  if (std::abs(d) < fpmin) d = fpmin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= maxit; ++m) {
    int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < fpmin) d = fpmin;
    c = 1.0 + aa / c;
    if (std::abs(c) < fpmin) c = fpmin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < fpmin) d = fpmin;
    c = 1.0 + aa / c;
    if (std::abs(c) < fpmin) c = fpmin;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < eps) break;
  }
  return h;
}

// regularized incomplete beta I_x(a,b)
inline double inc_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  double bt = std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                       a * std::log(x) + b * std::log1p(-x));
  if (x < (a + 1.0) / (a + b + 2.0)) return bt * betacf(a, b, x) / a;
  return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

}  // namespace detail

// two-sided p-value of a Student t statistic
inline double student_t_p_two_sided(double t, double df) {
  if (df <= 0.0) fail("student_t_p_two_sided: df must be positive");
  return detail::inc_beta(df / 2.0, 0.5, df / (df + t * t));
}

inline std::string significance_stars(double p) {
  if (p < 0.001) return "***";
  if (p < 0.01) return "**";
  if (p < 0.05) return "*";
  return "";
}

struct TTestResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
  std::string stars;
};

// Welch's unequal-variance t with Welch-Satterthwaite degrees of freedom
inline TTestResult two_sample_t(const Vector& a, const Vector& b) {
  const Eigen::Index n1 = a.size(), n2 = b.size();
  if (n1 < 2 || n2 < 2) fail("two_sample_t: each group needs at least two values");
  double m1 = a.mean(), m2 = b.mean();
  double v1 = (a.array() - m1).square().sum() / double(n1 - 1);
  double v2 = (b.array() - m2).square().sum() / double(n2 - 1);
  if (v1 == 0.0 && v2 == 0.0) {
    if (m1 != m2)
      fail("two_sample_t: zero variance in both groups with different means");
    TTestResult r;
    r.df = double(n1 + n2 - 2);
    return r;  // identical constants: t = 0, p = 1
  }
  double se1 = v1 / double(n1), se2 = v2 / double(n2);
  TTestResult r;
  r.t = (m1 - m2) / std::sqrt(se1 + se2);
  r.df = (se1 + se2) * (se1 + se2) /
         (se1 * se1 / double(n1 - 1) + se2 * se2 / double(n2 - 1));
  r.p = student_t_p_two_sided(r.t, r.df);
  r.stars = significance_stars(r.p);
  return r;
}

// ---------- sector tables ----------

constexpr std::array<const char*, 4> kMethodNames = {"capm", "fpcr", "fplsr", "pflm"};

struct StockMetric {
  std::string symbol;
  std::string sector;
  std::array<double, 4> values;  // capm, fpcr, fplsr, pflm
};

// Per-sector means of one metric for each method, with overall Mean and
// Median rows taken across the sector rows (the Table 2/3 layout).
struct SectorTable {
  std::vector<std::string> sectors;
  std::vector<std::array<double, 4>> values;
  std::array<double, 4> mean_row{};
  std::array<double, 4> median_row{};

  std::string to_csv() const {
    std::string out = "sector,capm,fpcr,fplsr,pflm\n";
    auto row = [&out](const std::string& name, const std::array<double, 4>& v) {
      out += name;
      for (double x : v) out += "," + fmt_f3(x);
      out += "\n";
    };
    for (size_t i = 0; i < sectors.size(); ++i) row(sectors[i], values[i]);
    row("Mean", mean_row);
    row("Median", median_row);
    return out;
  }
};

inline double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline SectorTable sector_report(const std::vector<StockMetric>& rows) {
  if (rows.empty()) fail("sector_report: empty stock list");
  std::map<std::string, std::vector<std::array<double, 4>>> by_sector;
  for (const auto& r : rows) {
    if (r.sector.empty()) fail("sector_report: missing sector for symbol " + r.symbol);
    by_sector[r.sector].push_back(r.values);
  }
  SectorTable t;
  for (auto& [sector, vals] : by_sector) {
    std::array<double, 4> mean{};
    for (const auto& v : vals)
      for (int k = 0; k < 4; ++k) mean[size_t(k)] += v[size_t(k)];
    for (int k = 0; k < 4; ++k) mean[size_t(k)] /= double(vals.size());
    t.sectors.push_back(sector);
    t.values.push_back(mean);
  }
  for (int k = 0; k < 4; ++k) {
    std::vector<double> col;
    for (const auto& v : t.values) col.push_back(v[size_t(k)]);
    double s = 0.0;
    for (double x : col) s += x;
    t.mean_row[size_t(k)] = s / double(col.size());
    t.median_row[size_t(k)] = median_of(col);
  }
  return t;
}

}  // namespace fcapm
