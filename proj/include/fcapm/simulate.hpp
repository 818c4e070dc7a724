#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "fcapm/basis.hpp"
#include "fcapm/csv.hpp"
#include "fcapm/ingest.hpp"
#include "fcapm/rng.hpp"

namespace fcapm {

// ---------- calendar helpers (weekday sequence for synthetic panels) ----------

namespace detail {

// days since 1970-01-01 (civil calendar algorithm)
inline long days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  long era = (y >= 0 ? y : y - 399) / 400;
  unsigned yoe = unsigned(y - era * 400);
  unsigned doy = (153u * unsigned(m + (m > 2 ? -3 : 9)) + 2u) / 5u + unsigned(d) - 1u;
  unsigned doe = yoe * 365u + yoe / 4u - yoe / 100u + doy;
  return era * 146097l + long(doe) - 719468l;
}

inline void civil_from_days(long z, int& y, int& m, int& d) {
  z += 719468l;
  long era = (z >= 0 ? z : z - 146096l) / 146097l;
  unsigned doe = unsigned(z - era * 146097l);
  unsigned yoe = (doe - doe / 1460u + doe / 36524u - doe / 146096u) / 365u;
  long yy = long(yoe) + era * 400l;
  unsigned doy = doe - (365u * yoe + yoe / 4u - yoe / 100u);
  unsigned mp = (5u * doy + 2u) / 153u;
  d = int(doy - (153u * mp + 2u) / 5u + 1u);
  m = int(mp + (mp < 10 ? 3 : -9));
  y = int(yy + (m <= 2));
}

}  // namespace detail

// n sequential weekdays starting at (or after) an ISO date
inline std::vector<std::string> weekday_dates(const std::string& start, int n) {
  if (!is_iso_date(start)) fail("weekday_dates: bad start date '" + start + "'");
  int y = std::stoi(start.substr(0, 4));
  int m = std::stoi(start.substr(5, 2));
  int d = std::stoi(start.substr(8, 2));
  long z = detail::days_from_civil(y, m, d);
  std::vector<std::string> out;
  while (int(out.size()) < n) {
    int dow = int(((z % 7) + 10) % 7);  // 0=Monday; day 0 (1970-01-01) was a Thursday
    if (dow < 5) {
      detail::civil_from_days(z, y, m, d);
      char buf[12];
      std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", y, m, d);
      out.emplace_back(buf);
    }
    ++z;
  }
  return out;
}

// ---------- scenario ----------

struct SimScenario {
  int n_days = 251;
  int n_stocks = 1;
  std::uint64_t seed = 42;
  double noise_sigma = 0.0;
  std::string surface = "sin_cos";  // zero | sin_cos | identity_coef | smooth_coef | triangular_coef
  double surface_scale = 1.0;
  double coef_scale = 1.0;   // predictor coefficient k has sd coef_scale/(1+k)^(coef_decay/2)
  double coef_decay = 2.0;
  bool anchor = true;        // force the 09:30 value of every curve to zero
  int n_basis = 20;
  int order = 4;
  std::string market_symbol = "MKT";
  std::string stock_prefix = "STK";
  int n_sectors = 1;
  double rf_annual_pct = 0.0;
  std::string start_date = "2020-01-02";
};

inline nlohmann::json scenario_to_json(const SimScenario& s) {
  return nlohmann::json{{"n_days", s.n_days},
                        {"n_stocks", s.n_stocks},
                        {"seed", s.seed},
                        {"noise_sigma", s.noise_sigma},
                        {"surface", s.surface},
                        {"surface_scale", s.surface_scale},
                        {"coef_scale", s.coef_scale},
                        {"coef_decay", s.coef_decay},
                        {"anchor", s.anchor},
                        {"n_basis", s.n_basis},
                        {"order", s.order},
                        {"market_symbol", s.market_symbol},
                        {"stock_prefix", s.stock_prefix},
                        {"n_sectors", s.n_sectors},
                        {"rf_annual_pct", s.rf_annual_pct},
                        {"start_date", s.start_date}};
}

inline SimScenario scenario_from_json(const nlohmann::json& j) {
  SimScenario s;
  nlohmann::json known = scenario_to_json(s);
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.contains(it.key()))
      fail("scenario: unknown field '" + it.key() + "'");
  auto get = [&j](const char* key, auto& slot) {
    if (j.contains(key)) {
      try {
        slot = j.at(key).get<std::decay_t<decltype(slot)>>();
      } catch (const nlohmann::json::exception&) {
        fail(std::string("scenario: bad value for field '") + key + "'");
      }
    }
  };
  get("n_days", s.n_days);
  get("n_stocks", s.n_stocks);
  get("seed", s.seed);
  get("noise_sigma", s.noise_sigma);
  get("surface", s.surface);
  get("surface_scale", s.surface_scale);
  get("coef_scale", s.coef_scale);
  get("coef_decay", s.coef_decay);
  get("anchor", s.anchor);
  get("n_basis", s.n_basis);
  get("order", s.order);
  get("market_symbol", s.market_symbol);
  get("stock_prefix", s.stock_prefix);
  get("n_sectors", s.n_sectors);
  get("rf_annual_pct", s.rf_annual_pct);
  get("start_date", s.start_date);
  if (s.n_days < 1) fail("scenario: n_days must be >= 1");
  if (s.n_stocks < 1) fail("scenario: n_stocks must be >= 1");
  if (s.noise_sigma < 0.0) fail("scenario: noise_sigma must be >= 0");
  if (s.n_sectors < 1) fail("scenario: n_sectors must be >= 1");
  if (!is_iso_date(s.start_date)) fail("scenario: bad start_date '" + s.start_date + "'");
  return s;
}

// ---------- planted surfaces ----------

// smooth full-span coefficient surface; the first response column is zero so
// the response stays anchored at the open and the relation is exactly linear
// through the basis
inline Matrix smooth_coef_matrix(int p, double scale) {
  Matrix S(p, p);
  for (int l = 0; l < p; ++l)
    for (int m = 0; m < p; ++m) {
      double ul = double(l) / (p - 1), vm = double(m) / (p - 1);
      S(l, m) = scale * (std::exp(-((ul - 0.35) * (ul - 0.35) + (vm - 0.55) * (vm - 0.55)) / 0.08) +
                         0.6 * std::exp(-((ul - 0.75) * (ul - 0.75) + (vm - 0.25) * (vm - 0.25)) / 0.05));
    }
  S.col(0).setZero();
  return S;
}

// true surface evaluated on the 78x78 grid (u rows, v columns)
inline Matrix beta_true_grid(const SimScenario& sc, const BasisSystem& bs) {
  const Vector& g = intraday_grid();
  constexpr double pi = 3.14159265358979323846;
  if (sc.surface == "zero") return Matrix::Zero(kGridSize, kGridSize);
  if (sc.surface == "sin_cos") {
    Matrix b(kGridSize, kGridSize);
    for (int i = 0; i < kGridSize; ++i)
      for (int j = 0; j < kGridSize; ++j)
        b(i, j) = sc.surface_scale * std::sin(pi * g[i]) * std::cos(pi * g[j]);
    return b;
  }
  if (sc.surface == "identity_coef")
    return bs.eval * (sc.surface_scale * Matrix::Identity(bs.n_basis, bs.n_basis)) *
           bs.eval.transpose();
  if (sc.surface == "smooth_coef")
    return bs.eval * smooth_coef_matrix(bs.n_basis, sc.surface_scale) * bs.eval.transpose();
  if (sc.surface == "triangular_coef") {
    // one tensor term whose u-support ends before its v-support begins, so
    // the surface is exactly zero on u > v (used by the causal-mask checks)
    int l = 1, m = bs.n_basis - 2;
    if (!(bs.knots[size_t(l + bs.order)] <= bs.knots[size_t(m)]))
      fail("beta_true_grid: triangular_coef needs a wider basis");
    Matrix S = Matrix::Zero(bs.n_basis, bs.n_basis);
    S(l, m) = sc.surface_scale;
    return bs.eval * S * bs.eval.transpose();
  }
  fail("unknown surface kind '" + sc.surface + "'");
}

// ---------- simulation ----------

struct SimData {
  BasisSystem basis;
  Matrix x;                 // market excess panel, n_days x 78
  std::vector<Matrix> ys;   // one response panel per stock
  Matrix beta_grid;         // planted surface on the grid
  Matrix x_coefs;           // planted predictor coefficients (n_days x n_basis)
};

// Market curves are Gaussian coefficient vectors pushed through the basis;
// responses are the quadrature contraction of the planted surface against
// the market curve plus iid grid noise. Stream ids: (0, day) for the market
// coefficients, (stock+1, day) for that stock's noise, so any subset of days
// or stocks reproduces identically.
inline SimData simulate(const SimScenario& sc) {
  SimData d;
  d.basis = make_basis(sc.n_basis, sc.order);
  const int n = sc.n_days, p = sc.n_basis;

  d.x_coefs.resize(n, p);
  for (int t = 0; t < n; ++t) {
    Rng rng(stream_seed(sc.seed, stock_day_stream(0, std::uint64_t(t))));
    for (int k = 0; k < p; ++k)
      d.x_coefs(t, k) = sc.coef_scale / std::pow(1.0 + k, sc.coef_decay / 2.0) * rng.normal();
    if (sc.anchor) d.x_coefs(t, 0) = 0.0;
  }
  d.x = d.x_coefs * d.basis.eval.transpose();
  if (sc.anchor) d.x.col(0).setZero();

  d.beta_grid = beta_true_grid(sc, d.basis);
  Matrix base = d.x * d.basis.quad_w.asDiagonal() * d.beta_grid;
  for (int s = 0; s < sc.n_stocks; ++s) {
    Matrix y = base;
    if (sc.noise_sigma > 0.0) {
      for (int t = 0; t < n; ++t) {
        Rng rng(stream_seed(sc.seed, stock_day_stream(std::uint64_t(s) + 1, std::uint64_t(t))));
        for (int i = 0; i < kGridSize; ++i) y(t, i) += sc.noise_sigma * rng.normal();
      }
    }
    if (sc.anchor) y.col(0).setZero();
    d.ys.push_back(std::move(y));
  }
  return d;
}

// relative L2 distance between two surfaces on the grid, by tensor quadrature
inline double surface_error(const Matrix& est, const Matrix& truth, const Vector& quad_w) {
  if (est.rows() != truth.rows() || est.cols() != truth.cols())
    fail("surface_error: shape mismatch");
  double num = 0.0, den = 0.0;
  for (Eigen::Index i = 0; i < truth.rows(); ++i)
    for (Eigen::Index j = 0; j < truth.cols(); ++j) {
      double w = quad_w[i] * quad_w[j];
      double diff = est(i, j) - truth(i, j);
      num += w * diff * diff;
      den += w * truth(i, j) * truth(i, j);
    }
  if (!(den > 0.0)) fail("surface_error: zero true surface, relative error undefined");
  return std::sqrt(num / den);
}

// ---------- dataset export (format closure with the ingest parsers) ----------

inline std::string sim_stock_symbol(const SimScenario& sc, int s) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03d", s + 1);
  return sc.stock_prefix + buf;
}

inline std::string sim_sector_name(const SimScenario& sc, int s) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "SEC%02d", s % sc.n_sectors + 1);
  return buf;
}

// Writes ticks.csv / yields.csv / sectors.csv / characteristics.csv /
// beta_true.csv / scenario.json under dir. The tick file inverts each panel
// to prices (opens at 400), so parsing it back through the ingest pipeline
// reproduces the panels to round-trip accuracy with zero transformation.
inline void write_sim_dataset(const std::string& dir, const SimScenario& sc, const SimData& d) {
  if (!sc.anchor)
    fail("write_sim_dataset: only anchored panels can be exported as prices");
  std::vector<std::string> dates = weekday_dates(sc.start_date, sc.n_days);

  std::string ticks = "symbol,date,time,price\n";
  auto emit_panel = [&](const std::string& symbol, const Matrix& curves) {
    CidrPanel panel;
    panel.symbol = symbol;
    panel.dates = dates;
    panel.curves = curves;
    TickSeries ts = invert_cidr(panel, Vector::Constant(curves.rows(), 400.0));
    for (Eigen::Index t = 0; t < ts.prices.rows(); ++t)
      for (int i = 0; i < kGridSize; ++i)
        ticks += symbol + "," + dates[size_t(t)] + "," + slot_time(i) + "," +
                 fmt_g17(ts.prices(t, i)) + "\n";
  };
  emit_panel(sc.market_symbol, d.x);
  for (int s = 0; s < sc.n_stocks; ++s) emit_panel(sim_stock_symbol(sc, s), d.ys[size_t(s)]);
  write_text_file(dir + "/ticks.csv", ticks);

  std::string yields = "date,annual_yield_pct\n";
  for (const auto& date : dates) yields += date + "," + fmt_g17(sc.rf_annual_pct) + "\n";
  write_text_file(dir + "/yields.csv", yields);

  std::string sectors = "symbol,sector\n";
  for (int s = 0; s < sc.n_stocks; ++s)
    sectors += sim_stock_symbol(sc, s) + "," + sim_sector_name(sc, s) + "\n";
  write_text_file(dir + "/sectors.csv", sectors);

  std::string chars = "symbol,size\n";
  for (int s = 0; s < sc.n_stocks; ++s) {
    Rng rng(stream_seed(sc.seed, stock_day_stream(std::uint64_t(s) + 1, 0xC0FFEEu)));
    chars += sim_stock_symbol(sc, s) + "," + fmt_g17(rng.uniform01()) + "\n";
  }
  write_text_file(dir + "/characteristics.csv", chars);

  write_text_file(dir + "/beta_true.csv", matrix_to_csv(d.beta_grid));
  write_text_file(dir + "/scenario.json", scenario_to_json(sc).dump(2) + "\n");
}

}  // namespace fcapm
