#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <limits>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <fcapm/fcapm.hpp>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fcapm;

namespace {

// ---------- run configuration ----------

struct RunConfig {
  std::string ticks, yields, sectors, characteristics, out;
  std::string market = "MKT";
  int n_basis = 20, order = 4;
  double fpca_threshold = 0.95;
  int fpca_force_k = 0;
  int pls_components = 0;  // 0 selects by cross-validation
  int pls_max_components = 10;
  int pls_folds = 5;
  std::vector<double> kappa_grid = default_kappa_grid();
  std::string rf_mode = "flat";
  bool causal = false;
  int n_train = 200;
  int jobs = 0;  // 0 defers to FCAPM_JOBS, then 1
  std::vector<std::string> reports;
};

json config_to_json(const RunConfig& c) {
  return json{{"ticks", c.ticks},
              {"yields", c.yields},
              {"sectors", c.sectors},
              {"characteristics", c.characteristics},
              {"out", c.out},
              {"market", c.market},
              {"n_basis", c.n_basis},
              {"order", c.order},
              {"fpca_threshold", c.fpca_threshold},
              {"fpca_force_k", c.fpca_force_k},
              {"pls_components", c.pls_components},
              {"pls_max_components", c.pls_max_components},
              {"pls_folds", c.pls_folds},
              {"kappa_grid", c.kappa_grid},
              {"rf_mode", c.rf_mode},
              {"causal", c.causal},
              {"n_train", c.n_train},
              {"jobs", c.jobs},
              {"reports", c.reports}};
}

RunConfig config_from_json(const json& j, const std::string& where) {
  if (!j.is_object()) fail("config " + where + ": top level must be a JSON object");
  RunConfig c;
  json known = config_to_json(c);
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.contains(it.key()))
      fail("config " + where + ": unknown field '" + it.key() + "'");
  auto get = [&](const char* key, auto& slot) {
    if (!j.contains(key)) return;
    try {
      slot = j.at(key).get<std::decay_t<decltype(slot)>>();
    } catch (const json::exception&) {
      fail("config " + where + ": bad value for field '" + std::string(key) + "'");
    }
  };
  get("ticks", c.ticks);
  get("yields", c.yields);
  get("sectors", c.sectors);
  get("characteristics", c.characteristics);
  get("out", c.out);
  get("market", c.market);
  get("n_basis", c.n_basis);
  get("order", c.order);
  get("fpca_threshold", c.fpca_threshold);
  get("fpca_force_k", c.fpca_force_k);
  get("pls_components", c.pls_components);
  get("pls_max_components", c.pls_max_components);
  get("pls_folds", c.pls_folds);
  get("kappa_grid", c.kappa_grid);
  get("rf_mode", c.rf_mode);
  get("causal", c.causal);
  get("n_train", c.n_train);
  get("jobs", c.jobs);
  get("reports", c.reports);
  return c;
}

RunConfig load_run_config(const std::string& path) {
  if (path.empty()) return RunConfig{};
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    fail("config " + path + ": " + std::string(e.what()));
  }
  return config_from_json(j, path);
}

void validate_config(const RunConfig& c) {
  if (c.n_basis < 1 || c.order < 1) fail("config: n_basis and order must be >= 1");
  if (c.n_basis < c.order) fail("config: n_basis must be >= order");
  if (!(c.fpca_threshold > 0.0 && c.fpca_threshold <= 1.0))
    fail("config: fpca_threshold must lie in (0, 1]");
  if (c.fpca_force_k < 0) fail("config: fpca_force_k must be >= 0");
  if (c.pls_components < 0)
    fail("config: pls_components must be >= 0 (0 selects by cross-validation)");
  if (c.pls_max_components < 1) fail("config: pls_max_components must be >= 1");
  if (c.pls_folds < 2) fail("config: pls_folds must be >= 2");
  if (c.kappa_grid.empty()) fail("config: kappa_grid must be nonempty");
  for (double k : c.kappa_grid)
    if (!(k >= 0.0)) fail("config: kappa_grid values must be >= 0");
  rf_mode_from_string(c.rf_mode);
  if (c.n_train < 1) fail("config: n_train must be >= 1");
  if (c.jobs < 0) fail("config: jobs must be >= 0 (0 defers to FCAPM_JOBS)");
  if (c.market.empty()) fail("config: market symbol must be nonempty");
}

MethodConfig method_config(const RunConfig& c) {
  MethodConfig m;
  m.fpca_threshold = c.fpca_threshold;
  m.fpca_force_k = c.fpca_force_k;
  m.pls_components = c.pls_components;
  m.pls_max_components = c.pls_max_components;
  m.pls_folds = c.pls_folds;
  m.kappa_grid = c.kappa_grid;
  m.causal = c.causal;
  return m;
}

int resolve_jobs(int configured) {
  if (configured > 0) return configured;
  if (const char* env = std::getenv("FCAPM_JOBS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1) fail("FCAPM_JOBS must be a positive integer");
    return int(v);
  }
  return 1;
}

// body(i) must not throw; completion order is irrelevant since results land
// in preallocated slots and all writing happens after the join
template <class F>
void parallel_for(int n, int jobs, F&& body) {
  jobs = std::max(1, std::min(jobs, n));
  if (jobs <= 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(size_t(jobs));
  for (int w = 0; w < jobs; ++w)
    pool.emplace_back([&] {
      for (int i; (i = next.fetch_add(1)) < n;) body(i);
    });
  for (auto& t : pool) t.join();
}

// ---------- dataset loading shared by fit and forecast ----------

struct Dataset {
  BasisSystem bs;
  ExcessPanel market;
  std::map<std::string, int> market_row;
  std::vector<std::string> symbols;  // stocks, sorted
  std::map<std::string, ExcessPanel> stocks;
  std::map<std::string, std::string> sector_of;
};

std::map<std::string, std::string> parse_sector_map(const std::string& path) {
  CsvTable t = read_csv(path);
  expect_header(t, {"symbol", "sector"}, "sector map " + path);
  std::map<std::string, std::string> out;
  for (const auto& r : t.rows) {
    if (r[1].empty()) fail("sector map: empty sector for symbol " + r[0]);
    if (!out.emplace(r[0], r[1]).second) fail("sector map: duplicate symbol " + r[0]);
  }
  return out;
}

Dataset load_dataset(const RunConfig& cfg) {
  Dataset ds;
  ds.bs = make_basis(cfg.n_basis, cfg.order);
  auto raw = parse_ticks(cfg.ticks);
  if (!raw.count(cfg.market))
    fail("market symbol '" + cfg.market + "' not present in " + cfg.ticks);
  RiskFreeSeries rf = parse_yields(cfg.yields);
  for (const auto& [sym, rt] : raw)
    for (const auto& day : rt.days)
      if (!rf.index.count(day.date))
        fail("no risk-free yield for " + day.date + " (symbol " + sym + ")");
  RfMode mode = rf_mode_from_string(cfg.rf_mode);
  ds.sector_of = parse_sector_map(cfg.sectors);
  for (const auto& [sym, rt] : raw) {
    ExcessPanel ex = to_excess(build_cidr(fill_gaps(rt)), rf, mode);
    if (sym == cfg.market) {
      ds.market = std::move(ex);
      continue;
    }
    ds.symbols.push_back(sym);
    ds.stocks.emplace(sym, std::move(ex));
  }
  if (ds.symbols.empty()) fail("tick file has no stock symbols besides the market");
  for (size_t i = 0; i < ds.market.dates.size(); ++i)
    ds.market_row[ds.market.dates[i]] = int(i);
  return ds;
}

// market curves matched to the stock's dates, row for row
Matrix align_market(const Dataset& ds, const ExcessPanel& stock) {
  Matrix x(stock.curves.rows(), kGridSize);
  for (Eigen::Index t = 0; t < stock.curves.rows(); ++t) {
    auto it = ds.market_row.find(stock.dates[size_t(t)]);
    if (it == ds.market_row.end())
      fail("market has no curve for " + stock.dates[size_t(t)]);
    x.row(t) = ds.market.curves.row(it->second);
  }
  return x;
}

std::string curve_table(const std::array<const Vector*, 4>& cols) {
  std::string out = "u,capm,fpcr,fplsr,pflm\n";
  const Vector& g = intraday_grid();
  for (int i = 0; i < kGridSize; ++i) {
    out += fmt_g17(g[i]);
    for (const Vector* c : cols) out += "," + fmt_g17((*c)[i]);
    out += "\n";
  }
  return out;
}

void print_sector_table(const char* title, const SectorTable& t) {
  std::printf("\n%s\n", title);
  std::printf("%-24s %10s %10s %10s %10s\n", "sector", "capm", "fpcr", "fplsr", "pflm");
  auto row = [](const std::string& name, const std::array<double, 4>& v) {
    std::printf("%-24s %10s %10s %10s %10s\n", name.c_str(), fmt_f3(v[0]).c_str(),
                fmt_f3(v[1]).c_str(), fmt_f3(v[2]).c_str(), fmt_f3(v[3]).c_str());
  };
  for (size_t i = 0; i < t.sectors.size(); ++i) row(t.sectors[i], t.values[i]);
  row("Mean", t.mean_row);
  row("Median", t.median_row);
}

// ---------- per-stock workers ----------

struct StockOutputs {
  std::string error;  // nonempty marks the stock failed
  std::string sector;
  std::array<FitMetrics, 4> fit;
  std::array<double, 4> rmspe{};
  std::array<int, 4> windows_failed{};
  std::vector<std::pair<std::string, std::string>> files;  // out-relative path, content
};

StockOutputs run_fit_stock(const Dataset& ds, const MethodConfig& mc, const std::string& sym) {
  StockOutputs o;
  try {
    auto sit = ds.sector_of.find(sym);
    if (sit == ds.sector_of.end()) fail("no sector mapping for symbol " + sym);
    o.sector = sit->second;
    const ExcessPanel& sp = ds.stocks.at(sym);
    const BasisSystem& bs = ds.bs;
    Matrix xg = align_market(ds, sp);
    const Matrix& yg = sp.curves;
    Matrix xc = fit_coefs(bs, xg), yc = fit_coefs(bs, yg);

    Matrix fitted_capm = fit_in_sample(Method::capm, mc, bs, xg, yg);

    FpcaResult xf = fpca(xc, bs.gram, mc.fpca_threshold, mc.fpca_force_k);
    FpcaResult yf = fpca(yc, bs.gram, mc.fpca_threshold, mc.fpca_force_k);
    FpcrModel fm = fit_fpcr(xf, yf, bs, mc.causal);
    Matrix fitted_fpcr(yg.rows(), kGridSize);
    if (mc.causal) {
      for (Eigen::Index t = 0; t < yg.rows(); ++t)
        fitted_fpcr.row(t) =
            (bs.eval * fpcr_predict_coefs(fm, bs, xc.row(t).transpose())).transpose();
    } else {
      fitted_fpcr = fpcr_fitted_coefs(fm) * bs.eval.transpose();
    }

    int k = mc.pls_components;
    if (k <= 0) k = select_components(xc, yc, bs, mc.pls_max_components, mc.pls_folds);
    PlsModel pm = fit_fplsr(xc, yc, bs, k, mc.causal);
    Matrix fitted_fplsr(yg.rows(), kGridSize);
    if (mc.causal) {
      for (Eigen::Index t = 0; t < yg.rows(); ++t)
        fitted_fplsr.row(t) =
            (bs.eval * fplsr_predict_coefs(pm, xc.row(t).transpose())).transpose();
    } else {
      fitted_fplsr = fplsr_fitted_coefs(pm, xc) * bs.eval.transpose();
    }

    PflmFit qm = fit_pflm(xc, yg, bs, mc.kappa_grid, mc.causal);
    Matrix fitted_pflm(yg.rows(), kGridSize);
    if (mc.causal) {
      for (Eigen::Index t = 0; t < yg.rows(); ++t)
        fitted_pflm.row(t) = pflm_predict_grid(qm, bs, xc.row(t).transpose()).transpose();
    } else {
      fitted_pflm = pflm_fitted_grid(qm, bs, xc);
    }

    o.fit[0] = fit_metrics(yg, fitted_capm, bs.quad_w);
    o.fit[1] = fit_metrics(yg, fitted_fpcr, bs.quad_w);
    o.fit[2] = fit_metrics(yg, fitted_fplsr, bs.quad_w);
    o.fit[3] = fit_metrics(yg, fitted_pflm, bs.quad_w);

    o.files.emplace_back("surfaces/" + sym + "_fpcr.csv", matrix_to_csv(fm.surface.grid_eval()));
    o.files.emplace_back("surfaces/" + sym + "_fplsr.csv", matrix_to_csv(pm.surface.grid_eval()));
    o.files.emplace_back("surfaces/" + sym + "_pflm.csv", matrix_to_csv(qm.surface.grid_eval()));
    o.files.emplace_back("diagnostics/" + sym + "_pflm_bic.csv", pflm_bic_trace_csv(qm));
    o.files.emplace_back("curves/" + sym + "_r2.csv",
                         curve_table({&o.fit[0].r2_curve, &o.fit[1].r2_curve, &o.fit[2].r2_curve,
                                      &o.fit[3].r2_curve}));
    o.files.emplace_back("curves/" + sym + "_rmse.csv",
                         curve_table({&o.fit[0].rmse_curve, &o.fit[1].rmse_curve,
                                      &o.fit[2].rmse_curve, &o.fit[3].rmse_curve}));
  } catch (const std::exception& e) {
    o.error = e.what();
  }
  return o;
}

StockOutputs run_forecast_stock(const Dataset& ds, const MethodConfig& mc, int n_train,
                                const std::string& sym) {
  StockOutputs o;
  try {
    auto sit = ds.sector_of.find(sym);
    if (sit == ds.sector_of.end()) fail("no sector mapping for symbol " + sym);
    o.sector = sit->second;
    const ExcessPanel& sp = ds.stocks.at(sym);
    Matrix xg = align_market(ds, sp);
    constexpr std::array<Method, 4> methods = {Method::capm, Method::fpcr, Method::fplsr,
                                               Method::pflm};
    std::array<ForecastOutcome, 4> fo;
    for (int m = 0; m < 4; ++m) {
      fo[size_t(m)] = expanding_window(xg, sp.curves, ds.bs, methods[size_t(m)], mc, n_train);
      o.rmspe[size_t(m)] = fo[size_t(m)].rmspe_total;
      o.windows_failed[size_t(m)] = fo[size_t(m)].n_failed;
    }
    o.files.emplace_back("curves/" + sym + "_rmspe.csv",
                         curve_table({&fo[0].rmspe_curve, &fo[1].rmspe_curve, &fo[2].rmspe_curve,
                                      &fo[3].rmspe_curve}));
  } catch (const std::exception& e) {
    o.error = e.what();
  }
  return o;
}

// ---------- commands ----------

int cmd_fit(const RunConfig& cfg) {
  if (cfg.ticks.empty()) fail("fit: --ticks is required");
  if (cfg.yields.empty()) fail("fit: --yields is required");
  if (cfg.sectors.empty()) fail("fit: --sectors is required");
  if (cfg.out.empty()) fail("fit: --out is required");
  Dataset ds = load_dataset(cfg);
  MethodConfig mc = method_config(cfg);
  const int n = int(ds.symbols.size());
  std::vector<StockOutputs> res(static_cast<size_t>(n));
  parallel_for(n, resolve_jobs(cfg.jobs),
               [&](int i) { res[size_t(i)] = run_fit_stock(ds, mc, ds.symbols[size_t(i)]); });

  fs::create_directories(fs::path(cfg.out) / "surfaces");
  fs::create_directories(fs::path(cfg.out) / "diagnostics");
  fs::create_directories(fs::path(cfg.out) / "curves");

  json report = json::array();
  std::vector<StockMetric> r2_rows, rmse_rows;
  int failed = 0;
  for (int i = 0; i < n; ++i) {
    const StockOutputs& r = res[size_t(i)];
    const std::string& sym = ds.symbols[size_t(i)];
    if (!r.error.empty()) {
      ++failed;
      std::cerr << "fit: " << sym << " failed: " << r.error << "\n";
      continue;
    }
    for (const auto& [rel, content] : r.files)
      write_text_file((fs::path(cfg.out) / rel).string(), content);
    for (int m = 0; m < 4; ++m) {
      report.push_back(json{{"symbol", sym},
                            {"sector", r.sector},
                            {"method", kMethodNames[size_t(m)]},
                            {"r2_total", r.fit[size_t(m)].r2_total},
                            {"rmse_total", r.fit[size_t(m)].rmse_total},
                            {"rmspe_total", nullptr},
                            {"n_windows_failed", nullptr}});
      if (!r.fit[size_t(m)].warning.empty())
        std::cerr << "fit: " << sym << " " << kMethodNames[size_t(m)] << ": "
                  << r.fit[size_t(m)].warning << "\n";
    }
    r2_rows.push_back({sym, r.sector,
                       {r.fit[0].r2_total, r.fit[1].r2_total, r.fit[2].r2_total,
                        r.fit[3].r2_total}});
    rmse_rows.push_back({sym, r.sector,
                         {r.fit[0].rmse_total, r.fit[1].rmse_total, r.fit[2].rmse_total,
                          r.fit[3].rmse_total}});
  }
  write_text_file((fs::path(cfg.out) / "fit_reports.json").string(), report.dump(2) + "\n");
  write_text_file((fs::path(cfg.out) / "run_config.json").string(),
                  config_to_json(cfg).dump(2) + "\n");
  if (!r2_rows.empty()) {
    SectorTable t_r2 = sector_report(r2_rows);
    SectorTable t_rmse = sector_report(rmse_rows);
    write_text_file((fs::path(cfg.out) / "sector_r2.csv").string(), t_r2.to_csv());
    write_text_file((fs::path(cfg.out) / "sector_rmse.csv").string(), t_rmse.to_csv());
    print_sector_table("in-sample R2 by sector", t_r2);
    print_sector_table("in-sample RMSE by sector", t_rmse);
  }
  std::printf("\nfit: %d stock(s), %d failed, outputs in %s\n", n, failed, cfg.out.c_str());
  return failed == 0 ? 0 : 1;
}

int cmd_forecast(const RunConfig& cfg) {
  if (cfg.ticks.empty()) fail("forecast: --ticks is required");
  if (cfg.yields.empty()) fail("forecast: --yields is required");
  if (cfg.sectors.empty()) fail("forecast: --sectors is required");
  if (cfg.out.empty()) fail("forecast: --out is required");
  Dataset ds = load_dataset(cfg);
  MethodConfig mc = method_config(cfg);
  const int n = int(ds.symbols.size());
  std::vector<StockOutputs> res(static_cast<size_t>(n));
  parallel_for(n, resolve_jobs(cfg.jobs), [&](int i) {
    res[size_t(i)] = run_forecast_stock(ds, mc, cfg.n_train, ds.symbols[size_t(i)]);
  });

  fs::create_directories(fs::path(cfg.out) / "curves");
  json report = json::array();
  std::vector<StockMetric> rows;
  int failed = 0;
  for (int i = 0; i < n; ++i) {
    const StockOutputs& r = res[size_t(i)];
    const std::string& sym = ds.symbols[size_t(i)];
    if (!r.error.empty()) {
      ++failed;
      std::cerr << "forecast: " << sym << " failed: " << r.error << "\n";
      continue;
    }
    for (const auto& [rel, content] : r.files)
      write_text_file((fs::path(cfg.out) / rel).string(), content);
    for (int m = 0; m < 4; ++m)
      report.push_back(json{{"symbol", sym},
                            {"sector", r.sector},
                            {"method", kMethodNames[size_t(m)]},
                            {"r2_total", nullptr},
                            {"rmse_total", nullptr},
                            {"rmspe_total", r.rmspe[size_t(m)]},
                            {"n_windows_failed", r.windows_failed[size_t(m)]}});
    rows.push_back({sym, r.sector, r.rmspe});
  }
  write_text_file((fs::path(cfg.out) / "forecast_reports.json").string(), report.dump(2) + "\n");
  write_text_file((fs::path(cfg.out) / "run_config.json").string(),
                  config_to_json(cfg).dump(2) + "\n");
  if (!rows.empty()) {
    SectorTable t = sector_report(rows);
    write_text_file((fs::path(cfg.out) / "sector_rmspe.csv").string(), t.to_csv());
    print_sector_table("expanding-window RMSPE by sector", t);
  }
  std::printf("\nforecast: %d stock(s), %d failed, n_train=%d, outputs in %s\n", n, failed,
              cfg.n_train, cfg.out.c_str());
  return failed == 0 ? 0 : 1;
}

int cmd_ttest(const RunConfig& cfg) {
  if (cfg.characteristics.empty()) fail("ttest: --characteristics is required");
  if (cfg.out.empty()) fail("ttest: --out is required");
  std::vector<std::string> reports = cfg.reports;
  if (reports.empty()) {
    for (const char* name : {"fit_reports.json", "forecast_reports.json"}) {
      std::string p = (fs::path(cfg.out) / name).string();
      if (fs::exists(p)) reports.push_back(p);
    }
  }
  if (reports.empty())
    fail("ttest: no report files found; run fit/forecast first or pass --reports");

  constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
  static const std::array<const char*, 3> metric_keys = {"r2_total", "rmse_total", "rmspe_total"};
  static const std::array<const char*, 3> metric_names = {"r2", "rmse", "rmspe"};
  // symbol -> method -> metric value
  std::map<std::string, std::array<std::array<double, 3>, 4>> vals;
  for (const std::string& path : reports) {
    json arr;
    try {
      arr = json::parse(read_text_file(path));
    } catch (const json::exception& e) {
      fail("report " + path + ": " + std::string(e.what()));
    }
    if (!arr.is_array()) fail("report " + path + ": expected a JSON array");
    for (const json& row : arr) {
      std::string sym, method;
      try {
        sym = row.at("symbol").get<std::string>();
        method = row.at("method").get<std::string>();
      } catch (const json::exception&) {
        fail("report " + path + ": every row needs symbol and method");
      }
      int m = int(method_from_string(method));
      if (m > 3) fail("report " + path + ": method '" + method + "' has no t-test column");
      auto ins = vals.emplace(sym, std::array<std::array<double, 3>, 4>{});
      if (ins.second)
        for (auto& a : ins.first->second) a = {kNaN, kNaN, kNaN};
      for (int q = 0; q < 3; ++q)
        if (row.contains(metric_keys[size_t(q)]) && !row.at(metric_keys[size_t(q)]).is_null())
          ins.first->second[size_t(m)][size_t(q)] =
              row.at(metric_keys[size_t(q)]).get<double>();
    }
  }
  if (vals.empty()) fail("ttest: reports contain no rows");

  CsvTable ct = read_csv(cfg.characteristics);
  if (ct.header.size() < 2 || ct.header[0] != "symbol")
    fail("characteristics " + cfg.characteristics + ": header must be symbol,<name>[,...]");
  std::map<std::string, std::vector<double>> cvals;
  for (const auto& r : ct.rows) {
    std::vector<double> v;
    for (size_t cidx = 1; cidx < r.size(); ++cidx)
      v.push_back(parse_number(r[cidx], "characteristic " + ct.header[cidx] + " for " + r[0]));
    if (!cvals.emplace(r[0], std::move(v)).second)
      fail("characteristics: duplicate symbol " + r[0]);
  }
  std::vector<std::string> symbols;
  std::string missing;
  for (const auto& [sym, _] : vals) {
    symbols.push_back(sym);
    if (!cvals.count(sym)) missing += (missing.empty() ? "" : ", ") + sym;
  }
  if (!missing.empty()) fail("characteristics do not cover: " + missing);

  const int N = int(symbols.size());
  const int k = N / 10;
  if (k < 2)
    fail("ttest: decile groups need at least 20 symbols (have " + std::to_string(N) + ")");

  std::array<bool, 3> have{};
  for (int q = 0; q < 3; ++q) {
    int present = 0;
    std::string gaps;
    for (const auto& sym : symbols)
      for (int m = 0; m < 4; ++m) {
        if (!std::isnan(vals.at(sym)[size_t(m)][size_t(q)])) {
          ++present;
        } else if (gaps.size() < 200) {
          gaps += (gaps.empty() ? "" : ", ") + sym + "/" + kMethodNames[size_t(m)];
        }
      }
    if (present == 0) continue;
    if (present < N * 4)
      fail(std::string("ttest: incomplete ") + metric_keys[size_t(q)] + " coverage: " + gaps);
    have[size_t(q)] = true;
  }
  if (!have[0] && !have[1] && !have[2]) fail("ttest: reports carry no metric values");

  std::string header = "characteristic,statistic";
  for (int q = 0; q < 3; ++q)
    if (have[size_t(q)])
      for (int m = 0; m < 4; ++m)
        header += std::string(",") + metric_names[size_t(q)] + "_" + kMethodNames[size_t(m)];
  std::string human = header + "\n", machine = header + "\n";

  for (size_t cidx = 1; cidx < ct.header.size(); ++cidx) {
    const std::string& cname = ct.header[cidx];
    std::vector<std::pair<double, std::string>> order;
    for (const auto& sym : symbols) order.push_back({cvals.at(sym)[cidx - 1], sym});
    std::sort(order.begin(), order.end());
    if (order.front().first == order.back().first)
      fail("ttest: characteristic '" + cname + "' is constant; decile groups are undefined");

    struct Cell {
      double high_mean, low_mean, t, p;
      std::string stars;
    };
    std::vector<Cell> cells;
    for (int q = 0; q < 3; ++q) {
      if (!have[size_t(q)]) continue;
      for (int m = 0; m < 4; ++m) {
        Vector hv(k), lv(k);
        for (int i = 0; i < k; ++i) {
          hv[i] = vals.at(order[size_t(N - k + i)].second)[size_t(m)][size_t(q)];
          lv[i] = vals.at(order[size_t(i)].second)[size_t(m)][size_t(q)];
        }
        TTestResult tr = two_sample_t(hv, lv);
        cells.push_back({hv.mean(), lv.mean(), tr.t, tr.p, tr.stars});
      }
    }
    auto add_rows = [&cells, &cname](std::string& dst, auto fmt) {
      auto row = [&](const char* stat, auto pick) {
        dst += cname + "," + stat;
        for (const Cell& c : cells) dst += "," + pick(c);
        dst += "\n";
      };
      row("High", [&](const Cell& c) { return fmt(c.high_mean); });
      row("Low", [&](const Cell& c) { return fmt(c.low_mean); });
      row("t.statistic", [&](const Cell& c) { return fmt(c.t); });
      row("p.value", [&](const Cell& c) { return fmt(c.p); });
      row("Sig.", [](const Cell& c) { return c.stars; });
    };
    add_rows(human, [](double v) { return fmt_f3(v); });
    add_rows(machine, [](double v) { return fmt_g17(v); });
  }

  fs::create_directories(cfg.out);
  write_text_file((fs::path(cfg.out) / "ttest.csv").string(), human);
  write_text_file((fs::path(cfg.out) / "ttest_full.csv").string(), machine);
  std::printf("%s", human.c_str());
  std::printf("\nttest: %d symbols, %d per decile group, outputs in %s\n", N, k,
              cfg.out.c_str());
  return 0;
}

// ---------- simulate ----------

struct SimOpts {
  std::string scenario, out;
  std::uint64_t seed = 0;
  int n_days = 0, n_stocks = 0, n_sectors = 0;
  double noise_sigma = 0.0, surface_scale = 0.0;
  std::string surface, start_date;
  CLI::Option *o_seed = nullptr, *o_days = nullptr, *o_stocks = nullptr, *o_sectors = nullptr,
              *o_sigma = nullptr, *o_scale = nullptr, *o_surface = nullptr, *o_start = nullptr;
};

int cmd_simulate(const SimOpts& so) {
  SimScenario sc;
  if (!so.scenario.empty()) {
    json j;
    try {
      j = json::parse(read_text_file(so.scenario));
    } catch (const json::exception& e) {
      fail("scenario " + so.scenario + ": " + std::string(e.what()));
    }
    sc = scenario_from_json(j);
  }
  if (so.o_seed->count()) sc.seed = so.seed;
  if (so.o_days->count()) sc.n_days = so.n_days;
  if (so.o_stocks->count()) sc.n_stocks = so.n_stocks;
  if (so.o_sectors->count()) sc.n_sectors = so.n_sectors;
  if (so.o_sigma->count()) sc.noise_sigma = so.noise_sigma;
  if (so.o_scale->count()) sc.surface_scale = so.surface_scale;
  if (so.o_surface->count()) sc.surface = so.surface;
  if (so.o_start->count()) sc.start_date = so.start_date;
  sc = scenario_from_json(scenario_to_json(sc));  // re-validate after overrides

  SimData d = simulate(sc);
  fs::create_directories(so.out);
  write_sim_dataset(so.out, sc, d);
  std::printf("simulate: %d day(s) x %d stock(s), surface %s, wrote %s\n", sc.n_days,
              sc.n_stocks, sc.surface.c_str(), so.out.c_str());
  return 0;
}

// ---------- selftest ----------

int cmd_selftest() {
  int failures = 0;
  auto check = [&failures](const char* name, auto&& fn) {
    try {
      fn();
      std::printf("ok   %s\n", name);
    } catch (const std::exception& e) {
      ++failures;
      std::printf("FAIL %s: %s\n", name, e.what());
    }
  };

  check("basis partition of unity", [] {
    BasisSystem bs = make_basis();
    double err = (bs.eval.rowwise().sum().array() - 1.0).abs().maxCoeff();
    if (err > 1e-10) fail("max deviation " + fmt_g17(err));
  });

  check("cidr price round trip", [] {
    SimScenario sc;
    sc.n_days = 10;
    sc.seed = 7;
    sc.surface = "zero";
    SimData d = simulate(sc);
    CidrPanel p{"X", weekday_dates(sc.start_date, sc.n_days), d.x};
    TickSeries ts = invert_cidr(p, Vector::Constant(sc.n_days, 400.0));
    CidrPanel back = build_cidr(ts);
    double err = (back.curves - p.curves).cwiseAbs().maxCoeff() /
                 std::max(1.0, p.curves.cwiseAbs().maxCoeff());
    if (err > 1e-10) fail("relative error " + fmt_g17(err));
  });

  check("fpca eigenfunction orthonormality", [] {
    SimScenario sc;
    sc.n_days = 60;
    sc.seed = 3;
    SimData d = simulate(sc);
    FpcaResult f = fpca(d.x_coefs, d.basis.gram, 0.999);
    Matrix g = f.eig.coefs.transpose() * d.basis.gram * f.eig.coefs;
    double err = (g - Matrix::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff();
    if (err > 1e-8) fail("max deviation " + fmt_g17(err));
  });

  check("estimators agree on noiseless data", [] {
    SimScenario sc;
    sc.n_days = 60;
    sc.seed = 11;
    sc.surface = "smooth_coef";
    SimData d = simulate(sc);
    MethodConfig m1;
    m1.fpca_threshold = 1.0;
    Matrix f1 = fit_in_sample(Method::fpcr, m1, d.basis, d.x, d.ys[0]);
    MethodConfig m2;
    m2.kappa_grid = {1e-12};
    Matrix f2 = fit_in_sample(Method::pflm, m2, d.basis, d.x, d.ys[0]);
    double err = (f1 - f2).cwiseAbs().maxCoeff();
    if (err > 1e-5) fail("max fitted-value gap " + fmt_g17(err));
  });

  check("simulation determinism", [] {
    SimScenario sc;
    sc.n_days = 20;
    sc.noise_sigma = 0.5;
    SimData a = simulate(sc), b = simulate(sc);
    if (!(a.x.array() == b.x.array()).all() || !(a.ys[0].array() == b.ys[0].array()).all())
      fail("repeated runs differ");
  });

  check("t statistic degenerate cases", [] {
    Vector g(3);
    g << 1, 2, 3;
    TTestResult r = two_sample_t(g, g);
    if (r.t != 0.0 || r.p != 1.0) fail("identical groups gave t=" + fmt_g17(r.t));
  });

  check("zero predictor rmspe identity", [] {
    SimScenario sc;
    sc.n_days = 12;
    sc.seed = 5;
    sc.noise_sigma = 0.3;
    sc.surface = "sin_cos";
    SimData d = simulate(sc);
    MethodConfig mc;
    ForecastOutcome fo = expanding_window(d.x, d.ys[0], d.basis, Method::zero, mc, 6);
    for (int i = 0; i < kGridSize; ++i) {
      double rms = std::sqrt(fo.realized.col(i).squaredNorm() / double(fo.realized.rows()));
      if (std::abs(rms - fo.rmspe_curve[i]) > 1e-12) fail("column " + std::to_string(i));
    }
  });

  if (failures) {
    std::printf("%d check(s) failed\n", failures);
    return 1;
  }
  std::printf("all checks passed\n");
  return 0;
}

// ---------- option wiring ----------

struct CommonOpts {
  std::string config, ticks, yields, sectors, characteristics, out;
  std::string market, rf_mode;
  int n_basis = 0, order = 0, fpca_force_k = 0, pls_components = 0, pls_max_components = 0,
      pls_folds = 0, n_train = 0, jobs = 0;
  double fpca_threshold = 0.0;
  bool causal = false, no_causal = false;
  std::vector<double> kappa_grid;
  std::vector<std::string> reports;
  CLI::Option *o_market = nullptr, *o_rf = nullptr, *o_n_basis = nullptr, *o_order = nullptr,
              *o_threshold = nullptr, *o_force_k = nullptr, *o_pls_c = nullptr,
              *o_pls_max = nullptr, *o_pls_folds = nullptr, *o_n_train = nullptr,
              *o_jobs = nullptr;
};

void add_common(CLI::App* cmd, CommonOpts& v) {
  cmd->add_option("--config", v.config, "JSON config file; flags override its fields")
      ->check(CLI::ExistingFile);
  cmd->add_option("--ticks", v.ticks, "tick CSV (symbol,date,time,price)");
  cmd->add_option("--yields", v.yields, "risk-free CSV (date,annual_yield_pct)");
  cmd->add_option("--sectors", v.sectors, "sector map CSV (symbol,sector)");
  cmd->add_option("--characteristics", v.characteristics,
                  "firm characteristics CSV (symbol,<name>...)");
  cmd->add_option("--out", v.out, "output directory");
  v.o_market = cmd->add_option("--market", v.market, "market index symbol (default MKT)");
  v.o_n_basis = cmd->add_option("--n-basis", v.n_basis, "number of B-spline basis functions");
  v.o_order = cmd->add_option("--order", v.order, "B-spline order (4 = cubic)");
  v.o_threshold =
      cmd->add_option("--fpca-threshold", v.fpca_threshold, "explained-variance cutoff in (0,1]");
  v.o_force_k = cmd->add_option("--fpca-force-k", v.fpca_force_k,
                                "fixed component count (0 = use threshold)");
  v.o_pls_c = cmd->add_option("--pls-components", v.pls_components,
                              "PLS component count (0 = cross-validate)");
  v.o_pls_max = cmd->add_option("--pls-max-components", v.pls_max_components,
                                "cross-validation search ceiling");
  v.o_pls_folds = cmd->add_option("--pls-folds", v.pls_folds, "contiguous CV folds");
  cmd->add_option("--kappa-grid", v.kappa_grid, "comma-separated smoothing grid")
      ->delimiter(',');
  v.o_rf = cmd->add_option("--rf-mode", v.rf_mode, "risk-free subtraction: flat or cumulative")
               ->check(CLI::IsMember({"flat", "cumulative"}));
  cmd->add_flag("--causal", v.causal, "restrict the model integral to u <= v");
  cmd->add_flag("--no-causal", v.no_causal, "force the unrestricted integral");
  v.o_n_train = cmd->add_option("--n-train", v.n_train, "initial training days for forecasting");
  v.o_jobs = cmd->add_option("--jobs", v.jobs, "worker threads (FCAPM_JOBS as fallback)");
  cmd->add_option("--reports", v.reports, "report JSON files for ttest")->delimiter(',');
}

RunConfig build_config(const CommonOpts& v) {
  RunConfig c = load_run_config(v.config);
  if (!v.ticks.empty()) c.ticks = v.ticks;
  if (!v.yields.empty()) c.yields = v.yields;
  if (!v.sectors.empty()) c.sectors = v.sectors;
  if (!v.characteristics.empty()) c.characteristics = v.characteristics;
  if (!v.out.empty()) c.out = v.out;
  if (v.o_market->count()) c.market = v.market;
  if (v.o_rf->count()) c.rf_mode = v.rf_mode;
  if (v.o_n_basis->count()) c.n_basis = v.n_basis;
  if (v.o_order->count()) c.order = v.order;
  if (v.o_threshold->count()) c.fpca_threshold = v.fpca_threshold;
  if (v.o_force_k->count()) c.fpca_force_k = v.fpca_force_k;
  if (v.o_pls_c->count()) c.pls_components = v.pls_components;
  if (v.o_pls_max->count()) c.pls_max_components = v.pls_max_components;
  if (v.o_pls_folds->count()) c.pls_folds = v.pls_folds;
  if (v.o_n_train->count()) c.n_train = v.n_train;
  if (v.o_jobs->count()) c.jobs = v.jobs;
  if (!v.kappa_grid.empty()) c.kappa_grid = v.kappa_grid;
  if (!v.reports.empty()) c.reports = v.reports;
  if (v.causal) c.causal = true;
  else if (v.no_causal) c.causal = false;
  validate_config(c);
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"intraday functional CAPM: CIDR curves, beta surfaces, forecast evaluation"};
  app.require_subcommand(1);

  CommonOpts fit_o, fc_o, tt_o;
  auto* c_fit = app.add_subcommand(
      "fit", "fit all four methods per stock; write metrics, surfaces, diagnostics");
  add_common(c_fit, fit_o);
  auto* c_fc =
      app.add_subcommand("forecast", "expanding-window forecast evaluation (RMSPE per method)");
  add_common(c_fc, fc_o);
  auto* c_tt = app.add_subcommand(
      "ttest", "decile-split Welch t-tests of metrics against firm characteristics");
  add_common(c_tt, tt_o);

  SimOpts sim_o;
  auto* c_sim =
      app.add_subcommand("simulate", "generate a synthetic dataset with a planted beta surface");
  c_sim->add_option("--scenario", sim_o.scenario, "scenario JSON file")
      ->check(CLI::ExistingFile);
  c_sim->add_option("--out", sim_o.out, "output directory")->required();
  sim_o.o_seed = c_sim->add_option("--seed", sim_o.seed, "master RNG seed");
  sim_o.o_days = c_sim->add_option("--n-days", sim_o.n_days, "trading days");
  sim_o.o_stocks = c_sim->add_option("--n-stocks", sim_o.n_stocks, "stock count");
  sim_o.o_sectors = c_sim->add_option("--n-sectors", sim_o.n_sectors, "sector label count");
  sim_o.o_sigma = c_sim->add_option("--noise-sigma", sim_o.noise_sigma, "grid noise sd");
  sim_o.o_scale = c_sim->add_option("--surface-scale", sim_o.surface_scale, "surface amplitude");
  sim_o.o_surface = c_sim->add_option(
      "--surface", sim_o.surface,
      "planted kind: zero, sin_cos, identity_coef, smooth_coef, triangular_coef");
  sim_o.o_start = c_sim->add_option("--start-date", sim_o.start_date, "first trading date");

  auto* c_self = app.add_subcommand("selftest", "quick built-in consistency checks");

  CLI11_PARSE(app, argc, argv);

  try {
    if (c_fit->parsed()) return cmd_fit(build_config(fit_o));
    if (c_fc->parsed()) return cmd_forecast(build_config(fc_o));
    if (c_tt->parsed()) return cmd_ttest(build_config(tt_o));
    if (c_sim->parsed()) return cmd_simulate(sim_o);
    if (c_self->parsed()) return cmd_selftest();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
