#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "fcapm/csv.hpp"
#include "fcapm/grid.hpp"

namespace fcapm {

inline bool is_iso_date(const std::string& s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
  for (size_t i : {0u, 1u, 2u, 3u, 5u, 6u, 8u, 9u})
    if (s[i] < '0' || s[i] > '9') return false;
  int m = (s[5] - '0') * 10 + (s[6] - '0');
  int d = (s[8] - '0') * 10 + (s[9] - '0');
  return m >= 1 && m <= 12 && d >= 1 && d <= 31;
}

// ---------- raw ticks ----------

struct RawDay {
  std::string date;
  std::vector<std::pair<int, double>> obs;  // (slot, price), file order
};

struct RawTicks {
  std::string symbol;
  std::vector<RawDay> days;  // sorted by date
};

// header: symbol,date,time,price (ISO dates, HH:MM grid times)
inline std::map<std::string, RawTicks> parse_ticks(const std::string& path) {
  CsvTable t = read_csv(path);
  expect_header(t, {"symbol", "date", "time", "price"}, "tick file " + path);
  std::map<std::string, std::map<std::string, RawDay>> acc;
  std::map<std::string, std::set<std::pair<std::string, int>>> seen;
  for (size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    std::string where = path + " row " + std::to_string(r + 2);
    if (row.size() != 4) fail(where + ": expected 4 fields, got " + std::to_string(row.size()));
    const std::string& sym = row[0];
    const std::string& date = row[1];
    const std::string& time = row[2];
    if (sym.empty()) fail(where + ": empty symbol");
    if (!is_iso_date(date)) fail(where + ": bad date '" + date + "' (want YYYY-MM-DD)");
    int slot = slot_of_time(time);
    if (slot < 0) fail(where + ": time '" + time + "' is not on the 5-minute grid 09:30..16:00");
    double price = parse_number(row[3], where);
    if (!(price > 0.0))
      fail(where + ": nonpositive price for " + sym + " on " + date + " at " + time);
    if (!seen[sym].insert({date, slot}).second)
      fail(where + ": duplicate tick for " + sym + " on " + date + " at " + time);
    RawDay& day = acc[sym][date];
    day.date = date;
    day.obs.emplace_back(slot, price);
  }
  std::map<std::string, RawTicks> out;
  for (auto& [sym, by_date] : acc) {
    RawTicks rt;
    rt.symbol = sym;
    for (auto& [date, day] : by_date) rt.days.push_back(std::move(day));
    out.emplace(sym, std::move(rt));
  }
  return out;
}

// ---------- gap-filled series ----------

struct TickSeries {
  std::string symbol;
  std::vector<std::string> dates;
  Matrix prices;  // n_days x 78, every slot filled
};

// Last-observation-carried-forward per day; a leading gap takes the first
// observed price of the day. Idempotent on complete days.
inline TickSeries fill_gaps(const RawTicks& raw) {
  TickSeries out;
  out.symbol = raw.symbol;
  out.prices.resize(Eigen::Index(raw.days.size()), kGridSize);
  for (size_t d = 0; d < raw.days.size(); ++d) {
    const RawDay& day = raw.days[d];
    if (day.obs.empty())
      fail("no observations for " + raw.symbol + " on " + day.date);
    Vector row = Vector::Constant(kGridSize, -1.0);
    for (auto [slot, price] : day.obs) row[slot] = price;
    double first_seen = -1.0;
    for (int i = 0; i < kGridSize && first_seen < 0; ++i)
      if (row[i] > 0) first_seen = row[i];
    double last = first_seen;
    for (int i = 0; i < kGridSize; ++i) {
      if (row[i] > 0)
        last = row[i];
      else
        row[i] = last;
    }
    out.prices.row(Eigen::Index(d)) = row;
    out.dates.push_back(day.date);
  }
  return out;
}

// ---------- CIDR panels ----------

// Cumulative intraday return: 100 * (ln P(u_i) - ln P(u_1)). The 09:30
// column is exactly zero by construction.
struct CidrPanel {
  std::string symbol;
  std::vector<std::string> dates;
  Matrix curves;  // n_days x 78
};

inline CidrPanel build_cidr(const TickSeries& ts) {
  CidrPanel out;
  out.symbol = ts.symbol;
  out.dates = ts.dates;
  out.curves.resize(ts.prices.rows(), kGridSize);
  for (Eigen::Index t = 0; t < ts.prices.rows(); ++t) {
    double open = ts.prices(t, 0);
    if (!(open > 0.0))
      fail("nonpositive price for " + ts.symbol + " on " + ts.dates[t] + " at " + slot_time(0));
    double log_open = std::log(open);
    for (int i = 0; i < kGridSize; ++i) {
      double p = ts.prices(t, i);
      if (!(p > 0.0))
        fail("nonpositive price for " + ts.symbol + " on " + ts.dates[t] + " at " + slot_time(i));
      out.curves(t, i) = 100.0 * (std::log(p) - log_open);
    }
  }
  return out;
}

// inverse transform; open_prices gives each day's 09:30 price
inline TickSeries invert_cidr(const CidrPanel& panel, const Vector& open_prices) {
  if (open_prices.size() != panel.curves.rows())
    fail("invert_cidr: need one open price per day");
  TickSeries out;
  out.symbol = panel.symbol;
  out.dates = panel.dates;
  out.prices.resize(panel.curves.rows(), kGridSize);
  for (Eigen::Index t = 0; t < panel.curves.rows(); ++t) {
    double open = open_prices[t];
    if (!(open > 0.0))
      fail("invert_cidr: nonpositive open price on " + panel.dates[t]);
    for (int i = 0; i < kGridSize; ++i)
      out.prices(t, i) = std::exp(panel.curves(t, i) / 100.0) * open;
  }
  return out;
}

// ---------- risk-free rates ----------

struct RiskFreeSeries {
  std::vector<std::string> dates;
  Vector annual_pct;     // one-year treasury par yield, percent
  Vector daily_rate;     // annual / 251
  Vector intraday_rate;  // daily / 78
  std::map<std::string, int> index;
};

// header: date,annual_yield_pct
inline RiskFreeSeries parse_yields(const std::string& path) {
  CsvTable t = read_csv(path);
  expect_header(t, {"date", "annual_yield_pct"}, "yield file " + path);
  RiskFreeSeries out;
  out.annual_pct.resize(Eigen::Index(t.rows.size()));
  out.daily_rate.resize(Eigen::Index(t.rows.size()));
  out.intraday_rate.resize(Eigen::Index(t.rows.size()));
  for (size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    std::string where = path + " row " + std::to_string(r + 2);
    if (row.size() != 2) fail(where + ": expected 2 fields");
    if (!is_iso_date(row[0])) fail(where + ": bad date '" + row[0] + "'");
    if (out.index.count(row[0])) fail(where + ": duplicate date " + row[0]);
    double annual = parse_number(row[1], where);
    int i = int(out.dates.size());
    out.dates.push_back(row[0]);
    out.index[row[0]] = i;
    out.annual_pct[i] = annual;
    out.daily_rate[i] = annual / 251.0;
    out.intraday_rate[i] = out.daily_rate[i] / 78.0;
  }
  return out;
}

// ---------- excess panels ----------

enum class RfMode { flat, cumulative };

inline RfMode rf_mode_from_string(const std::string& s) {
  if (s == "flat") return RfMode::flat;
  if (s == "cumulative") return RfMode::cumulative;
  fail("unknown rf_mode '" + s + "' (want flat or cumulative)");
}

struct ExcessPanel {
  std::string symbol;
  std::vector<std::string> dates;
  Matrix curves;      // n_days x 78
  Matrix rf_applied;  // what was subtracted per cell, kept for exact add-back
};

// flat: subtract the scalar intraday rate at every grid point;
// cumulative: subtract intraday_rate * i at 0-based slot i, so the 09:30
// anchor stays at zero and the subtrahend accrues across the day.
inline ExcessPanel to_excess(const CidrPanel& panel, const RiskFreeSeries& rf,
                             RfMode mode = RfMode::flat) {
  ExcessPanel out;
  out.symbol = panel.symbol;
  out.dates = panel.dates;
  out.curves.resize(panel.curves.rows(), kGridSize);
  out.rf_applied.resize(panel.curves.rows(), kGridSize);
  for (Eigen::Index t = 0; t < panel.curves.rows(); ++t) {
    auto it = rf.index.find(panel.dates[t]);
    if (it == rf.index.end())
      fail("no risk-free yield for " + panel.dates[t]);
    double rate = rf.intraday_rate[it->second];
    for (int i = 0; i < kGridSize; ++i) {
      double sub = (mode == RfMode::flat) ? rate : rate * i;
      out.rf_applied(t, i) = sub;
      out.curves(t, i) = panel.curves(t, i) - sub;
    }
  }
  return out;
}

inline CidrPanel add_back_rf(const ExcessPanel& ex) {
  CidrPanel out;
  out.symbol = ex.symbol;
  out.dates = ex.dates;
  out.curves = ex.curves + ex.rf_applied;
  return out;
}

}  // namespace fcapm
