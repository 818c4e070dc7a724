#pragma once

#include <cmath>
#include <limits>

#include "fcapm/ingest.hpp"

namespace fcapm {

// Classical daily CAPM baseline. Daily returns are close-to-close log
// returns in percent off the 16:00 slot; the first day has no predecessor
// and is dropped.
struct DailyReturns {
  std::vector<std::string> dates;  // aligned with values, first input day absent
  Vector values;
};

inline DailyReturns daily_returns(const TickSeries& ts) {
  const Eigen::Index n = ts.prices.rows();
  if (n < 2) fail("daily_returns: need at least two days for a close-to-close return");
  DailyReturns out;
  out.values.resize(n - 1);
  for (Eigen::Index t = 1; t < n; ++t) {
    double prev = ts.prices(t - 1, kGridSize - 1);
    double cur = ts.prices(t, kGridSize - 1);
    if (!(prev > 0.0) || !(cur > 0.0))
      fail("daily_returns: nonpositive close for " + ts.symbol + " on " + ts.dates[size_t(t)]);
    out.values[t - 1] = 100.0 * (std::log(cur) - std::log(prev));
    out.dates.push_back(ts.dates[size_t(t)]);
  }
  return out;
}

struct CapmFit {
  double alpha = 0.0;
  double beta = 0.0;
};

// OLS of asset excess returns on market excess returns, with intercept
inline CapmFit fit_capm(const Vector& asset_excess, const Vector& market_excess) {
  const Eigen::Index n = asset_excess.size();
  if (market_excess.size() != n) fail("fit_capm: length mismatch");
  if (n < 3) fail("fit_capm: need at least three observations");
  double xm = market_excess.mean(), ym = asset_excess.mean();
  double sxx = (market_excess.array() - xm).square().sum();
  // a constant series can leave roundoff-sized scatter around its mean
  const double eps = std::numeric_limits<double>::epsilon();
  double sxx_floor = 64.0 * eps * eps * double(n) * std::max(1.0, xm * xm);
  if (!(sxx > sxx_floor)) fail("fit_capm: zero-variance market excess returns");
  double sxy = ((market_excess.array() - xm) * (asset_excess.array() - ym)).sum();
  CapmFit f;
  f.beta = sxy / sxx;
  f.alpha = ym - f.beta * xm;
  return f;
}

inline double predict_capm(const CapmFit& f, double rf, double market_excess) {
  return rf + f.alpha + f.beta * market_excess;
}

}  // namespace fcapm
