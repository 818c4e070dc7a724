#pragma once

#include <Eigen/Dense>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace fcapm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

[[noreturn]] inline void fail(const std::string& msg) { throw Error(msg); }

// 5-minute trading grid, 78 slots mapped onto [0,1] so slot i sits at i/77.
// Wall-clock labels run 09:30, 09:35, ..., 15:50 and then jump to the 16:00
// session close: a uniform 5-minute ladder from 09:30 to 16:00 would need 79
// stamps, so the last bar is merged into the close and 15:55 never labels a
// slot. The abscissae stay equally spaced regardless of the clock labels.
constexpr int kGridSize = 78;

inline const Vector& intraday_grid() {
  static const Vector g = [] {
    Vector v(kGridSize);
    for (int i = 0; i < kGridSize; ++i) v[i] = double(i) / (kGridSize - 1);
    return v;
  }();
  return g;
}

inline std::string slot_time(int slot) {
  if (slot < 0 || slot >= kGridSize) fail("slot_time: slot out of range");
  if (slot == kGridSize - 1) return "16:00";
  int minutes = 9 * 60 + 30 + 5 * slot;
  char buf[8];
  std::snprintf(buf, sizeof buf, "%02d:%02d", minutes / 60, minutes % 60);
  return buf;
}

// -1 when the string is not one of the 78 grid times (15:55 is not a slot)
inline int slot_of_time(const std::string& hhmm) {
  if (hhmm.size() != 5 || hhmm[2] != ':') return -1;
  for (char c : {hhmm[0], hhmm[1], hhmm[3], hhmm[4]})
    if (c < '0' || c > '9') return -1;
  int h = (hhmm[0] - '0') * 10 + (hhmm[1] - '0');
  int m = (hhmm[3] - '0') * 10 + (hhmm[4] - '0');
  int minutes = h * 60 + m - (9 * 60 + 30);
  if (minutes < 0 || minutes % 5 != 0) return -1;
  int slot = minutes / 5;
  if (slot == kGridSize) return kGridSize - 1;
  return slot < kGridSize - 1 ? slot : -1;
}

// trapezoidal quadrature weights for strictly increasing abscissae
inline Vector trapezoid_weights(const Vector& x) {
  const int n = int(x.size());
  if (n < 2) fail("trapezoid_weights: need at least two points");
  for (int i = 1; i < n; ++i)
    if (!(x[i] > x[i - 1])) fail("trapezoid_weights: abscissae must be strictly increasing");
  Vector w = Vector::Zero(n);
  for (int i = 0; i + 1 < n; ++i) {
    double h = 0.5 * (x[i + 1] - x[i]);
    w[i] += h;
    w[i + 1] += h;
  }
  return w;
}

inline double trapz(const Vector& w, const Vector& f) {
  if (w.size() != f.size()) fail("trapz: weight/value size mismatch");
  return w.dot(f);
}

}  // namespace fcapm
