#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <random>
#include <string>

#include <catch2/catch_amalgamated.hpp>
#include <fcapm/fcapm.hpp>

namespace th {

using fcapm::Matrix;
using fcapm::Vector;

// scratch directory, removed on scope exit
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path = std::filesystem::temp_directory_path() /
           ("fcapm_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

inline Matrix random_normal(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed,
                            double sd = 1.0) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> d(0.0, sd);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = d(gen);
  return m;
}

inline Matrix random_uniform(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed,
                             double lo, double hi) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> d(lo, hi);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = d(gen);
  return m;
}

// SVD pseudoinverse; reference for the regression oracles, deliberately
// independent of the solvers used by the library
inline Matrix pinv(const Matrix& a) {
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  double cut = s.size() ? 1e-12 * s[0] * double(std::max(a.rows(), a.cols())) : 0.0;
  Vector inv(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) inv[i] = s[i] > cut ? 1.0 / s[i] : 0.0;
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

// fitted values of mean-centered least squares of Y on X
inline Matrix centered_ols_fitted(const Matrix& X, const Matrix& Y) {
  Eigen::RowVectorXd xm = X.colwise().mean(), ym = Y.colwise().mean();
  Matrix Xc = X.rowwise() - xm;
  Matrix Yc = Y.rowwise() - ym;
  Matrix fitted = Xc * (pinv(Xc) * Yc);
  fitted.rowwise() += ym;
  return fitted;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace th
