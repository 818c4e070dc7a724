#pragma once

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fcapm/grid.hpp"

namespace fcapm {

// machine format: 17 significant digits survive a double round trip
inline std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// human tables use fixed 3 decimals
inline std::string fmt_f3(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open file: " + path);
  CsvTable t;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto cells = split_csv_line(line);
    if (first) {
      t.header = cells;
      first = false;
    } else {
      t.rows.push_back(cells);
    }
  }
  if (first) fail("empty file: " + path);
  return t;
}

// Strict header check: every column must match by name and position.
// Errors name the first offending column so bad files are easy to fix.
inline void expect_header(const CsvTable& t, const std::vector<std::string>& want,
                          const std::string& what) {
  for (size_t i = 0; i < want.size() || i < t.header.size(); ++i) {
    if (i >= t.header.size())
      fail(what + ": missing column '" + want[i] + "'");
    if (i >= want.size())
      fail(what + ": unknown column '" + t.header[i] + "'");
    if (t.header[i] != want[i])
      fail(what + ": unknown column '" + t.header[i] + "' (expected '" + want[i] + "')");
  }
}

inline double parse_number(const std::string& s, const std::string& what) {
  const char* begin = s.c_str();
  char* end = nullptr;
  double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0')
    fail(what + ": cannot parse number '" + s + "'");
  return v;
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("cannot write file: " + path);
  out << content;
  if (!out) fail("write failed: " + path);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// dense matrix as machine-format CSV, no header
inline std::string matrix_to_csv(const Matrix& m) {
  std::string out;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out += ',';
      out += fmt_g17(m(i, j));
    }
    out += '\n';
  }
  return out;
}

}  // namespace fcapm
