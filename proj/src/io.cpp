#include "dbvar/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "dbvar/errors.hpp"
#include "dbvar/rational.hpp"

namespace dbvar {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string> split(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t comma = line.find(',', start);
    out.emplace_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

// Non-empty data rows, each with its 1-based line number.
std::vector<std::pair<int, std::vector<std::string>>> read_rows(std::istream& in) {
  std::vector<std::pair<int, std::vector<std::string>>> rows;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (trim(line).empty()) continue;
    rows.emplace_back(number, split(line));
  }
  return rows;
}

int parse_id(const std::string& text, const std::string& what) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || v < 1) throw ValidationError(what + ": expected a positive integer id, got \"" + text + "\"");
  return v;
}

void expect_header(const std::vector<std::string>& got, const std::vector<std::string>& want, const std::string& what) {
  if (got != want) {
    std::string w;
    for (const auto& s : want) w += (w.empty() ? "" : ",") + s;
    throw ValidationError(what + ": expected header \"" + w + "\"");
  }
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read " + path);
  return in;
}

std::string where(const std::string& what, int line) { return what + " line " + std::to_string(line); }

}  // namespace

std::string format_double(double v) {
  if (v == 0.0) return "0";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

double parse_number(std::string_view text, const std::string& what) {
  text = trim(text);
  if (text.find('/') != std::string_view::npos) {
    auto r = Rational::parse(text);
    if (!r) throw ValidationError(what + ": cannot parse \"" + std::string(text) + "\"");
    return r->to_double();
  }
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
    throw ValidationError(what + ": cannot parse number \"" + std::string(text) + "\"");
  }
  if (!std::isfinite(v)) throw ValidationError(what + ": non-finite value");
  return v;
}

void write_matrix_csv(std::ostream& out, const Eigen::MatrixXd& m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << j + 1;
  out << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << format_double(m(i, j));
    out << '\n';
  }
}

Eigen::MatrixXd read_matrix_csv(std::istream& in, const std::string& what) {
  auto rows = read_rows(in);
  if (rows.empty()) throw ValidationError(what + ": empty file");
  const auto& header = rows.front().second;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (header[j] != std::to_string(j + 1)) throw ValidationError(what + ": header must list flat indices 1.." + std::to_string(header.size()));
  }
  const auto cols = static_cast<Eigen::Index>(header.size());
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size() - 1), cols);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& [line, cells] = rows[i];
    if (static_cast<Eigen::Index>(cells.size()) != cols) throw ValidationError(where(what, line) + ": expected " + std::to_string(cols) + " values");
    for (Eigen::Index j = 0; j < cols; ++j) m(static_cast<Eigen::Index>(i - 1), j) = parse_number(cells[static_cast<std::size_t>(j)], where(what, line));
  }
  return m;
}

void write_matrix_csv_file(const std::string& path, const Eigen::MatrixXd& m) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path);
  write_matrix_csv(out, m);
}

Eigen::MatrixXd read_matrix_csv_file(const std::string& path) {
  auto in = open_in(path);
  return read_matrix_csv(in, path);
}

PotentialOutcomes read_outcomes_csv(std::istream& in, std::optional<IndexLayout> layout) {
  const std::string what = "outcomes";
  auto rows = read_rows(in);
  if (rows.empty()) throw ValidationError(what + ": empty file");
  expect_header(rows.front().second, {"unit_id", "arm", "y"}, what);
  std::map<std::pair<int, int>, double> values;
  int max_unit = 0, max_arm = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& [line, cells] = rows[i];
    if (cells.size() != 3) throw ValidationError(where(what, line) + ": expected 3 columns");
    const int unit = parse_id(cells[0], where(what, line));
    const int arm = parse_id(cells[1], where(what, line));
    if (!values.emplace(std::make_pair(unit, arm), parse_number(cells[2], where(what, line))).second) {
      throw ValidationError(where(what, line) + ": duplicate (unit, arm) pair");
    }
    max_unit = std::max(max_unit, unit);
    max_arm = std::max(max_arm, arm);
  }
  const IndexLayout lay = layout ? *layout : IndexLayout(max_arm, max_unit);
  if (max_unit > lay.units() || max_arm > lay.arms()) throw LayoutMismatch(what + ": ids exceed the design layout");
  Eigen::VectorXd y(lay.size());
  for (int r = 0; r < lay.arms(); ++r) {
    for (int i = 0; i < lay.units(); ++i) {
      auto it = values.find({i + 1, r + 1});
      if (it == values.end()) throw ValidationError(what + ": missing unit " + std::to_string(i + 1) + ", arm " + std::to_string(r + 1));
      y(lay.flat(r, i)) = it->second;
    }
  }
  return {lay, y};
}

PotentialOutcomes read_outcomes_csv_file(const std::string& path, std::optional<IndexLayout> layout) {
  auto in = open_in(path);
  return read_outcomes_csv(in, layout);
}

Eigen::MatrixXd read_covariates_csv(std::istream& in, int n) {
  const std::string what = "covariates";
  auto rows = read_rows(in);
  if (rows.empty()) throw ValidationError(what + ": empty file");
  const auto& header = rows.front().second;
  if (header.empty() || header[0] != "unit_id") throw ValidationError(what + ": first column must be unit_id");
  for (std::size_t j = 1; j < header.size(); ++j) {
    if (header[j] != "x" + std::to_string(j)) throw ValidationError(what + ": covariate columns must be named x1..xl");
  }
  const auto l = static_cast<Eigen::Index>(header.size() - 1);
  Eigen::MatrixXd x(n, l);
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& [line, cells] = rows[i];
    if (cells.size() != header.size()) throw ValidationError(where(what, line) + ": expected " + std::to_string(header.size()) + " columns");
    const int unit = parse_id(cells[0], where(what, line));
    if (unit > n) throw LayoutMismatch(where(what, line) + ": unit id exceeds n = " + std::to_string(n));
    if (seen[static_cast<std::size_t>(unit - 1)]++) throw ValidationError(where(what, line) + ": duplicate unit");
    for (Eigen::Index j = 0; j < l; ++j) x(unit - 1, j) = parse_number(cells[static_cast<std::size_t>(j + 1)], where(what, line));
  }
  for (int i = 0; i < n; ++i) {
    if (!seen[static_cast<std::size_t>(i)]) throw LayoutMismatch(what + ": missing unit " + std::to_string(i + 1));
  }
  return x;
}

Eigen::MatrixXd read_covariates_csv_file(const std::string& path, int n) {
  auto in = open_in(path);
  return read_covariates_csv(in, n);
}

ObservedData read_observed_csv(std::istream& in, const IndexLayout& layout) {
  const std::string what = "observed data";
  auto rows = read_rows(in);
  if (rows.empty()) throw ValidationError(what + ": empty file");
  expect_header(rows.front().second, {"unit_id", "arm_assigned", "y_obs"}, what);
  std::vector<int> arms(static_cast<std::size_t>(layout.units()), -1);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(layout.size());
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& [line, cells] = rows[i];
    if (cells.size() != 3) throw ValidationError(where(what, line) + ": expected 3 columns");
    const int unit = parse_id(cells[0], where(what, line));
    const int arm = parse_id(cells[1], where(what, line));
    if (unit > layout.units() || arm > layout.arms()) throw LayoutMismatch(where(what, line) + ": ids exceed the design layout");
    if (arms[static_cast<std::size_t>(unit - 1)] != -1) throw ValidationError(where(what, line) + ": duplicate unit");
    arms[static_cast<std::size_t>(unit - 1)] = arm - 1;
    y(layout.flat(arm - 1, unit - 1)) = parse_number(cells[2], where(what, line));
  }
  for (int i = 0; i < layout.units(); ++i) {
    if (arms[static_cast<std::size_t>(i)] == -1) throw LayoutMismatch(what + ": missing unit " + std::to_string(i + 1));
  }
  return {Assignment(layout, std::move(arms)), y};
}

ObservedData read_observed_csv_file(const std::string& path, const IndexLayout& layout) {
  auto in = open_in(path);
  return read_observed_csv(in, layout);
}

Eigen::VectorXd read_weights_csv_file(const std::string& path, const IndexLayout& layout) {
  auto in = open_in(path);
  std::stringstream renamed;
  std::string header;
  std::getline(in, header);
  if (trim(header) != "unit_id,arm,m") throw ValidationError(path + ": expected header \"unit_id,arm,m\"");
  renamed << "unit_id,arm,y\n" << in.rdbuf();
  return read_outcomes_csv(renamed, layout).y;
}

Eigen::VectorXd parse_vector_list(std::string_view text, const std::string& what) {
  auto cells = split(text);
  Eigen::VectorXd v(static_cast<Eigen::Index>(cells.size()));
  for (std::size_t i = 0; i < cells.size(); ++i) v(static_cast<Eigen::Index>(i)) = parse_number(cells[i], what);
  return v;
}

}  // namespace dbvar
