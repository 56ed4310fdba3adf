#pragma once

#include <Eigen/Dense>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "auxlearn/errors.hpp"

namespace auxlearn::csv {

// Shortest decimal string that round-trips to the same double.  Keeps
// output files byte-stable across runs.
inline std::string format_double(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  if (ec != std::errc()) {
    throw NumericalError("failed to format a double value");
  }
  return std::string(buf, ptr);
}

inline double parse_double(std::string_view cell, const std::string& context) {
  // Trim ASCII whitespace and a possible trailing CR from Windows files.
  while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) {
    cell.remove_prefix(1);
  }
  while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t' ||
                           cell.back() == '\r')) {
    cell.remove_suffix(1);
  }
  if (cell.empty()) {
    throw IoError("empty cell " + context);
  }
  double value = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw IoError("non-numeric cell '" + std::string(cell) + "' " + context);
  }
  return value;
}

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : out_(path) {
    if (!out_) {
      throw IoError("cannot open '" + path.string() + "' for writing");
    }
    path_ = path.string();
  }

  void comment(std::string_view line) { out_ << "# " << line << "\n"; }

  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i > 0) out_ << ',';
      out_ << cells[i];
    }
    out_ << '\n';
  }

  void row(std::initializer_list<std::string> cells) {
    row(std::vector<std::string>(cells));
  }

  void close() {
    out_.close();
    if (out_.fail()) {
      throw IoError("failed while writing '" + path_ + "'");
    }
  }

 private:
  std::ofstream out_;
  std::string path_;
};

struct ParsedCsv {
  std::vector<std::string> comments;  // leading '#' lines, prefix stripped
  std::vector<std::vector<std::string>> rows;  // header row included if any
};

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  if (!cells.empty() && !cells.back().empty() && cells.back().back() == '\r') {
    cells.back().pop_back();
  }
  return cells;
}

inline ParsedCsv read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open '" + path.string() + "' for reading");
  }
  ParsedCsv parsed;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::size_t at = 1;
      if (at < line.size() && line[at] == ' ') ++at;
      parsed.comments.push_back(line.substr(at));
      continue;
    }
    parsed.rows.push_back(split_line(line));
  }
  if (in.bad()) {
    throw IoError("read failure on '" + path.string() + "'");
  }
  return parsed;
}

// Numeric matrix reader.  A first row that fails to parse as numbers is
// treated as a header and skipped.
inline Eigen::MatrixXd read_matrix(const std::filesystem::path& path) {
  const ParsedCsv parsed = read_file(path);
  if (parsed.rows.empty()) {
    throw IoError("'" + path.string() + "' contains no data rows");
  }
  std::size_t first = 0;
  bool header = false;
  for (const std::string& cell : parsed.rows[0]) {
    try {
      parse_double(cell, "");
    } catch (const IoError&) {
      header = true;
      break;
    }
  }
  if (header) first = 1;
  if (first >= parsed.rows.size()) {
    throw IoError("'" + path.string() + "' contains a header but no data");
  }
  const std::size_t cols = parsed.rows[first].size();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(parsed.rows.size() - first),
                    static_cast<Eigen::Index>(cols));
  for (std::size_t r = first; r < parsed.rows.size(); ++r) {
    if (parsed.rows[r].size() != cols) {
      throw IoError("row " + std::to_string(r + 1) + " of '" + path.string() +
                    "' has " + std::to_string(parsed.rows[r].size()) +
                    " cells, expected " + std::to_string(cols));
    }
    for (std::size_t c = 0; c < cols; ++c) {
      m(static_cast<Eigen::Index>(r - first), static_cast<Eigen::Index>(c)) =
          parse_double(parsed.rows[r][c],
                       "at row " + std::to_string(r + 1) + ", column " +
                           std::to_string(c + 1) + " of '" + path.string() +
                           "'");
    }
  }
  return m;
}

inline void write_matrix(const std::filesystem::path& path,
                         const Eigen::MatrixXd& m,
                         const std::string& comment,
                         const std::vector<std::string>& column_names = {}) {
  Writer w(path);
  if (!comment.empty()) w.comment(comment);
  if (!column_names.empty()) {
    if (static_cast<Eigen::Index>(column_names.size()) != m.cols()) {
      throw DimensionError("column name count does not match matrix width");
    }
    w.row(column_names);
  }
  std::vector<std::string> cells(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      cells[static_cast<std::size_t>(j)] = format_double(m(i, j));
    }
    w.row(cells);
  }
  w.close();
}

}  // namespace auxlearn::csv
