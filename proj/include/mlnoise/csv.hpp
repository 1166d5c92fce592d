// Copyright 2026 The mlnoise Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Minimal CSV reading and writing: no header unless the caller writes one,
// comma separated, LF or CRLF line endings.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <type_traits>
#include <vector>

#include "mlnoise/matrix.hpp"

namespace mlnoise::csv {

using Table = std::vector<std::vector<std::string>>;

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

inline std::vector<std::string> split_line(std::string_view line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    auto comma = line.find(',', start);
    auto cell = line.substr(start, comma == std::string_view::npos ? line.npos : comma - start);
    cells.emplace_back(trim(cell));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

/// Parses CSV text into cells. Blank lines are skipped.
inline Table parse(std::string_view text) {
  Table table;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto nl = text.find('\n', start);
    auto line = text.substr(start, nl == std::string_view::npos ? text.npos : nl - start);
    if (!trim(line).empty()) table.push_back(split_line(line));
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
  return table;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Table read(const std::filesystem::path& path) { return parse(read_file(path)); }

/// Writes via a temporary file and rename so readers never see partial output.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw ValidationError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

/// Shortest representation that round-trips exactly.
inline std::string format_real(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) return "nan";
  return std::string(buf, end);
}

inline double parse_real(std::string_view cell, std::size_t row, std::size_t col,
                         std::string_view file) {
  double v = 0.0;
  auto first = cell.data();
  auto last = cell.data() + cell.size();
  if (!cell.empty() && cell.front() == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (cell.empty() || ec != std::errc{} || ptr != last || !std::isfinite(v)) {
    throw ValidationError(std::string(file) + ": unparseable cell '" + std::string(cell) +
                          "' at row " + std::to_string(row + 1) + ", column " +
                          std::to_string(col + 1));
  }
  return v;
}

inline FeatureMatrix to_real_matrix(const Table& table, std::string_view file) {
  if (table.empty()) throw ValidationError(std::string(file) + ": no rows");
  const std::size_t width = table.front().size();
  FeatureMatrix m(table.size(), width);
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (table[i].size() != width) {
      throw ValidationError(std::string(file) + ": row " + std::to_string(i + 1) + " has " +
                            std::to_string(table[i].size()) + " cells, expected " +
                            std::to_string(width));
    }
    for (std::size_t j = 0; j < width; ++j) m(i, j) = parse_real(table[i][j], i, j, file);
  }
  return m;
}

inline LabelMatrix to_label_matrix(const Table& table, std::string_view file) {
  if (table.empty()) throw ValidationError(std::string(file) + ": no rows");
  const std::size_t width = table.front().size();
  LabelMatrix m(table.size(), width);
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (table[i].size() != width) {
      throw ValidationError(std::string(file) + ": row " + std::to_string(i + 1) + " has " +
                            std::to_string(table[i].size()) + " cells, expected " +
                            std::to_string(width));
    }
    for (std::size_t j = 0; j < width; ++j) {
      const auto& cell = table[i][j];
      if (cell != "0" && cell != "1") {
        throw ValidationError(std::string(file) + ": label cell '" + cell + "' at row " +
                              std::to_string(i + 1) + ", column " + std::to_string(j + 1) +
                              " is not 0 or 1");
      }
      m(i, j) = cell == "1" ? 1 : 0;
    }
  }
  return m;
}

template <typename T>
std::string to_text(const Matrix<T>& m) {
  std::string out;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (j) out += ',';
      if constexpr (std::is_same_v<T, std::uint8_t>) {
        out += m(i, j) ? '1' : '0';
      } else {
        out += format_real(static_cast<double>(m(i, j)));
      }
    }
    out += '\n';
  }
  return out;
}

template <typename T>
void write_matrix(const std::filesystem::path& path, const Matrix<T>& m) {
  write_file_atomic(path, to_text(m));
}

inline FeatureMatrix read_real_matrix(const std::filesystem::path& path) {
  return to_real_matrix(read(path), path.string());
}

inline LabelMatrix read_label_matrix(const std::filesystem::path& path) {
  return to_label_matrix(read(path), path.string());
}

}  // namespace mlnoise::csv
