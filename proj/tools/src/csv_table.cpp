#include "csv_table.hpp"

#include "errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace hglmm::cli {

namespace {

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

CsvTable CsvTable::read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return parse(os.str(), path.string());
}

CsvTable CsvTable::parse(const std::string& text, const std::string& source) {
  CsvTable t;
  t.source_ = source;
  std::istringstream is(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    if (line.find('"') != std::string::npos) {
      throw DataError(source + ":" + std::to_string(line_no) + ": quoted fields are not supported");
    }
    auto cells = split(line);
    if (t.header_.empty()) {
      for (const auto& h : cells) {
        if (h.empty()) throw DataError(source + ":1: empty column name");
        if (std::count(cells.begin(), cells.end(), h) > 1) {
          throw DataError(source + ":1: duplicate column '" + h + "'");
        }
      }
      t.header_ = std::move(cells);
      continue;
    }
    if (cells.size() != t.header_.size()) {
      throw DataError(source + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(t.header_.size()) + " fields, found " + std::to_string(cells.size()));
    }
    for (std::size_t j = 0; j < cells.size(); ++j) {
      if (cells[j].empty() || cells[j] == "NA") {
        throw DataError(source + ":" + std::to_string(line_no) + ": missing value in column '" +
                        t.header_[j] + "'");
      }
    }
    t.cells_.push_back(std::move(cells));
  }
  if (t.header_.empty()) throw DataError(source + ": no header row");
  return t;
}

bool CsvTable::has(const std::string& column) const {
  return std::find(header_.begin(), header_.end(), column) != header_.end();
}

std::size_t CsvTable::index_of(const std::string& column) const {
  const auto it = std::find(header_.begin(), header_.end(), column);
  if (it == header_.end()) throw DataError(source_ + ": no column '" + column + "'");
  return static_cast<std::size_t>(it - header_.begin());
}

std::vector<std::string> CsvTable::text(const std::string& column) const {
  const auto j = index_of(column);
  std::vector<std::string> out;
  out.reserve(cells_.size());
  for (const auto& row : cells_) out.push_back(row[j]);
  return out;
}

std::vector<double> CsvTable::numbers(const std::string& column) const {
  const auto j = index_of(column);
  std::vector<double> out;
  out.reserve(cells_.size());
  for (std::size_t i = 0; i < cells_.size(); ++i) {
    const std::string& s = cells_[i][j];
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
      throw DataError(source_ + ": row " + std::to_string(i + 1) + ", column '" + column +
                      "': not a number: '" + s + "'");
    }
    out.push_back(v);
  }
  return out;
}

std::vector<int> CsvTable::integers(const std::string& column) const {
  const auto values = numbers(column);
  std::vector<int> out;
  out.reserve(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] != std::round(values[i]) || std::abs(values[i]) > 1e9) {
      throw DataError(source_ + ": row " + std::to_string(i + 1) + ", column '" + column +
                      "': expected an integer");
    }
    out.push_back(static_cast<int>(values[i]));
  }
  return out;
}

}  // namespace hglmm::cli
