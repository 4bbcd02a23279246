#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace hglmm::cli {

/// Comma-separated table with a header row. Quoting is not supported and
/// every cell must be present.
class CsvTable {
 public:
  static CsvTable read(const std::filesystem::path& path);
  static CsvTable parse(const std::string& text, const std::string& source);

  const std::vector<std::string>& header() const noexcept { return header_; }
  std::size_t rows() const noexcept { return cells_.size(); }
  bool has(const std::string& column) const;

  /// Raw cell text; throws DataError for unknown columns.
  std::vector<std::string> text(const std::string& column) const;
  /// Cells parsed as finite doubles.
  std::vector<double> numbers(const std::string& column) const;
  /// Cells that must hold integers.
  std::vector<int> integers(const std::string& column) const;

  const std::string& source() const noexcept { return source_; }

 private:
  std::size_t index_of(const std::string& column) const;

  std::string source_;
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> cells_;
};

}  // namespace hglmm::cli
