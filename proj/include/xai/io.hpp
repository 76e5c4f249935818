#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace xai::io {

std::string read_file(const std::filesystem::path& path);

/// Writes to `<path>.tmp` then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

/// 16 hex digits of FNV-1a 64 over the bytes.
std::string digest(std::string_view bytes);
std::string digest_file(const std::filesystem::path& path);

/// Splits one CSV record. Handles RFC-4180 double-quoted fields.
std::vector<std::string> split_csv_line(std::string_view line);

/// Quotes a field when it contains a comma, quote, CR or LF.
std::string csv_field(std::string_view field);

/// Shortest round-trippable decimal form of a double.
std::string format_double(double v);

/// Accumulates RFC-4180 rows.
class CsvWriter {
 public:
  explicit CsvWriter(const std::vector<std::string>& header) { row(header); }
  CsvWriter() = default;

  void row(const std::vector<std::string>& fields);
  const std::string& str() const { return out_; }
  void save(const std::filesystem::path& path) const { write_file_atomic(path, out_); }

 private:
  std::string out_;
};

}  // namespace xai::io
