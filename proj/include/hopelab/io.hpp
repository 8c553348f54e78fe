#pragma once

// Small file-format helpers: flat key = value configs, CSV tables and a
// dependency-free SVG line chart.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace hope {

/// `section.key = value` lines; `#` starts a comment. Duplicate keys are an error.
class FlatConfig {
 public:
  static FlatConfig parse(std::string_view text);
  static FlatConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

  /// ConfigError naming the key when missing or malformed.
  std::string str(const std::string& key) const;
  int integer(const std::string& key) const;
  std::uint64_t u64(const std::string& key) const;
  double real(const std::string& key) const;
  bool boolean(const std::string& key) const;
  std::vector<std::string> list(const std::string& key) const;  // comma separated
  std::vector<int> int_list(const std::string& key) const;
  std::vector<std::uint64_t> u64_list(const std::string& key) const;

  std::string str_or(const std::string& key, std::string fallback) const;
  int integer_or(const std::string& key, int fallback) const;
  double real_or(const std::string& key, double fallback) const;
  bool boolean_or(const std::string& key, bool fallback) const;

  /// Keys never read through an accessor, for unknown-key diagnostics.
  std::vector<std::string> unused() const;
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  const std::string& raw(const std::string& key) const;

  std::map<std::string, std::string> values_;
  mutable std::map<std::string, bool> used_;
};

/// "%.*g" without locale surprises.
std::string fmt_double(double v, int precision = 9);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  int skipped = 0;  // rows dropped by the validator or for a wrong field count
};

/// Reads a simple comma separated file (no quoting). Rows with the wrong
/// number of fields, or for which `numeric_columns` do not parse as numbers,
/// are skipped and counted. Throws FormatError on a missing or empty file.
CsvTable read_csv(const std::filesystem::path& path,
                  const std::vector<std::string>& numeric_columns = {});

int column_index(const CsvTable& table, std::string_view name);

struct ChartSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

/// Self-contained SVG line chart.
std::string svg_line_chart(const std::vector<ChartSeries>& series, const std::string& title,
                           const std::string& x_label, const std::string& y_label);

void write_text_file(const std::filesystem::path& path, std::string_view contents);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace hope
