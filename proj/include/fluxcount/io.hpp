#pragma once

#include <cstddef>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace fluxcount {

inline constexpr const char* kArtifactVersion = "0.1.0";

/// Round-trip decimal form, 17 significant digits.
std::string format_double(double value);

std::string sha256_hex(std::string_view data);
/// Throws DependencyError when the file cannot be read.
std::string sha256_file(const std::string& path);

std::string read_text_file(const std::string& path);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Throws ParameterError when the column is absent.
  std::size_t column(const std::string& name) const;
  double number(std::size_t row, const std::string& name) const;
};

/// Reads a CSV, skipping `#` comment lines; missing file throws DependencyError.
CsvTable read_csv(const std::string& path);

/// CSV output with a `# fluxcount <version> config=<hash>` first line.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::string& config_hash,
            const std::vector<std::string>& columns);
  void add_row(const std::vector<std::string>& fields);

 private:
  std::ofstream out_;
  std::size_t width_;
};

}  // namespace fluxcount
