#pragma once

#include <string>
#include <vector>

namespace graphamp {

inline constexpr int kCsvSchemaVersion = 1;

// Comment line "# schema=<name>/<version> config_hash=<hash>", then the column
// names, then rows. Doubles use %.17g so reruns are byte-identical.
class CsvTable {
 public:
  CsvTable(std::string schema, std::string config_hash, std::vector<std::string> columns);

  CsvTable& cell(const std::string& s);
  CsvTable& cell(double v);
  CsvTable& cell(long v);
  CsvTable& cell(int v) { return cell(static_cast<long>(v)); }
  CsvTable& cell(const char* s) { return cell(std::string(s)); }
  CsvTable& cell(bool v) { return cell(std::string(v ? "1" : "0")); }
  void end_row();

  std::string str() const;
  // Throws an I/O error when the file cannot be written.
  void write(const std::string& path) const;
  std::size_t rows() const { return rows_; }

 private:
  std::string out_;
  std::size_t ncols_;
  std::size_t in_row_ = 0;
  std::size_t rows_ = 0;
};

std::string format_double(double v);
// Quotes fields containing commas, quotes or newlines.
std::string csv_escape(const std::string& s);

}  // namespace graphamp
