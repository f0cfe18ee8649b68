#include "graphamp/csv.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "graphamp/error.hpp"

namespace graphamp {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) return "0";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + '"';
}

CsvTable::CsvTable(std::string schema, std::string config_hash, std::vector<std::string> columns)
    : ncols_(columns.size()) {
  out_ = "# schema=" + schema + "/" + std::to_string(kCsvSchemaVersion) + " config_hash=" + config_hash + "\n";
  for (std::size_t i = 0; i < columns.size(); ++i) out_ += (i ? "," : "") + csv_escape(columns[i]);
  out_ += '\n';
}

CsvTable& CsvTable::cell(const std::string& s) {
  if (in_row_ == ncols_) fail(ErrorKind::logic, "csv row has more cells than columns");
  if (in_row_++ > 0) out_ += ',';
  out_ += csv_escape(s);
  return *this;
}

CsvTable& CsvTable::cell(double v) { return cell(format_double(v)); }
CsvTable& CsvTable::cell(long v) { return cell(std::to_string(v)); }

void CsvTable::end_row() {
  if (in_row_ != ncols_) fail(ErrorKind::logic, "csv row has " + std::to_string(in_row_) + " of " + std::to_string(ncols_) + " cells");
  out_ += '\n';
  in_row_ = 0;
  ++rows_;
}

std::string CsvTable::str() const { return out_; }

void CsvTable::write(const std::string& path) const {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorKind::io, "cannot open '" + path + "' for writing");
  f << out_;
  f.flush();
  if (!f) fail(ErrorKind::io, "write to '" + path + "' failed");
}

}  // namespace graphamp
