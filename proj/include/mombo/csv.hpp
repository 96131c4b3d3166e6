#pragma once

#include <string>
#include <vector>

namespace mombo {

/// Numeric CSV table with a single header row. Files are UTF-8 with LF line
/// endings; numbers round-trip exactly (17 significant digits).
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  int column(const std::string& name) const;  // -1 when absent
};

void write_csv(const std::string& path, const CsvTable& table);
CsvTable read_csv(const std::string& path);

}  // namespace mombo
