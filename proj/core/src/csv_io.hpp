#pragma once

// Internal CSV helpers: shortest round-trip double formatting and strict
// parsing. UTF-8, '.' decimal separator, no quoting (fields never contain
// commas).

#include <string>
#include <vector>

namespace clover::csv {

/// Formats with enough digits to round-trip exactly (%.17g).
std::string format(double v);

double parse_double(const std::string& field, const std::string& context);
long parse_long(const std::string& field, const std::string& context);

std::vector<std::string> split_line(const std::string& line);

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;  // -1 when absent
};

Table read_table(const std::string& path);

}  // namespace clover::csv
