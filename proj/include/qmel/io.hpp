#pragma once

#include <string>
#include <vector>

namespace qmel {

// Shortest round-trip form with 17 significant digits.
std::string format_double(double v);

std::string to_csv(const std::vector<std::string>& header, const std::vector<std::vector<double>>& rows);

// Writes to a sibling temporary file and renames it over path. Throws IoError.
void write_file_atomic(const std::string& path, const std::string& content);

}  // namespace qmel
