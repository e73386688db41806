#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace s2o::io {

/// Shortest round-trip-safe decimal: 17 significant digits.
std::string real(double v);

using Row = std::vector<std::string>;

std::string to_csv(const Row& header, const std::vector<Row>& rows);
/// Throws Io on failure.
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace s2o::io
