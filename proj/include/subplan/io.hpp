#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace subplan {

/// Writes to "<path>.tmp" and renames over `path`, so readers never see a
/// partial file.
void write_file_atomic(const std::filesystem::path& path, const std::string& text);
std::string read_file(const std::filesystem::path& path);
/// Non-empty lines of a text file.
std::vector<std::string> read_lines(const std::filesystem::path& path);

}  // namespace subplan
