#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace netfx {

/// Tab-separated rows; blank lines and lines starting with '#' are skipped.
std::vector<std::vector<std::string>> read_tsv(const std::filesystem::path& path,
                                               bool skip_header = false);
long long parse_int(std::string_view text);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view text);

}  // namespace netfx
