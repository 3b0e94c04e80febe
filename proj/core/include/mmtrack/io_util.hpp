#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>

namespace mmtrack {

/// Writes through a sibling temp file and renames it over `path`.
void write_file_atomically(const std::filesystem::path& path, const std::function<void(std::ostream&)>& writer);

std::string read_text_file(const std::filesystem::path& path);

}  // namespace mmtrack
