#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <string_view>

namespace tstr::io {

std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it over `path`, so a
/// reader never observes a partially written artifact.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Calls `fn(line, line_number)` for every line (1-based numbering).
void for_each_line(std::string_view text,
                   const std::function<void(std::string_view, std::size_t)>& fn);

bool is_blank(std::string_view s);
std::string_view trim(std::string_view s);

}  // namespace tstr::io
