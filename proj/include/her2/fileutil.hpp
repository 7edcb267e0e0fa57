#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace her2 {

/// Writes `content` to a sibling temp file and renames it over `path`.
/// Throws InputError when the destination is not writable.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Throws InputError when the file cannot be read.
std::string read_file(const std::filesystem::path& path);

/// 64-bit FNV-1a, rendered as 16 hex digits.
std::string fnv1a_hex(std::string_view data);

}  // namespace her2
