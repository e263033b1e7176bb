#pragma once

#include <chrono>
#include <filesystem>
#include <string>
#include <string_view>

namespace domremedy {

std::string read_file(const std::filesystem::path& path);
// Writes to a sibling temp file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);
std::string sha256_hex(std::string_view bytes);

std::string trim(std::string_view s);

// Letters, digits, '.', '_' and '-' survive; everything else becomes '_'.
std::string sanitize_id(std::string_view s);

// ISO 8601 UTC with second precision, e.g. "2026-03-01T12:00:00Z".
std::string utc_timestamp(std::chrono::system_clock::time_point t = std::chrono::system_clock::now());

}  // namespace domremedy
