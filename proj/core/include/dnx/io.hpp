#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

namespace dnx {

/// %.17g formatting used by every text artifact.
std::string format_double(double v);

std::string read_file(const std::filesystem::path& path);
/// Writes atomically-ish: parent directories are created first.
void write_file(const std::filesystem::path& path, const std::string& contents);

/// FNV-1a 64 of a file's bytes, hex encoded; used to tie reports to inputs.
std::string content_hash(const std::filesystem::path& path);

}  // namespace dnx
