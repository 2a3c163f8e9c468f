#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

namespace opflow {

/// Writes `content` to a sibling temp file and renames it over `path`, so a
/// reader sees either the old or the new content, never a mix.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Whole-file read; nullopt if the file does not exist.
std::optional<std::string> read_file(const std::filesystem::path& path);

/// Short random lowercase alphanumeric string.
std::string random_token(std::size_t length);

}  // namespace opflow
