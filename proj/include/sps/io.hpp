#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace sps {

std::string read_file(const std::filesystem::path& path);

/// Writes through a sibling temp file and renames it over `path`, so readers
/// never observe a partially written output.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

nlohmann::json read_json(const std::filesystem::path& path);
void write_json_atomic(const std::filesystem::path& path, const nlohmann::json& j);

std::vector<std::string> split_lines(std::string_view text);
std::vector<std::string> split_ws(std::string_view text);
std::string_view trim(std::string_view s);

/// FNV-1a, used for content hashes that must be stable across platforms.
std::uint64_t fnv1a(std::string_view data) noexcept;
std::string hex64(std::uint64_t v);

}  // namespace sps
