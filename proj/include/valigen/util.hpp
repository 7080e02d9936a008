#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace valigen {

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view text);

std::string base64_encode(std::span<const std::uint8_t> bytes);
/// Throws DataError on characters outside the standard alphabet or bad padding.
std::vector<std::uint8_t> base64_decode(std::string_view text);

std::string read_text_file(const std::filesystem::path& path);
std::vector<std::uint8_t> read_binary_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);
void write_binary_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// Fixed six-decimal rendering used by every canonical metric file.
std::string format_fixed6(double v);

std::string utc_timestamp();

/// Orders "V2" before "V10": digit runs compare numerically.
bool natural_less(std::string_view a, std::string_view b);

/// Filesystem-friendly form of a class name (spaces and separators become '_').
std::string path_safe(std::string_view name);

void log_warning(std::string_view message);
void log_info(std::string_view message);

}  // namespace valigen
