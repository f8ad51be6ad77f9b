#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace taskdb {

// Field encoding for line-oriented catalog/config files: percent-escapes
// whitespace, '%', and '=' so records stay one token per field.
std::string encode_field(std::string_view raw);
std::string decode_field(std::string_view encoded);

std::vector<std::string> split(std::string_view text, char sep);
std::string trim(std::string_view text);

/// Parses "key=value key=value ..." with percent-encoded values.
std::map<std::string, std::string> parse_kv_line(std::string_view line);

std::string read_text_file(const std::filesystem::path& path);
std::vector<std::uint8_t> read_binary_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);
void write_binary_file(const std::filesystem::path& path,
                       std::span<const std::uint8_t> bytes);
void append_text_file(const std::filesystem::path& path, std::string_view text);

std::string format_double(double value);

}  // namespace taskdb
