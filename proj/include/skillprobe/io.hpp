#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace skillprobe {

// Writes to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

std::string read_file(const std::filesystem::path& path);

// Shortest decimal representation that round-trips.
std::string format_double(double v);

// Hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);

// Little-endian encoders used by every binary blob in the repo.
void append_f64le(std::string& out, std::span<const double> values);
void append_f32le(std::string& out, std::span<const double> values);
void append_f32le(std::string& out, std::span<const float> values);
std::vector<double> decode_f64le(std::string_view bytes);
std::vector<double> decode_f32le(std::string_view bytes);

std::vector<std::string> split_lines(std::string_view text);

}  // namespace skillprobe
