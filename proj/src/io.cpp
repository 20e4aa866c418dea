#include "skillprobe/io.hpp"

#include <openssl/evp.h>

#include <array>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include "skillprobe/error.hpp"

namespace skillprobe {

static_assert(std::endian::native == std::endian::little,
              "blob encoders assume a little-endian host");

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) {
      fail(ErrorCode::kIoError,
           path.parent_path().string() + ": " + ec.message());
    }
  }
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::kIoError, tmp.string() + ": cannot open for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorCode::kIoError, tmp.string() + ": write failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorCode::kIoError, path.string() + ": " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIoError, path.string() + ": cannot open");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string format_double(double v) {
  std::array<char, 32> buf{};
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(),
                 nullptr) != 1) {
    fail(ErrorCode::kIoError, "sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

void append_f64le(std::string& out, std::span<const double> values) {
  const std::size_t old = out.size();
  out.resize(old + values.size_bytes());
  std::memcpy(out.data() + old, values.data(), values.size_bytes());
}

void append_f32le(std::string& out, std::span<const double> values) {
  const std::size_t old = out.size();
  out.resize(old + values.size() * sizeof(float));
  char* dst = out.data() + old;
  for (double v : values) {
    const float f = static_cast<float>(v);
    std::memcpy(dst, &f, sizeof f);
    dst += sizeof f;
  }
}

void append_f32le(std::string& out, std::span<const float> values) {
  const std::size_t old = out.size();
  out.resize(old + values.size_bytes());
  std::memcpy(out.data() + old, values.data(), values.size_bytes());
}

std::vector<double> decode_f64le(std::string_view bytes) {
  if (bytes.size() % sizeof(double) != 0) {
    fail(ErrorCode::kShapeError, "f64le blob size is not a multiple of 8");
  }
  std::vector<double> out(bytes.size() / sizeof(double));
  std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

std::vector<double> decode_f32le(std::string_view bytes) {
  if (bytes.size() % sizeof(float) != 0) {
    fail(ErrorCode::kShapeError, "f32le blob size is not a multiple of 4");
  }
  std::vector<double> out(bytes.size() / sizeof(float));
  for (std::size_t i = 0; i < out.size(); ++i) {
    float f;
    std::memcpy(&f, bytes.data() + i * sizeof f, sizeof f);
    out[i] = f;
  }
  return out;
}

std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.emplace_back(line);
    start = end + 1;
  }
  return lines;
}

}  // namespace skillprobe
