#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace medeval {

/// Bad input data or configuration. Maps to CLI exit code 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Filesystem problem (missing file, unreadable, short read). Exit code 1.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Network-level failure after retries were exhausted. Exit code 2.
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Endpoint replied with a non-2xx status. Exit code 2.
class EndpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string sha256_hex(const void* data, std::size_t size);
std::string sha256_hex(std::string_view text);
std::string sha256_hex(const std::vector<std::uint8_t>& bytes);

std::vector<std::uint8_t> read_binary_file(const std::filesystem::path& path);
std::string read_text_file(const std::filesystem::path& path);
void write_binary_file(const std::filesystem::path& path,
                       const std::vector<std::uint8_t>& bytes);
void write_text_file(const std::filesystem::path& path, std::string_view text);

std::string to_lower(std::string_view s);
std::string_view trim(std::string_view s);
std::string collapse_whitespace(std::string_view s);
std::vector<std::string> split_whitespace(std::string_view s);

/// True if `needle` occurs in `haystack` ignoring ASCII case.
bool icontains(std::string_view haystack, std::string_view needle);

std::string base64_encode(const std::uint8_t* data, std::size_t size);

}  // namespace medeval
