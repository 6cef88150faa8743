#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

namespace forge {

// Error taxonomy maps onto CLI exit codes: ConfigError/InputError -> 2,
// EmptyResultError -> 3, BackendError -> 4, anything else -> 1.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class InputError : public Error {
public:
    using Error::Error;
};

class EmptyResultError : public Error {
public:
    using Error::Error;
};

class BackendError : public Error {
public:
    using Error::Error;
};

/// Hex-encoded SHA-256 digest of `data`.
std::string sha256_hex(std::string_view data);

/// SHA-256 of a file's contents. Throws InputError if unreadable.
std::string sha256_file(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);

/// Write-to-temp-then-rename so readers never observe a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace forge
