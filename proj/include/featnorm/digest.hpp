#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace featnorm {

/// Lower-case hex SHA-256 of `bytes`.
std::string sha256_hex(std::string_view bytes);

/// SHA-256 of a file's contents. Throws IoError if the file cannot be read.
std::string sha256_file(const std::filesystem::path& path);

}  // namespace featnorm
