#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace rewardkit {

// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

std::string base64_encode(std::string_view data);

// 64-bit FNV-1a, used to derive per-name RNG seeds.
std::uint64_t fnv1a64(std::string_view data);

}  // namespace rewardkit
