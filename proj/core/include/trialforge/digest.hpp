#pragma once
// SHA-256 content digests for manifest sidecars and idempotence checks.

#include <filesystem>
#include <string>
#include <string_view>

namespace trialforge {

std::string sha256_hex(std::string_view bytes);
std::string sha256_hex_file(const std::filesystem::path& path);

}  // namespace trialforge
