#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fontpair {

// Hex SHA-256 digest, used to record input manifests in run_meta.json.
std::string sha256_hex(const uint8_t* data, size_t len);
std::string sha256_hex(const std::string& s);
std::string sha256_file_hex(const std::string& path); // throws Error on I/O failure

} // namespace fontpair
