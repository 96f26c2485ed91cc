#pragma once

#include <cstdint>
#include <string>

namespace eagle {

// FNV-1a 64-bit over raw bytes; content addressing for the pipeline cache.
uint64_t fnv1a64(const void* data, size_t len, uint64_t seed = 0xcbf29ce484222325ULL);
std::string digest_bytes(const std::string& bytes);
std::string digest_file(const std::string& path);

}  // namespace eagle
