#include "eagle/digest.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "eagle/errors.hpp"

namespace eagle {

uint64_t fnv1a64(const void* data, size_t len, uint64_t seed) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    uint64_t h = seed;
    for (size_t i = 0; i < len; ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string digest_bytes(const std::string& bytes) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(bytes.data(), bytes.size())));
    return buf;
}

std::string digest_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open file for digest: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return digest_bytes(ss.str());
}

}  // namespace eagle
