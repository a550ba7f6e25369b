#include "biasaudit/digest.hpp"

#include <openssl/evp.h>

#include <array>
#include <stdexcept>

namespace biasaudit {

std::string sha256_hex(std::string_view bytes) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("sha256: EVP_Digest failed");
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(kHex[md[i] >> 4]);
        out.push_back(kHex[md[i] & 0xF]);
    }
    return out;
}

std::uint64_t seed_from(std::string_view text, std::uint64_t seed) {
    const std::string hex = sha256_hex(text);
    std::uint64_t h = std::stoull(hex.substr(0, 16), nullptr, 16);
    SplitMix64 mix(h ^ (seed * 0x9E3779B97F4A7C15ULL));
    return mix.next();
}

}  // namespace biasaudit
