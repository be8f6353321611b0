#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace agritag::crypto {

using Key128 = std::array<uint8_t, 16>;
using Nonce96 = std::array<uint8_t, 12>;

inline constexpr size_t kAuthTagBytes = 16;

/// Parses 32 hex digits. Throws ParseError.
Key128 key_from_hex(std::string_view hex);
std::string to_hex(std::span<const uint8_t> bytes);
std::vector<uint8_t> from_hex(std::string_view hex);

/// AES-128-GCM seal; returns ciphertext followed by the 16-byte tag.
std::vector<uint8_t> aead_seal(const Key128& key, const Nonce96& nonce, std::span<const uint8_t> aad,
                               std::span<const uint8_t> plaintext);

/// AES-128-GCM open. Throws AuthFailure on any mismatch, including truncation.
std::vector<uint8_t> aead_open(const Key128& key, const Nonce96& nonce, std::span<const uint8_t> aad,
                               std::span<const uint8_t> sealed);

/// Records (key, nonce) pairs and throws NonceReuse on a repeat.
class NonceRegistry {
public:
    void claim(const Key128& key, const Nonce96& nonce);
    size_t size() const noexcept { return used_.size(); }

private:
    std::set<std::pair<Key128, Nonce96>> used_;
};

} // namespace agritag::crypto
