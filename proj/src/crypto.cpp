#include "agritag/crypto.hpp"

#include "agritag/error.hpp"

#include <openssl/evp.h>

#include <memory>

namespace agritag::crypto {

namespace {

struct CtxDeleter {
    void operator()(EVP_CIPHER_CTX* c) const { EVP_CIPHER_CTX_free(c); }
};
using CtxPtr = std::unique_ptr<EVP_CIPHER_CTX, CtxDeleter>;

CtxPtr new_ctx()
{
    CtxPtr ctx(EVP_CIPHER_CTX_new());
    if (!ctx)
        throw Error("EVP_CIPHER_CTX_new failed");
    return ctx;
}

int hex_digit(char c)
{
    if (c >= '0' && c <= '9')
        return c - '0';
    if (c >= 'a' && c <= 'f')
        return c - 'a' + 10;
    if (c >= 'A' && c <= 'F')
        return c - 'A' + 10;
    return -1;
}

} // namespace

std::vector<uint8_t> from_hex(std::string_view hex)
{
    if (hex.size() % 2 != 0)
        throw ParseError("odd-length hex string");
    std::vector<uint8_t> out(hex.size() / 2);
    for (size_t i = 0; i < out.size(); ++i) {
        int hi = hex_digit(hex[2 * i]);
        int lo = hex_digit(hex[2 * i + 1]);
        if (hi < 0 || lo < 0)
            throw ParseError("invalid hex digit");
        out[i] = static_cast<uint8_t>(hi << 4 | lo);
    }
    return out;
}

Key128 key_from_hex(std::string_view hex)
{
    if (hex.size() != 32)
        throw ParseError("key must be 32 hex digits");
    auto bytes = from_hex(hex);
    Key128 key{};
    std::copy(bytes.begin(), bytes.end(), key.begin());
    return key;
}

std::string to_hex(std::span<const uint8_t> bytes)
{
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out;
    out.reserve(bytes.size() * 2);
    for (uint8_t b : bytes) {
        out += kDigits[b >> 4];
        out += kDigits[b & 0x0f];
    }
    return out;
}

std::vector<uint8_t> aead_seal(const Key128& key, const Nonce96& nonce, std::span<const uint8_t> aad,
                               std::span<const uint8_t> plaintext)
{
    auto ctx = new_ctx();
    int len = 0;
    std::vector<uint8_t> out(plaintext.size() + kAuthTagBytes);
    if (EVP_EncryptInit_ex(ctx.get(), EVP_aes_128_gcm(), nullptr, nullptr, nullptr) != 1 ||
        EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_IVLEN, static_cast<int>(nonce.size()), nullptr) != 1 ||
        EVP_EncryptInit_ex(ctx.get(), nullptr, nullptr, key.data(), nonce.data()) != 1)
        throw Error("AES-GCM init failed");
    if (!aad.empty() && EVP_EncryptUpdate(ctx.get(), nullptr, &len, aad.data(), static_cast<int>(aad.size())) != 1)
        throw Error("AES-GCM aad failed");
    if (EVP_EncryptUpdate(ctx.get(), out.data(), &len, plaintext.data(), static_cast<int>(plaintext.size())) != 1)
        throw Error("AES-GCM encrypt failed");
    int total = len;
    if (EVP_EncryptFinal_ex(ctx.get(), out.data() + total, &len) != 1)
        throw Error("AES-GCM final failed");
    total += len;
    if (EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_GET_TAG, kAuthTagBytes, out.data() + total) != 1)
        throw Error("AES-GCM tag failed");
    return out;
}

std::vector<uint8_t> aead_open(const Key128& key, const Nonce96& nonce, std::span<const uint8_t> aad,
                               std::span<const uint8_t> sealed)
{
    if (sealed.size() < kAuthTagBytes)
        throw AuthFailure("sealed packet shorter than auth tag");
    const size_t ct_len = sealed.size() - kAuthTagBytes;
    auto ctx = new_ctx();
    int len = 0;
    std::vector<uint8_t> out(ct_len);
    if (EVP_DecryptInit_ex(ctx.get(), EVP_aes_128_gcm(), nullptr, nullptr, nullptr) != 1 ||
        EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_IVLEN, static_cast<int>(nonce.size()), nullptr) != 1 ||
        EVP_DecryptInit_ex(ctx.get(), nullptr, nullptr, key.data(), nonce.data()) != 1)
        throw Error("AES-GCM init failed");
    if (!aad.empty() && EVP_DecryptUpdate(ctx.get(), nullptr, &len, aad.data(), static_cast<int>(aad.size())) != 1)
        throw AuthFailure("AES-GCM aad rejected");
    if (EVP_DecryptUpdate(ctx.get(), out.data(), &len, sealed.data(), static_cast<int>(ct_len)) != 1)
        throw AuthFailure("AES-GCM decrypt failed");
    int total = len;
    std::array<uint8_t, kAuthTagBytes> tag{};
    std::copy(sealed.end() - kAuthTagBytes, sealed.end(), tag.begin());
    if (EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_TAG, kAuthTagBytes, tag.data()) != 1)
        throw Error("AES-GCM set tag failed");
    if (EVP_DecryptFinal_ex(ctx.get(), out.data() + total, &len) != 1)
        throw AuthFailure("authentication tag mismatch");
    total += len;
    out.resize(static_cast<size_t>(total));
    return out;
}

void NonceRegistry::claim(const Key128& key, const Nonce96& nonce)
{
    if (!used_.emplace(key, nonce).second)
        throw NonceReuse("nonce " + to_hex(nonce) + " already used with this key");
}

} // namespace agritag::crypto
