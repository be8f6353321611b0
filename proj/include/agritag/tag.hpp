#pragma once

#include "agritag/crypto.hpp"
#include "agritag/geo.hpp"
#include "agritag/rng.hpp"

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

namespace agritag::tag {

struct TagConfig {
    uint32_t tag_id = 0;
    crypto::Key128 key{};
    geo::GeoPoint pos;
    double harvest_efficiency = 0.5;
    double activation_energy_j = 50e-6;
    double tx_cost_j = 10e-6;
    double adv_interval_s = 1.0;
    int temp_every_n = 5;
    double deactivation_fraction = 0.5; // of activation_energy_j
    double rx_gain_offset_db = 0.0;     // orientation of the tag antenna

    double deactivation_energy_j() const { return activation_energy_j * deactivation_fraction; }
};

/// Throws InvariantViolation when the tag contract does not hold.
void validate(const TagConfig& cfg);

struct TagState {
    double energy_j = 0.0;
    bool active = false;
    uint64_t seq = 0; // sequence number of the last emitted packet
    double last_tx_s = -std::numeric_limits<double>::infinity();
};

enum class PacketType : uint8_t { Activity = 0x01, Temperature = 0x02 };

std::string_view to_string(PacketType t);
std::optional<PacketType> packet_type_from_string(std::string_view s);

struct TagPacket {
    uint32_t tag_id = 0;
    PacketType type = PacketType::Activity;
    uint64_t seq = 0;
    std::optional<int16_t> temp_decideg; // present iff type == Temperature
    uint8_t channel = 37;

    double temp_c() const { return temp_decideg ? *temp_decideg / 10.0 : 0.0; }
    bool operator==(const TagPacket&) const = default;
};

/// Quantises a Celsius reading to 0.1 degree steps (saturating at the int16 range).
int16_t quantize_decideg(double temp_c);

/// Big-endian layout: tag_id(4) | type(1) | seq(8) | [temp_decideg(2)] | channel(1).
/// Throws InvariantViolation if the type/temperature rule or channel set is broken.
std::vector<uint8_t> encode_packet(const TagPacket& p);

/// Inverse of encode_packet. Throws DecodeError.
TagPacket decode_packet(std::span<const uint8_t> bytes);

/// tag_id (4 bytes) followed by seq (8 bytes), big-endian.
crypto::Nonce96 make_nonce(uint32_t tag_id, uint64_t seq);

struct EncryptedPacket {
    uint32_t tag_id = 0;   // clear, for key lookup
    uint8_t type_byte = 0; // clear, authenticated as associated data
    crypto::Nonce96 nonce{};
    std::vector<uint8_t> ciphertext; // includes the auth tag
    double tx_time_s = 0.0;

    bool operator==(const EncryptedPacket&) const = default;
};

/// Seals `plain_bytes` under `key`; tag_id is taken from the nonce prefix.
EncryptedPacket encrypt_packet(const crypto::Key128& key, std::span<const uint8_t> plain_bytes,
                               const crypto::Nonce96& nonce, uint8_t aad_type, double tx_time_s);

/// As above, but first claims the nonce (throws NonceReuse on a repeat).
EncryptedPacket encrypt_packet(const crypto::Key128& key, std::span<const uint8_t> plain_bytes,
                               const crypto::Nonce96& nonce, uint8_t aad_type, double tx_time_s,
                               crypto::NonceRegistry& registry);

/// Authenticated decryption then decode. Throws AuthFailure or DecodeError.
TagPacket decrypt_packet(const crypto::Key128& key, const EncryptedPacket& e);

struct Emission {
    TagPacket plain;
    EncryptedPacket sealed;
};

struct TagStepResult {
    TagState state;
    std::vector<Emission> emitted;
    double harvested_w = 0.0;
};

/// Advances one tag by dt_s under the given incident 918 MHz power.
TagStepResult step_tag(const TagConfig& cfg, const TagState& st, double incident_dbm, double ambient_c,
                       double now_s, double dt_s, double sensitivity_dbm, Rng& rng,
                       crypto::NonceRegistry* nonces = nullptr);

} // namespace agritag::tag
