#include "agritag/tag.hpp"

#include "agritag/error.hpp"
#include "agritag/rf.hpp"

#include <algorithm>
#include <cmath>

namespace agritag::tag {

namespace {

constexpr double kTimeEps = 1e-9;

bool valid_channel(uint8_t ch) { return ch == 37 || ch == 38 || ch == 39; }

void put_be(std::vector<uint8_t>& out, uint64_t v, int bytes)
{
    for (int i = bytes - 1; i >= 0; --i)
        out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

uint64_t get_be(std::span<const uint8_t> in, size_t off, int bytes)
{
    uint64_t v = 0;
    for (int i = 0; i < bytes; ++i)
        v = v << 8 | in[off + i];
    return v;
}

} // namespace

void validate(const TagConfig& cfg)
{
    if (!(cfg.tx_cost_j < cfg.activation_energy_j))
        throw InvariantViolation("tx cost must be below activation energy");
    if (!(cfg.adv_interval_s > 0.0))
        throw InvariantViolation("advertisement interval must be positive");
    if (cfg.temp_every_n < 1)
        throw InvariantViolation("temp_every_n must be >= 1");
    if (!(cfg.harvest_efficiency > 0.0 && cfg.harvest_efficiency <= 1.0))
        throw InvariantViolation("harvest efficiency must lie in (0, 1]");
    if (!(cfg.deactivation_fraction > 0.0 && cfg.deactivation_fraction <= 1.0))
        throw InvariantViolation("deactivation fraction must lie in (0, 1]");
    if (!(cfg.deactivation_energy_j() > cfg.tx_cost_j))
        throw InvariantViolation("deactivation energy must exceed the tx cost");
    geo::validate(cfg.pos);
}

std::string_view to_string(PacketType t)
{
    return t == PacketType::Temperature ? "temperature" : "activity";
}

std::optional<PacketType> packet_type_from_string(std::string_view s)
{
    if (s == "activity")
        return PacketType::Activity;
    if (s == "temperature")
        return PacketType::Temperature;
    return std::nullopt;
}

int16_t quantize_decideg(double temp_c)
{
    double d = std::round(temp_c * 10.0);
    d = std::clamp(d, double(INT16_MIN), double(INT16_MAX));
    return static_cast<int16_t>(d);
}

std::vector<uint8_t> encode_packet(const TagPacket& p)
{
    const bool temp = p.type == PacketType::Temperature;
    if (p.type != PacketType::Activity && !temp)
        throw InvariantViolation("unknown packet type");
    if (temp != p.temp_decideg.has_value())
        throw InvariantViolation("temperature field present iff packet type is temperature");
    if (!valid_channel(p.channel))
        throw InvariantViolation("advertisement channel must be 37, 38 or 39");

    std::vector<uint8_t> out;
    out.reserve(16);
    put_be(out, p.tag_id, 4);
    out.push_back(static_cast<uint8_t>(p.type));
    put_be(out, p.seq, 8);
    if (temp)
        put_be(out, static_cast<uint16_t>(*p.temp_decideg), 2);
    out.push_back(p.channel);
    return out;
}

TagPacket decode_packet(std::span<const uint8_t> bytes)
{
    if (bytes.size() < 14)
        throw DecodeError("packet too short");
    TagPacket p;
    p.tag_id = static_cast<uint32_t>(get_be(bytes, 0, 4));
    uint8_t type = bytes[4];
    if (type == static_cast<uint8_t>(PacketType::Activity)) {
        if (bytes.size() != 14)
            throw DecodeError("activity packet must be 14 bytes");
        p.type = PacketType::Activity;
    } else if (type == static_cast<uint8_t>(PacketType::Temperature)) {
        if (bytes.size() != 16)
            throw DecodeError("temperature packet must be 16 bytes");
        p.type = PacketType::Temperature;
        p.temp_decideg = static_cast<int16_t>(static_cast<uint16_t>(get_be(bytes, 13, 2)));
    } else {
        throw DecodeError("unknown packet type byte");
    }
    p.seq = get_be(bytes, 5, 8);
    p.channel = bytes.back();
    if (!valid_channel(p.channel))
        throw DecodeError("invalid advertisement channel");
    return p;
}

crypto::Nonce96 make_nonce(uint32_t tag_id, uint64_t seq)
{
    crypto::Nonce96 n{};
    for (int i = 0; i < 4; ++i)
        n[i] = static_cast<uint8_t>(tag_id >> (8 * (3 - i)));
    for (int i = 0; i < 8; ++i)
        n[4 + i] = static_cast<uint8_t>(seq >> (8 * (7 - i)));
    return n;
}

EncryptedPacket encrypt_packet(const crypto::Key128& key, std::span<const uint8_t> plain_bytes,
                               const crypto::Nonce96& nonce, uint8_t aad_type, double tx_time_s)
{
    EncryptedPacket e;
    e.tag_id = static_cast<uint32_t>(nonce[0]) << 24 | static_cast<uint32_t>(nonce[1]) << 16 |
               static_cast<uint32_t>(nonce[2]) << 8 | nonce[3];
    e.type_byte = aad_type;
    e.nonce = nonce;
    e.ciphertext = crypto::aead_seal(key, nonce, std::span<const uint8_t>(&aad_type, 1), plain_bytes);
    e.tx_time_s = tx_time_s;
    return e;
}

EncryptedPacket encrypt_packet(const crypto::Key128& key, std::span<const uint8_t> plain_bytes,
                               const crypto::Nonce96& nonce, uint8_t aad_type, double tx_time_s,
                               crypto::NonceRegistry& registry)
{
    registry.claim(key, nonce);
    return encrypt_packet(key, plain_bytes, nonce, aad_type, tx_time_s);
}

TagPacket decrypt_packet(const crypto::Key128& key, const EncryptedPacket& e)
{
    auto plain = crypto::aead_open(key, e.nonce, std::span<const uint8_t>(&e.type_byte, 1), e.ciphertext);
    TagPacket p = decode_packet(plain);
    if (static_cast<uint8_t>(p.type) != e.type_byte || make_nonce(p.tag_id, p.seq) != e.nonce)
        throw DecodeError("decrypted fields disagree with packet header");
    return p;
}

TagStepResult step_tag(const TagConfig& cfg, const TagState& st, double incident_dbm, double ambient_c,
                       double now_s, double dt_s, double sensitivity_dbm, Rng& rng,
                       crypto::NonceRegistry* nonces)
{
    if (!(dt_s > 0.0))
        throw InvalidDt("dt must be positive");

    TagStepResult out{st, {}, rf::harvested_power_w(incident_dbm, cfg.harvest_efficiency, sensitivity_dbm)};
    TagState& next = out.state;
    next.energy_j = st.energy_j + out.harvested_w * dt_s;

    if (!next.active && next.energy_j >= cfg.activation_energy_j)
        next.active = true;

    if (next.active && now_s - next.last_tx_s >= cfg.adv_interval_s - kTimeEps &&
        next.energy_j >= cfg.tx_cost_j) {
        TagPacket p;
        p.tag_id = cfg.tag_id;
        p.seq = next.seq + 1;
        p.type = p.seq % static_cast<uint64_t>(cfg.temp_every_n) == 0 ? PacketType::Temperature
                                                                         : PacketType::Activity;
        if (p.type == PacketType::Temperature)
            p.temp_decideg = quantize_decideg(ambient_c);
        p.channel = static_cast<uint8_t>(37 + rng.below(3));

        auto bytes = encode_packet(p);
        auto nonce = make_nonce(p.tag_id, p.seq);
        auto sealed = nonces ? encrypt_packet(cfg.key, bytes, nonce, static_cast<uint8_t>(p.type), now_s, *nonces)
                             : encrypt_packet(cfg.key, bytes, nonce, static_cast<uint8_t>(p.type), now_s);

        next.energy_j -= cfg.tx_cost_j;
        next.seq = p.seq;
        next.last_tx_s = now_s;
        out.emitted.push_back({std::move(p), std::move(sealed)});
    }

    if (next.active && next.energy_j < cfg.deactivation_energy_j())
        next.active = false;
    next.energy_j = std::max(0.0, next.energy_j);
    return out;
}

} // namespace agritag::tag
