#pragma once

#include "agritag/rf.hpp"
#include "agritag/rng.hpp"
#include "agritag/tag.hpp"

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <string>
#include <variant>

namespace agritag::pipeline {

struct BridgeFrame {
    std::string bridge_id;
    tag::EncryptedPacket packet;
    double rssi_dbm = 0.0;
    double rx_time_s = 0.0;
};

struct Duplicate {};

/// High-gain receiver on the drone. Suppresses repeats of a (tag_id, nonce) seen
/// within the dedup window.
class Bridge {
public:
    explicit Bridge(std::string bridge_id, double dedup_window_s = 10.0);

    std::variant<BridgeFrame, Duplicate> ingest(const tag::EncryptedPacket& e, double rssi_dbm, double now_s);

    const std::string& id() const noexcept { return id_; }

private:
    using Key = std::pair<uint32_t, crypto::Nonce96>;

    std::string id_;
    double window_s_;
    std::map<Key, double> first_seen_;
    std::deque<std::pair<double, Key>> expiry_order_;
};

struct LinkDraw {
    bool delivered = false;
    double snr_db = 0.0;
    double probability = 0.0;
};

/// One Bernoulli draw against the logistic delivery curve. Always consumes exactly
/// one uniform from `rng` so that outcomes are coupled across parameter sweeps.
LinkDraw draw_link(double signal_dbm, const rf::RadioParams& radio, double interference_dbm,
                   const rf::DeliveryCurve& curve, Rng& rng);

struct UplinkConfig {
    rf::RadioParams radio = rf::default_cellular_radio();
    double distance_m = 2000.0; // phone to cell site
    double latency_s = 0.5;
    rf::DeliveryCurve curve;
};

struct Delivered {
    double arrival_s = 0.0;
    double snr_db = 0.0;
};

struct Dropped {
    double snr_db = 0.0;
};

using RelayOutcome = std::variant<Delivered, Dropped>;

/// Gateway relay over the cellular link with `noise_dbm` of motor interference at the phone.
RelayOutcome gateway_relay(const BridgeFrame& frame, const UplinkConfig& uplink, double noise_dbm, Rng& rng);

class Keystore {
public:
    void add(uint32_t tag_id, const crypto::Key128& key) { keys_[tag_id] = key; }
    const crypto::Key128* find(uint32_t tag_id) const;
    size_t size() const noexcept { return keys_.size(); }

private:
    std::map<uint32_t, crypto::Key128> keys_;
};

struct PublishedMessage {
    int64_t ts_ms = 0;
    std::string gateway_id;
    std::string bridge_id;
    uint32_t tag_id = 0;
    tag::PacketType type = tag::PacketType::Activity;
    uint64_t seq = 0;
    std::optional<double> temp_c;

    bool operator==(const PublishedMessage&) const = default;
};

enum class RejectReason { Expired, UnknownTag, AuthFailure };

std::string_view to_string(RejectReason r);

struct Rejection {
    RejectReason reason;
    std::string detail;
};

using DecryptOutcome = std::variant<PublishedMessage, Rejection>;

inline constexpr double kDefaultExpiryWindowS = 60.0;

/// Stateless decrypt-or-reject step.
DecryptOutcome decrypt_service(const Keystore& ks, const BridgeFrame& frame, const std::string& gateway_id,
                               double now_s, double expiry_window_s = kDefaultExpiryWindowS);

struct ServiceMetrics {
    uint64_t published = 0;
    uint64_t expired = 0;
    uint64_t unknown_tag = 0;
    uint64_t auth_failures = 0;

    bool operator==(const ServiceMetrics&) const = default;
};

/// Local stand-in for the vendor decryption cloud: decrypt_service plus counters.
class DecryptService {
public:
    DecryptService(Keystore ks, double expiry_window_s = kDefaultExpiryWindowS)
        : ks_(std::move(ks)), expiry_window_s_(expiry_window_s) {}

    DecryptOutcome process(const BridgeFrame& frame, const std::string& gateway_id, double now_s);

    const ServiceMetrics& metrics() const noexcept { return metrics_; }
    double expiry_window_s() const noexcept { return expiry_window_s_; }

private:
    Keystore ks_;
    double expiry_window_s_;
    ServiceMetrics metrics_;
};

/// Canonical compact JSON with keys in field order; temp_c only for temperature messages.
std::string serialize_message(const PublishedMessage& m);

/// `tags/v1/<gateway_id>/decrypted`
std::string topic_for(const std::string& gateway_id);

} // namespace agritag::pipeline
