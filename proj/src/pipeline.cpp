#include "agritag/pipeline.hpp"

#include "agritag/error.hpp"

#include "json.hpp"

#include <cmath>

namespace agritag::pipeline {

Bridge::Bridge(std::string bridge_id, double dedup_window_s)
    : id_(std::move(bridge_id)), window_s_(dedup_window_s)
{
}

std::variant<BridgeFrame, Duplicate> Bridge::ingest(const tag::EncryptedPacket& e, double rssi_dbm, double now_s)
{
    while (!expiry_order_.empty() && now_s - expiry_order_.front().first > window_s_) {
        auto it = first_seen_.find(expiry_order_.front().second);
        if (it != first_seen_.end() && it->second == expiry_order_.front().first)
            first_seen_.erase(it);
        expiry_order_.pop_front();
    }

    Key key{e.tag_id, e.nonce};
    auto it = first_seen_.find(key);
    if (it != first_seen_.end() && now_s - it->second <= window_s_)
        return Duplicate{};

    first_seen_[key] = now_s;
    expiry_order_.emplace_back(now_s, key);
    return BridgeFrame{id_, e, rssi_dbm, now_s};
}

LinkDraw draw_link(double signal_dbm, const rf::RadioParams& radio, double interference_dbm,
                   const rf::DeliveryCurve& curve, Rng& rng)
{
    LinkDraw d;
    d.snr_db = rf::snr_db(signal_dbm, radio.noise_floor_dbm, interference_dbm);
    d.probability = signal_dbm < radio.sensitivity_dbm ? 0.0 : rf::delivery_probability(d.snr_db, curve);
    d.delivered = rng.uniform01() < d.probability;
    return d;
}

RelayOutcome gateway_relay(const BridgeFrame& frame, const UplinkConfig& uplink, double noise_dbm, Rng& rng)
{
    double signal = rf::received_power_clamped_dbm(uplink.radio, uplink.distance_m);
    LinkDraw d = draw_link(signal, uplink.radio, noise_dbm, uplink.curve, rng);
    if (d.delivered)
        return Delivered{frame.rx_time_s + uplink.latency_s, d.snr_db};
    return Dropped{d.snr_db};
}

const crypto::Key128* Keystore::find(uint32_t tag_id) const
{
    auto it = keys_.find(tag_id);
    return it == keys_.end() ? nullptr : &it->second;
}

std::string_view to_string(RejectReason r)
{
    switch (r) {
    case RejectReason::Expired: return "expired";
    case RejectReason::UnknownTag: return "unknown_tag";
    case RejectReason::AuthFailure: return "auth_failure";
    }
    return "?";
}

DecryptOutcome decrypt_service(const Keystore& ks, const BridgeFrame& frame, const std::string& gateway_id,
                               double now_s, double expiry_window_s)
{
    if (now_s - frame.packet.tx_time_s > expiry_window_s)
        return Rejection{RejectReason::Expired, "packet older than expiry window"};
    const crypto::Key128* key = ks.find(frame.packet.tag_id);
    if (!key)
        return Rejection{RejectReason::UnknownTag, "tag " + std::to_string(frame.packet.tag_id) + " not registered"};

    tag::TagPacket p;
    try {
        p = tag::decrypt_packet(*key, frame.packet);
    } catch (const AuthFailure& e) {
        return Rejection{RejectReason::AuthFailure, e.what()};
    } catch (const DecodeError& e) {
        return Rejection{RejectReason::AuthFailure, e.what()};
    }
    if (p.tag_id != frame.packet.tag_id)
        return Rejection{RejectReason::AuthFailure, "tag id mismatch"};

    PublishedMessage m;
    m.ts_ms = static_cast<int64_t>(std::llround(frame.rx_time_s * 1000.0));
    m.gateway_id = gateway_id;
    m.bridge_id = frame.bridge_id;
    m.tag_id = p.tag_id;
    m.type = p.type;
    m.seq = p.seq;
    if (p.type == tag::PacketType::Temperature)
        m.temp_c = p.temp_c();
    return m;
}

DecryptOutcome DecryptService::process(const BridgeFrame& frame, const std::string& gateway_id, double now_s)
{
    auto out = decrypt_service(ks_, frame, gateway_id, now_s, expiry_window_s_);
    if (std::holds_alternative<PublishedMessage>(out)) {
        ++metrics_.published;
    } else {
        switch (std::get<Rejection>(out).reason) {
        case RejectReason::Expired: ++metrics_.expired; break;
        case RejectReason::UnknownTag: ++metrics_.unknown_tag; break;
        case RejectReason::AuthFailure: ++metrics_.auth_failures; break;
        }
    }
    return out;
}

std::string serialize_message(const PublishedMessage& m)
{
    nlohmann::ordered_json j;
    j["ts_ms"] = m.ts_ms;
    j["gateway_id"] = m.gateway_id;
    j["bridge_id"] = m.bridge_id;
    j["tag_id"] = m.tag_id;
    j["type"] = std::string(tag::to_string(m.type));
    j["seq"] = m.seq;
    if (m.type == tag::PacketType::Temperature && m.temp_c)
        j["temp_c"] = *m.temp_c;
    return j.dump();
}

std::string topic_for(const std::string& gateway_id) { return "tags/v1/" + gateway_id + "/decrypted"; }

} // namespace agritag::pipeline
