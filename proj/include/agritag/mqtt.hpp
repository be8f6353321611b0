#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace agritag::mqtt {

struct BrokerUri {
    std::string host;
    uint16_t port = 1883;
};

/// Parses `mqtt://host[:port]`. Throws ConfigError.
BrokerUri parse_uri(std::string_view uri);

// MQTT 3.1.1 control packets (only what a QoS 1 publisher needs).
std::vector<uint8_t> encode_remaining_length(size_t len);
std::vector<uint8_t> encode_connect(std::string_view client_id, uint16_t keepalive_s);
std::vector<uint8_t> encode_publish_qos1(std::string_view topic, std::string_view payload, uint16_t packet_id);
std::vector<uint8_t> encode_disconnect();

/// Publish target shared by the in-process queue and the MQTT client.
class MessageSink {
public:
    virtual ~MessageSink() = default;
    virtual void publish(const std::string& topic, const std::string& payload) = 0;
};

/// Blocking MQTT 3.1.1 publisher over plain TCP, QoS 1 (waits for PUBACK).
class Client : public MessageSink {
public:
    Client() = default;
    ~Client() override;
    Client(const Client&) = delete;
    Client& operator=(const Client&) = delete;

    /// Connects and waits for CONNACK. Throws Error on failure or refusal.
    void connect(const BrokerUri& broker, std::string_view client_id, uint16_t keepalive_s = 60);
    void publish(const std::string& topic, const std::string& payload) override;
    void disconnect();

    bool connected() const noexcept { return fd_ >= 0; }
    uint64_t acked() const noexcept { return acked_; }

private:
    void send_all(const std::vector<uint8_t>& bytes);
    /// Reads one control packet; returns the fixed-header byte and fills `body`.
    uint8_t read_packet(std::vector<uint8_t>& body);

    int fd_ = -1;
    uint16_t next_packet_id_ = 1;
    uint64_t acked_ = 0;
};

} // namespace agritag::mqtt
