#include "agritag/mqtt.hpp"

#include "agritag/error.hpp"

#include <netdb.h>
#include <sys/socket.h>
#include <sys/time.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cstring>

namespace agritag::mqtt {

namespace {

void put_u16(std::vector<uint8_t>& out, uint16_t v)
{
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v & 0xff));
}

void put_string(std::vector<uint8_t>& out, std::string_view s)
{
    if (s.size() > 0xffff)
        throw Error("MQTT string too long");
    put_u16(out, static_cast<uint16_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
}

std::vector<uint8_t> frame(uint8_t header, const std::vector<uint8_t>& body)
{
    std::vector<uint8_t> out{header};
    auto len = encode_remaining_length(body.size());
    out.insert(out.end(), len.begin(), len.end());
    out.insert(out.end(), body.begin(), body.end());
    return out;
}

} // namespace

BrokerUri parse_uri(std::string_view uri)
{
    constexpr std::string_view kScheme = "mqtt://";
    if (uri.substr(0, kScheme.size()) != kScheme)
        throw ConfigError("broker URI must start with mqtt://");
    std::string_view rest = uri.substr(kScheme.size());
    if (!rest.empty() && rest.back() == '/')
        rest.remove_suffix(1);
    BrokerUri out;
    auto colon = rest.rfind(':');
    if (colon == std::string_view::npos) {
        out.host = std::string(rest);
    } else {
        out.host = std::string(rest.substr(0, colon));
        auto port_str = rest.substr(colon + 1);
        unsigned port = 0;
        auto res = std::from_chars(port_str.data(), port_str.data() + port_str.size(), port);
        if (res.ec != std::errc() || res.ptr != port_str.data() + port_str.size() || port == 0 || port > 65535)
            throw ConfigError("invalid broker port");
        out.port = static_cast<uint16_t>(port);
    }
    if (out.host.empty())
        throw ConfigError("broker URI has no host");
    return out;
}

std::vector<uint8_t> encode_remaining_length(size_t len)
{
    if (len > 268'435'455)
        throw Error("MQTT packet too large");
    std::vector<uint8_t> out;
    do {
        uint8_t byte = len % 128;
        len /= 128;
        if (len > 0)
            byte |= 0x80;
        out.push_back(byte);
    } while (len > 0);
    return out;
}

std::vector<uint8_t> encode_connect(std::string_view client_id, uint16_t keepalive_s)
{
    std::vector<uint8_t> body;
    put_string(body, "MQTT");
    body.push_back(0x04); // protocol level 3.1.1
    body.push_back(0x02); // clean session
    put_u16(body, keepalive_s);
    put_string(body, client_id);
    return frame(0x10, body);
}

std::vector<uint8_t> encode_publish_qos1(std::string_view topic, std::string_view payload, uint16_t packet_id)
{
    std::vector<uint8_t> body;
    put_string(body, topic);
    put_u16(body, packet_id);
    body.insert(body.end(), payload.begin(), payload.end());
    return frame(0x32, body);
}

std::vector<uint8_t> encode_disconnect() { return {0xe0, 0x00}; }

Client::~Client()
{
    if (fd_ >= 0)
        ::close(fd_);
}

void Client::send_all(const std::vector<uint8_t>& bytes)
{
    size_t sent = 0;
    while (sent < bytes.size()) {
        ssize_t n = ::send(fd_, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR)
                continue;
            throw Error(std::string("MQTT send failed: ") + std::strerror(errno));
        }
        sent += static_cast<size_t>(n);
    }
}

uint8_t Client::read_packet(std::vector<uint8_t>& body)
{
    auto read_exact = [&](uint8_t* buf, size_t n) {
        size_t got = 0;
        while (got < n) {
            ssize_t r = ::recv(fd_, buf + got, n - got, 0);
            if (r == 0)
                throw Error("MQTT broker closed the connection");
            if (r < 0) {
                if (errno == EINTR)
                    continue;
                throw Error(std::string("MQTT receive failed: ") + std::strerror(errno));
            }
            got += static_cast<size_t>(r);
        }
    };

    uint8_t header = 0;
    read_exact(&header, 1);
    size_t len = 0;
    size_t mult = 1;
    for (int i = 0; i < 4; ++i) {
        uint8_t b = 0;
        read_exact(&b, 1);
        len += (b & 0x7f) * mult;
        mult *= 128;
        if (!(b & 0x80))
            break;
    }
    body.assign(len, 0);
    if (len)
        read_exact(body.data(), len);
    return header;
}

void Client::connect(const BrokerUri& broker, std::string_view client_id, uint16_t keepalive_s)
{
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    std::string port = std::to_string(broker.port);
    if (int rc = ::getaddrinfo(broker.host.c_str(), port.c_str(), &hints, &res); rc != 0)
        throw Error("cannot resolve broker host '" + broker.host + "': " + gai_strerror(rc));

    int fd = -1;
    for (addrinfo* ai = res; ai; ai = ai->ai_next) {
        fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
        if (fd < 0)
            continue;
        if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0)
            break;
        ::close(fd);
        fd = -1;
    }
    ::freeaddrinfo(res);
    if (fd < 0)
        throw Error("cannot connect to broker " + broker.host + ":" + port);

    timeval tv{5, 0};
    ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
    fd_ = fd;

    send_all(encode_connect(client_id, keepalive_s));
    std::vector<uint8_t> body;
    uint8_t header = read_packet(body);
    if (header != 0x20 || body.size() != 2)
        throw Error("expected CONNACK from broker");
    if (body[1] != 0)
        throw Error("broker refused connection, code " + std::to_string(body[1]));
}

void Client::publish(const std::string& topic, const std::string& payload)
{
    if (fd_ < 0)
        throw Error("MQTT client not connected");
    uint16_t id = next_packet_id_;
    next_packet_id_ = next_packet_id_ == 0xffff ? 1 : next_packet_id_ + 1;
    send_all(encode_publish_qos1(topic, payload, id));

    std::vector<uint8_t> body;
    for (;;) {
        uint8_t header = read_packet(body);
        if ((header & 0xf0) != 0x40)
            continue; // ignore anything that is not a PUBACK
        if (body.size() == 2 && (body[0] << 8 | body[1]) == id) {
            ++acked_;
            return;
        }
    }
}

void Client::disconnect()
{
    if (fd_ < 0)
        return;
    try {
        send_all(encode_disconnect());
    } catch (const Error&) {
    }
    ::close(fd_);
    fd_ = -1;
}

} // namespace agritag::mqtt
