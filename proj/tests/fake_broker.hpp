#pragma once

// Minimal single-connection MQTT 3.1.1 broker for tests: acknowledges CONNECT
// and QoS 1 PUBLISH packets and records what it received.

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstdint>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

class FakeBroker {
public:
    explicit FakeBroker(uint8_t connack_code = 0) : connack_code_(connack_code)
    {
        listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
        int one = 1;
        ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
        addr.sin_port = 0;
        ::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr));
        ::listen(listen_fd_, 1);
        socklen_t len = sizeof(addr);
        ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
        port_ = ntohs(addr.sin_port);
        thread_ = std::thread([this] { serve(); });
    }

    ~FakeBroker()
    {
        ::shutdown(listen_fd_, SHUT_RDWR);
        ::close(listen_fd_);
        if (thread_.joinable())
            thread_.join();
    }

    uint16_t port() const { return port_; }
    std::string uri() const { return "mqtt://127.0.0.1:" + std::to_string(port_); }

    /// Waits for the client to disconnect, then returns the received messages.
    std::vector<std::pair<std::string, std::string>> finish()
    {
        if (thread_.joinable())
            thread_.join();
        std::lock_guard lock(mu_);
        return messages_;
    }

    std::string client_id() const
    {
        std::lock_guard lock(mu_);
        return client_id_;
    }

private:
    static bool read_exact(int fd, uint8_t* buf, size_t n)
    {
        size_t got = 0;
        while (got < n) {
            ssize_t r = ::recv(fd, buf + got, n - got, 0);
            if (r <= 0)
                return false;
            got += size_t(r);
        }
        return true;
    }

    static bool read_packet(int fd, uint8_t& header, std::vector<uint8_t>& body)
    {
        if (!read_exact(fd, &header, 1))
            return false;
        size_t len = 0, mult = 1;
        for (int i = 0; i < 4; ++i) {
            uint8_t b;
            if (!read_exact(fd, &b, 1))
                return false;
            len += (b & 0x7f) * mult;
            mult *= 128;
            if (!(b & 0x80))
                break;
        }
        body.assign(len, 0);
        return len == 0 || read_exact(fd, body.data(), len);
    }

    void serve()
    {
        int fd = ::accept(listen_fd_, nullptr, nullptr);
        if (fd < 0)
            return;
        uint8_t header;
        std::vector<uint8_t> body;
        if (read_packet(fd, header, body) && header == 0x10) {
            // variable header is 10 bytes, then the length-prefixed client id
            size_t n = size_t(body[10]) << 8 | body[11];
            {
                std::lock_guard lock(mu_);
                client_id_.assign(body.begin() + 12, body.begin() + 12 + long(n));
            }
            uint8_t ack[4] = {0x20, 0x02, 0x00, connack_code_};
            ::send(fd, ack, 4, MSG_NOSIGNAL);
            while (connack_code_ == 0 && read_packet(fd, header, body)) {
                if (header == 0xe0)
                    break;
                if ((header & 0xf0) != 0x30)
                    continue;
                size_t tlen = size_t(body[0]) << 8 | body[1];
                std::string topic(body.begin() + 2, body.begin() + 2 + long(tlen));
                uint8_t id_hi = body[2 + tlen], id_lo = body[3 + tlen];
                std::string payload(body.begin() + 4 + long(tlen), body.end());
                {
                    std::lock_guard lock(mu_);
                    messages_.emplace_back(std::move(topic), std::move(payload));
                }
                uint8_t puback[4] = {0x40, 0x02, id_hi, id_lo};
                ::send(fd, puback, 4, MSG_NOSIGNAL);
            }
        }
        ::close(fd);
    }

    uint8_t connack_code_;
    int listen_fd_ = -1;
    uint16_t port_ = 0;
    std::thread thread_;
    mutable std::mutex mu_;
    std::string client_id_;
    std::vector<std::pair<std::string, std::string>> messages_;
};
