#pragma once

#include "pirlab/cache_pir.hpp"
#include "pirlab/core.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <future>
#include <string>
#include <thread>
#include <vector>

namespace pirlab {

// Frame layout: u32 LE payload length, u8 frame type, payload bytes.
namespace frame_type {
inline constexpr std::uint8_t query = 0x01;
inline constexpr std::uint8_t answer = 0x02;
inline constexpr std::uint8_t config_req = 0x03;
inline constexpr std::uint8_t config_resp = 0x04;
inline constexpr std::uint8_t error = 0x7F;
} // namespace frame_type

namespace error_code {
inline constexpr std::uint8_t malformed = 0x01;
inline constexpr std::uint8_t oversized = 0x02;
inline constexpr std::uint8_t bad_type = 0x03;
} // namespace error_code

inline constexpr std::uint64_t max_frame_payload = 64ULL * 1024 * 1024;
inline constexpr std::size_t frame_header_bytes = 5;

struct Frame
{
  std::uint8_t type = 0;
  std::vector<std::uint8_t> payload;
};

namespace wire {

inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v)
{
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
}

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v)
{
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
  }
}

inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v)
{
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
  }
}

struct Reader
{
  const std::uint8_t* data;
  std::size_t size;
  std::size_t pos = 0;

  bool need(std::size_t n) const { return pos + n <= size; }

  std::uint16_t u16()
  {
    if (!need(2)) {
      throw ProtocolError("query payload truncated");
    }
    const std::uint16_t v = static_cast<std::uint16_t>(data[pos] | (data[pos + 1] << 8));
    pos += 2;
    return v;
  }

  std::uint8_t u8()
  {
    if (!need(1)) {
      throw ProtocolError("query payload truncated");
    }
    return data[pos++];
  }

  std::uint32_t u32()
  {
    if (!need(4)) {
      throw ProtocolError("query payload truncated");
    }
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(data[pos + static_cast<std::size_t>(i)]) << (8 * i);
    }
    pos += 4;
    return v;
  }

  std::uint64_t u64()
  {
    std::uint64_t lo = u32();
    std::uint64_t hi = u32();
    return lo | (hi << 32);
  }
};

} // namespace wire

// QUERY payload: u16 sum_count, then per sum u8 term_count, then per term
// u16 message_id and u32 symbol_index, all little-endian.
inline std::vector<std::uint8_t> query_wire_encode(const Query& query)
{
  if (query.sums.size() > UINT16_MAX) {
    throw ProtocolError("query sum count exceeds wire limit");
  }
  std::vector<std::uint8_t> out;
  wire::put_u16(out, static_cast<std::uint16_t>(query.sums.size()));
  for (const auto& sum : query.sums) {
    if (sum.terms.size() > UINT8_MAX) {
      throw ProtocolError("sum term count exceeds wire limit");
    }
    out.push_back(static_cast<std::uint8_t>(sum.terms.size()));
    for (const auto& t : sum.terms) {
      if (t.message_id > UINT16_MAX) {
        throw ProtocolError("message id exceeds wire limit");
      }
      wire::put_u16(out, static_cast<std::uint16_t>(t.message_id));
      wire::put_u32(out, t.symbol_index);
    }
  }
  return out;
}

inline Query query_wire_decode(const std::uint8_t* data, std::size_t size)
{
  wire::Reader r{data, size};
  Query query;
  const std::uint16_t sum_count = r.u16();
  query.sums.resize(sum_count);
  for (auto& sum : query.sums) {
    const std::uint8_t term_count = r.u8();
    sum.terms.resize(term_count);
    for (auto& t : sum.terms) {
      t.message_id = r.u16();
      t.symbol_index = r.u32();
    }
  }
  if (r.pos != size) {
    throw ProtocolError("trailing bytes in query payload");
  }
  return query;
}

namespace detail_net {

inline void write_all(int fd, const std::uint8_t* data, std::size_t size)
{
  while (size > 0) {
    const ssize_t n = ::send(fd, data, size, MSG_NOSIGNAL);
    if (n <= 0) {
      throw ProtocolError("socket write failed: " + std::string(std::strerror(errno)));
    }
    data += n;
    size -= static_cast<std::size_t>(n);
  }
}

inline bool read_exact(int fd, std::uint8_t* data, std::size_t size)
{
  while (size > 0) {
    const ssize_t n = ::recv(fd, data, size, 0);
    if (n == 0) {
      return false; // peer closed
    }
    if (n < 0) {
      throw ProtocolError("socket read failed: " + std::string(std::strerror(errno)));
    }
    data += n;
    size -= static_cast<std::size_t>(n);
  }
  return true;
}

inline void send_frame(int fd, std::uint8_t type, const std::vector<std::uint8_t>& payload)
{
  std::vector<std::uint8_t> buf;
  buf.reserve(frame_header_bytes + payload.size());
  wire::put_u32(buf, static_cast<std::uint32_t>(payload.size()));
  buf.push_back(type);
  buf.insert(buf.end(), payload.begin(), payload.end());
  write_all(fd, buf.data(), buf.size());
}

// Returns false on clean EOF before a header arrived.
inline bool recv_frame(int fd, Frame& out)
{
  std::uint8_t header[frame_header_bytes];
  if (!read_exact(fd, header, 1)) {
    return false;
  }
  if (!read_exact(fd, header + 1, frame_header_bytes - 1)) {
    throw ProtocolError("truncated frame header");
  }
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i) {
    len |= static_cast<std::uint32_t>(header[i]) << (8 * i);
  }
  out.type = header[4];
  if (len > max_frame_payload) {
    throw ProtocolError("oversized frame");
  }
  out.payload.resize(len);
  if (len > 0 && !read_exact(fd, out.payload.data(), len)) {
    throw ProtocolError("truncated frame payload");
  }
  return true;
}

struct FdGuard
{
  int fd = -1;
  FdGuard() = default;
  explicit FdGuard(int f)
    : fd(f)
  {
  }
  FdGuard(const FdGuard&) = delete;
  FdGuard& operator=(const FdGuard&) = delete;
  FdGuard(FdGuard&& o) noexcept
    : fd(o.fd)
  {
    o.fd = -1;
  }
  ~FdGuard()
  {
    if (fd >= 0) {
      ::close(fd);
    }
  }
};

} // namespace detail_net

// One database process: answers QUERY frames against an immutable
// replicated store, echoes instance parameters on CONFIG_REQ, and responds
// to malformed input with ERROR frames. Stateless across requests.
class DatabaseServer
{
public:
  DatabaseServer(MessageStore store, SchemeParams params)
    : store_(std::move(store))
    , params_(params)
  {
    params_.validate();
  }

  // Binds and starts accepting; port 0 picks an ephemeral port.
  void start(std::uint16_t port)
  {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) {
      throw RetrievalError("socket creation failed");
    }
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(port);
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
      ::close(listen_fd_);
      listen_fd_ = -1;
      throw RetrievalError("bind failed on port " + std::to_string(port));
    }
    socklen_t len = sizeof(addr);
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    ::listen(listen_fd_, 16);
    running_ = true;
    accept_thread_ = std::thread([this] { accept_loop(); });
  }

  std::uint16_t port() const { return port_; }

  void stop()
  {
    if (!running_.exchange(false)) {
      return;
    }
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    if (accept_thread_.joinable()) {
      accept_thread_.join();
    }
    for (auto& t : workers_) {
      if (t.joinable()) {
        t.join();
      }
    }
    workers_.clear();
  }

  ~DatabaseServer() { stop(); }

private:
  void accept_loop()
  {
    while (running_) {
      const int fd = ::accept(listen_fd_, nullptr, nullptr);
      if (fd < 0) {
        if (!running_) {
          break;
        }
        continue;
      }
      workers_.emplace_back([this, fd] { handle_connection(fd); });
    }
  }

  void handle_connection(int fd)
  {
    detail_net::FdGuard guard(fd);
    try {
      Frame frame;
      while (detail_net::recv_frame(fd, frame)) {
        switch (frame.type) {
          case frame_type::query:
            handle_query(fd, frame);
            break;
          case frame_type::config_req:
            handle_config(fd);
            break;
          default:
            detail_net::send_frame(fd, frame_type::error, {error_code::bad_type});
            return;
        }
      }
    } catch (const ProtocolError& e) {
      const std::uint8_t code = (std::string(e.what()).find("oversized") != std::string::npos)
                                    ? error_code::oversized
                                    : error_code::malformed;
      try {
        detail_net::send_frame(fd, frame_type::error, {code});
      } catch (...) {
      }
    } catch (...) {
    }
  }

  void handle_query(int fd, const Frame& frame)
  {
    Query query;
    try {
      query = query_wire_decode(frame.payload.data(), frame.payload.size());
    } catch (const ProtocolError&) {
      detail_net::send_frame(fd, frame_type::error, {error_code::malformed});
      return;
    }
    std::vector<std::uint8_t> payload;
    payload.reserve(query.sums.size());
    try {
      for (const auto& sum : query.sums) {
        payload.push_back(xor_combine(store_, sum));
      }
    } catch (const ProtocolError&) {
      detail_net::send_frame(fd, frame_type::error, {error_code::malformed});
      return;
    }
    detail_net::send_frame(fd, frame_type::answer, payload);
  }

  void handle_config(int fd)
  {
    std::vector<std::uint8_t> payload;
    wire::put_u32(payload, params_.num_databases);
    wire::put_u32(payload, params_.num_messages);
    wire::put_u64(payload, params_.message_length());
    wire::put_u32(payload, params_.cache_numerator);
    wire::put_u32(payload, params_.cache_denominator);
    detail_net::send_frame(fd, frame_type::config_resp, payload);
  }

  MessageStore store_;
  SchemeParams params_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> running_{false};
  std::thread accept_thread_;
  std::vector<std::thread> workers_;
};

struct ServerConfig
{
  std::uint32_t num_databases = 0;
  std::uint32_t num_messages = 0;
  std::uint64_t message_length = 0;
  std::uint32_t cache_numerator = 0;
  std::uint32_t cache_denominator = 0;
};

struct WireReport
{
  std::uint64_t answer_payload_bytes = 0;   // the quantity compared to D
  std::uint64_t query_upload_bytes = 0;     // reported, never counted in D
  std::uint64_t framing_overhead_bytes = 0; // headers, both directions
  std::uint64_t downloaded_symbols = 0;
  Rational normalized_cost;
};

struct Endpoint
{
  std::string host;
  std::uint16_t port = 0;

  static Endpoint parse(const std::string& text)
  {
    const auto pos = text.rfind(':');
    if (pos == std::string::npos || pos + 1 >= text.size()) {
      throw ParamError("endpoint must be host:port, got '" + text + "'");
    }
    Endpoint ep;
    ep.host = text.substr(0, pos);
    const unsigned long p = std::stoul(text.substr(pos + 1));
    if (p == 0 || p > 65535) {
      throw ParamError("endpoint port out of range in '" + text + "'");
    }
    ep.port = static_cast<std::uint16_t>(p);
    return ep;
  }

  std::string to_string() const { return host + ":" + std::to_string(port); }
};

inline std::uint64_t request_timeout_ms_from_env(std::uint64_t fallback)
{
  if (const char* env = std::getenv("PIRLAB_TIMEOUT_MS")) {
    const unsigned long long v = std::strtoull(env, nullptr, 10);
    if (v > 0) {
      return v;
    }
  }
  return fallback;
}

namespace detail_net {

inline int connect_with_timeout(const Endpoint& ep, std::uint64_t timeout_ms)
{
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(ep.host.c_str(), std::to_string(ep.port).c_str(), &hints, &res) != 0 || !res) {
    throw RetrievalError("cannot resolve endpoint " + ep.to_string());
  }
  const int fd = ::socket(res->ai_family, SOCK_STREAM | SOCK_NONBLOCK, 0);
  if (fd < 0) {
    ::freeaddrinfo(res);
    throw RetrievalError("socket creation failed for " + ep.to_string());
  }
  int rc = ::connect(fd, res->ai_addr, res->ai_addrlen);
  ::freeaddrinfo(res);
  if (rc != 0 && errno == EINPROGRESS) {
    pollfd pfd{fd, POLLOUT, 0};
    rc = ::poll(&pfd, 1, static_cast<int>(timeout_ms));
    int err = 0;
    socklen_t errlen = sizeof(err);
    if (rc > 0) {
      ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &errlen);
    }
    if (rc <= 0 || err != 0) {
      ::close(fd);
      throw RetrievalError("cannot connect to database at " + ep.to_string());
    }
  } else if (rc != 0) {
    ::close(fd);
    throw RetrievalError("cannot connect to database at " + ep.to_string());
  }
  // back to blocking with a request timeout
  const int flags = ::fcntl(fd, F_GETFL, 0);
  ::fcntl(fd, F_SETFL, flags & ~O_NONBLOCK);
  return fd;
}

inline void apply_request_timeout(int fd, std::uint64_t timeout_ms)
{
  timeval tv{};
  tv.tv_sec = static_cast<time_t>(timeout_ms / 1000);
  tv.tv_usec = static_cast<suseconds_t>((timeout_ms % 1000) * 1000);
  ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
  ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof(tv));
}

} // namespace detail_net

class NetClient
{
public:
  NetClient(Endpoint ep, std::uint64_t connect_timeout_ms, std::uint64_t request_timeout_ms)
    : endpoint_(std::move(ep))
    , fd_(detail_net::connect_with_timeout(endpoint_, connect_timeout_ms))
  {
    detail_net::apply_request_timeout(fd_.fd, request_timeout_ms);
  }

  ServerConfig fetch_config()
  {
    detail_net::send_frame(fd_.fd, frame_type::config_req, {});
    Frame frame;
    if (!detail_net::recv_frame(fd_.fd, frame) || frame.type != frame_type::config_resp ||
        frame.payload.size() != 24) {
      throw ProtocolError("bad config response from " + endpoint_.to_string());
    }
    wire::Reader r{frame.payload.data(), frame.payload.size()};
    ServerConfig cfg;
    cfg.num_databases = r.u32();
    cfg.num_messages = r.u32();
    cfg.message_length = r.u64();
    cfg.cache_numerator = r.u32();
    cfg.cache_denominator = r.u32();
    return cfg;
  }

  // Sends one query and returns the answer plus byte accounting.
  Answer ask(const Query& query, WireReport& report)
  {
    const std::vector<std::uint8_t> payload = query_wire_encode(query);
    detail_net::send_frame(fd_.fd, frame_type::query, payload);
    report.query_upload_bytes += payload.size();
    report.framing_overhead_bytes += frame_header_bytes;

    Frame frame;
    if (!detail_net::recv_frame(fd_.fd, frame)) {
      throw RetrievalError("connection closed by database at " + endpoint_.to_string());
    }
    report.framing_overhead_bytes += frame_header_bytes;
    if (frame.type == frame_type::error) {
      throw RetrievalError("database at " + endpoint_.to_string() + " reported an error");
    }
    if (frame.type != frame_type::answer) {
      throw ProtocolError("unexpected frame type from " + endpoint_.to_string());
    }
    if (frame.payload.size() != query.sums.size()) {
      throw ProtocolError("answer length mismatch from " + endpoint_.to_string());
    }
    report.answer_payload_bytes += frame.payload.size();
    Answer answer;
    answer.symbols.assign(frame.payload.begin(), frame.payload.end());
    return answer;
  }

private:
  Endpoint endpoint_;
  detail_net::FdGuard fd_;
};

// Networked realization of retrieve(): identical contract to the
// in-process path, plus bit-exact on-wire accounting.
inline std::pair<Message, WireReport> fetch(std::uint32_t theta,
                                            const SchemeParams& params,
                                            const CacheContent& cache,
                                            const std::vector<Endpoint>& endpoints,
                                            SeededRandomness& rng,
                                            std::uint64_t connect_timeout_ms = 5000,
                                            std::uint64_t request_timeout_ms = 30000)
{
  params.validate();
  if (endpoints.size() != params.num_databases) {
    throw ParamError("endpoint count must equal the number of databases");
  }
  request_timeout_ms = request_timeout_ms_from_env(request_timeout_ms);

  struct NetProvider final : AnswerProvider
  {
    const std::vector<Endpoint>* endpoints;
    std::uint64_t connect_ms;
    std::uint64_t request_ms;
    WireReport report;

    std::vector<Answer> answer_all(const std::vector<Query>& queries) override
    {
      std::vector<std::future<std::pair<Answer, WireReport>>> futures;
      futures.reserve(queries.size());
      for (std::size_t n = 0; n < queries.size(); ++n) {
        futures.push_back(std::async(std::launch::async, [this, n, &queries] {
          WireReport local;
          NetClient client((*endpoints)[n], connect_ms, request_ms);
          Answer ans = client.ask(queries[n], local);
          return std::make_pair(std::move(ans), local);
        }));
      }
      std::vector<Answer> answers(queries.size());
      for (std::size_t n = 0; n < queries.size(); ++n) {
        auto [ans, local] = futures[n].get();
        answers[n] = std::move(ans);
        report.answer_payload_bytes += local.answer_payload_bytes;
        report.query_upload_bytes += local.query_upload_bytes;
        report.framing_overhead_bytes += local.framing_overhead_bytes;
      }
      return answers;
    }
  };

  NetProvider provider;
  provider.endpoints = &endpoints;
  provider.connect_ms = connect_timeout_ms;
  provider.request_ms = request_timeout_ms;

  auto [message, cost] = retrieve(theta, params, cache, provider, rng);
  WireReport report = provider.report;
  report.downloaded_symbols = cost.downloaded_symbols;
  report.normalized_cost = cost.normalized_cost;
  return {std::move(message), report};
}

} // namespace pirlab
