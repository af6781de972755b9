#include "fsample/transport.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <thread>

#include "fsample/error.hpp"

namespace fsample {

namespace {

constexpr std::string_view kFrameMagic = "FSAA";
constexpr std::uint32_t kHelloTag = 0;

using Clock = std::chrono::steady_clock;

}  // namespace

Bytes encode_frame_header(std::uint32_t seq, std::uint32_t tag, std::uint64_t length) {
  Bytes out;
  out.reserve(kFrameHeaderBytes);
  ByteWriter w(out);
  w.put_magic(kFrameMagic);
  w.put<std::uint32_t>(seq);
  w.put<std::uint32_t>(tag);
  w.put<std::uint64_t>(length);
  return out;
}

FrameHeader decode_frame_header(std::span<const std::uint8_t> header) {
  ByteReader r(header);
  if (!r.magic_matches(kFrameMagic)) throw ProtocolError("frame has bad magic");
  FrameHeader h;
  h.seq = r.get<std::uint32_t>();
  h.tag = r.get<std::uint32_t>();
  h.length = r.get<std::uint64_t>();
  return h;
}

RoundCounters& RoundCounters::operator+=(const RoundCounters& other) {
  comm_rounds += other.comm_rounds;
  bytes_sent += other.bytes_sent;
  bytes_received += other.bytes_received;
  framing_bytes_sent += other.framing_bytes_sent;
  framing_bytes_received += other.framing_bytes_received;
  sample_seconds += other.sample_seconds;
  gather_seconds += other.gather_seconds;
  compute_seconds += other.compute_seconds;
  return *this;
}

Communicator::Communicator(std::unique_ptr<Transport> transport)
    : transport_(std::move(transport)) {}

std::vector<Bytes> Communicator::all_to_all(std::vector<Bytes> payloads, RoundTag tag) {
  const int p = size();
  const int me = rank();
  if (static_cast<int>(payloads.size()) != p) {
    throw ContractViolation("all_to_all needs exactly one payload per rank");
  }
  for (int j = 0; j < p; ++j) {
    if (j == me) continue;
    counters_.bytes_sent += payloads[j].size();
    counters_.framing_bytes_sent += kFrameHeaderBytes;
  }
  auto received = transport_->exchange(std::move(payloads), seq_++, static_cast<std::uint32_t>(tag));
  for (int j = 0; j < p; ++j) {
    if (j == me) continue;
    counters_.bytes_received += received[j].size();
    counters_.framing_bytes_received += kFrameHeaderBytes;
  }
  ++counters_.comm_rounds;
  return received;
}

// ---------------------------------------------------------------------------
// In-process hub

namespace {

class InProcEndpoint : public Transport {
 public:
  InProcEndpoint(std::shared_ptr<InProcHub> hub, int rank) : hub_(std::move(hub)), rank_(rank) {}

  int rank() const override { return rank_; }
  int size() const override { return hub_->size(); }
  std::vector<Bytes> exchange(std::vector<Bytes> outgoing, std::uint32_t seq,
                              std::uint32_t tag) override {
    return hub_->exchange(rank_, std::move(outgoing), seq, tag);
  }

 private:
  std::shared_ptr<InProcHub> hub_;
  int rank_;
};

}  // namespace

std::shared_ptr<InProcHub> InProcHub::create(int size, std::chrono::milliseconds timeout) {
  if (size < 1) throw ParameterError("cluster needs at least one rank");
  return std::shared_ptr<InProcHub>(new InProcHub(size, timeout));
}

std::unique_ptr<Transport> InProcHub::endpoint(int rank) {
  if (rank < 0 || rank >= size_) throw ParameterError("rank out of range");
  return std::make_unique<InProcEndpoint>(shared_from_this(), rank);
}

void InProcHub::abort(int rank, const std::string& reason) {
  {
    std::lock_guard lock(mutex_);
    if (!failure_) failure_ = {rank, reason};
  }
  cv_.notify_all();
}

std::vector<Bytes> InProcHub::exchange(int rank, std::vector<Bytes> outgoing, std::uint32_t seq,
                                       std::uint32_t tag) {
  std::unique_lock lock(mutex_);
  if (failure_) throw TransportError(failure_->first, failure_->second);

  Round& round = rounds_[seq];
  if (round.slots.empty()) {
    round.tag = tag;
    round.slots.assign(size_, std::vector<Bytes>(size_));
    round.arrived.assign(size_, false);
  } else if (round.tag != tag) {
    throw ProtocolError("rank " + std::to_string(rank) + " joined round " + std::to_string(seq) +
                        " with tag " + std::to_string(tag) + ", expected " +
                        std::to_string(round.tag));
  }
  for (int dst = 0; dst < size_; ++dst) round.slots[dst][rank] = std::move(outgoing[dst]);
  round.arrived[rank] = true;
  ++round.deposited;
  if (round.deposited == size_) cv_.notify_all();

  const bool done = cv_.wait_for(lock, timeout_, [&] {
    return failure_.has_value() || rounds_.at(seq).deposited == size_;
  });
  if (failure_) throw TransportError(failure_->first, failure_->second);
  Round& ready = rounds_.at(seq);
  if (!done) {
    const auto missing = std::find(ready.arrived.begin(), ready.arrived.end(), false);
    const int late = static_cast<int>(missing - ready.arrived.begin());
    failure_ = {late, "timed out in round " + std::to_string(seq)};
    cv_.notify_all();
    throw TransportError(late, failure_->second);
  }
  std::vector<Bytes> incoming = std::move(ready.slots[rank]);
  if (++ready.collected == size_) rounds_.erase(seq);
  return incoming;
}

// ---------------------------------------------------------------------------
// TCP mesh

PeerAddress parse_peer(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == text.size()) {
    throw ParameterError("peer address '" + text + "' is not host:port");
  }
  PeerAddress addr;
  addr.host = text.substr(0, colon);
  const std::string port = text.substr(colon + 1);
  if (port.find_first_not_of("0123456789") != std::string::npos || port.size() > 5) {
    throw ParameterError("bad port in peer address '" + text + "'");
  }
  const unsigned long value = std::stoul(port);
  if (value > 65535) throw ParameterError("bad port in peer address '" + text + "'");
  addr.port = static_cast<std::uint16_t>(value);
  return addr;
}

std::vector<PeerAddress> parse_peer_list(const std::string& comma_separated) {
  std::vector<PeerAddress> peers;
  std::size_t begin = 0;
  while (begin <= comma_separated.size()) {
    const auto end = comma_separated.find(',', begin);
    const std::string item =
        comma_separated.substr(begin, end == std::string::npos ? std::string::npos : end - begin);
    if (!item.empty()) peers.push_back(parse_peer(item));
    if (end == std::string::npos) break;
    begin = end + 1;
  }
  return peers;
}

namespace {

sockaddr_in resolve(const PeerAddress& addr) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* result = nullptr;
  const int rc = getaddrinfo(addr.host.c_str(), nullptr, &hints, &result);
  if (rc != 0 || result == nullptr) {
    throw ParameterError("cannot resolve host '" + addr.host + "': " + gai_strerror(rc));
  }
  sockaddr_in out{};
  std::memcpy(&out, result->ai_addr, sizeof(out));
  freeaddrinfo(result);
  out.sin_port = htons(addr.port);
  return out;
}

void set_nonblocking(int fd) {
  const int flags = fcntl(fd, F_GETFL, 0);
  fcntl(fd, F_SETFL, flags | O_NONBLOCK);
}

void set_nodelay(int fd) {
  int one = 1;
  setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

int remaining_ms(Clock::time_point deadline) {
  const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
  return static_cast<int>(std::max<std::int64_t>(0, left.count()));
}

// Blocking helpers for the bootstrap handshake only.
void send_all_blocking(int fd, const Bytes& data, int peer) {
  std::size_t off = 0;
  while (off < data.size()) {
    const ssize_t n = ::send(fd, data.data() + off, data.size() - off, MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) throw TransportError(peer, std::string("handshake send failed: ") + strerror(errno));
    off += static_cast<std::size_t>(n);
  }
}

Bytes recv_exact_blocking(int fd, std::size_t len, int peer, Clock::time_point deadline) {
  Bytes out(len);
  std::size_t off = 0;
  while (off < len) {
    pollfd p{fd, POLLIN, 0};
    const int ready = ::poll(&p, 1, remaining_ms(deadline));
    if (ready == 0) throw TransportError(peer, "handshake timed out");
    if (ready < 0 && errno == EINTR) continue;
    const ssize_t n = ::recv(fd, out.data() + off, len - off, 0);
    if (n < 0 && (errno == EINTR || errno == EAGAIN)) continue;
    if (n <= 0) throw TransportError(peer, "connection closed during handshake");
    off += static_cast<std::size_t>(n);
  }
  return out;
}

}  // namespace

TcpListener::TcpListener(const PeerAddress& bind_address) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw Error(std::string("socket: ") + strerror(errno));
  int one = 1;
  setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr = resolve(bind_address);
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    const std::string err = strerror(errno);
    ::close(fd_);
    throw Error("bind " + bind_address.host + ":" + std::to_string(bind_address.port) + ": " + err);
  }
  if (::listen(fd_, 128) != 0) {
    const std::string err = strerror(errno);
    ::close(fd_);
    throw Error("listen: " + err);
  }
  socklen_t len = sizeof(addr);
  getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

TcpListener::~TcpListener() {
  if (fd_ >= 0) ::close(fd_);
}


std::unique_ptr<TcpTransport> TcpTransport::connect(int rank, const std::vector<PeerAddress>& peers,
                                                    std::chrono::milliseconds timeout,
                                                    std::unique_ptr<TcpListener> listener) {
  const int size = static_cast<int>(peers.size());
  if (size < 1 || rank < 0 || rank >= size) {
    throw ParameterError("rank " + std::to_string(rank) + " outside peer list of " +
                         std::to_string(size));
  }
  const auto deadline = Clock::now() + timeout;
  std::vector<int> fds(size, -1);
  auto cleanup = [&] {
    for (int& fd : fds) {
      if (fd >= 0) ::close(fd);
      fd = -1;
    }
  };

  try {
    if (!listener && rank + 1 < size) listener = std::make_unique<TcpListener>(peers[rank]);

    // Dial every lower rank, retrying until it is listening.
    for (int peer = 0; peer < rank; ++peer) {
      const sockaddr_in addr = resolve(peers[peer]);
      while (true) {
        const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
        if (::connect(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) == 0) {
          fds[peer] = fd;
          break;
        }
        ::close(fd);
        if (Clock::now() >= deadline) throw TransportError(peer, "could not connect");
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
      }
      send_all_blocking(fds[peer], encode_frame_header(0, kHelloTag, static_cast<std::uint64_t>(rank)),
                        peer);
    }

    // Accept every higher rank; they identify themselves with a hello frame.
    for (int accepted = 0; accepted < size - 1 - rank; ++accepted) {
      pollfd p{listener->fd(), POLLIN, 0};
      const int ready = ::poll(&p, 1, remaining_ms(deadline));
      if (ready <= 0) {
        const auto missing = std::find(fds.begin() + rank + 1, fds.end(), -1);
        throw TransportError(static_cast<int>(missing - fds.begin()),
                             "no connection before timeout");
      }
      const int fd = ::accept(listener->fd(), nullptr, nullptr);
      if (fd < 0) throw TransportError(rank, std::string("accept: ") + strerror(errno));
      FrameHeader hello;
      try {
        hello = decode_frame_header(recv_exact_blocking(fd, kFrameHeaderBytes, -1, deadline));
      } catch (...) {
        ::close(fd);
        throw;
      }
      const auto peer = static_cast<int>(hello.length);
      if (hello.tag != kHelloTag || peer <= rank || peer >= size || fds[peer] >= 0) {
        ::close(fd);
        throw ProtocolError("unexpected hello from rank " + std::to_string(peer));
      }
      fds[peer] = fd;
    }
  } catch (...) {
    cleanup();
    throw;
  }

  for (int fd : fds) {
    if (fd < 0) continue;
    set_nodelay(fd);
    set_nonblocking(fd);
  }
  return std::unique_ptr<TcpTransport>(new TcpTransport(rank, std::move(fds), timeout));
}

TcpTransport::~TcpTransport() {
  for (int fd : fds_) {
    if (fd >= 0) ::close(fd);
  }
}

std::vector<Bytes> TcpTransport::exchange(std::vector<Bytes> outgoing, std::uint32_t seq,
                                          std::uint32_t tag) {
  const int p = size();
  std::vector<Bytes> incoming(p);
  incoming[rank_] = std::move(outgoing[rank_]);
  if (p == 1) return incoming;

  struct PeerState {
    Bytes send_header;
    std::size_t sent = 0;  // bytes of header + payload sent
    Bytes recv_header = Bytes(kFrameHeaderBytes);
    std::size_t received = 0;  // bytes of header + payload received
    std::uint64_t recv_length = 0;
    bool header_done = false;
  };
  std::vector<PeerState> state(p);
  int pending = 0;
  for (int j = 0; j < p; ++j) {
    if (j == rank_) continue;
    state[j].send_header = encode_frame_header(seq, tag, outgoing[j].size());
    pending += 2;  // one send, one receive
  }
  auto send_done = [&](int j) { return state[j].sent == kFrameHeaderBytes + outgoing[j].size(); };
  auto recv_done = [&](int j) {
    return state[j].header_done && state[j].received == kFrameHeaderBytes + state[j].recv_length;
  };

  const auto deadline = Clock::now() + timeout_;
  std::vector<pollfd> polls;
  std::vector<int> peer_of;
  while (pending > 0) {
    polls.clear();
    peer_of.clear();
    for (int j = 0; j < p; ++j) {
      if (j == rank_) continue;
      short events = 0;
      if (!send_done(j)) events |= POLLOUT;
      if (!recv_done(j)) events |= POLLIN;
      if (events != 0) {
        polls.push_back({fds_[j], events, 0});
        peer_of.push_back(j);
      }
    }
    const int ready = ::poll(polls.data(), polls.size(), remaining_ms(deadline));
    if (ready < 0 && errno == EINTR) continue;
    if (ready <= 0) {
      int late = peer_of.front();
      for (int j : peer_of) {
        if (!recv_done(j)) {
          late = j;
          break;
        }
      }
      throw TransportError(late, "timed out in round " + std::to_string(seq));
    }
    for (std::size_t i = 0; i < polls.size(); ++i) {
      const int j = peer_of[i];
      auto& st = state[j];
      const short rev = polls[i].revents;
      if ((rev & POLLOUT) && !send_done(j)) {
        const std::uint8_t* src;
        std::size_t len;
        if (st.sent < kFrameHeaderBytes) {
          src = st.send_header.data() + st.sent;
          len = kFrameHeaderBytes - st.sent;
        } else {
          src = outgoing[j].data() + (st.sent - kFrameHeaderBytes);
          len = outgoing[j].size() - (st.sent - kFrameHeaderBytes);
        }
        const ssize_t n = ::send(fds_[j], src, len, MSG_NOSIGNAL);
        if (n < 0 && errno != EAGAIN && errno != EWOULDBLOCK && errno != EINTR) {
          throw TransportError(j, std::string("send failed: ") + strerror(errno));
        }
        if (n > 0) {
          st.sent += static_cast<std::size_t>(n);
          if (send_done(j)) --pending;
        }
      }
      if ((rev & (POLLIN | POLLHUP | POLLERR)) && !recv_done(j)) {
        std::uint8_t* dst;
        std::size_t len;
        if (!st.header_done) {
          dst = st.recv_header.data() + st.received;
          len = kFrameHeaderBytes - st.received;
        } else {
          dst = incoming[j].data() + (st.received - kFrameHeaderBytes);
          len = st.recv_length - (st.received - kFrameHeaderBytes);
        }
        const ssize_t n = ::recv(fds_[j], dst, len, 0);
        if (n == 0) throw TransportError(j, "connection closed");
        if (n < 0) {
          if (errno == EAGAIN || errno == EWOULDBLOCK || errno == EINTR) continue;
          throw TransportError(j, std::string("recv failed: ") + strerror(errno));
        }
        st.received += static_cast<std::size_t>(n);
        if (!st.header_done && st.received == kFrameHeaderBytes) {
          const FrameHeader h = decode_frame_header(st.recv_header);
          if (h.seq != seq || h.tag != tag) {
            throw ProtocolError("rank " + std::to_string(j) + " sent round " +
                                std::to_string(h.seq) + " tag " + std::to_string(h.tag) +
                                ", expected round " + std::to_string(seq) + " tag " +
                                std::to_string(tag));
          }
          st.header_done = true;
          st.recv_length = h.length;
          incoming[j].resize(h.length);
        }
        if (recv_done(j)) --pending;
      }
    }
  }
  return incoming;
}

}  // namespace fsample
