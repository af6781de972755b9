#pragma once

// Synchronous all-to-all collectives over two transports: an in-process hub
// for P workers sharing one address space, and a fully connected TCP mesh
// for one process per rank. Both deliver loss-free, per-pair ordered frames.

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "fsample/bytes.hpp"

namespace fsample {

/// Round tags carried in every frame; a mismatch between peers is a protocol
/// error.
enum class RoundTag : std::uint32_t {
  setup = 1,
  sample_request = 2,
  sample_response = 3,
  feature_request = 4,
  feature_response = 5,
  report = 6,
  user = 100,
};

/// Wire frame header: "FSAA", u32 sequence, u32 tag, u64 payload length.
constexpr std::size_t kFrameHeaderBytes = 4 + 4 + 4 + 8;

Bytes encode_frame_header(std::uint32_t seq, std::uint32_t tag, std::uint64_t length);
struct FrameHeader {
  std::uint32_t seq = 0;
  std::uint32_t tag = 0;
  std::uint64_t length = 0;
};
/// Throws ProtocolError on a bad magic.
FrameHeader decode_frame_header(std::span<const std::uint8_t> header);

class Transport {
 public:
  virtual ~Transport() = default;
  virtual int rank() const = 0;
  virtual int size() const = 0;
  /// Blocking exchange: outgoing[j] goes to rank j; result[j] came from rank j.
  /// Returns only after every rank has contributed to this round.
  virtual std::vector<Bytes> exchange(std::vector<Bytes> outgoing, std::uint32_t seq,
                                      std::uint32_t tag) = 0;
};

/// Per-rank instrumentation. Payload byte counters exclude self-addressed
/// payloads; framing is counted separately as one header per remote peer.
struct RoundCounters {
  std::uint64_t comm_rounds = 0;
  std::uint64_t bytes_sent = 0;
  std::uint64_t bytes_received = 0;
  std::uint64_t framing_bytes_sent = 0;
  std::uint64_t framing_bytes_received = 0;
  double sample_seconds = 0.0;
  double gather_seconds = 0.0;
  double compute_seconds = 0.0;

  void reset() { *this = RoundCounters{}; }
  RoundCounters& operator+=(const RoundCounters& other);
};

/// Collective front-end: numbers rounds and keeps counters.
class Communicator {
 public:
  explicit Communicator(std::unique_ptr<Transport> transport);

  int rank() const { return transport_->rank(); }
  int size() const { return transport_->size(); }

  /// One communication round. `payloads.size()` must equal size().
  std::vector<Bytes> all_to_all(std::vector<Bytes> payloads, RoundTag tag);

  RoundCounters& counters() { return counters_; }
  const RoundCounters& counters() const { return counters_; }

 private:
  std::unique_ptr<Transport> transport_;
  RoundCounters counters_;
  std::uint32_t seq_ = 0;
};

/// Rendezvous shared by P in-process endpoints.
class InProcHub : public std::enable_shared_from_this<InProcHub> {
 public:
  static std::shared_ptr<InProcHub> create(int size, std::chrono::milliseconds timeout =
                                                         std::chrono::seconds(60));

  std::unique_ptr<Transport> endpoint(int rank);
  /// Wakes every waiter with a TransportError naming `rank`.
  void abort(int rank, const std::string& reason);
  int size() const { return size_; }

  std::vector<Bytes> exchange(int rank, std::vector<Bytes> outgoing, std::uint32_t seq,
                              std::uint32_t tag);

 private:
  InProcHub(int size, std::chrono::milliseconds timeout) : size_(size), timeout_(timeout) {}

  struct Round {
    std::uint32_t tag = 0;
    std::vector<std::vector<Bytes>> slots;  // [dst][src]
    std::vector<bool> arrived;
    int deposited = 0;
    int collected = 0;
  };

  int size_;
  std::chrono::milliseconds timeout_;
  std::mutex mutex_;
  std::condition_variable cv_;
  std::map<std::uint32_t, Round> rounds_;
  std::optional<std::pair<int, std::string>> failure_;
};

struct PeerAddress {
  std::string host;
  std::uint16_t port = 0;
};

/// Parses "host:port".
PeerAddress parse_peer(const std::string& text);
std::vector<PeerAddress> parse_peer_list(const std::string& comma_separated);

/// Listening socket; binding port 0 picks an ephemeral port.
class TcpListener {
 public:
  explicit TcpListener(const PeerAddress& bind_address);
  ~TcpListener();
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  std::uint16_t port() const { return port_; }
  int fd() const { return fd_; }

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

/// Fully connected mesh. Rank i listens on peers[i], accepts connections from
/// ranks > i and dials ranks < i.
class TcpTransport : public Transport {
 public:
  static std::unique_ptr<TcpTransport> connect(int rank, const std::vector<PeerAddress>& peers,
                                               std::chrono::milliseconds timeout =
                                                   std::chrono::seconds(60),
                                               std::unique_ptr<TcpListener> listener = nullptr);
  ~TcpTransport() override;

  int rank() const override { return rank_; }
  int size() const override { return static_cast<int>(fds_.size()); }
  std::vector<Bytes> exchange(std::vector<Bytes> outgoing, std::uint32_t seq,
                              std::uint32_t tag) override;

 private:
  TcpTransport(int rank, std::vector<int> fds, std::chrono::milliseconds timeout)
      : rank_(rank), fds_(std::move(fds)), timeout_(timeout) {}

  int rank_;
  std::vector<int> fds_;  // fds_[rank_] == -1
  std::chrono::milliseconds timeout_;
};

}  // namespace fsample
