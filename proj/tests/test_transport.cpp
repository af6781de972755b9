#include <atomic>
#include <thread>

#include "doctest.h"
#include "fsample/error.hpp"
#include "fsample/transport.hpp"

using namespace fsample;

namespace {

Bytes text(const std::string& s) { return {s.begin(), s.end()}; }
std::string str(const Bytes& b) { return {b.begin(), b.end()}; }

// Rank r sends "r->j" to every j, including itself.
std::vector<Bytes> greetings(int r, int p) {
  std::vector<Bytes> out;
  for (int j = 0; j < p; ++j) out.push_back(text(std::to_string(r) + "->" + std::to_string(j)));
  return out;
}

}  // namespace

TEST_CASE("frame header round trip") {
  const Bytes h = encode_frame_header(7, 3, 123456789012ULL);
  CHECK(h.size() == kFrameHeaderBytes);
  const FrameHeader d = decode_frame_header(h);
  CHECK(d.seq == 7);
  CHECK(d.tag == 3);
  CHECK(d.length == 123456789012ULL);
  Bytes bad = h;
  bad[0] = 'Z';
  CHECK_THROWS_AS(decode_frame_header(bad), ProtocolError);
}

TEST_CASE("in-process all_to_all delivers every payload") {
  for (int p : {1, 2, 4}) {
    auto hub = InProcHub::create(p);
    std::vector<std::vector<Bytes>> got(p);
    std::vector<RoundCounters> counters(p);
    std::vector<std::thread> threads;
    for (int r = 0; r < p; ++r) {
      threads.emplace_back([&, r] {
        Communicator comm(hub->endpoint(r));
        for (int round = 0; round < 3; ++round) {
          got[r] = comm.all_to_all(greetings(r, p), RoundTag::user);
        }
        counters[r] = comm.counters();
      });
    }
    for (auto& t : threads) t.join();
    for (int r = 0; r < p; ++r) {
      REQUIRE(got[r].size() == static_cast<std::size_t>(p));
      for (int j = 0; j < p; ++j) CHECK(str(got[r][j]) == std::to_string(j) + "->" + std::to_string(r));
      CHECK(counters[r].comm_rounds == 3);
      CHECK(counters[r].bytes_sent == 3 * 4 * static_cast<std::uint64_t>(p - 1));
      CHECK(counters[r].framing_bytes_sent == 3 * kFrameHeaderBytes * (p - 1));
    }
  }
}

TEST_CASE("empty payloads still count as a round") {
  auto hub = InProcHub::create(2);
  std::vector<std::uint64_t> rounds(2);
  std::vector<std::thread> threads;
  for (int r = 0; r < 2; ++r) {
    threads.emplace_back([&, r] {
      Communicator comm(hub->endpoint(r));
      auto in = comm.all_to_all(std::vector<Bytes>(2), RoundTag::feature_request);
      CHECK(in[0].empty());
      CHECK(in[1].empty());
      rounds[r] = comm.counters().comm_rounds;
    });
  }
  for (auto& t : threads) t.join();
  CHECK(rounds == std::vector<std::uint64_t>{1, 1});
}

TEST_CASE("payload count must match the cluster size") {
  auto hub = InProcHub::create(1);
  Communicator comm(hub->endpoint(0));
  CHECK_THROWS_AS(comm.all_to_all(std::vector<Bytes>(2), RoundTag::user), ContractViolation);
}

TEST_CASE("in-process timeout names the missing rank") {
  auto hub = InProcHub::create(3, std::chrono::milliseconds(100));
  Communicator comm(hub->endpoint(0));
  try {
    comm.all_to_all(std::vector<Bytes>(3), RoundTag::user);
    FAIL("expected a transport error");
  } catch (const TransportError& e) {
    CHECK(e.rank() == 1);
  }
}

TEST_CASE("abort wakes waiting peers") {
  auto hub = InProcHub::create(2);
  std::atomic<int> rank_seen{-1};
  std::thread waiter([&] {
    Communicator comm(hub->endpoint(0));
    try {
      comm.all_to_all(std::vector<Bytes>(2), RoundTag::user);
    } catch (const TransportError& e) {
      rank_seen = e.rank();
    }
  });
  std::this_thread::sleep_for(std::chrono::milliseconds(20));
  hub->abort(1, "rank 1 failed");
  waiter.join();
  CHECK(rank_seen == 1);
}

TEST_CASE("mismatched round tags are a protocol error") {
  auto hub = InProcHub::create(2, std::chrono::milliseconds(500));
  std::atomic<bool> protocol{false};
  std::thread a([&] {
    Communicator comm(hub->endpoint(0));
    try {
      comm.all_to_all(std::vector<Bytes>(2), RoundTag::sample_request);
    } catch (const Error&) {
    }
  });
  std::this_thread::sleep_for(std::chrono::milliseconds(20));
  std::thread b([&] {
    Communicator comm(hub->endpoint(1));
    try {
      comm.all_to_all(std::vector<Bytes>(2), RoundTag::feature_request);
    } catch (const ProtocolError&) {
      protocol = true;
      hub->abort(1, "tag mismatch");
    } catch (const Error&) {
    }
  });
  a.join();
  b.join();
  CHECK(protocol);
}

TEST_CASE("peer address parsing") {
  const PeerAddress a = parse_peer("127.0.0.1:9000");
  CHECK(a.host == "127.0.0.1");
  CHECK(a.port == 9000);
  CHECK(parse_peer_list("h1:1,h2:2,h3:3").size() == 3);
  CHECK_THROWS_AS(parse_peer("nohost"), ParameterError);
  CHECK_THROWS_AS(parse_peer("h:99999"), ParameterError);
  CHECK_THROWS_AS(parse_peer("h:x1"), ParameterError);
}

TEST_CASE("TCP mesh all_to_all") {
  const int p = 3;
  std::vector<std::unique_ptr<TcpListener>> listeners;
  std::vector<PeerAddress> peers;
  for (int r = 0; r < p; ++r) {
    listeners.push_back(std::make_unique<TcpListener>(PeerAddress{"127.0.0.1", 0}));
    peers.push_back({"127.0.0.1", listeners.back()->port()});
  }
  std::vector<std::vector<Bytes>> got(p);
  std::vector<std::string> errors(p);
  std::vector<std::thread> threads;
  for (int r = 0; r < p; ++r) {
    threads.emplace_back([&, r, listener = std::move(listeners[r])]() mutable {
      try {
        Communicator comm(
            TcpTransport::connect(r, peers, std::chrono::seconds(20), std::move(listener)));
        std::vector<Bytes> big(p);
        for (int j = 0; j < p; ++j) big[j] = Bytes(300000 + 17 * j + r, static_cast<std::uint8_t>(r));
        auto large = comm.all_to_all(big, RoundTag::user);
        for (int j = 0; j < p; ++j) {
          if (large[j].size() != static_cast<std::size_t>(300000 + 17 * r + j)) {
            errors[r] = "large payload size";
          }
        }
        got[r] = comm.all_to_all(greetings(r, p), RoundTag::user);
        comm.all_to_all(std::vector<Bytes>(p), RoundTag::setup);
      } catch (const std::exception& e) {
        errors[r] = e.what();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (int r = 0; r < p; ++r) {
    CHECK(errors[r].empty());
    REQUIRE(got[r].size() == static_cast<std::size_t>(p));
    for (int j = 0; j < p; ++j) CHECK(str(got[r][j]) == std::to_string(j) + "->" + std::to_string(r));
  }
}

TEST_CASE("TCP connect fails with rank attribution when a peer never appears") {
  TcpListener unused(PeerAddress{"127.0.0.1", 0});
  auto listener = std::make_unique<TcpListener>(PeerAddress{"127.0.0.1", 0});
  std::vector<PeerAddress> peers{{"127.0.0.1", listener->port()}, {"127.0.0.1", unused.port()}};
  // Rank 0 waits for rank 1 to dial in, which never happens.
  try {
    TcpTransport::connect(0, peers, std::chrono::milliseconds(300), std::move(listener));
    FAIL("expected a transport error");
  } catch (const TransportError& e) {
    CHECK(e.rank() == 1);
  }
}
