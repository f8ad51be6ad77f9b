#pragma once

#include <cstdint>
#include <functional>
#include <list>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "taskdb/backends.hpp"
#include "taskdb/model_repo.hpp"
#include "taskdb/mvec.hpp"

namespace taskdb {

// Wire format for remote inference: a length-prefixed batch envelope of
// Mvec frames over HTTP POST; the response mirrors the request.
std::vector<std::uint8_t> encode_batch_envelope(const std::vector<Mvec>& rows);
std::vector<Mvec> decode_batch_envelope(std::span<const std::uint8_t> bytes);

struct RemoteStats {
  std::uint64_t network_calls = 0;  // requests that consumed quota
  std::uint64_t attempts = 0;       // individual HTTP attempts incl. retries
  std::uint64_t cache_hits = 0;
  std::uint64_t quota_used = 0;
};

/// HTTP client for API-registered models. Per invocation it performs at
/// most max_retries+1 attempts with exponential backoff (base 50 ms,
/// doubling, no jitter), enforces the per-attempt timeout, returns cached
/// responses for identical payloads without consuming quota, and raises
/// QuotaExhausted once the request budget is spent.
class RemoteClient {
 public:
  explicit RemoteClient(ApiModelSpec spec, std::size_t cache_capacity = 1024);
  ~RemoteClient();

  std::vector<Mvec> invoke(const std::vector<Mvec>& payload);

  RemoteStats stats() const;

 private:
  struct CacheEntry {
    std::string key;
    std::vector<Mvec> response;
  };

  std::vector<Mvec>* cache_lookup(const std::string& key);
  void cache_insert(const std::string& key, std::vector<Mvec> response);

  ApiModelSpec spec_;
  std::string host_;
  int port_ = 80;
  std::string path_ = "/invoke";

  mutable std::mutex mutex_;
  std::list<CacheEntry> lru_;  // front = most recent
  std::unordered_map<std::string, std::list<CacheEntry>::iterator> index_;
  std::size_t cache_capacity_;
  RemoteStats stats_;
};

/// In-process endpoint speaking the batch envelope format, used by tests and
/// the benchmark harness. Applies a stub kernel to every received row.
class MockModelServer {
 public:
  explicit MockModelServer(StubModel kernel);
  ~MockModelServer();

  MockModelServer(const MockModelServer&) = delete;
  MockModelServer& operator=(const MockModelServer&) = delete;

  std::string endpoint() const;  // http://127.0.0.1:<port>/invoke
  int port() const { return port_; }

  /// Next n requests answer HTTP 500 before the server starts succeeding.
  void fail_next(int n);
  /// Every request handler sleeps this long first (for timeout tests).
  void set_delay_ms(int ms);

  std::uint64_t requests_handled() const;
  std::uint64_t requests_received() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
};

}  // namespace taskdb
