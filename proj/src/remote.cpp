#include "taskdb/remote.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstring>
#include <thread>

#include <httplib.h>

#include "taskdb/digest.hpp"

namespace taskdb {

namespace {

constexpr char kEnvelopeMagic[4] = {'M', 'V', 'B', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(std::uint8_t(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(std::uint8_t(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[off + i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::span<const std::uint8_t> b, std::size_t off) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[off + i]) << (8 * i);
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_batch_envelope(const std::vector<Mvec>& rows) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kEnvelopeMagic, kEnvelopeMagic + 4);
  put_u32(out, std::uint32_t(rows.size()));
  for (const Mvec& row : rows) {
    auto frame = row.serialize();
    put_u64(out, frame.size());
    out.insert(out.end(), frame.begin(), frame.end());
  }
  return out;
}

std::vector<Mvec> decode_batch_envelope(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kEnvelopeMagic, 4) != 0)
    raise(ErrorCode::CorruptFrame, "bad batch envelope header");
  std::uint32_t count = get_u32(bytes, 4);
  std::size_t off = 8;
  std::vector<Mvec> rows;
  rows.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    if (bytes.size() - off < 8)
      raise(ErrorCode::CorruptFrame, "truncated batch envelope");
    std::uint64_t len = get_u64(bytes, off);
    off += 8;
    if (bytes.size() - off < len)
      raise(ErrorCode::CorruptFrame, "truncated batch envelope item");
    rows.push_back(Mvec::deserialize(bytes.subspan(off, len)));
    off += len;
  }
  if (off != bytes.size())
    raise(ErrorCode::CorruptFrame, "trailing bytes after batch envelope");
  return rows;
}

RemoteClient::RemoteClient(ApiModelSpec spec, std::size_t cache_capacity)
    : spec_(std::move(spec)), cache_capacity_(cache_capacity) {
  spec_.validate();
  // endpoint -> host, port, path
  std::string url = spec_.endpoint;
  std::size_t scheme_end = url.find("://");
  std::string scheme = url.substr(0, scheme_end);
  std::string rest = url.substr(scheme_end + 3);
  std::size_t slash = rest.find('/');
  std::string hostport = slash == std::string::npos ? rest : rest.substr(0, slash);
  path_ = slash == std::string::npos ? "/invoke" : rest.substr(slash);
  std::size_t colon = hostport.find(':');
  if (colon == std::string::npos) {
    host_ = hostport;
    port_ = scheme == "https" ? 443 : 80;
  } else {
    host_ = hostport.substr(0, colon);
    port_ = std::stoi(hostport.substr(colon + 1));
  }
}

RemoteClient::~RemoteClient() = default;

std::vector<Mvec>* RemoteClient::cache_lookup(const std::string& key) {
  auto it = index_.find(key);
  if (it == index_.end()) return nullptr;
  lru_.splice(lru_.begin(), lru_, it->second);  // refresh recency
  return &it->second->response;
}

void RemoteClient::cache_insert(const std::string& key, std::vector<Mvec> response) {
  if (cache_capacity_ == 0) return;
  lru_.push_front(CacheEntry{key, std::move(response)});
  index_[key] = lru_.begin();
  if (lru_.size() > cache_capacity_) {
    index_.erase(lru_.back().key);
    lru_.pop_back();
  }
}

std::vector<Mvec> RemoteClient::invoke(const std::vector<Mvec>& payload) {
  auto body = encode_batch_envelope(payload);
  std::string key = Sha256::hex(body);

  {
    std::lock_guard lock(mutex_);
    if (auto* cached = cache_lookup(key)) {
      ++stats_.cache_hits;
      return *cached;
    }
    if (stats_.quota_used >= spec_.quota)
      raise(ErrorCode::QuotaExhausted,
            "quota of " + std::to_string(spec_.quota) + " requests spent");
    ++stats_.quota_used;
    ++stats_.network_calls;
  }

  httplib::Client client(host_, port_);
  auto whole = std::chrono::duration<double>(spec_.timeout);
  auto secs = std::chrono::duration_cast<std::chrono::seconds>(whole);
  auto usecs =
      std::chrono::duration_cast<std::chrono::microseconds>(whole - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  std::string request_body(reinterpret_cast<const char*>(body.data()), body.size());
  if (!spec_.auth_ref.empty())
    client.set_default_headers({{"Authorization", "Bearer " + spec_.auth_ref}});

  std::uint32_t max_attempts = spec_.max_retries + 1;
  bool saw_timeout = false;
  std::string last_failure;
  for (std::uint32_t attempt = 0; attempt < max_attempts; ++attempt) {
    if (attempt > 0) {
      // base 50 ms doubling per attempt, jitter-free
      auto backoff = std::chrono::milliseconds(50) * (1u << (attempt - 1));
      std::this_thread::sleep_for(backoff);
    }
    {
      std::lock_guard lock(mutex_);
      ++stats_.attempts;
    }
    auto started = std::chrono::steady_clock::now();
    auto res = client.Post(path_, request_body, "application/octet-stream");
    double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
            .count();
    if (res && res->status == 200) {
      auto rows = decode_batch_envelope(std::span<const std::uint8_t>(
          reinterpret_cast<const std::uint8_t*>(res->body.data()), res->body.size()));
      std::lock_guard lock(mutex_);
      cache_insert(key, rows);
      return rows;
    }
    if (!res && elapsed >= spec_.timeout * 0.9) {
      saw_timeout = true;
      last_failure = "attempt timed out after " + std::to_string(elapsed) + "s";
    } else if (!res) {
      saw_timeout = false;
      last_failure = "transport error " + std::to_string(int(res.error()));
    } else {
      saw_timeout = false;
      last_failure = "server returned status " + std::to_string(res->status);
    }
  }
  if (saw_timeout)
    raise(ErrorCode::Timeout, "all " + std::to_string(max_attempts) +
                                  " attempts exceeded timeout: " + last_failure);
  raise(ErrorCode::TransportError,
        "request failed after " + std::to_string(max_attempts) +
            " attempts: " + last_failure);
}

RemoteStats RemoteClient::stats() const {
  std::lock_guard lock(mutex_);
  return stats_;
}

struct MockModelServer::Impl {
  httplib::Server server;
  std::thread worker;
  StubModel kernel;
  std::atomic<int> fail_remaining{0};
  std::atomic<int> delay_ms{0};
  std::atomic<std::uint64_t> handled{0};
  std::atomic<std::uint64_t> received{0};
};

MockModelServer::MockModelServer(StubModel kernel)
    : impl_(std::make_unique<Impl>()) {
  impl_->kernel = std::move(kernel);
  impl_->server.Post("/invoke", [this](const httplib::Request& req,
                                       httplib::Response& res) {
    impl_->received.fetch_add(1);
    int delay = impl_->delay_ms.load();
    if (delay > 0) std::this_thread::sleep_for(std::chrono::milliseconds(delay));
    int remaining = impl_->fail_remaining.load();
    while (remaining > 0 &&
           !impl_->fail_remaining.compare_exchange_weak(remaining, remaining - 1)) {
    }
    if (remaining > 0) {
      res.status = 500;
      res.set_content("injected failure", "text/plain");
      return;
    }
    try {
      auto rows = decode_batch_envelope(std::span<const std::uint8_t>(
          reinterpret_cast<const std::uint8_t*>(req.body.data()), req.body.size()));
      std::vector<Mvec> outputs;
      outputs.reserve(rows.size());
      for (const Mvec& row : rows) outputs.push_back(impl_->kernel.apply(row));
      auto body = encode_batch_envelope(outputs);
      res.set_content(std::string(reinterpret_cast<const char*>(body.data()),
                                  body.size()),
                      "application/octet-stream");
      impl_->handled.fetch_add(1);
    } catch (const Error& e) {
      res.status = 400;
      res.set_content(e.what(), "text/plain");
    }
  });
  port_ = impl_->server.bind_to_any_port("127.0.0.1");
  if (port_ <= 0) raise(ErrorCode::TransportError, "mock server could not bind");
  impl_->worker = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

MockModelServer::~MockModelServer() {
  impl_->server.stop();
  if (impl_->worker.joinable()) impl_->worker.join();
}

std::string MockModelServer::endpoint() const {
  return "http://127.0.0.1:" + std::to_string(port_) + "/invoke";
}

void MockModelServer::fail_next(int n) { impl_->fail_remaining.store(n); }
void MockModelServer::set_delay_ms(int ms) { impl_->delay_ms.store(ms); }
std::uint64_t MockModelServer::requests_handled() const { return impl_->handled.load(); }
std::uint64_t MockModelServer::requests_received() const {
  return impl_->received.load();
}

}  // namespace taskdb
