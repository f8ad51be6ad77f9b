#include <doctest.h>

#include "taskdb/remote.hpp"

using namespace taskdb;

namespace {

StubModel identity3() { return StubModel::identity(1, {1e6, 1e4}, 3); }

ApiModelSpec spec_for(const MockModelServer& server) {
  ApiModelSpec spec;
  spec.endpoint = server.endpoint();
  spec.timeout = 2.0;
  spec.max_retries = 3;
  spec.quota = 1000;
  return spec;
}

}  // namespace

TEST_CASE("batch envelope round-trips") {
  std::vector<Mvec> rows = {Mvec({2}, {1, 2}), Mvec({3}, {3, 4, 5})};
  auto bytes = encode_batch_envelope(rows);
  auto parsed = decode_batch_envelope(bytes);
  REQUIRE(parsed.size() == 2);
  CHECK(parsed[0].bit_equal(rows[0]));
  CHECK(parsed[1].bit_equal(rows[1]));

  auto truncated = bytes;
  truncated.resize(bytes.size() - 4);
  CHECK_THROWS_AS(decode_batch_envelope(truncated), Error);
}

TEST_CASE("remote invoke round-trips through the mock server") {
  MockModelServer server(identity3());
  RemoteClient client(spec_for(server));
  std::vector<Mvec> payload = {Mvec({3}, {1, 2, 3})};
  auto out = client.invoke(payload);
  REQUIRE(out.size() == 1);
  CHECK(out[0].bit_equal(payload[0]));
}

TEST_CASE("retry succeeds on the second attempt and counts attempts exactly") {
  MockModelServer server(identity3());
  server.fail_next(1);
  RemoteClient client(spec_for(server));
  auto out = client.invoke({Mvec({3}, {9, 8, 7})});
  REQUIRE(out.size() == 1);
  auto stats = client.stats();
  CHECK(stats.attempts == 2);        // one failure, one success
  CHECK(stats.network_calls == 1);   // a single logical invocation
  CHECK(server.requests_received() == 2);
}

TEST_CASE("identical payload hits the cache with one network call total") {
  MockModelServer server(identity3());
  RemoteClient client(spec_for(server));
  std::vector<Mvec> payload = {Mvec({3}, {1, 1, 2})};
  auto first = client.invoke(payload);
  auto second = client.invoke(payload);
  CHECK(second[0].bit_equal(first[0]));
  auto stats = client.stats();
  CHECK(stats.network_calls == 1);
  CHECK(stats.cache_hits == 1);
  CHECK(server.requests_received() == 1);
}

TEST_CASE("quota exhausts at the boundary") {
  MockModelServer server(identity3());
  ApiModelSpec spec = spec_for(server);
  spec.quota = 1;
  RemoteClient client(spec);
  client.invoke({Mvec({3}, {1, 0, 0})});
  CHECK_THROWS_AS(client.invoke({Mvec({3}, {0, 1, 0})}), Error);
  // Cached payload still served without quota.
  auto again = client.invoke({Mvec({3}, {1, 0, 0})});
  CHECK(again.size() == 1);

  ApiModelSpec zero = spec_for(server);
  zero.quota = 0;
  RemoteClient blocked(zero);
  try {
    blocked.invoke({Mvec({3}, {5, 5, 5})});
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::QuotaExhausted);
  }
}

TEST_CASE("all attempts exceeding the timeout raise Timeout") {
  MockModelServer server(identity3());
  server.set_delay_ms(300);
  ApiModelSpec spec = spec_for(server);
  spec.timeout = 0.05;
  spec.max_retries = 1;
  RemoteClient client(spec);
  try {
    client.invoke({Mvec({3}, {1, 2, 3})});
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Timeout);
  }
  CHECK(client.stats().attempts == 2);
}

TEST_CASE("exhausted retries against persistent failures raise TransportError") {
  MockModelServer server(identity3());
  server.fail_next(100);
  ApiModelSpec spec = spec_for(server);
  spec.max_retries = 2;
  RemoteClient client(spec);
  try {
    client.invoke({Mvec({3}, {1, 2, 3})});
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TransportError);
  }
  CHECK(client.stats().attempts == 3);
}
