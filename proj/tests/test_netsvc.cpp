#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pirlab/netsvc.hpp"
#include "pirlab/pir_base.hpp"

using namespace pirlab;

namespace {

Query random_query(SeededRandomness& rng)
{
  Query q;
  const std::uint64_t n_sums = rng.next_below(6);
  q.sums.resize(n_sums);
  for (auto& sum : q.sums) {
    const std::uint64_t n_terms = 1 + rng.next_below(4);
    sum.terms.resize(n_terms);
    for (auto& t : sum.terms) {
      t.message_id = static_cast<std::uint32_t>(rng.next_below(1000));
      t.symbol_index = static_cast<std::uint32_t>(rng.next_u64() & 0xFFFFFFFFu);
    }
  }
  return q;
}

} // namespace

TEST_CASE("query wire format: layout examples")
{
  SUBCASE("empty query is two zero bytes")
  {
    const auto bytes = query_wire_encode(Query{});
    CHECK(bytes == std::vector<std::uint8_t>{0, 0});
  }

  SUBCASE("one singleton term occupies nine bytes, little-endian")
  {
    Query q;
    q.sums.push_back(SymbolSum{{SymbolTerm{3, 0x01020304}}});
    const auto bytes = query_wire_encode(q);
    const std::vector<std::uint8_t> expect = {1, 0,                   // sum count
                                              1,                      // term count
                                              3, 0,                   // message id
                                              0x04, 0x03, 0x02, 0x01};// symbol index
    CHECK(bytes == expect);
  }

  SUBCASE("message ids past the u16 limit are rejected")
  {
    Query q;
    q.sums.push_back(SymbolSum{{SymbolTerm{70000, 0}}});
    CHECK_THROWS_AS(query_wire_encode(q), ProtocolError);
  }
}

TEST_CASE("query wire format: random round trips")
{
  SeededRandomness rng(99);
  for (int trial = 0; trial < 10000; ++trial) {
    const Query q = random_query(rng);
    const auto bytes = query_wire_encode(q);
    const Query back = query_wire_decode(bytes.data(), bytes.size());
    REQUIRE(back.sums.size() == q.sums.size());
    for (std::size_t i = 0; i < q.sums.size(); ++i) {
      REQUIRE(back.sums[i].terms.size() == q.sums[i].terms.size());
      for (std::size_t j = 0; j < q.sums[i].terms.size(); ++j) {
        CHECK(back.sums[i].terms[j].message_id == q.sums[i].terms[j].message_id);
        CHECK(back.sums[i].terms[j].symbol_index == q.sums[i].terms[j].symbol_index);
      }
    }
  }
}

TEST_CASE("query wire format: malformed payloads are rejected")
{
  Query q;
  q.sums.push_back(SymbolSum{{SymbolTerm{1, 2}, SymbolTerm{3, 4}}});
  auto bytes = query_wire_encode(q);

  SUBCASE("truncation")
  {
    for (std::size_t cut = 1; cut < bytes.size(); ++cut) {
      CHECK_THROWS_AS(query_wire_decode(bytes.data(), bytes.size() - cut), ProtocolError);
    }
  }

  SUBCASE("trailing garbage")
  {
    bytes.push_back(0xAB);
    CHECK_THROWS_AS(query_wire_decode(bytes.data(), bytes.size()), ProtocolError);
  }
}

TEST_CASE("Endpoint::parse")
{
  const auto ep = Endpoint::parse("127.0.0.1:8080");
  CHECK(ep.host == "127.0.0.1");
  CHECK(ep.port == 8080);
  CHECK(ep.to_string() == "127.0.0.1:8080");
  CHECK_THROWS_AS(Endpoint::parse("no-port"), ParamError);
  CHECK_THROWS_AS(Endpoint::parse("host:"), ParamError);
  CHECK_THROWS_AS(Endpoint::parse("host:0"), ParamError);
  CHECK_THROWS_AS(Endpoint::parse("host:99999"), ParamError);
}

TEST_CASE("database server: config and answers over a live socket")
{
  const SchemeParams params{2, 2, 1, 2, 1};
  SeededRandomness rng(42);
  const auto store = MessageStore::random(params, rng);
  DatabaseServer server(store, params);
  server.start(0);
  const Endpoint ep{"127.0.0.1", server.port()};

  SUBCASE("config round trip")
  {
    NetClient client(ep, 2000, 2000);
    const auto cfg = client.fetch_config();
    CHECK(cfg.num_databases == 2);
    CHECK(cfg.num_messages == 2);
    CHECK(cfg.message_length == 8);
    CHECK(cfg.cache_numerator == 1);
    CHECK(cfg.cache_denominator == 2);
  }

  SUBCASE("empty query yields an empty answer")
  {
    NetClient client(ep, 2000, 2000);
    WireReport report;
    const Answer ans = client.ask(Query{}, report);
    CHECK(ans.symbols.empty());
    CHECK(report.answer_payload_bytes == 0);
    CHECK(report.query_upload_bytes == 2);
  }

  SUBCASE("plan queries are answered exactly like the local evaluator")
  {
    const auto plan = plan_queries({2, 2, 8}, 0, rng);
    NetClient client(ep, 2000, 2000);
    WireReport report;
    for (const auto& q : plan.queries) {
      const Answer remote = client.ask(q, report);
      const Answer local = answer_query(q, store);
      CHECK(remote.symbols == local.symbols);
    }
    CHECK(report.answer_payload_bytes == download_cost(plan));
  }

  SUBCASE("several requests on one connection: the server holds no state")
  {
    NetClient client(ep, 2000, 2000);
    WireReport report;
    Query q;
    q.sums.push_back(SymbolSum{{SymbolTerm{0, 3}}});
    const Answer first = client.ask(q, report);
    const auto cfg = client.fetch_config();
    CHECK(cfg.num_messages == 2);
    const Answer again = client.ask(q, report);
    CHECK(first.symbols == again.symbols);
    CHECK(first.symbols[0] == store.messages[0].symbols[3]);
  }

  SUBCASE("out-of-range symbol index draws an ERROR frame")
  {
    NetClient client(ep, 2000, 2000);
    WireReport report;
    Query q;
    q.sums.push_back(SymbolSum{{SymbolTerm{0, 1000000}}});
    CHECK_THROWS_AS(client.ask(q, report), RetrievalError);
  }

  SUBCASE("unknown frame types and garbage payloads draw ERROR frames")
  {
    const int fd = detail_net::connect_with_timeout(ep, 2000);
    detail_net::FdGuard guard(fd);
    detail_net::apply_request_timeout(fd, 2000);

    detail_net::send_frame(fd, 0x55, {});
    Frame frame;
    REQUIRE(detail_net::recv_frame(fd, frame));
    CHECK(frame.type == frame_type::error);
    REQUIRE(frame.payload.size() == 1);
    CHECK(frame.payload[0] == error_code::bad_type);

    const int fd2 = detail_net::connect_with_timeout(ep, 2000);
    detail_net::FdGuard guard2(fd2);
    detail_net::apply_request_timeout(fd2, 2000);
    detail_net::send_frame(fd2, frame_type::query, {0xFF});
    REQUIRE(detail_net::recv_frame(fd2, frame));
    CHECK(frame.type == frame_type::error);
    CHECK(frame.payload[0] == error_code::malformed);
  }

  server.stop();
}

TEST_CASE("fetch matches the in-process retrieval byte for byte")
{
  const SchemeParams params{2, 3, 1, 3, 1};
  SeededRandomness store_rng(7);
  const auto store = MessageStore::random(params, store_rng);
  const auto cache = encode_cache(store, params);

  std::vector<std::unique_ptr<DatabaseServer>> servers;
  std::vector<Endpoint> endpoints;
  for (std::uint32_t n = 0; n < params.num_databases; ++n) {
    servers.push_back(std::make_unique<DatabaseServer>(store, params));
    servers.back()->start(0);
    endpoints.push_back({"127.0.0.1", servers.back()->port()});
  }

  for (std::uint32_t theta = 0; theta < params.num_messages; ++theta) {
    SeededRandomness net_rng(500 + theta);
    SeededRandomness local_rng(500 + theta);
    auto [net_msg, wire] = fetch(theta, params, cache, endpoints, net_rng);
    LocalAnswerProvider provider(store);
    auto [local_msg, cost] = retrieve(theta, params, cache, provider, local_rng);

    CHECK(net_msg.symbols == store.messages[theta].symbols);
    CHECK(net_msg.symbols == local_msg.symbols);
    CHECK(wire.downloaded_symbols == cost.downloaded_symbols);
    CHECK(wire.normalized_cost == cost.normalized_cost);
    // one u8 symbol per downloaded sum: payload bytes equal symbols
    CHECK(wire.answer_payload_bytes == cost.downloaded_symbols);
    CHECK(wire.query_upload_bytes > 0);
    CHECK(wire.framing_overhead_bytes ==
          2 * frame_header_bytes * params.num_databases);
  }

  SUBCASE("endpoint count must match the database count")
  {
    SeededRandomness rng(1);
    std::vector<Endpoint> short_list = {endpoints[0]};
    CHECK_THROWS_AS(fetch(0, params, cache, short_list, rng), ParamError);
  }
}

TEST_CASE("fetch reports which database is unreachable")
{
  const SchemeParams params{2, 2, 0, 1, 1};
  SeededRandomness rng(11);
  const auto store = MessageStore::random(params, rng);
  const auto cache = encode_cache(store, params);

  DatabaseServer alive(store, params);
  alive.start(0);
  // grab a port that nothing listens on
  DatabaseServer probe(store, params);
  probe.start(0);
  const std::uint16_t dead_port = probe.port();
  probe.stop();

  const std::vector<Endpoint> endpoints = {{"127.0.0.1", alive.port()},
                                           {"127.0.0.1", dead_port}};
  try {
    fetch(0, params, cache, endpoints, rng, 500, 500);
    FAIL("fetch must not succeed with a dead database");
  } catch (const RetrievalError& e) {
    CHECK(std::string(e.what()).find(std::to_string(dead_port)) != std::string::npos);
  }
}

TEST_CASE("timeout override comes from the environment")
{
  ::unsetenv("PIRLAB_TIMEOUT_MS");
  CHECK(request_timeout_ms_from_env(1234) == 1234);
  ::setenv("PIRLAB_TIMEOUT_MS", "250", 1);
  CHECK(request_timeout_ms_from_env(1234) == 250);
  ::setenv("PIRLAB_TIMEOUT_MS", "junk", 1);
  CHECK(request_timeout_ms_from_env(1234) == 1234);
  ::unsetenv("PIRLAB_TIMEOUT_MS");
}
