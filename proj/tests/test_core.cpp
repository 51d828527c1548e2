#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pirlab/core.hpp"

#include <algorithm>
#include <random>

using namespace pirlab;

namespace {

Query random_query(std::mt19937_64& gen, std::uint32_t n_msg, std::uint32_t len)
{
  std::uniform_int_distribution<std::uint32_t> sum_count(0, 5);
  std::uniform_int_distribution<std::uint32_t> idx(0, len - 1);
  Query q;
  const std::uint32_t sums = sum_count(gen);
  for (std::uint32_t s = 0; s < sums; ++s) {
    SymbolSum sum;
    std::vector<std::uint32_t> msgs(n_msg);
    std::iota(msgs.begin(), msgs.end(), 0U);
    std::shuffle(msgs.begin(), msgs.end(), gen);
    const std::uint32_t terms = 1 + gen() % n_msg;
    for (std::uint32_t t = 0; t < terms; ++t) {
      sum.terms.push_back(SymbolTerm{msgs[t], idx(gen)});
    }
    q.sums.push_back(std::move(sum));
  }
  return q;
}

} // namespace

TEST_CASE("derive_length: minimal admissible message length")
{
  CHECK(derive_length({2, 2, 0, 1, 1}) == 4);
  CHECK(derive_length({2, 2, 1, 2, 1}) == 8);
  CHECK(derive_length({3, 1, 0, 1, 1}) == 3);
  CHECK(derive_length({4, 3, 2, 3, 2}) == 3 * 2 * 64);
}

TEST_CASE("scheme params: divisibility invariants hold for every accepted instance")
{
  for (std::uint32_t n = 1; n <= 4; ++n) {
    for (std::uint32_t k = 1; k <= 3; ++k) {
      for (std::uint32_t q = 1; q <= 4; ++q) {
        for (std::uint32_t p = 0; p <= q; ++p) {
          const SchemeParams params{n, k, p, q, 1};
          params.validate();
          const std::uint64_t bs = params.block_size();
          CHECK(params.pir_part_length() % bs == 0);
          CHECK(params.cached_prefix_length() + params.pir_part_length() ==
                params.message_length());
        }
      }
    }
  }
}

TEST_CASE("scheme params: invalid instances rejected")
{
  CHECK_THROWS_AS(derive_length({2, 2, 3, 2, 1}), ParamError); // p > q
  CHECK_THROWS_AS(derive_length({0, 2, 0, 1, 1}), ParamError);
  CHECK_THROWS_AS(derive_length({2, 0, 0, 1, 1}), ParamError);
  CHECK_THROWS_AS(derive_length({3, 40, 0, 1, 1}), ParamError); // N^K overflow
}

TEST_CASE("xor_combine")
{
  SchemeParams params{2, 2, 0, 1, 1};
  MessageStore store;
  store.messages.resize(2);
  store.messages[0].symbols = {0x0F, 0x11, 0x22, 0x33};
  store.messages[1].symbols = {0xF0, 0x11, 0x55, 0x66};

  CHECK(xor_combine(store, SymbolSum{{{0, 2}}}) == 0x22);
  CHECK(xor_combine(store, SymbolSum{{{0, 1}, {1, 1}}}) == 0x00); // self-cancellation
  CHECK(xor_combine(store, SymbolSum{{{0, 0}, {1, 0}}}) == 0xFF);
  CHECK_THROWS_AS(xor_combine(store, SymbolSum{{{0, 99}}}), ProtocolError);
  CHECK_THROWS_AS(xor_combine(store, SymbolSum{{{7, 0}}}), ProtocolError);
}

TEST_CASE("canonical_form: empty marker, order invariance, injectivity")
{
  CHECK(canonical_form(Query{}) == std::string(1, '\x00'));

  std::mt19937_64 gen(1234);
  for (int trial = 0; trial < 200; ++trial) {
    Query q = random_query(gen, 3, 16);
    Query shuffled = q;
    std::shuffle(shuffled.sums.begin(), shuffled.sums.end(), gen);
    for (auto& sum : shuffled.sums) {
      std::shuffle(sum.terms.begin(), sum.terms.end(), gen);
    }
    CHECK(canonical_form(q) == canonical_form(shuffled));

    if (!q.sums.empty() && !q.sums[0].terms.empty()) {
      Query tweaked = q;
      tweaked.sums[0].terms[0].symbol_index ^= 0x100;
      CHECK(canonical_form(q) != canonical_form(tweaked));
    }
  }
}

TEST_CASE("rational: exactness against integer cross-multiplication")
{
  CHECK(Rational(1, 2) + Rational(1, 3) == Rational(5, 6));
  CHECK(Rational(6, 4) == Rational(3, 2));
  CHECK(Rational(3, -6) == Rational(-1, 2));
  CHECK(Rational(3, 2).to_string() == "3/2");
  CHECK(Rational(-4, 2).to_string() == "-2");
  CHECK(Rational(3, 4).to_decimal(6) == "0.750000");
  CHECK_THROWS_AS(Rational(1, 0), std::invalid_argument);
  CHECK_THROWS_AS(Rational(1, 3) / Rational(0), std::domain_error);

  std::mt19937_64 gen(99);
  std::uniform_int_distribution<std::int64_t> num(-1000, 1000);
  std::uniform_int_distribution<std::int64_t> den(1, 1000);
  for (int i = 0; i < 500; ++i) {
    const std::int64_t a = num(gen), b = den(gen), c = num(gen), d = den(gen);
    const Rational sum = Rational(a, b) + Rational(c, d);
    // a/b + c/d = (ad + cb) / bd
    CHECK(sum == Rational(a * d + c * b, b * d));
    const Rational prod = Rational(a, b) * Rational(c, d);
    CHECK(prod == Rational(a * c, b * d));
    CHECK((Rational(a, b) < Rational(c, d)) == (a * d < c * b));
  }
}

TEST_CASE("seeded randomness: reproducible across instances")
{
  SeededRandomness a(42);
  SeededRandomness b(42);
  for (int i = 0; i < 100; ++i) {
    CHECK(a.next_u64() == b.next_u64());
  }
  CHECK(SeededRandomness(7).permutation(10) == SeededRandomness(7).permutation(10));
  CHECK(SeededRandomness(7).derive(0).permutation(10) !=
        SeededRandomness(7).derive(1).permutation(10));
}

TEST_CASE("seeded randomness: golden permutation sequence")
{
  // Frozen output of seed 2024; guards the cross-platform determinism
  // contract against accidental generator changes.
  SeededRandomness rng(2024);
  const auto p1 = rng.permutation(8);
  const auto p2 = rng.permutation(8);
  const std::vector<std::uint32_t> expect1 = {4, 7, 1, 2, 6, 3, 0, 5};
  const std::vector<std::uint32_t> expect2 = {7, 5, 4, 3, 6, 1, 0, 2};
  CHECK(p1 == expect1);
  CHECK(p2 == expect2);
}

TEST_CASE("seeded randomness: bounded draws are in range and unbiased-ish")
{
  SeededRandomness rng(5);
  std::vector<std::uint64_t> counts(5, 0);
  for (int i = 0; i < 50000; ++i) {
    const std::uint64_t v = rng.next_below(5);
    REQUIRE(v < 5);
    ++counts[v];
  }
  for (auto c : counts) {
    CHECK(c > 9000);
    CHECK(c < 11000);
  }
}
