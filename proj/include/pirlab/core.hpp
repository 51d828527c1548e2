#pragma once

#include "pirlab/rational.hpp"
#include "pirlab/rng.hpp"

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace pirlab {

// Error taxonomy shared by all modules.
struct ParamError : std::invalid_argument
{
  using std::invalid_argument::invalid_argument;
};
struct ProtocolError : std::runtime_error
{
  using std::runtime_error::runtime_error;
};
struct InfeasibleError : std::runtime_error
{
  using std::runtime_error::runtime_error;
};
struct RetrievalError : std::runtime_error
{
  using std::runtime_error::runtime_error;
};

using Symbol = std::uint8_t; // byte under XOR (characteristic-2 field)

// Instance parameters: N databases, K messages, cache fraction p/q of each
// message, and a block multiplier m. Message length is always the minimal
// admissible L = q * m * N^K symbols, so the cached prefix (p/q)L and the
// retrieved suffix ((q-p)/q)L are both integral and the suffix is a
// multiple of N^K.
struct SchemeParams
{
  std::uint32_t num_databases = 1;  // N >= 1
  std::uint32_t num_messages = 1;   // K >= 1
  std::uint32_t cache_numerator = 0;   // p
  std::uint32_t cache_denominator = 1; // q
  std::uint32_t block_multiplier = 1;  // m

  void validate() const
  {
    if (num_databases < 1) {
      throw ParamError("num_databases must be >= 1");
    }
    if (num_messages < 1) {
      throw ParamError("num_messages must be >= 1");
    }
    if (cache_denominator < 1) {
      throw ParamError("cache_denominator must be >= 1");
    }
    if (cache_numerator > cache_denominator) {
      throw ParamError("cache fraction p/q must satisfy p <= q");
    }
    if (block_multiplier < 1) {
      throw ParamError("block_multiplier must be >= 1");
    }
    (void)block_size(); // overflow guard
    (void)message_length();
  }

  // N^K, the base-scheme block size.
  std::uint64_t block_size() const
  {
    std::uint64_t b = 1;
    for (std::uint32_t i = 0; i < num_messages; ++i) {
      if (b > (UINT32_MAX / num_databases)) {
        throw ParamError("N^K exceeds supported range; instance rejected");
      }
      b *= num_databases;
    }
    return b;
  }

  // L = q * m * N^K.
  std::uint64_t message_length() const
  {
    const std::uint64_t l = static_cast<std::uint64_t>(cache_denominator) * block_multiplier * block_size();
    if (l > UINT32_MAX) {
      throw ParamError("message length exceeds supported range; instance rejected");
    }
    return l;
  }

  // Cached prefix length (p/q)L = p * m * N^K per message.
  std::uint64_t cached_prefix_length() const
  {
    return static_cast<std::uint64_t>(cache_numerator) * block_multiplier * block_size();
  }

  // PIR-part length (1 - p/q)L, always a multiple of N^K.
  std::uint64_t pir_part_length() const
  {
    return static_cast<std::uint64_t>(cache_denominator - cache_numerator) * block_multiplier * block_size();
  }

  // Normalized storage S = (p/q) * K, in [0, K].
  Rational normalized_storage() const
  {
    return Rational(static_cast<std::int64_t>(cache_numerator) * num_messages, cache_denominator);
  }
};

inline std::uint64_t derive_length(const SchemeParams& params)
{
  params.validate();
  return params.message_length();
}

struct Message
{
  std::vector<Symbol> symbols;
};

// Replicated content: every database holds an identical copy.
struct MessageStore
{
  std::vector<Message> messages;

  static MessageStore random(const SchemeParams& params, SeededRandomness& rng, Symbol symbol_mask = 0xFF)
  {
    const std::uint64_t len = derive_length(params);
    MessageStore store;
    store.messages.resize(params.num_messages);
    for (auto& msg : store.messages) {
      msg.symbols.resize(len);
      for (auto& s : msg.symbols) {
        s = static_cast<Symbol>(rng.next_u64()) & symbol_mask;
      }
    }
    return store;
  }
};

// The user cache Z: the first (p/q)L symbols of every message.
struct CacheContent
{
  std::vector<std::vector<Symbol>> segments;
};

struct SymbolTerm
{
  std::uint32_t message_id = 0;
  std::uint32_t symbol_index = 0;

  friend bool operator==(const SymbolTerm&, const SymbolTerm&) = default;
  friend auto operator<=>(const SymbolTerm&, const SymbolTerm&) = default;
};

// XOR-sum over symbols of pairwise-distinct messages.
struct SymbolSum
{
  std::vector<SymbolTerm> terms;

  friend bool operator==(const SymbolSum&, const SymbolSum&) = default;
};

struct Query
{
  std::vector<SymbolSum> sums;

  friend bool operator==(const Query&, const Query&) = default;
};

struct Answer
{
  std::vector<Symbol> symbols; // one per sum, in query order
};

inline Symbol xor_combine(const MessageStore& store, const SymbolSum& sum)
{
  Symbol acc = 0;
  for (const auto& term : sum.terms) {
    if (term.message_id >= store.messages.size()) {
      throw ProtocolError("malformed query: message id out of range");
    }
    const auto& msg = store.messages[term.message_id].symbols;
    if (term.symbol_index >= msg.size()) {
      throw ProtocolError("malformed query: symbol index out of range");
    }
    acc = static_cast<Symbol>(acc ^ msg[term.symbol_index]);
  }
  return acc;
}

// Total serialization of a query up to term/sum ordering: terms sorted by
// message id, sums sorted lexicographically. Two queries canonicalize to
// the same bytes iff they are the same set of sums; the audits compare
// query distributions through this map.
inline std::string canonical_form(const Query& query)
{
  if (query.sums.empty()) {
    return std::string(1, '\x00'); // empty-query marker
  }
  std::vector<std::vector<SymbolTerm>> sorted_sums;
  sorted_sums.reserve(query.sums.size());
  for (const auto& sum : query.sums) {
    auto terms = sum.terms;
    std::sort(terms.begin(), terms.end());
    sorted_sums.push_back(std::move(terms));
  }
  std::sort(sorted_sums.begin(), sorted_sums.end());

  std::string out;
  out.push_back('\x01');
  auto put_u32 = [&out](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
      out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
  };
  put_u32(static_cast<std::uint32_t>(sorted_sums.size()));
  for (const auto& terms : sorted_sums) {
    put_u32(static_cast<std::uint32_t>(terms.size()));
    for (const auto& term : terms) {
      put_u32(term.message_id);
      put_u32(term.symbol_index);
    }
  }
  return out;
}

} // namespace pirlab
