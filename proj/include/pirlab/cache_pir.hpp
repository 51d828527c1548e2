#pragma once

#include "pirlab/core.hpp"
#include "pirlab/pir_base.hpp"

#include <cstdint>
#include <vector>

namespace pirlab {

// Database access used by retrieve(): either in-process stores or network
// clients, same contract. answer_all receives one query per database and
// returns the answers in database order.
class AnswerProvider
{
public:
  virtual ~AnswerProvider() = default;
  virtual std::vector<Answer> answer_all(const std::vector<Query>& queries) = 0;
};

class LocalAnswerProvider final : public AnswerProvider
{
public:
  explicit LocalAnswerProvider(const MessageStore& store)
    : store_(&store)
  {
  }

  std::vector<Answer> answer_all(const std::vector<Query>& queries) override
  {
    std::vector<Answer> answers;
    answers.reserve(queries.size());
    for (const auto& q : queries) {
      answers.push_back(answer_query(q, *store_));
    }
    return answers;
  }

private:
  const MessageStore* store_;
};

// Z: the first (p/q)L symbols of every message.
inline CacheContent encode_cache(const MessageStore& store, const SchemeParams& params)
{
  params.validate();
  const std::uint64_t prefix = params.cached_prefix_length();
  CacheContent cache;
  cache.segments.reserve(store.messages.size());
  for (const auto& msg : store.messages) {
    cache.segments.emplace_back(msg.symbols.begin(),
                                msg.symbols.begin() + static_cast<std::ptrdiff_t>(prefix));
  }
  return cache;
}

struct CostReport
{
  std::uint64_t downloaded_symbols = 0; // answer symbols, the quantity D counts
  std::uint64_t query_sums_sent = 0;    // upload metadata, never part of D
  Rational normalized_cost;             // downloaded_symbols / L, exact
};

// Memory-sharing point between two (storage, cost) operating points.
inline std::pair<Rational, Rational> memory_share_cost(const Rational& s1,
                                                       const Rational& d1,
                                                       const Rational& s2,
                                                       const Rational& d2,
                                                       const Rational& alpha)
{
  if (alpha < Rational(0) || alpha > Rational(1)) {
    throw ParamError("memory-sharing coefficient must lie in [0,1]");
  }
  const Rational beta = Rational(1) - alpha;
  return {alpha * s1 + beta * s2, alpha * d1 + beta * d2};
}

// Full cache-aided retrieval: read the cached prefix from Z, run the base
// scheme on the uncached suffix (queries re-based to real suffix indices on
// the wire), and stitch. With a full cache no query is sent at all.
inline std::pair<Message, CostReport> retrieve(std::uint32_t theta,
                                               const SchemeParams& params,
                                               const CacheContent& cache,
                                               AnswerProvider& provider,
                                               SeededRandomness& rng,
                                               PlanMutation mutation = PlanMutation::none)
{
  params.validate();
  if (theta >= params.num_messages) {
    throw ParamError("desired message index out of range");
  }
  const std::uint64_t total_len = params.message_length();
  const std::uint64_t prefix_len = params.cached_prefix_length();
  const std::uint64_t suffix_len = params.pir_part_length();
  if (cache.segments.size() != params.num_messages) {
    throw ParamError("cache segment count does not match message count");
  }
  if (cache.segments[theta].size() != prefix_len) {
    throw ParamError("cache segment length does not match parameters");
  }

  Message result;
  result.symbols.reserve(total_len);
  result.symbols.insert(result.symbols.end(), cache.segments[theta].begin(),
                        cache.segments[theta].end());

  CostReport report;
  if (suffix_len == 0) {
    report.normalized_cost = Rational(0);
    return {std::move(result), report};
  }

  const PartScheme scheme{params.num_databases, params.num_messages, suffix_len};
  RetrievalPlan plan = plan_queries(scheme, theta, rng, mutation);

  // Re-base suffix indices to wire indices; the suffix region starts at
  // prefix_len in every stored message.
  std::vector<Query> wire = plan.queries;
  for (auto& q : wire) {
    for (auto& sum : q.sums) {
      for (auto& term : sum.terms) {
        term.symbol_index += static_cast<std::uint32_t>(prefix_len);
      }
    }
  }

  const std::vector<Answer> answers = provider.answer_all(wire);
  if (answers.size() != params.num_databases) {
    throw RetrievalError("provider returned wrong number of answers");
  }
  const std::vector<Symbol> suffix = decode(plan, answers);
  result.symbols.insert(result.symbols.end(), suffix.begin(), suffix.end());

  report.downloaded_symbols = download_cost(plan);
  report.query_sums_sent = report.downloaded_symbols;
  report.normalized_cost = Rational(static_cast<std::int64_t>(report.downloaded_symbols),
                                    static_cast<std::int64_t>(total_len));
  return {std::move(result), report};
}

} // namespace pirlab
