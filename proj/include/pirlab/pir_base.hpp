#pragma once

#include "pirlab/core.hpp"

#include <cstdint>
#include <map>
#include <vector>

namespace pirlab {

// Broken-scheme fixtures for mutation testing of the audits. `none` is the
// production scheme; the others introduce documented privacy defects.
enum class PlanMutation
{
  none,
  shared_fresh_counter,   // one fresh-position counter shared by all messages
  theta_dependent_order,  // per-database sum list rotated by theta
  skip_permutation,       // identity permutations instead of uniform draws
};

enum class SumKind
{
  fresh_desired,   // lone desired symbol
  paired,          // desired symbol XOR a side-information sum
  pure_undesired,  // no desired term; side information for other databases
};

struct ScheduleEntry
{
  SumKind kind = SumKind::pure_undesired;
  std::uint32_t db = 0;
  std::uint32_t sum_index = 0;
  std::uint32_t real_index = 0;     // desired-message symbol index recovered here
  std::uint32_t side_db = 0;        // paired only: where the side sum was downloaded
  std::uint32_t side_sum_index = 0;
};

// Base-scheme instance: the (sub-)message part the scheme runs on.
struct PartScheme
{
  std::uint32_t num_databases = 1;
  std::uint32_t num_messages = 1;
  std::uint64_t part_length = 1; // L', a multiple of N^K

  std::uint64_t block_size() const
  {
    std::uint64_t b = 1;
    for (std::uint32_t i = 0; i < num_messages; ++i) {
      b *= num_databases;
    }
    return b;
  }

  std::uint64_t num_blocks() const
  {
    const std::uint64_t bs = block_size();
    if (part_length == 0 || part_length % bs != 0) {
      throw ParamError("part length must be a positive multiple of N^K");
    }
    return part_length / bs;
  }
};

struct RetrievalPlan
{
  PartScheme scheme;
  std::uint32_t theta = 0;
  std::vector<Query> queries;            // one per database
  std::vector<ScheduleEntry> schedule;   // one entry per emitted sum
};

// Per block, per message: permuted position -> symbol offset within the block.
using PermutationSet = std::vector<std::vector<std::vector<std::uint32_t>>>;

inline PermutationSet sample_permutations(const PartScheme& scheme, SeededRandomness& rng)
{
  const auto blocks = scheme.num_blocks();
  const auto bs = static_cast<std::uint32_t>(scheme.block_size());
  PermutationSet perms(blocks);
  for (auto& block : perms) {
    block.resize(scheme.num_messages);
    for (auto& p : block) {
      p = rng.permutation(bs);
    }
  }
  return perms;
}

inline PermutationSet identity_permutations(const PartScheme& scheme)
{
  const auto blocks = scheme.num_blocks();
  const auto bs = static_cast<std::uint32_t>(scheme.block_size());
  std::vector<std::uint32_t> ident(bs);
  for (std::uint32_t i = 0; i < bs; ++i) {
    ident[i] = i;
  }
  PermutationSet perms(blocks);
  for (auto& block : perms) {
    block.assign(scheme.num_messages, ident);
  }
  return perms;
}

namespace detail {

inline std::uint64_t pow_u64(std::uint64_t base, std::uint32_t exp)
{
  std::uint64_t r = 1;
  while (exp--) {
    r *= base;
  }
  return r;
}

// Lexicographic enumeration of all size-k subsets of [0, n).
inline std::vector<std::vector<std::uint32_t>> subsets_of_size(std::uint32_t n, std::uint32_t k)
{
  std::vector<std::vector<std::uint32_t>> out;
  if (k > n) {
    return out;
  }
  std::vector<std::uint32_t> c(k);
  for (std::uint32_t i = 0; i < k; ++i) {
    c[i] = i;
  }
  while (true) {
    out.push_back(c);
    std::int64_t i = static_cast<std::int64_t>(k) - 1;
    while (i >= 0 && c[static_cast<std::size_t>(i)] == n - k + static_cast<std::uint32_t>(i)) {
      --i;
    }
    if (i < 0) {
      break;
    }
    ++c[static_cast<std::size_t>(i)];
    for (std::size_t j = static_cast<std::size_t>(i) + 1; j < k; ++j) {
      c[j] = c[j - 1] + 1;
    }
  }
  return out;
}

inline std::uint64_t subset_key(const std::vector<std::uint32_t>& subset)
{
  std::uint64_t mask = 0;
  for (auto m : subset) {
    mask |= (1ULL << m);
  }
  return mask;
}

} // namespace detail

// Query planning for the capacity-achieving base scheme.
//
// Per block of N^K symbols per message, rounds k = 1..K emit, at every
// database and for every k-subset of messages in lexicographic order,
// (N-1)^(k-1) sums on that subset. A sum on a subset containing theta
// pairs one fresh desired symbol with a pure undesired sum downloaded
// verbatim from another database in the previous round; a sum on a subset
// without theta draws fresh symbols and becomes side information reused at
// every other database. All bookkeeping happens in the permuted domain of
// independent uniform per-message permutations; wire queries carry the
// mapped real indices. The emission order (block, round, subset) is
// theta-invariant, so the transmitted sum order leaks nothing either.
inline RetrievalPlan plan_with_permutations(const PartScheme& scheme,
                                            std::uint32_t theta,
                                            const PermutationSet& perms,
                                            PlanMutation mutation = PlanMutation::none)
{
  const std::uint32_t n_db = scheme.num_databases;
  const std::uint32_t n_msg = scheme.num_messages;
  if (theta >= n_msg) {
    throw ParamError("desired message index out of range");
  }
  const std::uint64_t blocks = scheme.num_blocks();
  const std::uint32_t bs = static_cast<std::uint32_t>(scheme.block_size());
  if (perms.size() != blocks) {
    throw ParamError("permutation set does not match block count");
  }
  // The unpermuted fixture ignores whatever permutations the caller supplies,
  // so it stays deterministic even under exhaustive enumeration.
  const PermutationSet* applied = &perms;
  PermutationSet identity;
  if (mutation == PlanMutation::skip_permutation) {
    identity = identity_permutations(scheme);
    applied = &identity;
  }

  RetrievalPlan plan;
  plan.scheme = scheme;
  plan.theta = theta;
  plan.queries.resize(n_db);

  struct PoolEntry
  {
    std::vector<SymbolTerm> terms;
    std::uint32_t db;
    std::uint32_t sum_index;
  };

  const bool shared_counter = (mutation == PlanMutation::shared_fresh_counter);

  for (std::uint64_t b = 0; b < blocks; ++b) {
    const std::uint32_t base = static_cast<std::uint32_t>(b * bs);
    const auto& block_perms = (*applied)[b];
    std::vector<std::uint32_t> next_pos(n_msg, 0);
    std::uint32_t shared_pos = 0;
    // source database -> undesired subset -> pure sums of this block
    std::vector<std::map<std::uint64_t, std::vector<PoolEntry>>> pools(n_db);

    auto fresh_real = [&](std::uint32_t msg) {
      std::uint32_t pos;
      if (shared_counter) {
        pos = (shared_pos++) % bs;
      } else {
        pos = next_pos[msg]++;
      }
      return base + block_perms[msg][pos];
    };

    for (std::uint32_t round = 1; round <= n_msg; ++round) {
      const std::uint64_t instances = detail::pow_u64(n_db - 1, round - 1);
      const auto subsets = detail::subsets_of_size(n_msg, round);
      for (std::uint32_t db = 0; db < n_db; ++db) {
        auto& sums = plan.queries[db].sums;
        for (const auto& subset : subsets) {
          const bool has_theta =
              std::find(subset.begin(), subset.end(), theta) != subset.end();
          if (has_theta) {
            if (round == 1) {
              ScheduleEntry e;
              e.kind = SumKind::fresh_desired;
              e.db = db;
              e.sum_index = static_cast<std::uint32_t>(sums.size());
              e.real_index = fresh_real(theta);
              sums.push_back(SymbolSum{{SymbolTerm{theta, e.real_index}}});
              plan.schedule.push_back(e);
            } else {
              std::vector<std::uint32_t> undesired;
              for (auto m : subset) {
                if (m != theta) {
                  undesired.push_back(m);
                }
              }
              const std::uint64_t key = detail::subset_key(undesired);
              for (std::uint32_t src = 0; src < n_db; ++src) {
                if (src == db) {
                  continue;
                }
                for (const auto& side : pools[src][key]) {
                  ScheduleEntry e;
                  e.kind = SumKind::paired;
                  e.db = db;
                  e.sum_index = static_cast<std::uint32_t>(sums.size());
                  e.real_index = fresh_real(theta);
                  e.side_db = side.db;
                  e.side_sum_index = side.sum_index;
                  SymbolSum sum;
                  sum.terms.push_back(SymbolTerm{theta, e.real_index});
                  sum.terms.insert(sum.terms.end(), side.terms.begin(), side.terms.end());
                  // wire term order is by message id, never desired-first
                  std::sort(sum.terms.begin(), sum.terms.end(),
                            [](const SymbolTerm& a, const SymbolTerm& b) {
                              return a.message_id < b.message_id;
                            });
                  sums.push_back(std::move(sum));
                  plan.schedule.push_back(e);
                }
              }
            }
          } else {
            for (std::uint64_t inst = 0; inst < instances; ++inst) {
              SymbolSum sum;
              for (auto m : subset) {
                sum.terms.push_back(SymbolTerm{m, fresh_real(m)});
              }
              ScheduleEntry e;
              e.kind = SumKind::pure_undesired;
              e.db = db;
              e.sum_index = static_cast<std::uint32_t>(sums.size());
              pools[db][detail::subset_key(subset)].push_back(
                  PoolEntry{sum.terms, db, e.sum_index});
              sums.push_back(std::move(sum));
              plan.schedule.push_back(e);
            }
          }
        }
      }
    }
  }

  if (mutation == PlanMutation::theta_dependent_order) {
    // Rotate each database's sum list by theta; schedule indices follow.
    for (std::uint32_t db = 0; db < n_db; ++db) {
      auto& sums = plan.queries[db].sums;
      const std::uint32_t n = static_cast<std::uint32_t>(sums.size());
      if (n == 0) {
        continue;
      }
      const std::uint32_t shift = theta % n;
      std::rotate(sums.begin(), sums.begin() + shift, sums.end());
      for (auto& e : plan.schedule) {
        if (e.db == db) {
          e.sum_index = (e.sum_index + n - shift) % n;
        }
        if (e.kind == SumKind::paired && e.side_db == db) {
          e.side_sum_index = (e.side_sum_index + n - shift) % n;
        }
      }
    }
  }

  return plan;
}

inline RetrievalPlan plan_queries(const PartScheme& scheme,
                                  std::uint32_t theta,
                                  SeededRandomness& rng,
                                  PlanMutation mutation = PlanMutation::none)
{
  const PermutationSet perms = (mutation == PlanMutation::skip_permutation)
                                   ? identity_permutations(scheme)
                                   : sample_permutations(scheme, rng);
  return plan_with_permutations(scheme, theta, perms, mutation);
}

inline Answer answer_query(const Query& query, const MessageStore& store)
{
  Answer answer;
  answer.symbols.reserve(query.sums.size());
  for (const auto& sum : query.sums) {
    answer.symbols.push_back(xor_combine(store, sum));
  }
  return answer;
}

// Exact zero-error decoding of the desired message part from the N answers.
inline std::vector<Symbol> decode(const RetrievalPlan& plan, const std::vector<Answer>& answers)
{
  if (answers.size() != plan.queries.size()) {
    throw ProtocolError("answer count does not match database count");
  }
  for (std::size_t n = 0; n < answers.size(); ++n) {
    if (answers[n].symbols.size() != plan.queries[n].sums.size()) {
      throw ProtocolError("answer length mismatch at database " + std::to_string(n));
    }
  }
  std::vector<Symbol> out(plan.scheme.part_length, 0);
  for (const auto& e : plan.schedule) {
    if (e.kind == SumKind::pure_undesired) {
      continue;
    }
    Symbol value = answers[e.db].symbols[e.sum_index];
    if (e.kind == SumKind::paired) {
      if (e.side_db >= answers.size() ||
          e.side_sum_index >= answers[e.side_db].symbols.size()) {
        throw std::logic_error("dangling side-information reference in plan");
      }
      value = static_cast<Symbol>(value ^ answers[e.side_db].symbols[e.side_sum_index]);
    }
    out[e.real_index] = value;
  }
  return out;
}

inline std::uint64_t download_cost(const RetrievalPlan& plan)
{
  std::uint64_t total = 0;
  for (const auto& q : plan.queries) {
    total += q.sums.size();
  }
  return total;
}

// Structural validation used by tests and the deterministic privacy check:
// per-database per-round sum counts, message symmetry of the subset
// multiset, side-information pairing, and exact desired-symbol coverage.
inline bool validate_plan(const RetrievalPlan& plan, std::string* why = nullptr)
{
  auto fail = [&](const std::string& msg) {
    if (why) {
      *why = msg;
    }
    return false;
  };
  const std::uint32_t n_db = plan.scheme.num_databases;
  const std::uint32_t n_msg = plan.scheme.num_messages;
  const std::uint64_t blocks = plan.scheme.num_blocks();

  // Per database, every k-subset must appear exactly blocks*(N-1)^(k-1) times.
  for (std::uint32_t db = 0; db < n_db; ++db) {
    std::map<std::uint64_t, std::uint64_t> counts;
    for (const auto& sum : plan.queries[db].sums) {
      std::uint64_t mask = 0;
      for (const auto& t : sum.terms) {
        if (t.message_id >= n_msg) {
          return fail("term references unknown message");
        }
        if (mask & (1ULL << t.message_id)) {
          return fail("duplicate message inside one sum");
        }
        mask |= 1ULL << t.message_id;
      }
      ++counts[mask];
    }
    for (std::uint32_t k = 1; k <= n_msg; ++k) {
      const std::uint64_t expect = blocks * detail::pow_u64(n_db - 1, k - 1);
      for (const auto& subset : detail::subsets_of_size(n_msg, k)) {
        const std::uint64_t key = detail::subset_key(subset);
        const auto it = counts.find(key);
        const std::uint64_t got = (it == counts.end()) ? 0 : it->second;
        if (got != expect) {
          return fail("subset multiplicity mismatch at database " + std::to_string(db));
        }
      }
    }
  }

  // Desired coverage: each symbol index of the desired message exactly once.
  std::vector<std::uint32_t> covered(plan.scheme.part_length, 0);
  for (const auto& e : plan.schedule) {
    if (e.kind == SumKind::pure_undesired) {
      continue;
    }
    if (e.real_index >= plan.scheme.part_length) {
      return fail("desired index out of range");
    }
    ++covered[e.real_index];
    if (e.kind == SumKind::paired) {
      if (e.side_db == e.db) {
        return fail("side information referenced at the same database");
      }
      const auto& side = plan.queries[e.side_db].sums[e.side_sum_index];
      const auto& mixed = plan.queries[e.db].sums[e.sum_index];
      // side sum terms must appear verbatim inside the mixed sum
      for (const auto& t : side.terms) {
        if (t.message_id == plan.theta) {
          return fail("side-information sum contains the desired message");
        }
        if (std::find(mixed.terms.begin(), mixed.terms.end(), t) == mixed.terms.end()) {
          return fail("paired sum does not embed its side information");
        }
      }
    }
  }
  for (auto c : covered) {
    if (c != 1) {
      return fail("desired symbol coverage is not exactly once");
    }
  }
  return true;
}

} // namespace pirlab
