#pragma once

#include "pirlab/bounds.hpp"
#include "pirlab/cache_pir.hpp"
#include "pirlab/core.hpp"
#include "pirlab/pir_base.hpp"
#include "pirlab/rational.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

namespace pirlab {

namespace detail {

// Order-preserving injective serialization: the distribution atom for the
// privacy audits. Unlike canonical_form this keeps the transmitted sum
// order, so ordering leaks are visible to the enumeration.
inline std::string ordered_form(const Query& query)
{
  std::string out;
  auto put_u32 = [&out](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
      out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
  };
  put_u32(static_cast<std::uint32_t>(query.sums.size()));
  for (const auto& sum : query.sums) {
    put_u32(static_cast<std::uint32_t>(sum.terms.size()));
    for (const auto& t : sum.terms) {
      put_u32(t.message_id);
      put_u32(t.symbol_index);
    }
  }
  return out;
}

inline std::uint64_t factorial(std::uint32_t n)
{
  std::uint64_t f = 1;
  for (std::uint32_t i = 2; i <= n; ++i) {
    f *= i;
  }
  return f;
}

// (B!)^slots with an overflow/feasibility ceiling; throws InfeasibleError
// naming the atom count when the space exceeds `limit`.
inline std::uint64_t permutation_atom_count(const PartScheme& scheme, std::uint64_t limit)
{
  const std::uint64_t bs = scheme.block_size();
  const std::uint64_t slots = scheme.num_blocks() * scheme.num_messages;
  const double estimate = slots * std::lgamma(static_cast<double>(bs) + 1.0) / std::log(2.0);
  if (estimate > 63 || bs > 20) {
    throw InfeasibleError("permutation space infeasible: > 2^63 atoms");
  }
  const std::uint64_t per_slot = factorial(static_cast<std::uint32_t>(bs));
  std::uint64_t total = 1;
  for (std::uint64_t i = 0; i < slots; ++i) {
    if (total > limit / per_slot + 1) {
      total = limit + 1;
      break;
    }
    total *= per_slot;
  }
  if (total > limit) {
    throw InfeasibleError("enumeration infeasible: " + std::to_string(total) +
                          " permutation atoms exceed limit " + std::to_string(limit));
  }
  return total;
}

// Visit every tuple of per-(block,message) permutations exactly once.
template<typename Fn>
void for_each_permutation_tuple(const PartScheme& scheme, Fn&& fn)
{
  const std::uint64_t blocks = scheme.num_blocks();
  const std::uint32_t n_msg = scheme.num_messages;
  const std::uint32_t bs = static_cast<std::uint32_t>(scheme.block_size());
  const std::uint64_t slots = blocks * n_msg;

  std::vector<std::uint32_t> ident(bs);
  for (std::uint32_t i = 0; i < bs; ++i) {
    ident[i] = i;
  }
  std::vector<std::vector<std::uint32_t>> flat(slots, ident);
  PermutationSet perms(blocks);
  for (auto& block : perms) {
    block.resize(n_msg);
  }
  while (true) {
    for (std::uint64_t b = 0; b < blocks; ++b) {
      for (std::uint32_t m = 0; m < n_msg; ++m) {
        perms[b][m] = flat[b * n_msg + m];
      }
    }
    fn(const_cast<const PermutationSet&>(perms));
    std::uint64_t slot = 0;
    while (slot < slots && !std::next_permutation(flat[slot].begin(), flat[slot].end())) {
      // wrapped back to identity; carry into the next slot
      ++slot;
    }
    if (slot == slots) {
      break;
    }
  }
}

inline PartScheme suffix_scheme(const SchemeParams& params)
{
  return PartScheme{params.num_databases, params.num_messages, params.pir_part_length()};
}

inline Query rebase_to_wire(const Query& suffix_query, std::uint64_t prefix_len)
{
  Query wire = suffix_query;
  for (auto& sum : wire.sums) {
    for (auto& t : sum.terms) {
      t.symbol_index += static_cast<std::uint32_t>(prefix_len);
    }
  }
  return wire;
}

} // namespace detail

struct QueryDistribution
{
  std::map<std::string, std::uint64_t> counts; // ordered wire form -> atom count
  std::uint64_t total = 0;
};

// Exact per-theta query distribution at one database, by exhaustive
// enumeration of all uniform permutation tuples. Atoms are the transmitted
// (ordered, wire-indexed) queries.
inline std::vector<QueryDistribution> exact_query_distributions(
    const SchemeParams& params,
    std::uint32_t db,
    PlanMutation mutation = PlanMutation::none,
    std::uint64_t atom_limit = 10'000'000)
{
  params.validate();
  if (db >= params.num_databases) {
    throw ParamError("database index out of range");
  }
  const std::uint32_t n_msg = params.num_messages;
  std::vector<QueryDistribution> dists(n_msg);

  if (params.pir_part_length() == 0) {
    // full cache: the interaction is empty for every theta
    for (auto& d : dists) {
      d.counts[detail::ordered_form(Query{})] = 1;
      d.total = 1;
    }
    return dists;
  }

  const PartScheme scheme = detail::suffix_scheme(params);
  const std::uint64_t total = detail::permutation_atom_count(scheme, atom_limit);
  const std::uint64_t prefix = params.cached_prefix_length();

  detail::for_each_permutation_tuple(scheme, [&](const PermutationSet& perms) {
    for (std::uint32_t theta = 0; theta < n_msg; ++theta) {
      const RetrievalPlan plan = plan_with_permutations(scheme, theta, perms, mutation);
      const Query wire = detail::rebase_to_wire(plan.queries[db], prefix);
      ++dists[theta].counts[detail::ordered_form(wire)];
    }
  });
  for (auto& d : dists) {
    d.total = total;
  }
  return dists;
}

inline QueryDistribution exact_query_distribution(const SchemeParams& params,
                                                  std::uint32_t theta,
                                                  std::uint32_t db,
                                                  PlanMutation mutation = PlanMutation::none)
{
  if (theta >= params.num_messages) {
    throw ParamError("desired message index out of range");
  }
  return exact_query_distributions(params, db, mutation)[theta];
}

inline Rational tv_distance(const QueryDistribution& a, const QueryDistribution& b)
{
  if (a.total != b.total) {
    throw ParamError("distributions over different atom counts");
  }
  std::uint64_t l1 = 0;
  for (const auto& [key, ca] : a.counts) {
    const auto it = b.counts.find(key);
    const std::uint64_t cb = (it == b.counts.end()) ? 0 : it->second;
    l1 += (ca > cb) ? ca - cb : cb - ca;
  }
  for (const auto& [key, cb] : b.counts) {
    if (!a.counts.count(key)) {
      l1 += cb;
    }
  }
  return Rational(static_cast<std::int64_t>(l1), 2 * static_cast<std::int64_t>(a.total));
}

// Max total-variation distance between the query distributions of any two
// desired-message indices at one database. Zero for a private scheme.
inline Rational privacy_tv_distance(const SchemeParams& params,
                                    std::uint32_t db,
                                    PlanMutation mutation = PlanMutation::none)
{
  const auto dists = exact_query_distributions(params, db, mutation);
  Rational worst(0);
  for (std::size_t i = 0; i < dists.size(); ++i) {
    for (std::size_t j = i + 1; j < dists.size(); ++j) {
      const Rational tv = tv_distance(dists[i], dists[j]);
      if (worst < tv) {
        worst = tv;
      }
    }
  }
  return worst;
}

struct SampledPrivacyReport
{
  double max_deviation = 0;  // max over atoms and theta pairs of |p1 - p2|
  double threshold = 0;      // 3 * sqrt(ln(2/delta) / (2 * trials)), delta = 1e-6
  bool flagged = false;
  bool structural_ok = true; // deterministic plan-symmetry check on every sample
  std::uint64_t trials = 0;
};

// Sampling fallback where enumeration is infeasible: empirical query
// distributions (canonical form) per theta plus the deterministic
// structural symmetry check on every sampled plan.
inline SampledPrivacyReport sampled_privacy_check(const SchemeParams& params,
                                                  std::uint32_t db,
                                                  std::uint64_t trials,
                                                  SeededRandomness& rng,
                                                  PlanMutation mutation = PlanMutation::none)
{
  params.validate();
  if (trials == 0) {
    throw ParamError("sampled privacy check requires trials >= 1");
  }
  if (db >= params.num_databases) {
    throw ParamError("database index out of range");
  }
  SampledPrivacyReport report;
  report.trials = trials;
  constexpr double delta = 1e-6;
  report.threshold = 3.0 * std::sqrt(std::log(2.0 / delta) / (2.0 * static_cast<double>(trials)));

  const std::uint32_t n_msg = params.num_messages;
  const PartScheme scheme = detail::suffix_scheme(params);
  if (scheme.part_length == 0) {
    return report; // empty interaction, nothing to distinguish
  }

  std::vector<std::unordered_map<std::string, std::uint64_t>> hist(n_msg);
  for (std::uint32_t theta = 0; theta < n_msg; ++theta) {
    for (std::uint64_t t = 0; t < trials; ++t) {
      const RetrievalPlan plan = plan_queries(scheme, theta, rng, mutation);
      if (report.structural_ok && !validate_plan(plan)) {
        report.structural_ok = false;
      }
      ++hist[theta][canonical_form(plan.queries[db])];
    }
  }
  const double inv = 1.0 / static_cast<double>(trials);
  for (std::uint32_t i = 0; i < n_msg; ++i) {
    for (std::uint32_t j = i + 1; j < n_msg; ++j) {
      for (const auto& [key, ci] : hist[i]) {
        const auto it = hist[j].find(key);
        const double cj = (it == hist[j].end()) ? 0.0 : static_cast<double>(it->second);
        report.max_deviation =
            std::max(report.max_deviation, std::abs(static_cast<double>(ci) - cj) * inv);
      }
      for (const auto& [key, cj] : hist[j]) {
        if (!hist[i].count(key)) {
          report.max_deviation =
              std::max(report.max_deviation, static_cast<double>(cj) * inv);
        }
      }
    }
  }
  report.flagged = report.max_deviation > report.threshold;
  return report;
}

namespace detail {

// Exhaustively enumerated joint distribution of (message suffixes, queries,
// answers) for the implemented scheme with 1-bit symbols and uniform
// messages. The cached prefix factors out of every entropy analytically:
// it is independent of everything enumerated here and contributes
// prefix_len bits per distinct message (all K of them once Z is involved).
class EnumeratedSystem
{
public:
  // thetas: desired indices whose transcripts become atom components.
  EnumeratedSystem(const SchemeParams& params,
                   const std::vector<std::uint32_t>& thetas,
                   std::uint64_t atom_limit = 100'000'000)
    : params_(params)
    , thetas_(thetas)
  {
    params_.validate();
    scheme_ = suffix_scheme(params_);
    n_msg_ = params_.num_messages;
    n_db_ = params_.num_databases;
    suffix_len_ = scheme_.part_length;
    const std::uint64_t msg_bits = suffix_len_ * n_msg_;
    if (msg_bits > 40) {
      throw InfeasibleError("enumeration infeasible: 2^" + std::to_string(msg_bits) +
                            " message atoms");
    }
    const std::uint64_t msg_atoms = 1ULL << msg_bits;
    const std::uint64_t perm_atoms =
        permutation_atom_count(scheme_, atom_limit / std::max<std::uint64_t>(msg_atoms, 1));
    total_ = perm_atoms * msg_atoms;
    enumerate();
  }

  std::uint64_t total_atoms() const { return total_; }

  // Component indices: messages first, then per theta slot: N queries, N answers.
  std::size_t message_component(std::uint32_t msg) const { return msg; }
  std::size_t query_component(std::size_t theta_slot, std::uint32_t db) const
  {
    return n_msg_ + theta_slot * (2 * n_db_) + db;
  }
  std::size_t answer_component(std::size_t theta_slot, std::uint32_t db) const
  {
    return n_msg_ + theta_slot * (2 * n_db_) + n_db_ + db;
  }

  // H(group) in bits over the enumerated (suffix) variables only.
  double suffix_entropy(const std::vector<std::size_t>& components) const
  {
    std::unordered_map<std::string, std::uint64_t> marginal;
    marginal.reserve(atoms_.size());
    for (const auto& [tuple, count] : atoms_) {
      std::string key;
      for (auto c : components) {
        key += tuple[c];
        key.push_back('\x1f');
      }
      marginal[key] += count;
    }
    const double t = static_cast<double>(total_);
    double acc = 0;
    for (const auto& [key, c] : marginal) {
      acc += static_cast<double>(c) * std::log2(static_cast<double>(c));
    }
    return std::log2(t) - acc / t;
  }

  // Full entropy of a group of variables from {W_i, Z, (Q,A) transcripts},
  // adding the analytic prefix contribution of the cache split.
  double group_entropy(const std::vector<std::uint32_t>& message_ids,
                       bool include_cache,
                       const std::vector<std::size_t>& transcript_components) const
  {
    const double prefix_bits = static_cast<double>(params_.cached_prefix_length());
    const double prefix_term =
        prefix_bits * (include_cache ? n_msg_ : message_ids.size());
    std::vector<std::size_t> comps = transcript_components;
    for (auto m : message_ids) {
      comps.push_back(message_component(m));
    }
    return prefix_term + (comps.empty() ? 0.0 : suffix_entropy(comps));
  }

  // TV between the per-database joint (query, answer, all messages) tuples
  // of two theta slots; the Eq.-(7) joint-tuple corroboration.
  Rational joint_tuple_tv(std::size_t slot_a, std::size_t slot_b, std::uint32_t db) const
  {
    std::map<std::string, std::int64_t> diff;
    for (const auto& [tuple, count] : atoms_) {
      std::string base;
      for (std::uint32_t m = 0; m < n_msg_; ++m) {
        base += tuple[message_component(m)];
        base.push_back('\x1f');
      }
      const std::string key_a =
          base + tuple[query_component(slot_a, db)] + '\x1f' + tuple[answer_component(slot_a, db)];
      const std::string key_b =
          base + tuple[query_component(slot_b, db)] + '\x1f' + tuple[answer_component(slot_b, db)];
      diff[key_a] += static_cast<std::int64_t>(count);
      diff[key_b] -= static_cast<std::int64_t>(count);
    }
    std::int64_t l1 = 0;
    for (const auto& [key, d] : diff) {
      l1 += d < 0 ? -d : d;
    }
    return Rational(l1, 2 * static_cast<std::int64_t>(total_));
  }

  std::uint64_t download_bits(std::size_t theta_slot) const { return downloads_.at(theta_slot); }

private:
  void enumerate()
  {
    const std::uint64_t msg_bits = suffix_len_ * n_msg_;
    const std::uint64_t msg_atoms = 1ULL << msg_bits;

    MessageStore store;
    store.messages.resize(n_msg_);
    for (auto& m : store.messages) {
      m.symbols.assign(suffix_len_, 0);
    }

    downloads_.assign(thetas_.size(), 0);
    bool first_tuple = true;

    for_each_permutation_tuple(scheme_, [&](const PermutationSet& perms) {
      std::vector<RetrievalPlan> plans;
      std::vector<std::string> query_strings;
      plans.reserve(thetas_.size());
      for (const auto theta : thetas_) {
        plans.push_back(plan_with_permutations(scheme_, theta, perms));
        for (std::uint32_t db = 0; db < n_db_; ++db) {
          query_strings.push_back(ordered_form(plans.back().queries[db]));
        }
      }
      if (first_tuple) {
        for (std::size_t s = 0; s < thetas_.size(); ++s) {
          downloads_[s] = download_cost(plans[s]);
        }
        first_tuple = false;
      }
      for (std::uint64_t assignment = 0; assignment < msg_atoms; ++assignment) {
        std::uint64_t bits = assignment;
        std::vector<std::string> tuple(n_msg_ + thetas_.size() * 2 * n_db_);
        for (std::uint32_t m = 0; m < n_msg_; ++m) {
          std::string& w = tuple[message_component(m)];
          w.resize(suffix_len_);
          for (std::uint64_t i = 0; i < suffix_len_; ++i) {
            const Symbol bit = static_cast<Symbol>(bits & 1);
            store.messages[m].symbols[i] = bit;
            w[i] = static_cast<char>('0' + bit);
            bits >>= 1;
          }
        }
        for (std::size_t s = 0; s < thetas_.size(); ++s) {
          for (std::uint32_t db = 0; db < n_db_; ++db) {
            tuple[query_component(s, db)] = query_strings[s * n_db_ + db];
            const Answer ans = answer_query(plans[s].queries[db], store);
            std::string& a = tuple[answer_component(s, db)];
            a.resize(ans.symbols.size());
            for (std::size_t i = 0; i < ans.symbols.size(); ++i) {
              a[i] = static_cast<char>('0' + ans.symbols[i]);
            }
          }
        }
        ++atoms_[tuple];
      }
    });
  }

  SchemeParams params_;
  std::vector<std::uint32_t> thetas_;
  PartScheme scheme_;
  std::uint32_t n_msg_ = 0;
  std::uint32_t n_db_ = 0;
  std::uint64_t suffix_len_ = 0;
  std::uint64_t total_ = 0;
  std::map<std::vector<std::string>, std::uint64_t> atoms_;
  std::vector<std::uint64_t> downloads_;
};

} // namespace detail

struct Lemma2Report
{
  double lhs = 0;    // I(W_{k:K}; Q^{[k-1]}, A^{[k-1]} | Z, W_{1:k-1})
  double rhs = 0;    // [H(W_k|Z,W_{1:k-1}) + I(W_{k+1:K}; Q^{[k]}, A^{[k]} | Z, W_{1:k})] / N
  double slack = 0;  // lhs - rhs, must be >= -1e-9 (zero when the chain is tight)
  Rational joint_privacy_tv; // max per-db TV of the (Q,A,W,Z) joint across the two thetas
  std::uint64_t atoms = 0;
};

// Exhaustive verification of the recursive converse step at tiny scale,
// with the exact joint induced by the implemented scheme and uniform 1-bit
// messages. `step` is the 1-based message position k, 2 <= k <= K.
inline Lemma2Report lemma2_audit(const SchemeParams& params, std::uint32_t step)
{
  params.validate();
  const std::uint32_t n_msg = params.num_messages;
  if (n_msg == 1) {
    return Lemma2Report{}; // empty message range on both sides
  }
  if (step < 2 || step > n_msg) {
    throw ParamError("lemma2 step must satisfy 2 <= k <= K");
  }
  const std::uint32_t theta_prev = step - 2; // 0-based index of message k-1
  const std::uint32_t theta_cur = step - 1;  // 0-based index of message k

  const detail::EnumeratedSystem sys(params, {theta_prev, theta_cur});

  std::vector<std::uint32_t> all_msgs(n_msg);
  for (std::uint32_t i = 0; i < n_msg; ++i) {
    all_msgs[i] = i;
  }
  std::vector<std::uint32_t> below_prev; // W_{1:k-1} as 0-based {0..k-2}
  for (std::uint32_t i = 0; i + 1 < step; ++i) {
    below_prev.push_back(i);
  }
  std::vector<std::uint32_t> below_cur = below_prev; // W_{1:k} = {0..k-1}
  below_cur.push_back(step - 1);

  std::vector<std::size_t> prev_qa;
  std::vector<std::size_t> cur_qa;
  for (std::uint32_t db = 0; db < params.num_databases; ++db) {
    prev_qa.push_back(sys.query_component(0, db));
    prev_qa.push_back(sys.answer_component(0, db));
    cur_qa.push_back(sys.query_component(1, db));
    cur_qa.push_back(sys.answer_component(1, db));
  }

  auto h = [&](const std::vector<std::uint32_t>& msgs, const std::vector<std::size_t>& extras) {
    return sys.group_entropy(msgs, /*include_cache=*/true, extras);
  };

  Lemma2Report report;
  report.atoms = sys.total_atoms();

  // I(W_{k:K}; Qp, Ap | Z, W_{1:k-1})
  const double lhs_uncond = h(all_msgs, {}) - h(below_prev, {});
  const double lhs_cond = h(all_msgs, prev_qa) - h(below_prev, prev_qa);
  report.lhs = lhs_uncond - lhs_cond;

  // H(W_k | Z, W_{1:k-1})
  const double h_k = h(below_cur, {}) - h(below_prev, {});
  // I(W_{k+1:K}; Qc, Ac | Z, W_{1:k})
  const double tail_uncond = h(all_msgs, {}) - h(below_cur, {});
  const double tail_cond = h(all_msgs, cur_qa) - h(below_cur, cur_qa);
  const double tail_info = tail_uncond - tail_cond;

  report.rhs = (h_k + tail_info) / params.num_databases;
  report.slack = report.lhs - report.rhs;

  Rational worst(0);
  for (std::uint32_t db = 0; db < params.num_databases; ++db) {
    const Rational tv = sys.joint_tuple_tv(0, 1, db);
    if (worst < tv) {
      worst = tv;
    }
  }
  report.joint_privacy_tv = worst;
  return report;
}

struct Eq2Report
{
  double download_bits = 0;   // measured D for the enumerated instance
  double h_w1_given_z = 0;    // H(W_1 | Z)
  double info_term = 0;       // I(W_{2:K}; Q^{[1]}, A^{[1]} | Z, W_1)
  double slack = 0;           // D - (H(W_1|Z) + info), must be >= -1e-9
  std::uint64_t atoms = 0;
};

// Exhaustive check of the download-cost decomposition for theta = 1.
inline Eq2Report eq2_audit(const SchemeParams& params)
{
  params.validate();
  Eq2Report report;
  if (params.pir_part_length() == 0) {
    return report; // everything cached: D = 0 and both terms vanish
  }
  const std::uint32_t n_msg = params.num_messages;
  const detail::EnumeratedSystem sys(params, {0});
  report.atoms = sys.total_atoms();
  report.download_bits = static_cast<double>(sys.download_bits(0));

  std::vector<std::uint32_t> all_msgs(n_msg);
  for (std::uint32_t i = 0; i < n_msg; ++i) {
    all_msgs[i] = i;
  }
  std::vector<std::size_t> qa;
  for (std::uint32_t db = 0; db < params.num_databases; ++db) {
    qa.push_back(sys.query_component(0, db));
    qa.push_back(sys.answer_component(0, db));
  }

  auto h = [&](const std::vector<std::uint32_t>& msgs, const std::vector<std::size_t>& extras) {
    return sys.group_entropy(msgs, /*include_cache=*/true, extras);
  };

  report.h_w1_given_z = h({0}, {}) - h({}, {});
  const double uncond = h(all_msgs, {}) - h({0}, {});
  const double cond = h(all_msgs, qa) - h({0}, qa);
  report.info_term = uncond - cond;
  report.slack = report.download_bits - (report.h_w1_given_z + report.info_term);
  return report;
}

} // namespace pirlab
