#pragma once

#include "pirlab/core.hpp"
#include "pirlab/pir_base.hpp"
#include "pirlab/rational.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace pirlab {

// D*(S) = (1 - S/K) * (1 + 1/N + ... + 1/N^(K-1)), exact.
inline Rational pir_cost_factor(std::uint32_t n_db, std::uint32_t n_msg)
{
  Rational sum(0);
  Rational term(1);
  for (std::uint32_t k = 0; k < n_msg; ++k) {
    sum += term;
    term = term / Rational(static_cast<std::int64_t>(n_db));
  }
  return sum;
}

inline Rational optimal_download_cost(std::uint32_t n_db, std::uint32_t n_msg, const Rational& storage)
{
  if (n_db < 1 || n_msg < 1) {
    throw ParamError("N and K must be >= 1");
  }
  if (storage < Rational(0) || storage > Rational(static_cast<std::int64_t>(n_msg))) {
    throw ParamError("storage S must lie in [0, K]");
  }
  const Rational fraction = Rational(1) - storage / Rational(static_cast<std::int64_t>(n_msg));
  return fraction * pir_cost_factor(n_db, n_msg);
}

struct Capacity
{
  bool unbounded = false;
  Rational value; // meaningful only when !unbounded
};

inline Capacity capacity(std::uint32_t n_db, std::uint32_t n_msg, const Rational& storage)
{
  const Rational d = optimal_download_cost(n_db, n_msg, storage);
  if (d == Rational(0)) {
    return Capacity{true, Rational(0)};
  }
  return Capacity{false, Rational(1) / d};
}

// Finite discrete distribution over tuples of named variables; the
// substrate for all entropy computations.
class JointDistribution
{
public:
  JointDistribution() = default;

  explicit JointDistribution(std::vector<std::string> variables)
    : variables_(std::move(variables))
  {
  }

  const std::vector<std::string>& variables() const { return variables_; }

  void add_atom(std::vector<std::string> values, double probability)
  {
    if (values.size() != variables_.size()) {
      throw ParamError("atom arity does not match variable count");
    }
    if (probability < 0) {
      throw ParamError("negative probability");
    }
    atoms_[std::move(values)] += probability;
  }

  double total_mass() const
  {
    double m = 0;
    for (const auto& [vals, p] : atoms_) {
      m += p;
    }
    return m;
  }

  std::size_t variable_index(const std::string& name) const
  {
    for (std::size_t i = 0; i < variables_.size(); ++i) {
      if (variables_[i] == name) {
        return i;
      }
    }
    throw ParamError("unknown variable: " + name);
  }

  // H(group) in bits, by exact marginalization onto the named variables.
  double joint_entropy(const std::vector<std::string>& group) const
  {
    std::vector<std::size_t> idx;
    idx.reserve(group.size());
    for (const auto& name : group) {
      idx.push_back(variable_index(name));
    }
    std::map<std::vector<std::string>, double> marginal;
    for (const auto& [vals, p] : atoms_) {
      if (p <= 0) {
        continue;
      }
      std::vector<std::string> key;
      key.reserve(idx.size());
      for (auto i : idx) {
        key.push_back(vals[i]);
      }
      marginal[std::move(key)] += p;
    }
    double h = 0;
    for (const auto& [key, p] : marginal) {
      if (p > 0) {
        h -= p * std::log2(p);
      }
    }
    return h;
  }

  // CSV: header "var1,...,varn,probability", one atom per row.
  void to_csv(std::ostream& os) const
  {
    for (const auto& v : variables_) {
      os << v << ',';
    }
    os << "probability\n";
    for (const auto& [vals, p] : atoms_) {
      for (const auto& v : vals) {
        os << v << ',';
      }
      os << p << '\n';
    }
  }

  static JointDistribution from_csv(std::istream& is)
  {
    std::string line;
    if (!std::getline(is, line)) {
      throw ParamError("empty distribution CSV");
    }
    std::vector<std::string> header = split(line);
    if (header.empty() || header.back() != "probability") {
      throw ParamError("distribution CSV must end with a probability column");
    }
    header.pop_back();
    JointDistribution dist(header);
    while (std::getline(is, line)) {
      if (line.empty()) {
        continue;
      }
      std::vector<std::string> cells = split(line);
      if (cells.size() != header.size() + 1) {
        throw ParamError("distribution CSV row arity mismatch");
      }
      const double p = std::stod(cells.back());
      cells.pop_back();
      dist.add_atom(std::move(cells), p);
    }
    return dist;
  }

private:
  static std::vector<std::string> split(const std::string& line)
  {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      out.push_back(cell);
    }
    return out;
  }

  std::vector<std::string> variables_;
  std::map<std::vector<std::string>, double> atoms_;
};

// H(targets | conditioners) = H(targets, conditioners) - H(conditioners).
inline double entropy(const JointDistribution& dist,
                      const std::vector<std::string>& targets,
                      const std::vector<std::string>& conditioners = {})
{
  std::vector<std::string> joint = targets;
  for (const auto& c : conditioners) {
    joint.push_back(c);
  }
  return dist.joint_entropy(joint) - (conditioners.empty() ? 0.0 : dist.joint_entropy(conditioners));
}

// H(W_S | Z) for every subset S of the K message variables, keyed by bitmask.
class SubsetEntropyTable
{
public:
  SubsetEntropyTable() = default;

  explicit SubsetEntropyTable(std::uint32_t n_msg)
    : n_msg_(n_msg)
    , values_(std::size_t{1} << n_msg, 0.0)
  {
    if (n_msg < 1 || n_msg > 20) {
      throw ParamError("subset table supports 1..20 messages");
    }
  }

  static SubsetEntropyTable from_distribution(const JointDistribution& dist,
                                              const std::vector<std::string>& message_vars,
                                              const std::vector<std::string>& cache_vars)
  {
    SubsetEntropyTable table(static_cast<std::uint32_t>(message_vars.size()));
    const std::size_t n_subsets = std::size_t{1} << message_vars.size();
    for (std::size_t mask = 0; mask < n_subsets; ++mask) {
      std::vector<std::string> targets;
      for (std::size_t i = 0; i < message_vars.size(); ++i) {
        if (mask & (std::size_t{1} << i)) {
          targets.push_back(message_vars[i]);
        }
      }
      table.values_[mask] = targets.empty() ? 0.0 : entropy(dist, targets, cache_vars);
    }
    return table;
  }

  std::uint32_t num_messages() const { return n_msg_; }

  double get(std::uint64_t mask) const { return values_.at(mask); }
  void set(std::uint64_t mask, double bits) { values_.at(mask) = bits; }

  // CSV: subset column uses semicolon-joined 1-based message indices, empty
  // string for the empty set.
  void to_csv(std::ostream& os) const
  {
    os << "subset,entropy_bits\n";
    for (std::size_t mask = 0; mask < values_.size(); ++mask) {
      std::string subset;
      for (std::uint32_t i = 0; i < n_msg_; ++i) {
        if (mask & (std::size_t{1} << i)) {
          if (!subset.empty()) {
            subset += ';';
          }
          subset += std::to_string(i + 1);
        }
      }
      os << subset << ',' << values_[mask] << '\n';
    }
  }

private:
  std::uint32_t n_msg_ = 0;
  std::vector<double> values_;
};

inline std::uint64_t binomial(std::uint32_t n, std::uint32_t k)
{
  if (k > n) {
    return 0;
  }
  std::uint64_t r = 1;
  for (std::uint32_t i = 1; i <= k; ++i) {
    r = r * (n - k + i) / i;
  }
  return r;
}

// mu_k = (1 / C(K,k)) * sum_{|S|=k} H(W_S|Z) / k.
inline double subset_mu(const SubsetEntropyTable& table, std::uint32_t k)
{
  const std::uint32_t n_msg = table.num_messages();
  if (k < 1 || k > n_msg) {
    throw ParamError("mu_k requires 1 <= k <= K");
  }
  double sum = 0;
  const std::size_t n_subsets = std::size_t{1} << n_msg;
  for (std::size_t mask = 0; mask < n_subsets; ++mask) {
    if (static_cast<std::uint32_t>(std::popcount(mask)) == k) {
      sum += table.get(mask);
    }
  }
  return sum / (static_cast<double>(binomial(n_msg, k)) * k);
}

struct HanCheckResult
{
  bool ok = true;
  std::uint32_t first_violation_k = 0; // first k with mu_{k-1} < mu_k, 0 if none
};

// Han's inequality: mu_1 >= mu_2 >= ... >= mu_K within tolerance.
inline HanCheckResult han_chain_check(const std::vector<double>& mus, double tol = 1e-9)
{
  for (std::size_t i = 1; i < mus.size(); ++i) {
    if (mus[i] > mus[i - 1] + tol) {
      return HanCheckResult{false, static_cast<std::uint32_t>(i + 1)};
    }
  }
  return HanCheckResult{true, 0};
}

// One permutation instance of the converse bound:
// sum_k [H(W_{pi_1..pi_k}|Z) - H(W_{pi_1..pi_{k-1}}|Z)] / N^(k-1).
inline double permutation_bound(const SubsetEntropyTable& table,
                                std::uint32_t n_db,
                                const std::vector<std::uint32_t>& perm)
{
  const std::uint32_t n_msg = table.num_messages();
  if (perm.size() != n_msg) {
    throw ParamError("permutation length must equal K");
  }
  std::vector<bool> seen(n_msg, false);
  for (auto p : perm) {
    if (p >= n_msg || seen[p]) {
      throw ParamError("invalid permutation of the message set");
    }
    seen[p] = true;
  }
  double bound = 0;
  double scale = 1.0;
  std::uint64_t mask = 0;
  double prev = 0;
  for (std::uint32_t k = 0; k < n_msg; ++k) {
    mask |= (1ULL << perm[k]);
    const double cur = table.get(mask);
    bound += (cur - prev) * scale;
    prev = cur;
    scale /= n_db;
  }
  return bound;
}

struct AveragedBound
{
  double averaged = 0; // mean of all K! permutation bounds
  double relaxed = 0;  // Han-relaxed closed form mu_K * sum_k N^(-k)
};

// Average of the K! permutation bounds, expressed through the mu_k, plus
// its Han relaxation. When the mu chain is monotone, averaged >= relaxed.
inline AveragedBound averaged_bound(const SubsetEntropyTable& table, std::uint32_t n_db)
{
  const std::uint32_t n_msg = table.num_messages();
  AveragedBound out;
  double scale = 1.0;
  double prev_term = 0; // (k-1) * mu_{k-1}
  double geo = 0;
  for (std::uint32_t k = 1; k <= n_msg; ++k) {
    const double mu_k = subset_mu(table, k);
    out.averaged += (k * mu_k - prev_term) * scale;
    prev_term = k * mu_k;
    geo += scale;
    scale /= n_db;
  }
  out.relaxed = subset_mu(table, n_msg) * geo;
  return out;
}

} // namespace pirlab
