// pirlab: bound tables, cost sweeps, audit batteries, and a database
// server / client pair, all emitting stable CSV for external plotting.
#include <CLI11.hpp>

#include "pirlab/audit.hpp"
#include "pirlab/bounds.hpp"
#include "pirlab/cache_pir.hpp"
#include "pirlab/netsvc.hpp"

#include <csignal>
#include <fstream>
#include <iostream>
#include <memory>
#include <random>
#include <sstream>
#include <thread>

namespace {

using namespace pirlab;

constexpr int exit_pass = 0;
constexpr int exit_fail = 1;
constexpr int exit_usage = 2;

// Every table goes through here so CSV stays byte-stable: header row
// mandatory, fractions as "a/b", decimals to 12 places.
void emit(const std::string& out_path, const std::string& csv)
{
  if (out_path.empty()) {
    std::cout << csv;
    return;
  }
  std::ofstream out(out_path, std::ios::binary);
  if (!out) {
    throw ParamError("cannot open output file '" + out_path + "'");
  }
  out << csv;
}

std::string fraction_and_decimal(const Rational& r)
{
  return r.to_string() + "," + r.to_decimal(12);
}

struct InstanceFlags
{
  std::uint32_t databases = 2;
  std::uint32_t messages = 2;
  std::uint32_t cache_num = 0;
  std::uint32_t cache_den = 1;
  std::uint32_t multiplier = 1;
  std::uint64_t seed = 1;

  void add_to(CLI::App* cmd, bool with_cache = true)
  {
    cmd->add_option("--databases", databases, "number of replicated databases N")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--messages", messages, "number of messages K")->check(CLI::PositiveNumber);
    if (with_cache) {
      cmd->add_option("--cache-num", cache_num, "cached fraction numerator p (s = p/q)");
      cmd->add_option("--cache-den", cache_den, "cached fraction denominator q")
          ->check(CLI::PositiveNumber);
      cmd->add_option("--multiplier", multiplier, "sub-packetization multiplier m")
          ->check(CLI::PositiveNumber);
    }
    cmd->add_option("--seed", seed, "deterministic seed for stores and plans");
  }

  SchemeParams params() const
  {
    SchemeParams p{databases, messages, cache_num, cache_den, multiplier};
    p.validate();
    return p;
  }
};

int cmd_bounds(std::uint32_t n, std::uint32_t k, std::uint32_t resolution,
               const std::string& out_path)
{
  if (resolution < 2) {
    throw ParamError("--resolution must be at least 2");
  }
  std::ostringstream csv;
  csv << "S,S_decimal,optimal_cost,optimal_cost_decimal,capacity,capacity_decimal\n";
  for (std::uint32_t i = 0; i < resolution; ++i) {
    const Rational storage = Rational(static_cast<std::int64_t>(k) * i,
                                      static_cast<std::int64_t>(resolution) - 1);
    const Rational cost = optimal_download_cost(n, k, storage);
    csv << fraction_and_decimal(storage) << "," << fraction_and_decimal(cost) << ",";
    const auto cap = capacity(n, k, storage);
    if (cap.unbounded) {
      csv << "inf,inf\n";
    } else {
      csv << fraction_and_decimal(cap.value) << "\n";
    }
  }
  emit(out_path, csv.str());
  return exit_pass;
}

int cmd_sweep(const InstanceFlags& flags, const std::string& out_path)
{
  std::ostringstream csv;
  csv << "N,K,S,measured_cost_norm,theory_cost_norm,match\n";
  bool all_match = true;
  for (std::uint32_t p = 0; p <= flags.cache_den; ++p) {
    const SchemeParams params{flags.databases, flags.messages, p, flags.cache_den,
                              flags.multiplier};
    params.validate();
    SeededRandomness rng(flags.seed + p);
    const auto store = MessageStore::random(params, rng);
    const auto cache = encode_cache(store, params);
    LocalAnswerProvider provider(store);
    auto [msg, report] = retrieve(0, params, cache, provider, rng);
    if (msg.symbols != store.messages[0].symbols) {
      throw RetrievalError("decoded message differs from the store");
    }
    const Rational theory =
        optimal_download_cost(flags.databases, flags.messages, params.normalized_storage());
    const bool match = report.normalized_cost == theory;
    all_match = all_match && match;
    csv << flags.databases << "," << flags.messages << "," << params.normalized_storage().to_string()
        << "," << report.normalized_cost.to_string() << "," << theory.to_string() << ","
        << (match ? "true" : "false") << "\n";
  }
  emit(out_path, csv.str());
  return all_match ? exit_pass : exit_fail;
}

int audit_privacy(const SchemeParams& params, std::ostringstream& csv)
{
  csv << "database,tv_distance,pass\n";
  bool pass = true;
  for (std::uint32_t db = 0; db < params.num_databases; ++db) {
    const Rational tv = privacy_tv_distance(params, db);
    const bool ok = tv == Rational(0);
    pass = pass && ok;
    csv << db << "," << tv.to_string() << "," << (ok ? "true" : "false") << "\n";
  }
  return pass ? exit_pass : exit_fail;
}

int audit_correctness(const SchemeParams& params, std::uint64_t seed, std::ostringstream& csv)
{
  csv << "message_index,trials,failures,pass\n";
  constexpr std::uint64_t trials = 50;
  bool pass = true;
  for (std::uint32_t theta = 0; theta < params.num_messages; ++theta) {
    std::uint64_t bad = 0;
    for (std::uint64_t t = 0; t < trials; ++t) {
      SeededRandomness rng(seed + theta * trials + t);
      const auto store = MessageStore::random(params, rng);
      const auto cache = encode_cache(store, params);
      LocalAnswerProvider provider(store);
      auto [msg, report] = retrieve(theta, params, cache, provider, rng);
      if (msg.symbols != store.messages[theta].symbols) {
        ++bad;
      }
    }
    pass = pass && bad == 0;
    csv << (theta + 1) << "," << trials << "," << bad << ","
        << (bad == 0 ? "true" : "false") << "\n";
  }
  return pass ? exit_pass : exit_fail;
}

int audit_lemma2(const SchemeParams& params, std::ostringstream& csv)
{
  csv << "step,lhs_bits,rhs_bits,slack_bits,joint_tv,pass\n";
  bool pass = true;
  for (std::uint32_t step = 2; step <= std::max(2u, params.num_messages); ++step) {
    const auto report = lemma2_audit(params, step);
    const bool ok = report.slack >= -1e-9 && report.joint_privacy_tv == Rational(0);
    pass = pass && ok;
    csv.precision(12);
    csv << std::fixed << step << "," << report.lhs << "," << report.rhs << "," << report.slack
        << "," << report.joint_privacy_tv.to_string() << "," << (ok ? "true" : "false") << "\n";
  }
  return pass ? exit_pass : exit_fail;
}

int audit_eq2(const SchemeParams& params, std::ostringstream& csv)
{
  csv << "download_bits,desired_entropy_bits,info_bits,slack_bits,pass\n";
  const auto report = eq2_audit(params);
  const bool ok = report.slack >= -1e-9;
  csv.precision(12);
  csv << std::fixed << report.download_bits << "," << report.h_w1_given_z << ","
      << report.info_term << "," << report.slack << "," << (ok ? "true" : "false") << "\n";
  return ok ? exit_pass : exit_fail;
}

int audit_han(std::uint64_t seed, std::ostringstream& csv)
{
  csv << "trial,chain_ok,averaged,mean_over_orders,match,pass\n";
  std::mt19937_64 gen(seed);
  bool pass = true;
  for (int trial = 0; trial < 100; ++trial) {
    const std::uint32_t n_msg = 2 + static_cast<std::uint32_t>(trial % 2);
    std::uniform_int_distribution<int> alpha_msg(2, 4);
    std::uniform_int_distribution<int> alpha_z(2, 8);
    std::vector<int> sizes;
    std::vector<std::string> names;
    for (std::uint32_t i = 0; i < n_msg; ++i) {
      names.push_back("W" + std::to_string(i + 1));
      sizes.push_back(alpha_msg(gen));
    }
    names.push_back("Z");
    sizes.push_back(alpha_z(gen));
    JointDistribution dist(names);
    std::exponential_distribution<double> weight(1.0);
    std::vector<int> tuple(names.size(), 0);
    std::vector<std::pair<std::vector<std::string>, double>> rows;
    double total = 0;
    while (true) {
      std::vector<std::string> values;
      for (std::size_t i = 0; i < tuple.size(); ++i) {
        values.push_back(std::to_string(tuple[i]));
      }
      const double w = weight(gen);
      rows.emplace_back(std::move(values), w);
      total += w;
      std::size_t pos = 0;
      while (pos < tuple.size() && ++tuple[pos] == sizes[pos]) {
        tuple[pos++] = 0;
      }
      if (pos == tuple.size()) {
        break;
      }
    }
    for (auto& [values, w] : rows) {
      dist.add_atom(std::move(values), w / total);
    }

    names.pop_back();
    const auto table = SubsetEntropyTable::from_distribution(dist, names, {"Z"});
    std::vector<double> mus;
    for (std::uint32_t k = 1; k <= n_msg; ++k) {
      mus.push_back(subset_mu(table, k));
    }
    const bool chain_ok = han_chain_check(mus).ok;

    const std::uint32_t n_db = 2 + static_cast<std::uint32_t>(trial % 3);
    std::vector<std::uint32_t> perm(n_msg);
    for (std::uint32_t i = 0; i < n_msg; ++i) {
      perm[i] = i;
    }
    double sum = 0;
    std::uint64_t count = 0;
    do {
      sum += permutation_bound(table, n_db, perm);
      ++count;
    } while (std::next_permutation(perm.begin(), perm.end()));
    const auto ab = averaged_bound(table, n_db);
    const double mean = sum / static_cast<double>(count);
    const bool match = std::abs(ab.averaged - mean) <= 1e-9;
    const bool ok = chain_ok && match;
    pass = pass && ok;
    csv.precision(12);
    csv << std::fixed << trial << "," << (chain_ok ? "true" : "false") << "," << ab.averaged
        << "," << mean << "," << (match ? "true" : "false") << "," << (ok ? "true" : "false")
        << "\n";
  }
  return pass ? exit_pass : exit_fail;
}

volatile std::sig_atomic_t stop_requested = 0;

int cmd_serve(const InstanceFlags& flags, std::uint16_t port, std::uint32_t db_index)
{
  const SchemeParams params = flags.params();
  if (db_index >= params.num_databases) {
    throw ParamError("--db-index out of range");
  }
  SeededRandomness rng(flags.seed);
  const auto store = MessageStore::random(params, rng); // replicated: same on every database
  DatabaseServer server(store, params);
  server.start(port);
  std::cout << "database " << db_index << " listening on 127.0.0.1:" << server.port()
            << std::endl;

  std::signal(SIGINT, [](int) { stop_requested = 1; });
  std::signal(SIGTERM, [](int) { stop_requested = 1; });
  while (!stop_requested) {
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
  }
  server.stop();
  return exit_pass;
}

int cmd_fetch(const InstanceFlags& flags, const std::vector<std::string>& servers,
              std::uint32_t message_index, const std::string& out_path)
{
  const SchemeParams params = flags.params();
  if (message_index < 1 || message_index > params.num_messages) {
    throw ParamError("--message-index must be in 1.." + std::to_string(params.num_messages));
  }
  const std::uint32_t theta = message_index - 1;

  std::vector<Endpoint> endpoints;
  for (const auto& s : servers) {
    endpoints.push_back(Endpoint::parse(s));
  }

  SeededRandomness store_rng(flags.seed);
  const auto store = MessageStore::random(params, store_rng); // must match the servers' seed
  const auto cache = encode_cache(store, params);

  SeededRandomness rng(flags.seed ^ 0x9E3779B97F4A7C15ULL);
  auto [message, wire] = fetch(theta, params, cache, endpoints, rng);

  std::cout << "answer_payload_bytes," << wire.answer_payload_bytes << "\n"
            << "query_upload_bytes," << wire.query_upload_bytes << "\n"
            << "framing_overhead_bytes," << wire.framing_overhead_bytes << "\n"
            << "downloaded_symbols," << wire.downloaded_symbols << "\n"
            << "normalized_cost," << wire.normalized_cost.to_string() << "\n"
            << "normalized_cost_decimal," << wire.normalized_cost.to_decimal(12) << "\n";

  if (!out_path.empty()) {
    std::ofstream out(out_path, std::ios::binary);
    if (!out) {
      throw ParamError("cannot open output file '" + out_path + "'");
    }
    out.write(reinterpret_cast<const char*>(message.symbols.data()),
              static_cast<std::streamsize>(message.symbols.size()));
  }
  return exit_pass;
}

} // namespace

int main(int argc, char** argv)
{
  CLI::App app{"cache-aided private information retrieval toolkit"};
  app.require_subcommand(1);

  // bounds
  auto* bounds_cmd = app.add_subcommand("bounds", "tabulate the optimal cost and capacity lines");
  InstanceFlags bounds_flags;
  std::uint32_t resolution = 5;
  std::string bounds_out;
  bounds_flags.add_to(bounds_cmd, /*with_cache=*/false);
  bounds_cmd->add_option("--resolution", resolution, "number of storage grid points (>= 2)");
  bounds_cmd->add_option("--out", bounds_out, "CSV output path (default stdout)");

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "measure retrieval cost against theory");
  InstanceFlags sweep_flags;
  std::string sweep_out;
  sweep_flags.add_to(sweep_cmd);
  sweep_cmd->add_option("--out", sweep_out, "CSV output path (default stdout)");

  // audit
  auto* audit_cmd = app.add_subcommand("audit", "run a verification battery");
  InstanceFlags audit_flags;
  std::string suite;
  std::string audit_out;
  audit_cmd->add_option("suite", suite, "privacy | correctness | lemma2 | eq2 | han")
      ->required()
      ->check(CLI::IsMember({"privacy", "correctness", "lemma2", "eq2", "han"}));
  audit_flags.add_to(audit_cmd);
  audit_cmd->add_option("--out", audit_out, "CSV output path (default stdout)");

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "run one database server until interrupted");
  InstanceFlags serve_flags;
  std::uint16_t port = 0;
  std::uint32_t db_index = 0;
  serve_flags.add_to(serve_cmd);
  serve_cmd->add_option("--port", port, "TCP port (0 picks an ephemeral port)");
  serve_cmd->add_option("--db-index", db_index, "which replica this process plays");

  // fetch
  auto* fetch_cmd = app.add_subcommand("fetch", "retrieve one message from running servers");
  InstanceFlags fetch_flags;
  std::vector<std::string> servers;
  std::uint32_t message_index = 1;
  std::string fetch_out;
  fetch_flags.add_to(fetch_cmd);
  fetch_cmd->add_option("--servers", servers, "host:port per database, in order")
      ->required()
      ->delimiter(',');
  fetch_cmd->add_option("--message-index", message_index, "desired message, 1-based");
  fetch_cmd->add_option("--out", fetch_out, "write the retrieved message bytes here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return exit_usage;
  }

  try {
    if (*bounds_cmd) {
      return cmd_bounds(bounds_flags.databases, bounds_flags.messages, resolution, bounds_out);
    }
    if (*sweep_cmd) {
      return cmd_sweep(sweep_flags, sweep_out);
    }
    if (*audit_cmd) {
      const SchemeParams params = audit_flags.params();
      std::ostringstream csv;
      int code = exit_fail;
      if (suite == "privacy") {
        code = audit_privacy(params, csv);
      } else if (suite == "correctness") {
        code = audit_correctness(params, audit_flags.seed, csv);
      } else if (suite == "lemma2") {
        code = audit_lemma2(params, csv);
      } else if (suite == "eq2") {
        code = audit_eq2(params, csv);
      } else {
        code = audit_han(audit_flags.seed, csv);
      }
      emit(audit_out, csv.str());
      return code;
    }
    if (*serve_cmd) {
      return cmd_serve(serve_flags, port, db_index);
    }
    if (*fetch_cmd) {
      return cmd_fetch(fetch_flags, servers, message_index, fetch_out);
    }
  } catch (const ParamError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return exit_usage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_fail;
  }
  return exit_usage;
}
