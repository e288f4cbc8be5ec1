#pragma once

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "pktdelay/analytics.hpp"
#include "pktdelay/concentration.hpp"
#include "pktdelay/engine.hpp"
#include "pktdelay/error.hpp"
#include "pktdelay/montecarlo.hpp"
#include "pktdelay/negbinmax.hpp"
#include "pktdelay/numeric.hpp"
#include "pktdelay/topology.hpp"
#include "pktdelay/transform.hpp"

namespace pktdelay::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;

using nlohmann::ordered_json;

// Numbers leave the program rounded to 12 significant digits.
inline ordered_json num(double x) {
  if (!std::isfinite(x)) return nullptr;
  return round_g12(x);
}

inline std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

struct Options {
  std::string topology;
  std::string strategy = "coding-queue";
  std::vector<std::int64_t> n;
  std::uint64_t trials = 1000;
  std::uint64_t seed = 1;
  std::string format;
  std::optional<std::size_t> workers;
  double delta = 0.3;
  double delta_prime = 0.25;
  std::string batch_out;
  std::string emit;
  bool assume_single = false;
  std::int64_t horizon = 50;
  // negbinmax
  std::int64_t i = 0;
  std::int64_t j = 0;
  double q1 = 0.0;
  double q2 = 0.0;
  bool exact = false;
};

/// Hash of the subcommand, the canonical topology and every parameter that
/// affects the output.
inline std::string config_hash(const std::string& command, const std::optional<Topology>& t, const Options& o) {
  ordered_json j;
  j["command"] = command;
  if (t) j["topology"] = to_json(*t);
  j["strategy"] = o.strategy;
  j["n"] = o.n;
  j["trials"] = o.trials;
  j["seed"] = o.seed;
  j["delta"] = o.delta;
  j["delta_prime"] = o.delta_prime;
  j["horizon"] = o.horizon;
  j["i"] = o.i;
  j["j"] = o.j;
  j["q1"] = o.q1;
  j["q2"] = o.q2;
  j["exact"] = o.exact;
  j["assume_single"] = o.assume_single;
  return hex64(fnv1a64(j.dump()));
}

inline ordered_json estimate_json(const DelayEstimate& e) {
  ordered_json j;
  j["strategy"] = to_string(e.strategy);
  j["n"] = e.n;
  j["trials"] = e.trials;
  j["mean"] = num(e.mean);
  j["variance"] = num(e.variance);
  j["std_error"] = num(e.std_error);
  j["ci"] = {num(e.ci_low), num(e.ci_high)};
  j["ci_half_width"] = num(e.ci_half_width);
  j["capacity"] = num(e.capacity);
  j["capacity_term"] = num(e.capacity_term);
  j["delay_estimate"] = num(e.delay_estimate);
  return j;
}

inline void require_strictly_increasing(const std::vector<std::int64_t>& ns) {
  if (ns.empty()) throw ConfigError("--n requires at least one value");
  for (std::size_t k = 0; k < ns.size(); ++k) {
    if (ns[k] < 0) throw ConfigError("--n values must be non-negative");
    if (k > 0 && ns[k] <= ns[k - 1]) throw ConfigError("--n list must be strictly increasing");
  }
}

inline std::size_t workers_of(const Options& o) { return o.workers ? *o.workers : default_workers(); }

inline int cmd_simulate(const Options& o, std::ostream& out) {
  const Topology t = load_topology(o.topology);
  if (o.n.size() != 1) throw ConfigError("simulate takes a single --n");
  if (o.trials < 1) throw ConfigError("trials must be at least 1");
  const std::int64_t n = o.n[0];
  std::vector<Strategy> strategies;
  if (o.strategy == "both") {
    strategies = {Strategy::CodingQueue, Strategy::Routing};
  } else {
    strategies = {parse_strategy(o.strategy)};
  }
  const double capacity = min_cut_capacity(t).capacity;
  std::vector<DelayEstimate> estimates;
  std::vector<std::vector<std::uint64_t>> samples;
  for (Strategy s : strategies) {
    samples.push_back(run_trials(t, n, s, o.trials, o.seed, workers_of(o)));
    estimates.push_back(summarize(samples.back(), s, n, o.seed, capacity));
  }
  if (!o.batch_out.empty()) {
    std::ofstream f(o.batch_out);
    if (!f) throw ConfigError("cannot write '" + o.batch_out + "'");
    f << "trial,strategy,n,completion_slot\n";
    for (std::size_t k = 0; k < strategies.size(); ++k)
      for (std::size_t i = 0; i < samples[k].size(); ++i)
        f << i << ',' << to_string(strategies[k]) << ',' << n << ',' << samples[k][i] << '\n';
  }
  const std::string hash = config_hash("simulate", t, o);
  if (o.format == "csv") {
    out << "# pktdelay simulate seed=" << o.seed << " config_hash=" << hash << '\n';
    out << "strategy,n,trials,mean,variance,std_error,ci_low,ci_high,capacity,capacity_term,delay_estimate\n";
    for (const auto& e : estimates) {
      out << to_string(e.strategy) << ',' << e.n << ',' << e.trials << ',' << format_g12(e.mean) << ','
          << format_g12(e.variance) << ',' << format_g12(e.std_error) << ',' << format_g12(e.ci_low) << ','
          << format_g12(e.ci_high) << ',' << format_g12(e.capacity) << ',' << format_g12(e.capacity_term) << ','
          << format_g12(e.delay_estimate) << '\n';
    }
    return kExitOk;
  }
  ordered_json j;
  j["command"] = "simulate";
  j["seed"] = o.seed;
  j["config_hash"] = hash;
  if (estimates.size() == 1) {
    const ordered_json fields = estimate_json(estimates[0]);
    for (auto it = fields.begin(); it != fields.end(); ++it) j[it.key()] = *it;
  } else {
    j["estimates"] = ordered_json::array();
    for (const auto& e : estimates) j["estimates"].push_back(estimate_json(e));
  }
  out << j.dump(2) << '\n';
  return kExitOk;
}

inline ordered_json analyze_topology(const Topology& t, std::int64_t horizon) {
  ordered_json j;
  const CutReport cut = min_cut_capacity(t);
  j["kind"] = to_string(t.kind());
  j["capacity"] = num(cut.capacity);
  j["capacity_exact"] = to_string(cut.exact);
  j["D_bar"] = nullptr;
  j["steady_state_limit"] = nullptr;
  j["unique_worst"] = nullptr;
  j["recursion_values"] = ordered_json::array();
  j["roots"] = ordered_json::array();
  auto path_p = [&](std::size_t i) {
    std::vector<double> p;
    for (std::size_t l : t.paths()[i]) p.push_back(t.links()[l].p);
    return p;
  };
  if (t.kind() == TopologyKind::Line) {
    const auto b = line_delay_bounds(path_p(0));
    j["unique_worst"] = b.unique_worst;
    if (b.d_bar) j["D_bar"] = num(*b.d_bar);
    if (b.steady_state_limit) j["steady_state_limit"] = num(*b.steady_state_limit);
  }
  if (t.kind() == TopologyKind::ParallelPaths) {
    j["paths"] = ordered_json::array();
    for (std::size_t i = 0; i < t.paths().size(); ++i) {
      const auto b = line_delay_bounds(path_p(i));
      ordered_json pj;
      pj["worst_p"] = num(cut.paths[i].worst_p);
      pj["worst_multiplicity"] = cut.paths[i].multiplicity;
      pj["unique_worst"] = b.unique_worst;
      pj["path_D_bar"] = b.d_bar ? num(*b.d_bar) : ordered_json(nullptr);
      j["paths"].push_back(pj);
    }
  }
  // The recursion applies when every path is a single link.
  bool single_links = t.is_path_kind();
  for (const auto& path : t.paths()) single_links = single_links && path.size() == 1;
  if (single_links) {
    std::vector<double> q;
    std::vector<GroupShare> groups;
    std::vector<bool> done(t.groups().size(), false);
    for (const auto& path : t.paths()) {
      const std::size_t l = path[0];
      if (auto g = t.group_of(l)) {
        if (done[*g]) continue;
        done[*g] = true;
        groups.push_back({t.groups()[*g].base_p, t.groups()[*g].weights});
      } else {
        q.push_back(t.links()[l].p);
      }
    }
    const auto dist = success_count_distribution(q, groups);
    const auto rec = coding_recursion(dist, horizon);
    for (std::size_t n = 1; n < rec.values.size(); ++n) j["recursion_values"].push_back(num(rec.values[n]));
    for (const auto& r : rec.roots) j["roots"].push_back({num(r.real()), num(r.imag())});
    j["success_distribution"] = ordered_json::array();
    for (double a : dist.A) j["success_distribution"].push_back(num(a));
    j["recursion_D"] = num(rec.D);
  }
  return j;
}

inline int cmd_analyze(const Options& o, std::ostream& out) {
  const Topology t = load_topology(o.topology);
  if (o.horizon < 0) throw ConfigError("horizon must be non-negative");
  ordered_json j;
  j["command"] = "analyze";
  j["config_hash"] = config_hash("analyze", t, o);
  const ordered_json fields = analyze_topology(t, o.horizon);
  for (auto it = fields.begin(); it != fields.end(); ++it) j[it.key()] = *it;
  out << j.dump(2) << '\n';
  return kExitOk;
}

inline int cmd_negbinmax(const Options& o, std::ostream& out) {
  if (o.i < 0 || o.j < 0) throw ConfigError("i and j must be non-negative");
  if (!(o.q1 >= 0 && o.q1 < 1 && o.q2 >= 0 && o.q2 < 1))
    throw ConfigError("erasure probability must lie in [0, 1)");
  ordered_json j;
  j["command"] = "negbinmax";
  j["config_hash"] = config_hash("negbinmax", std::nullopt, o);
  j["i"] = o.i;
  j["j"] = o.j;
  j["q1"] = num(o.q1);
  j["q2"] = num(o.q2);
  if (o.exact) {
    const Rational q1 = decimal_rational(o.q1), q2 = decimal_rational(o.q2);
    const Rational closed = negbin_max_closed_exact(o.i, o.j, q1, q2);
    const Rational rec = negbin_max_recursion_exact(o.i, o.j, q1, q2);
    j["closed_form"] = num(to_double(closed));
    j["recursion"] = num(to_double(rec));
    j["difference"] = num(to_double(Rational(closed - rec)));
    j["closed_form_exact"] = to_string(closed);
    j["recursion_exact"] = to_string(rec);
    j["exact_equal"] = closed == rec;
  } else {
    const double closed = NegBinMaxClosedForm(o.q1, o.q2).value(o.i, o.j);
    const double rec = negbin_max_recursion(o.i, o.j, o.q1, o.q2);
    j["closed_form"] = num(closed);
    j["recursion"] = num(rec);
    j["difference"] = num(closed - rec);
    j["relative_difference"] = num(rec == 0 ? std::fabs(closed) : std::fabs(closed - rec) / std::fabs(rec));
  }
  out << j.dump(2) << '\n';
  return kExitOk;
}

inline int cmd_transform(const Options& o, std::ostream& out) {
  const Topology t = load_topology(o.topology);
  DecomposeOptions dopt;
  if (o.assume_single) dopt.assume_single_bottleneck = true;
  const auto d = decompose_max_flow(t, dopt);
  const auto g = build_ghat(t, d);
  if (!o.emit.empty()) {
    std::ofstream f(o.emit);
    if (!f) throw ConfigError("cannot write '" + o.emit + "'");
    f << to_json(g.topology).dump(2) << '\n';
  }
  ordered_json j;
  j["command"] = "transform";
  j["config_hash"] = config_hash("transform", t, o);
  j["capacity"] = num(d.capacity);
  j["capacity_exact"] = to_string(d.capacity_exact);
  j["bottleneck"] = to_string(d.bottleneck);
  j["refined"] = d.refined;
  j["min_cut_links"] = ordered_json::array();
  for (std::size_t l : d.min_cut_links) j["min_cut_links"].push_back(t.links()[l].id);
  j["flows"] = ordered_json::array();
  for (const auto& f : d.flows) {
    ordered_json fj;
    fj["rate"] = num(f.rate);
    fj["rate_exact"] = to_string(f.rate_exact);
    fj["nodes"] = ordered_json::array();
    for (std::size_t v : f.nodes) fj["nodes"].push_back(t.nodes()[v]);
    fj["links"] = ordered_json::array();
    for (std::size_t l : f.links) fj["links"].push_back(t.links()[l].id);
    j["flows"].push_back(fj);
  }
  const CutReport ghat_cut = min_cut_capacity(g.topology);
  j["ghat_capacity_exact"] = to_string(ghat_cut.exact);
  j["ghat_links"] = g.topology.link_count();
  j["ghat_groups"] = g.topology.groups().size();
  if (!o.emit.empty()) j["emitted"] = o.emit;
  out << j.dump(2) << '\n';
  return kExitOk;
}

inline int cmd_concentration(const Options& o, std::ostream& out) {
  const Topology t = load_topology(o.topology);
  if (o.n.size() != 1) throw ConfigError("concentration takes a single --n");
  if (o.trials < 1) throw ConfigError("trials must be at least 1");
  ConcentrationParams p;
  p.n = o.n[0];
  p.C = min_cut_capacity(t).capacity;
  p.L = t.link_count();
  p.delta = o.delta;
  p.delta_prime = o.delta_prime;
  const auto b = concentration_bounds(p);
  const Strategy s = t.is_path_kind() ? Strategy::CodingQueue : Strategy::CodingMaxflow;
  const auto samples = run_trials(t, p.n, s, o.trials, o.seed, workers_of(o));
  const auto e = empirical_exceedance(samples, p);
  const auto w = window_fraction(samples, p);
  ordered_json j;
  j["command"] = "concentration";
  j["seed"] = o.seed;
  j["config_hash"] = config_hash("concentration", t, o);
  j["n"] = p.n;
  j["C"] = num(p.C);
  j["delta"] = num(p.delta);
  j["delta_prime"] = num(p.delta_prime);
  j["epsilon_n"] = num(b.epsilon_n);
  j["t_l"] = num(b.t_l);
  j["t_u"] = num(b.t_u);
  j["bound"] = num(b.bound);
  j["trials"] = o.trials;
  j["sample_mean"] = num(e.sample_mean);
  j["empirical_fraction"] = num(e.fraction);
  j["std_error"] = num(e.std_error);
  j["pass"] = e.pass;
  j["window_fraction"] = num(w.fraction);
  j["window_lower_bound"] = num(w.lower_bound);
  j["window_pass"] = w.pass;
  out << j.dump(2) << '\n';
  return kExitOk;
}

struct CompareRow {
  std::int64_t n = 0;
  double capacity_term = 0.0;
  DelayEstimate coding;
  DelayEstimate routing;
};

inline std::vector<CompareRow> compare_rows(const Topology& t, const Options& o) {
  require_strictly_increasing(o.n);
  if (o.trials < 1) throw ConfigError("trials must be at least 1");
  const double capacity = min_cut_capacity(t).capacity;
  std::vector<CompareRow> rows;
  for (std::int64_t n : o.n) {
    const auto runs = run_paired(t, n, o.trials, o.seed, workers_of(o));
    CompareRow r;
    r.n = n;
    r.coding = summarize(runs.coding, Strategy::CodingQueue, n, o.seed, capacity);
    r.routing = summarize(runs.routing, Strategy::Routing, n, o.seed, capacity);
    r.capacity_term = r.coding.capacity_term;
    rows.push_back(r);
  }
  return rows;
}

inline int cmd_compare(const std::string& command, const Options& o, std::ostream& out) {
  const Topology t = load_topology(o.topology);
  if (t.kind() == TopologyKind::General) throw ConfigError(command + " requires a line or parallel-paths topology");
  const auto rows = compare_rows(t, o);
  const std::string hash = config_hash(command, t, o);
  std::optional<double> slope_c, slope_r;
  if (command == "sweep") {
    std::vector<double> xs, dc, dr;
    for (const auto& r : rows) {
      xs.push_back(static_cast<double>(r.n));
      dc.push_back(r.coding.delay_estimate);
      dr.push_back(r.routing.delay_estimate);
    }
    slope_c = loglog_slope(xs, dc);
    slope_r = loglog_slope(xs, dr);
  }
  if (o.format == "json") {
    ordered_json j;
    j["command"] = command;
    j["seed"] = o.seed;
    j["config_hash"] = hash;
    j["trials"] = o.trials;
    j["rows"] = ordered_json::array();
    for (const auto& r : rows) {
      j["rows"].push_back({{"n", r.n},
                           {"capacity_term", num(r.capacity_term)},
                           {"coding_mean", num(r.coding.mean)},
                           {"coding_ci", num(r.coding.ci_half_width)},
                           {"routing_mean", num(r.routing.mean)},
                           {"routing_ci", num(r.routing.ci_half_width)},
                           {"D_c", num(r.coding.delay_estimate)},
                           {"D_r", num(r.routing.delay_estimate)}});
    }
    if (slope_c) j["fit"] = {{"D_c_slope", num(*slope_c)}, {"D_r_slope", num(*slope_r)}};
    out << j.dump(2) << '\n';
    return kExitOk;
  }
  out << "# pktdelay " << command << " seed=" << o.seed << " trials=" << o.trials << " config_hash=" << hash << '\n';
  out << "n,capacity_term,coding_mean,coding_ci,routing_mean,routing_ci,D_c,D_r\n";
  for (const auto& r : rows) {
    out << r.n << ',' << format_g12(r.capacity_term) << ',' << format_g12(r.coding.mean) << ','
        << format_g12(r.coding.ci_half_width) << ',' << format_g12(r.routing.mean) << ','
        << format_g12(r.routing.ci_half_width) << ',' << format_g12(r.coding.delay_estimate) << ','
        << format_g12(r.routing.delay_estimate) << '\n';
  }
  if (slope_c) {
    out << "# fit D_c loglog_slope=" << format_g12(*slope_c) << '\n';
    out << "# fit D_r loglog_slope=" << format_g12(*slope_r) << '\n';
  }
  return kExitOk;
}

/// One-line error: "pktdelay: error: <kind>: <message>".
inline void report(std::ostream& err, const char* kind, const std::string& message) {
  std::string flat = message;
  for (char& c : flat)
    if (c == '\n' || c == '\r') c = ' ';
  err << "pktdelay: error: " << kind << ": " << flat << '\n';
}

inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Block delay of packet-erasure networks: simulation and exact analysis", "pktdelay"};
  app.require_subcommand(1);
  Options o;

  auto add_topology = [&](CLI::App* c) { c->add_option("--topology", o.topology, "topology JSON file")->required(); };
  auto add_mc = [&](CLI::App* c) {
    c->add_option("--trials", o.trials, "Monte Carlo trials");
    c->add_option("--seed", o.seed, "master seed");
    c->add_option("--workers", o.workers, "worker threads (default: PKTDELAY_WORKERS or 1)");
  };
  auto add_n = [&](CLI::App* c, bool list) {
    auto* opt = c->add_option("--n", o.n, list ? "comma-separated packet counts" : "packet count")->required();
    if (list) opt->delimiter(',');
  };
  auto add_negbin = [&](CLI::App* c) {
    c->add_option("--i", o.i, "successes required on link 1")->required();
    c->add_option("--j", o.j, "successes required on link 2")->required();
    c->add_option("--q1", o.q1, "erasure probability of link 1")->required();
    c->add_option("--q2", o.q2, "erasure probability of link 2")->required();
    c->add_flag("--exact", o.exact, "exact rational arithmetic");
  };

  auto* simulate = app.add_subcommand("simulate", "Monte Carlo estimate of the completion time");
  add_topology(simulate);
  add_n(simulate, false);
  add_mc(simulate);
  simulate->add_option("--strategy", o.strategy, "coding-queue | coding-maxflow | routing | both");
  simulate->add_option("--format", o.format, "json | csv")->check(CLI::IsMember({"json", "csv"}));
  simulate->add_option("--batch-out", o.batch_out, "per-trial CSV output file");

  auto* analyze = app.add_subcommand("analyze", "Capacity, delay bound and coding recursion");
  analyze->add_option("--topology", o.topology, "topology JSON file");
  analyze->add_option("--horizon", o.horizon, "recursion horizon N");
  analyze->fallthrough();
  auto* analyze_nb = analyze->add_subcommand("negbinmax", "Expected maximum of two negative binomials");
  add_negbin(analyze_nb);

  auto* negbin = app.add_subcommand("negbinmax", "Expected maximum of two negative binomials");
  add_negbin(negbin);

  auto* transform = app.add_subcommand("transform", "Max-flow decomposition and parallel-path network");
  add_topology(transform);
  transform->add_option("--emit", o.emit, "write the constructed network here");
  transform->add_flag("--assume-single-bottleneck", o.assume_single, "assert a unique min cut on large graphs");

  auto* conc = app.add_subcommand("concentration", "Deviation bound and empirical exceedance");
  add_topology(conc);
  add_n(conc, false);
  add_mc(conc);
  conc->add_option("--delta", o.delta, "exponent of the deviation radius");
  conc->add_option("--delta-prime", o.delta_prime, "exponent of the window");

  auto* compare = app.add_subcommand("compare", "Coding vs routing on paired traces");
  auto* sweep = app.add_subcommand("sweep", "Coding vs routing over n with growth fits");
  for (auto* c : {compare, sweep}) {
    add_topology(c);
    add_n(c, true);
    add_mc(c);
    c->add_option("--format", o.format, "csv | json")->check(CLI::IsMember({"json", "csv"}));
  }

  std::vector<const char*> argv{"pktdelay"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    report(err, "config", e.what());
    return kExitConfig;
  }

  try {
    if (o.workers && *o.workers < 1) throw ConfigError("--workers must be at least 1");
    if (simulate->parsed()) return cmd_simulate(o, out);
    if (analyze_nb->parsed()) return cmd_negbinmax(o, out);
    if (analyze->parsed()) {
      if (o.topology.empty()) throw ConfigError("analyze requires --topology");
      return cmd_analyze(o, out);
    }
    if (negbin->parsed()) return cmd_negbinmax(o, out);
    if (transform->parsed()) return cmd_transform(o, out);
    if (conc->parsed()) return cmd_concentration(o, out);
    if (compare->parsed()) return cmd_compare("compare", o, out);
    if (sweep->parsed()) return cmd_compare("sweep", o, out);
  } catch (const ConfigError& e) {
    report(err, "config", e.what());
    return kExitConfig;
  } catch (const RuntimeError& e) {
    report(err, "runtime", e.what());
    return kExitRuntime;
  } catch (const std::exception& e) {
    report(err, "runtime", e.what());
    return kExitRuntime;
  }
  report(err, "config", "no subcommand");
  return kExitConfig;
}

}  // namespace pktdelay::cli
