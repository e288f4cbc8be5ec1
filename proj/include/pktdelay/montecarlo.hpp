#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

#include "pktdelay/analytics.hpp"
#include "pktdelay/engine.hpp"
#include "pktdelay/error.hpp"
#include "pktdelay/topology.hpp"
#include "pktdelay/trace.hpp"

namespace pktdelay {

/// Worker count from PKTDELAY_WORKERS, default 1.
inline std::size_t default_workers() {
  if (const char* env = std::getenv("PKTDELAY_WORKERS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) return static_cast<std::size_t>(v);
  }
  return 1;
}

/// Runs body(trial) for trial in [0, trials) on `workers` threads. Each worker
/// takes a strided subset; results are written by index so the caller sees
/// them in trial order.
template <typename Body>
void for_each_trial(std::uint64_t trials, std::size_t workers, Body&& body) {
  workers = std::max<std::size_t>(1, std::min<std::uint64_t>(workers, std::max<std::uint64_t>(trials, 1)));
  if (workers == 1) {
    for (std::uint64_t i = 0; i < trials; ++i) body(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::uint64_t i = w; i < trials; i += workers) body(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// Routing allocation: shares proportional to each path's worst-link capacity.
inline std::vector<std::int64_t> routing_allocation(const Topology& t, std::int64_t n) {
  if (!t.is_path_kind()) throw ConfigError("routing requires a line or parallel-paths topology");
  std::vector<double> worst;
  for (const auto& path : t.paths()) {
    double w = 0.0;
    for (std::size_t l : path) w = std::max(w, t.links()[l].p);
    worst.push_back(w);
  }
  return allocate_routing(n, worst);
}

namespace detail {

inline std::uint64_t initial_horizon(std::int64_t n, double capacity) {
  return static_cast<std::uint64_t>(2.0 * static_cast<double>(n) / capacity) + 32;
}

inline std::uint64_t run_one(const Topology& t, std::int64_t n, Strategy s, ErasureTrace& trace,
                             const std::vector<std::int64_t>& allocation) {
  switch (s) {
    case Strategy::CodingQueue:
      return simulate_coding_queue(t, n, trace).completion_slot;
    case Strategy::CodingMaxflow:
      return simulate_coding_maxflow(t, n, trace).completion_slot;
    case Strategy::Routing:
      return simulate_routing(t, allocation, trace).completion_slot;
  }
  return 0;
}

}  // namespace detail

/// Completion slots of trials 0..trials-1, in trial order.
inline std::vector<std::uint64_t> run_trials(const Topology& t, std::int64_t n, Strategy strategy,
                                             std::uint64_t trials, std::uint64_t master_seed,
                                             std::size_t workers = default_workers()) {
  detail::require_packets(n);
  if (trials < 1) throw ConfigError("trials must be at least 1");
  if ((strategy == Strategy::CodingQueue || strategy == Strategy::Routing) && !t.is_path_kind())
    throw ConfigError(std::string(to_string(strategy)) + " requires a line or parallel-paths topology");
  const double capacity = min_cut_capacity(t).capacity;
  const auto allocation = strategy == Strategy::Routing ? routing_allocation(t, n) : std::vector<std::int64_t>{};
  const std::uint64_t horizon = detail::initial_horizon(n, capacity);
  std::vector<std::uint64_t> out(trials);
  for_each_trial(trials, workers, [&](std::uint64_t i) {
    ErasureTrace trace = generate_trace(t, horizon, master_seed, i);
    out[i] = detail::run_one(t, n, strategy, trace, allocation);
  });
  return out;
}

struct PairedRun {
  std::vector<std::uint64_t> coding;
  std::vector<std::uint64_t> routing;
};

/// Coding (queue engine) and routing on the same trace for every trial.
inline PairedRun run_paired(const Topology& t, std::int64_t n, std::uint64_t trials, std::uint64_t master_seed,
                            std::size_t workers = default_workers()) {
  detail::require_packets(n);
  if (trials < 1) throw ConfigError("trials must be at least 1");
  const double capacity = min_cut_capacity(t).capacity;
  const auto allocation = routing_allocation(t, n);
  const std::uint64_t horizon = detail::initial_horizon(n, capacity);
  PairedRun out{std::vector<std::uint64_t>(trials), std::vector<std::uint64_t>(trials)};
  for_each_trial(trials, workers, [&](std::uint64_t i) {
    ErasureTrace trace = generate_trace(t, horizon, master_seed, i);
    out.coding[i] = simulate_coding_queue(t, n, trace).completion_slot;
    out.routing[i] = simulate_routing(t, allocation, trace).completion_slot;
  });
  return out;
}

struct SampleStats {
  double mean = 0.0;
  double variance = 0.0;  // unbiased
  double std_error = 0.0;
  std::uint64_t count = 0;
};

template <typename T>
SampleStats sample_stats(const std::vector<T>& xs) {
  SampleStats s;
  s.count = xs.size();
  if (xs.empty()) return s;
  CompensatedSum sum;
  for (const T& x : xs) sum.add(static_cast<double>(x));
  s.mean = sum.value() / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    CompensatedSum sq;
    for (const T& x : xs) {
      const double d = static_cast<double>(x) - s.mean;
      sq.add(d * d);
    }
    s.variance = sq.value() / static_cast<double>(xs.size() - 1);
  }
  s.std_error = std::sqrt(s.variance / static_cast<double>(xs.size()));
  return s;
}

inline constexpr double kNormal95 = 1.959963984540054;

struct DelayEstimate {
  Strategy strategy = Strategy::CodingQueue;
  std::int64_t n = 0;
  std::uint64_t trials = 0;
  std::uint64_t master_seed = 0;
  double mean = 0.0;
  double variance = 0.0;
  double std_error = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double ci_half_width = 0.0;
  double capacity = 0.0;
  double capacity_term = 0.0;
  double delay_estimate = 0.0;
};

inline DelayEstimate summarize(const std::vector<std::uint64_t>& samples, Strategy strategy, std::int64_t n,
                               std::uint64_t master_seed, double capacity) {
  const SampleStats s = sample_stats(samples);
  DelayEstimate e;
  e.strategy = strategy;
  e.n = n;
  e.trials = s.count;
  e.master_seed = master_seed;
  e.mean = s.mean;
  e.variance = s.variance;
  e.std_error = s.std_error;
  e.ci_half_width = kNormal95 * s.std_error;
  e.ci_low = s.mean - e.ci_half_width;
  e.ci_high = s.mean + e.ci_half_width;
  e.capacity = capacity;
  e.capacity_term = static_cast<double>(n) / capacity;
  e.delay_estimate = e.mean - e.capacity_term;
  return e;
}

inline DelayEstimate monte_carlo(const Topology& t, std::int64_t n, Strategy strategy, std::uint64_t trials,
                                 std::uint64_t master_seed, std::size_t workers = default_workers()) {
  const auto samples = run_trials(t, n, strategy, trials, master_seed, workers);
  return summarize(samples, strategy, n, master_seed, min_cut_capacity(t).capacity);
}

}  // namespace pktdelay
