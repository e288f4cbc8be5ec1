#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "pktdelay/engine.hpp"
#include "pktdelay/error.hpp"
#include "pktdelay/montecarlo.hpp"
#include "pktdelay/topology.hpp"
#include "pktdelay/trace.hpp"

namespace pktdelay {

/// Deviation radius of the received rank after t slots over L links:
/// sqrt((t L / 2) ln(2t)).
inline double azuma_epsilon(double t, std::size_t L) {
  if (t < 1) throw ConfigError("azuma_epsilon needs t >= 1");
  return std::sqrt(t * static_cast<double>(L) / 2.0 * std::log(2.0 * t));
}

struct ConcentrationParams {
  std::int64_t n = 0;
  double C = 0.0;
  std::size_t L = 1;
  double delta = 0.3;
  double delta_prime = 0.25;

  void validate() const {
    if (n < 1) throw ConfigError("n must be positive");
    if (!(C > 0)) throw ConfigError("capacity must be positive");
    if (L < 1) throw ConfigError("link count must be positive");
    if (!(delta_prime > 0 && delta_prime < delta && delta < 0.5))
      throw ConfigError("need 0 < delta' < delta < 1/2");
  }
};

struct ConcentrationBounds {
  double epsilon_n = 0.0;
  double t_l = 0.0;
  double t_u = 0.0;
  double bound = 0.0;
};

inline ConcentrationBounds concentration_bounds(const ConcentrationParams& p) {
  p.validate();
  const double n = static_cast<double>(p.n);
  const double spread = std::pow(n, 0.5 + p.delta_prime);
  if (spread >= n) throw ConfigError("window degenerate");
  ConcentrationBounds b;
  b.epsilon_n = std::pow(n, 0.5 + p.delta) / p.C;
  b.t_u = (n + spread) / p.C;
  b.t_l = (n - spread) / p.C;
  const double n2d = std::pow(n, 2 * p.delta);
  b.bound = 2 * p.C / n + 2 * p.C * n2d / (n * n - n * n2d);
  return b;
}

struct Exceedance {
  double fraction = 0.0;
  double bound = 0.0;
  double threshold = 0.0;  // epsilon_n
  double sample_mean = 0.0;
  /// Binomial standard error at the bound: sqrt(bound (1 - bound) / N).
  double std_error = 0.0;
  bool pass = false;
};

/// Fraction of samples farther than epsilon_n from the sample mean, checked
/// against the bound with three binomial standard errors of slack.
template <typename T>
Exceedance empirical_exceedance(const std::vector<T>& samples, const ConcentrationParams& p) {
  if (samples.empty()) throw ConfigError("no samples");
  const auto b = concentration_bounds(p);
  const auto stats = sample_stats(samples);
  Exceedance e;
  e.bound = b.bound;
  e.threshold = b.epsilon_n;
  e.sample_mean = stats.mean;
  std::size_t over = 0;
  for (const T& x : samples) over += std::fabs(static_cast<double>(x) - stats.mean) > b.epsilon_n ? 1 : 0;
  const double N = static_cast<double>(samples.size());
  e.fraction = static_cast<double>(over) / N;
  e.std_error = std::sqrt(b.bound * (1 - b.bound) / N);
  e.pass = e.fraction <= b.bound + 3 * e.std_error;
  return e;
}

struct WindowCheck {
  double fraction = 0.0;
  double lower_bound = 0.0;  // 1 - 1/t_l - 1/t_u
  double std_error = 0.0;
  bool pass = false;
};

template <typename T>
WindowCheck window_fraction(const std::vector<T>& samples, const ConcentrationParams& p) {
  if (samples.empty()) throw ConfigError("no samples");
  const auto b = concentration_bounds(p);
  std::size_t inside = 0;
  for (const T& x : samples) {
    const double v = static_cast<double>(x);
    inside += (v >= b.t_l && v <= b.t_u) ? 1 : 0;
  }
  WindowCheck w;
  const double N = static_cast<double>(samples.size());
  w.fraction = static_cast<double>(inside) / N;
  w.lower_bound = 1 - 1 / b.t_l - 1 / b.t_u;
  w.std_error = std::sqrt(std::max(0.0, w.fraction * (1 - w.fraction)) / N);
  w.pass = w.fraction >= w.lower_bound - 3 * w.std_error;
  return w;
}

// ---------------------------------------------------------------------------
// Window premise: E R_{t_u} - eps_{t_u} >= n and E R_{t_l} + eps_{t_l} <= n,
// with R_t the received rank of a source that never runs dry.

/// Mean received rank at each requested slot over `trials` traces.
inline std::vector<double> mean_received_rank(const Topology& t, std::span<const std::uint64_t> slots,
                                              std::uint64_t trials, std::uint64_t master_seed,
                                              std::size_t workers = default_workers()) {
  std::uint64_t horizon = 0;
  for (auto s : slots) horizon = std::max(horizon, s);
  std::vector<std::vector<std::int64_t>> per_trial(trials);
  for_each_trial(trials, workers, [&](std::uint64_t i) {
    ErasureTrace trace = generate_trace(t, horizon, master_seed, i);
    if (t.is_path_kind()) {
      const auto supply = static_cast<std::int64_t>(horizon * t.link_count() + 1);
      PathRankState state(t, supply);
      std::vector<std::int64_t> profile;
      for (std::uint64_t s = 1; s <= horizon; ++s) {
        state.step(trace.row(s));
        profile.push_back(state.sink_rank());
      }
      for (auto s : slots) per_trial[i].push_back(s == 0 ? 0 : profile[s - 1]);
    } else {
      const auto profile = received_rank_profile(t, trace, horizon);
      for (auto s : slots) per_trial[i].push_back(s == 0 ? 0 : profile[s - 1]);
    }
  });
  std::vector<double> out(slots.size(), 0.0);
  for (std::size_t k = 0; k < slots.size(); ++k) {
    CompensatedSum sum;
    for (const auto& row : per_trial) sum.add(static_cast<double>(row[k]));
    out[k] = sum.value() / static_cast<double>(trials);
  }
  return out;
}

struct PremiseCheck {
  std::int64_t n = 0;
  std::uint64_t t_u = 0;
  std::uint64_t t_l = 0;
  double mean_R_u = 0.0;
  double mean_R_l = 0.0;
  double eps_u = 0.0;
  double eps_l = 0.0;
  bool upper_holds = false;
  bool lower_holds = false;
  bool holds() const { return upper_holds && lower_holds; }
};

inline PremiseCheck window_premise(const Topology& t, const ConcentrationParams& p, std::uint64_t trials,
                                   std::uint64_t master_seed) {
  const auto b = concentration_bounds(p);
  PremiseCheck c;
  c.n = p.n;
  c.t_u = static_cast<std::uint64_t>(std::ceil(b.t_u));
  c.t_l = static_cast<std::uint64_t>(std::max(1.0, std::floor(b.t_l)));
  const std::uint64_t slots[] = {c.t_u, c.t_l};
  const auto means = mean_received_rank(t, slots, trials, master_seed);
  c.mean_R_u = means[0];
  c.mean_R_l = means[1];
  c.eps_u = azuma_epsilon(static_cast<double>(c.t_u), t.link_count());
  c.eps_l = azuma_epsilon(static_cast<double>(c.t_l), t.link_count());
  c.upper_holds = c.mean_R_u - c.eps_u >= static_cast<double>(p.n);
  c.lower_holds = c.mean_R_l + c.eps_l <= static_cast<double>(p.n);
  return c;
}

struct PremiseScan {
  std::vector<PremiseCheck> checks;
  /// Smallest tested n from which the premise holds at every larger tested n.
  std::optional<std::int64_t> smallest_n;
};

inline PremiseScan scan_window_premise(const Topology& t, ConcentrationParams p, std::span<const std::int64_t> ns,
                                       std::uint64_t trials, std::uint64_t master_seed) {
  PremiseScan scan;
  for (std::int64_t n : ns) {
    p.n = n;
    scan.checks.push_back(window_premise(t, p, trials, master_seed));
  }
  for (std::size_t k = scan.checks.size(); k-- > 0;) {
    if (!scan.checks[k].holds()) break;
    scan.smallest_n = scan.checks[k].n;
  }
  return scan;
}

// ---------------------------------------------------------------------------
// Bounded differences of R_t

/// Largest |R_t - R'_t| over t <= horizon when one (slot, link) outcome of
/// the trace is inverted.
inline std::int64_t flip_sensitivity(const Topology& t, ErasureTrace trace, std::uint64_t horizon,
                                     std::uint64_t slot, std::size_t link) {
  const auto before = received_rank_profile(t, trace, horizon);
  trace.flip(slot, link);
  const auto after = received_rank_profile(t, trace, horizon);
  std::int64_t worst = 0;
  for (std::size_t k = 0; k < before.size(); ++k) worst = std::max<std::int64_t>(worst, std::llabs(before[k] - after[k]));
  return worst;
}

}  // namespace pktdelay
