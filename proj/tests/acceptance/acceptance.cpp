// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include "pktdelay/pktdelay.hpp"
#include "table_oracle.hpp"

using namespace pktdelay;

namespace {

struct Verdict {
  bool pass = true;
  std::ostringstream detail;
};

int failures = 0;

void criterion(int k, const std::string& title, const std::function<void(Verdict&)>& body) {
  const auto start = std::chrono::steady_clock::now();
  Verdict v;
  try {
    body(v);
  } catch (const std::exception& e) {
    v.pass = false;
    v.detail << " exception: " << e.what();
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!v.pass) ++failures;
  std::printf("%s criterion %d: %s |%s (%.1fs)\n", v.pass ? "PASS" : "FAIL", k, title.c_str(), v.detail.str().c_str(),
              secs);
  std::fflush(stdout);
}

Rational frac(long a, long b) {
  Rational r(a, b);
  r.canonicalize();
  return r;
}

std::string sample(const std::string& name) { return std::string(PKTDELAY_SAMPLES_DIR) + "/" + name + ".json"; }

// Random line or parallel-path topology.
Topology random_path_topology(std::mt19937_64& rng, bool force_parallel) {
  std::uniform_int_distribution<int> paths(force_parallel ? 2 : 1, 3), hops(1, 4), digits(0, 90);
  std::vector<std::vector<double>> p(static_cast<std::size_t>(paths(rng)));
  for (auto& path : p) {
    path.resize(static_cast<std::size_t>(hops(rng)));
    for (auto& x : path) x = digits(rng) / 100.0;
  }
  return p.size() == 1 ? make_line(p[0]) : make_parallel_paths(p);
}

// Independent sampler for the maximum of two negative binomial waiting times.
double sample_negbin_max(std::mt19937_64& rng, int i, int j, double q1, double q2) {
  std::geometric_distribution<int> g1(1 - q1), g2(1 - q2);
  long x = 0, y = 0;
  for (int k = 0; k < i; ++k) x += g1(rng) + 1;
  for (int k = 0; k < j; ++k) y += g2(rng) + 1;
  return static_cast<double>(std::max(x, y));
}

}  // namespace

int main() {
  criterion(1, "two-hop table rows", [](Verdict& v) {
    int exact_mismatch = 0, float_mismatch = 0, mc_outside = 0, mc_checks = 0;
    double worst_rel = 0, worst_z = 0;
    const int grid[] = {1, 3, 5, 7, 9};
    for (int a : grid) {
      for (int b : grid) {
        const Rational p1 = frac(a, 10), p2 = frac(b, 10);
        for (int n = 1; n <= 4; ++n) {
          const Rational want = oracle::table_row(n, p1, p2);
          const auto e = two_hop_exact(n, a / 10.0, b / 10.0, Arithmetic::Exact);
          if (*e.exact_delay_first_link != want) ++exact_mismatch;
          const auto f = two_hop_exact(n, a / 10.0, b / 10.0, Arithmetic::Float);
          const double rel = std::fabs(f.delay_first_link - to_double(want)) / std::fabs(to_double(want));
          worst_rel = std::max(worst_rel, rel);
          if (rel > 1e-12) ++float_mismatch;
        }
      }
    }
    // Simulation on the anti-diagonal of the grid, rows 1-4, 1e5 trials each.
    for (int k = 0; k < 5; ++k) {
      const double p1 = grid[k] / 10.0, p2 = grid[4 - k] / 10.0;
      const auto t = make_line({p1, p2});
      for (int n = 1; n <= 4; ++n) {
        const auto est = monte_carlo(t, n, Strategy::CodingQueue, 100000, 1000 + 10 * k + n);
        const double want = two_hop_exact(n, p1, p2).expected_time;
        const double z = std::fabs(est.mean - want) / est.std_error;
        worst_z = std::max(worst_z, z);
        ++mc_checks;
        if (z > 3) ++mc_outside;
      }
    }
    v.pass = exact_mismatch == 0 && float_mismatch == 0 && mc_outside == 0;
    v.detail << " exact mismatches " << exact_mismatch << "/100, float worst rel " << worst_rel
             << ", simulation outside 3 SE " << mc_outside << "/" << mc_checks << " (max z " << worst_z << ")";
  });

  criterion(2, "line delay function bounded and non-decreasing", [](Verdict& v) {
    const std::vector<double> p = {0.5, 0.2, 0.3};
    const double d_bar = *line_delay_bounds(p).d_bar;
    const auto times = line_expected_times(p, 200);
    bool monotone = true, bounded = true;
    double prev = -1;
    for (std::size_t n = 1; n <= 200; ++n) {
      const double d = times[n] - 2.0 * static_cast<double>(n);
      monotone = monotone && d >= prev - 1e-9;
      bounded = bounded && d <= d_bar + 1e-9;
      prev = d;
    }
    const double d200 = times[200] - 400.0;
    const bool close = std::fabs(d200 - d_bar) <= 0.1 * d_bar;
    // Simulated D(n) at 1e5 trials: agrees with the exact values and does not
    // decrease beyond noise.
    const auto t = make_line(p);
    const std::int64_t ns[] = {10, 50, 200};
    int outside = 0, drops = 0;
    double prev_sim = -1e9, prev_se = 0;
    std::ostringstream sims;
    for (std::int64_t n : ns) {
      const auto est = monte_carlo(t, n, Strategy::CodingQueue, 100000, 2000 + static_cast<std::uint64_t>(n));
      const double exact = times[static_cast<std::size_t>(n)] - 2.0 * static_cast<double>(n);
      if (std::fabs(est.delay_estimate - exact) > 3 * est.std_error) ++outside;
      if (est.delay_estimate < prev_sim - 3 * std::hypot(est.std_error, prev_se)) ++drops;
      prev_sim = est.delay_estimate;
      prev_se = est.std_error;
      sims << " " << n << ":" << est.delay_estimate;
    }
    v.pass = monotone && bounded && close && outside == 0 && drops == 0;
    v.detail << " D_bar " << d_bar << ", D(200) " << d200 << ", monotone " << monotone << ", bounded " << bounded
             << ", simulated D" << sims.str() << ", outside 3 SE " << outside << ", drops " << drops;
  });

  criterion(3, "negative binomial maximum closed form", [](Verdict& v) {
    double worst_rel = 0;
    int exact_mismatch = 0, exact_checks = 0;
    for (int a = 1; a <= 9; ++a) {
      for (int b = 1; b <= 9; ++b) {
        const double q1 = a / 10.0, q2 = b / 10.0;
        NegBinMaxClosedForm closed(q1, q2);
        const auto table = negbin_max_table<double>(30, 30, q1, q2);
        for (int i = 0; i <= 30; ++i) {
          for (int j = 0; j <= 30; ++j) {
            const double r = table[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            if (r == 0) continue;
            worst_rel = std::max(worst_rel, std::fabs(closed.value(i, j) - r) / r);
          }
        }
        NegBinMaxClosedFormExact exact(frac(a, 10), frac(b, 10));
        const auto rtable = negbin_max_table<Rational>(40, 40, frac(a, 10), frac(b, 10));
        for (int i = 0; i <= 40; ++i) {
          for (int j = 0; i + j <= 40; ++j) {
            ++exact_checks;
            if (exact.value(i, j) != rtable[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)])
              ++exact_mismatch;
          }
        }
      }
    }
    std::mt19937_64 rng(2718);
    std::vector<double> samples(100000);
    for (auto& s : samples) s = sample_negbin_max(rng, 7, 5, 0.6, 0.3);
    const auto st = sample_stats(samples);
    const double rec = negbin_max_recursion(7, 5, 0.6, 0.3);
    const double cf = NegBinMaxClosedForm(0.6, 0.3).value(7, 5);
    const double z = std::max(std::fabs(st.mean - rec), std::fabs(st.mean - cf)) / st.std_error;
    v.pass = worst_rel <= 1e-9 && exact_mismatch == 0 && z <= 3;
    v.detail << " worst rel " << worst_rel << " over 9x9 grid i,j<=30, exact mismatches " << exact_mismatch << "/"
             << exact_checks << ", A_{7,5}=" << cf << " vs simulated " << st.mean << " (z " << z << ")";
  });

  criterion(4, "coding delay flat, routing overhead grows", [](Verdict& v) {
    const auto t = load_topology(sample("twopath"));
    const auto d500 = monte_carlo(t, 500, Strategy::CodingQueue, 20000, 4500);
    const auto d2000 = monte_carlo(t, 2000, Strategy::CodingQueue, 20000, 42000);
    const double diff = std::fabs(d2000.delay_estimate - d500.delay_estimate);
    const double ci = std::hypot(d500.ci_half_width, d2000.ci_half_width);
    const bool flat = diff <= 3 * ci;
    const auto& paths = min_cut_capacity(t).paths;
    const bool unique = paths.size() == 2 && paths[0].unique() && paths[1].unique();
    const std::int64_t ns[] = {5, 20, 80, 320, 1280, 5120};
    const auto fit = routing_overhead_growth(ns, paths[0].worst_p, paths[1].worst_p);
    const bool grows = fit.slope >= 0.35 && fit.slope <= 0.65;
    v.pass = unique && flat && grows;
    v.detail << " D_c(500) " << d500.delay_estimate << ", D_c(2000) " << d2000.delay_estimate << ", |diff| " << diff
             << " vs 3x CI " << 3 * ci << ", U_n slope " << fit.slope << " (U_5120 " << fit.values.back() << ")";
  });

  criterion(5, "queue and max-flow coding engines agree", [](Verdict& v) {
    std::mt19937_64 rng(55);
    std::uniform_int_distribution<int> packets(1, 40);
    int mismatches = 0;
    for (int k = 0; k < 1000; ++k) {
      const auto t = random_path_topology(rng, false);
      const std::int64_t n = packets(rng);
      auto trace = generate_trace(t, 64, 5500, static_cast<std::uint64_t>(k));
      const auto a = simulate_coding_queue(t, n, trace).completion_slot;
      const auto b = simulate_coding_maxflow(t, n, trace).completion_slot;
      if (a != b) ++mismatches;
    }
    v.pass = mismatches == 0;
    v.detail << " mismatches " << mismatches << "/1000";
  });

  criterion(6, "routing never finishes before coding", [](Verdict& v) {
    std::mt19937_64 rng(66);
    std::uniform_int_distribution<int> packets(1, 60);
    std::uint64_t violations = 0, trials = 0;
    for (int k = 0; k < 20; ++k) {
      const auto t = random_path_topology(rng, true);
      const auto runs = run_paired(t, packets(rng), 500, 6600 + static_cast<std::uint64_t>(k));
      for (std::size_t i = 0; i < runs.coding.size(); ++i) {
        ++trials;
        if (runs.routing[i] < runs.coding[i]) ++violations;
      }
    }
    v.pass = violations == 0 && trials == 10000;
    v.detail << " violations " << violations << "/" << trials << " over 20 topologies";
  });

  criterion(7, "parallel-path transformation of the bottleneck example", [](Verdict& v) {
    const auto t = load_topology(sample("bottleneck"));
    const auto d = decompose_max_flow(t);
    const auto g = build_ghat(t, d);
    const Rational cap = min_cut_capacity(t).exact, ghat_cap = min_cut_capacity(g.topology).exact;
    std::size_t l2 = 0;
    for (std::size_t l = 0; l < t.link_count(); ++l)
      if (t.links()[l].id == "2") l2 = l;
    std::vector<Rational> split_p;
    for (auto c : g.splits[l2]) split_p.push_back(g.topology.links()[c].p_exact);
    const bool splits_ok = split_p == std::vector<Rational>{frac(3, 5), frac(4, 5)};
    std::uint64_t dominated = 0;
    for (std::uint64_t trial = 0; trial < 10000; ++trial) {
      auto base = generate_trace(t, 128, 7700, trial);
      auto coupled = couple_trace(t, g, base);
      const std::int64_t n = 1 + static_cast<std::int64_t>(trial % 50);
      if (simulate_coding_queue(g.topology, n, coupled).completion_slot >=
          simulate_coding_maxflow(t, n, base).completion_slot)
        ++dominated;
    }
    v.pass = cap == frac(4, 5) && ghat_cap == cap && splits_ok && dominated == 10000;
    v.detail << " capacity " << cap << ", transformed " << ghat_cap << ", link 2 splits ";
    for (const auto& q : split_p) v.detail << q << " ";
    v.detail << "(" << to_string(d.bottleneck) << "), coupled dominance " << dominated << "/10000";
  });

  criterion(8, "concentration of the coding completion time", [](Verdict& v) {
    const auto t = load_topology(sample("twohop"));
    ConcentrationParams p{200, min_cut_capacity(t).capacity, t.link_count(), 0.3, 0.25};
    const auto samples = run_trials(t, p.n, Strategy::CodingQueue, 100000, 8800);
    const auto e = empirical_exceedance(samples, p);
    const auto w = window_fraction(samples, p);
    std::mt19937_64 rng(88);
    const auto bottleneck_net = load_topology(sample("bottleneck"));
    std::int64_t worst = 0;
    for (std::uint64_t k = 0; k < 1000; ++k) {
      const Topology& tt = k % 2 ? bottleneck_net : t;
      const std::uint64_t horizon = 80;
      auto trace = generate_trace(tt, horizon, 8900, k);
      worst = std::max(worst, flip_sensitivity(tt, trace, horizon, 1 + rng() % horizon, rng() % tt.link_count()));
    }
    const std::int64_t scan_ns[] = {200, 500, 1000, 2000, 4000, 8000};
    const auto scan = scan_window_premise(t, p, scan_ns, 200, 8700);
    v.pass = e.pass && worst <= 1;
    v.detail << " exceedance " << e.fraction << " vs bound " << e.bound << " + 3 SE " << 3 * e.std_error
             << ", window fraction " << w.fraction << " (>= " << w.lower_bound << "), max rank change per flip "
             << worst << " over 1000 traces, window premise holds from n=";
    if (scan.smallest_n)
      v.detail << *scan.smallest_n;
    else
      v.detail << "none tested";
  });

  criterion(9, "harmonic identity and Young bounds", [](Verdict& v) {
    std::mt19937_64 rng(99);
    std::uniform_int_distribution<long> ab(1, 500), c(1, 1000);
    int mismatches = 0;
    for (int k = 0; k < 1000; ++k) {
      long a = ab(rng), b = ab(rng);
      if (a > b) std::swap(a, b);
      const long c1 = c(rng), c2 = c(rng);
      Rational direct = 0;
      for (long m = a; m <= b; ++m) direct += frac(c1 - m, c2 + m);
      if (harmonic_sum(a, b, c1, c2) != direct) ++mismatches;
    }
    CompensatedSum h;
    std::int64_t young_fail = 0;
    for (std::int64_t n = 1; n <= 10000; ++n) {
      h.add(1.0 / static_cast<double>(n));
      const auto yb = young_bounds(n);
      if (!(yb.lower < h.value() && h.value() < yb.upper)) ++young_fail;
    }
    v.pass = mismatches == 0 && young_fail == 0;
    v.detail << " identity mismatches " << mismatches << "/1000, Young violations " << young_fail << "/10000";
  });

  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
