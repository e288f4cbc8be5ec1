#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "pktdelay/engine.hpp"
#include "pktdelay/montecarlo.hpp"

using namespace pktdelay;

namespace {

Topology diamond(double p = 0.0) {
  TopologySpec s;
  s.nodes = {"S", "A", "B", "T"};
  s.source = "S";
  s.sink = "T";
  s.links = {{"SA", "S", "A", p, {}}, {"SB", "S", "B", p, {}}, {"AT", "A", "T", p, {}}, {"BT", "B", "T", p, {}}};
  return validate_topology(s);
}

Topology random_path_topology(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> hops(1, 4), paths(1, 3);
  std::uniform_real_distribution<double> prob(0.0, 0.9);
  std::vector<std::vector<double>> spec(static_cast<std::size_t>(paths(rng)));
  for (auto& path : spec) {
    path.resize(static_cast<std::size_t>(hops(rng)));
    for (auto& p : path) p = prob(rng);
  }
  return spec.size() == 1 ? make_line(spec[0]) : make_parallel_paths(spec);
}

}  // namespace

TEST(CodingQueue, SingleLinkAllSuccess) {
  const auto t = make_line({0.3});
  auto tr = all_success_trace(t);
  EXPECT_EQ(simulate_coding_queue(t, 3, tr).completion_slot, 3u);
}

TEST(CodingQueue, StoreAndForward) {
  const auto t = make_line({0.5, 0.5});
  auto tr = all_success_trace(t);
  EXPECT_EQ(simulate_coding_queue(t, 1, tr).completion_slot, 2u);
}

TEST(CodingQueue, AllSuccessLineTakesHopsPlusNMinusOne) {
  for (std::size_t hops = 1; hops <= 5; ++hops) {
    const auto t = make_line(std::vector<double>(hops, 0.4));
    for (std::int64_t n = 1; n <= 20; ++n) {
      auto tr = all_success_trace(t);
      EXPECT_EQ(simulate_coding_queue(t, n, tr).completion_slot, hops + static_cast<std::uint64_t>(n) - 1);
    }
  }
}

TEST(CodingQueue, ZeroAndNegativeN) {
  const auto t = make_line({0.3});
  auto tr = all_success_trace(t);
  EXPECT_EQ(simulate_coding_queue(t, 0, tr).completion_slot, 0u);
  EXPECT_THROW(simulate_coding_queue(t, -1, tr), ConfigError);
  EXPECT_EQ(simulate_coding_maxflow(t, 0, tr).completion_slot, 0u);
  EXPECT_THROW(simulate_coding_maxflow(t, -1, tr), ConfigError);
}

TEST(CodingQueue, RejectsGeneralTopology) {
  TopologySpec s;
  s.nodes = {"S", "A", "T"};
  s.source = "S";
  s.sink = "T";
  s.links = {{"1", "S", "T", 0.5, {}}, {"2", "S", "A", 0.4, {}}, {"3", "A", "T", 0.8, {}}, {"4", "A", "T", 0.9, {}}};
  const auto t = validate_topology(s);
  auto tr = all_success_trace(t);
  EXPECT_THROW(simulate_coding_queue(t, 2, tr), ConfigError);
  EXPECT_GT(simulate_coding_maxflow(t, 2, tr).completion_slot, 0u);
}

TEST(CodingEngines, ExplicitTrace) {
  const auto t = make_line({0.5, 0.5});
  auto a = explicit_trace(t, {{0, 1}, {1, 1}, {1, 1}});
  auto b = explicit_trace(t, {{0, 1}, {1, 1}, {1, 1}});
  EXPECT_EQ(simulate_coding_queue(t, 1, a).completion_slot, 3u);
  EXPECT_EQ(simulate_coding_maxflow(t, 1, b).completion_slot, 3u);
}

TEST(CodingEngines, DiamondAllSuccess) {
  const auto t = diamond();
  auto a = all_success_trace(t);
  EXPECT_EQ(simulate_coding_maxflow(t, 4, a).completion_slot, 3u);
  EXPECT_EQ(simulate_coding_queue(t, 4, a).completion_slot, 3u);
}

TEST(CodingEngines, AgreeOnRandomPathTopologies) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> packets(0, 30);
  for (int k = 0; k < 200; ++k) {
    const auto t = random_path_topology(rng);
    const std::int64_t n = packets(rng);
    auto a = generate_trace(t, 64, 99, static_cast<std::uint64_t>(k));
    auto b = generate_trace(t, 64, 99, static_cast<std::uint64_t>(k));
    ASSERT_EQ(simulate_coding_queue(t, n, a).completion_slot, simulate_coding_maxflow(t, n, b).completion_slot)
        << "instance " << k;
  }
}

TEST(CodingEngines, MonotoneInN) {
  std::mt19937_64 rng(8);
  for (int k = 0; k < 20; ++k) {
    const auto t = random_path_topology(rng);
    auto tr = generate_trace(t, 128, 5, static_cast<std::uint64_t>(k));
    const auto alloc_of = [&](std::int64_t n) { return routing_allocation(t, n); };
    std::uint64_t prev_c = 0, prev_m = 0;
    for (std::int64_t n = 0; n <= 25; ++n) {
      const auto c = simulate_coding_queue(t, n, tr).completion_slot;
      const auto m = simulate_coding_maxflow(t, n, tr).completion_slot;
      EXPECT_GE(c, prev_c);
      EXPECT_GE(m, prev_m);
      prev_c = c;
      prev_m = m;
    }
    // Routing with a fixed split: adding one packet to one path never helps.
    auto alloc = alloc_of(10);
    const auto base = simulate_routing(t, alloc, tr).completion_slot;
    alloc[0] += 1;
    EXPECT_GE(simulate_routing(t, alloc, tr).completion_slot, base);
  }
}

TEST(CodingQueue, RankHistory) {
  const auto t = make_line({0.5, 0.5, 0.5});
  auto tr = generate_trace(t, 64, 1, 1);
  const auto out = simulate_coding_queue(t, 5, tr, true);
  ASSERT_TRUE(out.history);
  EXPECT_EQ(out.history->size(), out.completion_slot + 1);
  EXPECT_EQ(out.history->front()[t.source()], 5);
  EXPECT_EQ(out.history->back()[t.sink()], 5);
  for (const auto& row : *out.history)
    for (std::int64_t v : row) EXPECT_GE(v, 0);
}

TEST(CodingQueue, RankDifferencesAreQueueLengths) {
  // Under coding and routing the innovative counts evolve identically on a
  // line; the rank differences are the relay queue lengths.
  const auto t = make_line({0.3, 0.6, 0.2});
  auto tr = generate_trace(t, 256, 4, 0);
  PathRankState coding(t, 12);
  ChainQueues routing(3, 12);
  for (std::uint64_t s = 1; s <= 60; ++s) {
    coding.step(tr.row(s));
    routing.step(tr.row(s), t.paths()[0]);
    const auto diff = coding.rank_differences(0);
    ASSERT_EQ(diff.size(), 2u);
    EXPECT_EQ(diff[0], routing.queue[1]);
    EXPECT_EQ(diff[1], routing.queue[2]);
    EXPECT_EQ(coding.sink_rank(), routing.delivered);
  }
}

TEST(CodingQueue, StochasticOrderingPreserved) {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> q(0, 6), extra(0, 3);
  for (int k = 0; k < 300; ++k) {
    const std::size_t hops = 1 + static_cast<std::size_t>(k % 4);
    std::vector<double> p(hops);
    for (auto& x : p) x = std::uniform_real_distribution<double>(0, 0.9)(rng);
    const auto t = make_line(p);
    // Queue vectors x <= z componentwise (index 0 = source).
    std::vector<std::int64_t> x(hops), z(hops);
    for (std::size_t j = 0; j < hops; ++j) {
      x[j] = q(rng);
      z[j] = x[j] + extra(rng);
    }
    auto to_ranks = [&](const std::vector<std::int64_t>& queue) {
      std::vector<std::int64_t> r(hops + 1, 0);
      for (std::size_t j = hops; j-- > 0;) r[j] = r[j + 1] + queue[j];
      return r;
    };
    auto queues_of = [&](const PathRankState& st) {
      const auto& r = st.ranks(0);
      std::vector<std::int64_t> out(hops);
      for (std::size_t j = 0; j < hops; ++j) out[j] = r[j] - r[j + 1];
      return out;
    };
    PathRankState sx(t, 0), sz(t, 0);
    sx.set_ranks(0, to_ranks(x));
    sz.set_ranks(0, to_ranks(z));
    auto tr = generate_trace(t, 100, 17, static_cast<std::uint64_t>(k));
    for (std::uint64_t s = 1; s <= 100; ++s) {
      sx.step(tr.row(s));
      sz.step(tr.row(s));
      const auto qx = queues_of(sx), qz = queues_of(sz);
      for (std::size_t j = 0; j < hops; ++j) ASSERT_LE(qx[j], qz[j]) << "instance " << k << " slot " << s;
    }
  }
}

TEST(Routing, TwoParallelLinks) {
  const auto t = make_parallel_paths({{0.5}, {0.5}});
  auto tr = all_success_trace(t);
  const std::int64_t alloc[] = {2, 3};
  EXPECT_EQ(simulate_routing(t, alloc, tr).completion_slot, 3u);
}

TEST(Routing, AllocationErrors) {
  const auto t = make_parallel_paths({{0.5}, {0.5}});
  auto tr = all_success_trace(t);
  const std::int64_t wrong[] = {5};
  EXPECT_THROW(simulate_routing(t, wrong, tr), ConfigError);
  const std::int64_t negative[] = {3, -1};
  EXPECT_THROW(simulate_routing(t, negative, tr), ConfigError);
}

TEST(Routing, SinglePathEqualsCoding) {
  std::mt19937_64 rng(12);
  for (int k = 0; k < 200; ++k) {
    std::vector<double> p(1 + static_cast<std::size_t>(k % 4));
    for (auto& x : p) x = std::uniform_real_distribution<double>(0, 0.9)(rng);
    const auto t = make_line(p);
    const std::int64_t n = 1 + k % 30;
    auto tr = generate_trace(t, 64, 1, static_cast<std::uint64_t>(k));
    const std::int64_t alloc[] = {n};
    EXPECT_EQ(simulate_routing(t, alloc, tr).completion_slot, simulate_coding_queue(t, n, tr).completion_slot);
  }
}

TEST(Routing, NeverBeatsCodingOnPairedTraces) {
  std::mt19937_64 rng(13);
  for (int k = 0; k < 300; ++k) {
    const auto t = random_path_topology(rng);
    const std::int64_t n = 1 + k % 40;
    auto tr = generate_trace(t, 64, 2, static_cast<std::uint64_t>(k));
    const auto alloc = routing_allocation(t, n);
    EXPECT_GE(simulate_routing(t, alloc, tr).completion_slot, simulate_coding_queue(t, n, tr).completion_slot);
  }
}

TEST(Routing, BufferDiagnostics) {
  const auto t = make_line({0.0, 0.9});
  auto tr = generate_trace(t, 64, 1, 0);
  const std::int64_t alloc[] = {20};
  const auto out = simulate_routing(t, alloc, tr);
  EXPECT_GT(out.peak_buffer, 1);
}

TEST(TimeExpanded, ReceivedRankProfileMatchesQueueEngine) {
  const auto t = make_parallel_paths({{0.2, 0.4}, {0.5}});
  auto tr = generate_trace(t, 200, 3, 0);
  const auto profile = received_rank_profile(t, tr, 200);
  PathRankState st(t, 1000000);
  for (std::uint64_t s = 1; s <= 200; ++s) {
    st.step(tr.row(s));
    ASSERT_EQ(profile[s - 1], st.sink_rank()) << s;
  }
}

TEST(MonteCarlo, PerfectLinksHaveZeroVariance) {
  const auto t = make_parallel_paths({{0.0, 0.0}, {0.0}});
  const auto e = monte_carlo(t, 10, Strategy::CodingQueue, 50, 1);
  EXPECT_EQ(e.variance, 0.0);
  EXPECT_EQ(e.ci_half_width, 0.0);
}

TEST(MonteCarlo, DeterministicAndWorkerIndependent) {
  const auto t = make_parallel_paths({{0.3, 0.1}, {0.5}});
  for (Strategy s : {Strategy::CodingQueue, Strategy::CodingMaxflow, Strategy::Routing}) {
    const auto a = run_trials(t, 15, s, 400, 77, 1);
    const auto b = run_trials(t, 15, s, 400, 77, 1);
    const auto c = run_trials(t, 15, s, 400, 77, 3);
    EXPECT_EQ(a, b);
    EXPECT_EQ(a, c);
  }
  const auto e1 = monte_carlo(t, 15, Strategy::CodingQueue, 400, 77, 1);
  const auto e2 = monte_carlo(t, 15, Strategy::CodingQueue, 400, 77, 4);
  EXPECT_EQ(e1.mean, e2.mean);
  EXPECT_EQ(e1.variance, e2.variance);
}

TEST(MonteCarlo, CiShrinksWithTrials) {
  const auto t = make_line({0.5, 0.25});
  const auto small = monte_carlo(t, 10, Strategy::CodingQueue, 20000, 5);
  const auto large = monte_carlo(t, 10, Strategy::CodingQueue, 40000, 6);
  const double ratio = large.ci_half_width / small.ci_half_width;
  EXPECT_NEAR(ratio, 1 / std::sqrt(2.0), 0.1 / std::sqrt(2.0));
}

TEST(MonteCarlo, EstimateFields) {
  const auto t = make_line({0.5, 0.25});
  const auto e = monte_carlo(t, 2, Strategy::CodingQueue, 1000, 9);
  EXPECT_EQ(e.trials, 1000u);
  EXPECT_EQ(e.master_seed, 9u);
  EXPECT_DOUBLE_EQ(e.capacity_term, 4.0);
  EXPECT_DOUBLE_EQ(e.delay_estimate, e.mean - 4.0);
  EXPECT_NEAR(e.ci_high - e.ci_low, 2 * e.ci_half_width, 1e-12);
  EXPECT_THROW(monte_carlo(t, 2, Strategy::CodingQueue, 0, 9), ConfigError);
}

TEST(MonteCarlo, TwoHopMeanNearExact) {
  const auto t = make_line({0.5, 0.25});
  const auto e = monte_carlo(t, 2, Strategy::CodingQueue, 100000, 2024);
  EXPECT_LE(std::fabs(e.mean - 116.0 / 21.0), 3 * e.std_error);
}
