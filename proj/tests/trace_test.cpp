#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "pktdelay/trace.hpp"

using namespace pktdelay;

namespace {

Topology grouped() {
  TopologySpec s;
  s.nodes = {"S", "T"};
  s.source = "S";
  s.sink = "T";
  s.links = {{"a", "S", "T", 0.6, {}}, {"b", "S", "T", 0.8, {}}, {"c", "S", "T", 0.3, {}}};
  s.groups.push_back({0.4, {}, {"a", "b"}, {2.0 / 3.0, 1.0 / 3.0}, {}});
  return validate_topology(s);
}

}  // namespace

TEST(Trace, Deterministic) {
  const auto t = make_parallel_paths({{0.3, 0.5}, {0.2}});
  auto a = generate_trace(t, 500, 42, 3);
  auto b = generate_trace(t, 500, 42, 3);
  for (std::uint64_t s = 1; s <= 500; ++s)
    for (std::size_t l = 0; l < t.link_count(); ++l) ASSERT_EQ(a.at(s, l), b.at(s, l));
  auto c = generate_trace(t, 500, 42, 4);
  std::size_t differ = 0;
  for (std::uint64_t s = 1; s <= 500; ++s) differ += a.at(s, 0) != c.at(s, 0);
  EXPECT_GT(differ, 0u);
}

TEST(Trace, ExtendingDoesNotPerturbEarlierSlots) {
  const auto t = make_line({0.4, 0.1});
  auto short_trace = generate_trace(t, 10, 9, 1);
  auto long_trace = generate_trace(t, 1000, 9, 1);
  for (std::uint64_t s = 1; s <= 10; ++s)
    for (std::size_t l = 0; l < 2; ++l) EXPECT_EQ(short_trace.at(s, l), long_trace.at(s, l));
  EXPECT_EQ(short_trace.success(900, 1), long_trace.at(900, 1));
  EXPECT_GE(short_trace.horizon(), 900u);
}

TEST(Trace, PerfectLinkAlwaysSucceeds) {
  const auto t = make_line({0.0, 0.7});
  auto tr = generate_trace(t, 5000, 1, 0);
  for (std::uint64_t s = 1; s <= 5000; ++s) ASSERT_TRUE(tr.at(s, 0));
}

TEST(Trace, IndependentMarginals) {
  const auto t = make_parallel_paths({{0.1}, {0.5}, {0.85}});
  const std::uint64_t slots = 1000000;
  auto tr = generate_trace(t, slots, 77, 0);
  for (std::size_t l = 0; l < 3; ++l) {
    double hits = 0;
    for (std::uint64_t s = 1; s <= slots; ++s) hits += tr.at(s, l);
    const double q = 1 - t.links()[l].p;
    const double sd = std::sqrt(q * (1 - q) / slots);
    EXPECT_LE(std::fabs(hits / slots - q), 4 * sd) << t.links()[l].id;
  }
}

TEST(Trace, GroupFrequenciesAndExclusivity) {
  const auto t = grouped();
  const std::uint64_t slots = 1000000;
  auto tr = generate_trace(t, slots, 2024, 0);
  double a = 0, b = 0;
  for (std::uint64_t s = 1; s <= slots; ++s) {
    ASSERT_FALSE(tr.at(s, 0) && tr.at(s, 1)) << "slot " << s;
    a += tr.at(s, 0);
    b += tr.at(s, 1);
  }
  EXPECT_NEAR(a / slots, 0.4, 0.002);
  EXPECT_NEAR(b / slots, 0.2, 0.002);
}

TEST(Trace, AllSuccessAndExplicit) {
  const auto t = make_line({0.5, 0.5});
  auto all = all_success_trace(t);
  EXPECT_TRUE(all.success(100, 1));
  auto ex = explicit_trace(t, {{0, 1}, {1, 1}});
  EXPECT_FALSE(ex.success(1, 0));
  EXPECT_TRUE(ex.success(1, 1));
  EXPECT_TRUE(ex.success(40, 0));
}

TEST(Trace, FlipAndBounds) {
  const auto t = make_line({0.5});
  auto tr = generate_trace(t, 4, 1, 1);
  const bool before = tr.at(2, 0);
  tr.flip(2, 0);
  EXPECT_NE(tr.at(2, 0), before);
  EXPECT_THROW(tr.at(0, 0), std::out_of_range);
  EXPECT_THROW(tr.at(5, 0), std::out_of_range);
}

TEST(Trace, CsvDump) {
  const auto t = make_line({0.0, 0.0});
  auto tr = all_success_trace(t, 2);
  std::ostringstream out;
  write_trace_csv(out, t, tr);
  EXPECT_EQ(out.str(), "slot,link-id,success\n1,L1,1\n1,L2,1\n2,L1,1\n2,L2,1\n");
}

TEST(Trace, CategoricalPick) {
  const double w[] = {0.25, 0.5, 0.25};
  EXPECT_EQ(categorical_pick(0.0, w), 0u);
  EXPECT_EQ(categorical_pick(0.3, w), 1u);
  EXPECT_EQ(categorical_pick(0.9999, w), 2u);
}
