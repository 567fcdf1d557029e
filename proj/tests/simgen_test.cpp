#include <map>
#include <numeric>
#include <sstream>

#include <gtest/gtest.h>

#include "scg/ingest.hpp"
#include "scg/simgen.hpp"
#include "support.hpp"

using namespace scg;
using namespace scg::simgen;
using scg::ingest::to_json_line;
using scg::testing::error_of;

namespace {

ScenarioConfig short_scenario(std::uint64_t seed, double hours = 6) {
  ScenarioConfig c;
  c.seed = seed;
  c.duration = hours * 3600;
  return c;
}

std::string as_jsonl(const std::vector<NormalizedEvent>& events) {
  std::ostringstream out;
  ingest::write_events_jsonl(out, events);
  return out.str();
}

/// Labeled events grouped by the process that carries each chain.
std::map<std::string, std::vector<NormalizedEvent>> chains_of(const std::vector<NormalizedEvent>& events) {
  std::map<std::string, std::vector<NormalizedEvent>> out;
  for (const auto& e : events)
    if (e.label && *e.label != Label::BENIGN) out[e.process_key()].push_back(e);
  return out;
}

TEST(Generate, SameSeedIsByteIdentical) {
  const auto a = as_jsonl(generate(short_scenario(5)));
  EXPECT_EQ(a, as_jsonl(generate(short_scenario(5))));
  EXPECT_NE(a, as_jsonl(generate(short_scenario(6))));
}

TEST(Generate, ZeroDurationIsEmpty) {
  auto c = short_scenario(1);
  c.duration = 0;
  EXPECT_TRUE(generate(c).empty());
}

TEST(Generate, NoChainsMeansNoAttackLabels) {
  auto c = short_scenario(2);
  c.n_attack_chains = 0;
  auto events = generate(c);
  ASSERT_FALSE(events.empty());
  for (const auto& e : events) {
    ASSERT_TRUE(e.label);
    EXPECT_EQ(*e.label, Label::BENIGN);
  }
}

TEST(Generate, EightLabeledEventsPerChain) {
  for (std::uint64_t seed : {1, 2, 3, 42}) {
    auto events = generate(short_scenario(seed, 24));
    std::map<Label, int> counts;
    for (const auto& e : events) counts[*e.label]++;
    EXPECT_EQ(events.size() - static_cast<std::size_t>(counts[Label::BENIGN]), 24u);
    for (auto l : {Label::STAGE1, Label::STAGE2, Label::STAGE3, Label::STAGE4}) EXPECT_EQ(counts[l], 3);
    EXPECT_EQ(counts[Label::STAGE5], 6);
    EXPECT_EQ(counts[Label::STAGE6], 6);
    EXPECT_EQ(chains_of(events).size(), 3u);
  }
  auto b = short_scenario(7, 24);
  b.phase_b = true;
  EXPECT_EQ(chains_of(generate(b)).size(), 6u);
}

TEST(Generate, ValidTimeSortedEvents) {
  auto events = generate(short_scenario(8, 24));
  ASSERT_GT(events.size(), 1000u);
  for (std::size_t i = 0; i < events.size(); ++i) {
    EXPECT_NO_THROW(validate_event(events[i]));
    if (i > 0) {
      EXPECT_LE(events[i - 1].ts, events[i].ts);
    }
    EXPECT_EQ(events[i].ts, std::round(events[i].ts * 1000) / 1000);
  }
  // The whole stream loads into a graph without ordering or key errors.
  EXPECT_NO_THROW(build_graph(events));
}

TEST(Generate, ChainStagesAreOrderedOnOneHost) {
  for (std::uint64_t seed : {3, 4, 5}) {
    auto c = short_scenario(seed, 24);
    c.phase_b = true;
    for (const auto& [proc, chain] : chains_of(generate(c))) {
      ASSERT_EQ(chain.size(), kLabeledEventsPerChain) << proc;
      for (std::size_t i = 1; i < chain.size(); ++i) {
        EXPECT_LT(chain[i - 1].ts, chain[i].ts);
        EXPECT_LE(stage_of(*chain[i - 1].label), stage_of(*chain[i].label));
        EXPECT_EQ(chain[i].host, chain[0].host);
      }
      EXPECT_EQ(*chain.front().label, Label::STAGE1);
      EXPECT_EQ(*chain.back().label, Label::STAGE6);
      EXPECT_GE(chain.front().ts, 0.1 * c.duration);
    }
  }
}

std::size_t find_root(std::vector<std::size_t>& parent, std::size_t x) {
  while (parent[x] != x) x = parent[x] = parent[parent[x]];
  return x;
}

TEST(Generate, ChainsAreCausallyConnected) {
  auto events = generate(short_scenario(9, 24));
  auto g = build_graph(events);
  std::map<std::string, std::vector<EdgeId>> chain_edges;
  for (std::size_t i = 0; i < events.size(); ++i)
    if (*events[i].label != Label::BENIGN) chain_edges[events[i].process_key()].push_back(static_cast<EdgeId>(i));
  ASSERT_EQ(chain_edges.size(), 3u);
  for (const auto& [proc, ids] : chain_edges) {
    std::vector<std::size_t> parent(g.num_nodes());
    std::iota(parent.begin(), parent.end(), 0);
    for (auto id : ids) parent[find_root(parent, g.edge(id).src)] = find_root(parent, g.edge(id).dst);
    const auto root = find_root(parent, g.edge(ids[0]).src);
    for (auto id : ids) {
      EXPECT_EQ(find_root(parent, g.edge(id).src), root);
      EXPECT_EQ(find_root(parent, g.edge(id).dst), root);
    }
    // The chain process is itself reachable from the shell that forked it.
    const auto p = g.find_node(ObjectKind::PROCESS, proc);
    ASSERT_TRUE(p);
    bool forked = false;
    for (const auto& e : g.edges()) forked |= e.kind == Action::FORK && e.dst == *p;
    EXPECT_TRUE(forked);
  }
}

TEST(Generate, AttacksInterleaveWithBenignTraffic) {
  auto events = generate(short_scenario(10, 24));
  for (const auto& [proc, chain] : chains_of(events)) {
    std::size_t between = 0;
    for (const auto& e : events)
      if (*e.label == Label::BENIGN && e.ts > chain.front().ts && e.ts < chain.back().ts) ++between;
    EXPECT_GT(between, 0u) << proc;
  }
}

TEST(Generate, BadConfig) {
  auto c = short_scenario(1);
  c.duration = -1;
  EXPECT_EQ(error_of([&] { generate(c); }), Errc::BadConfig);
  c = short_scenario(1);
  c.rate_cron = -0.5;
  EXPECT_EQ(error_of([&] { generate(c); }), Errc::BadConfig);
  c = short_scenario(1);
  c.n_hosts = 0;
  EXPECT_EQ(error_of([&] { generate(c); }), Errc::BadConfig);
}

TEST(Generate, PhaseBSwitchesFamilies) {
  auto c = short_scenario(11, 24);
  c.phase_b = true;
  for (const auto& [proc, chain] : chains_of(generate(c))) {
    const bool npm = chain.front().object.key.starts_with("npm:");
    EXPECT_EQ(npm, chain.front().ts >= c.duration / 2) << chain.front().object.key;
  }
}

std::vector<NormalizedEvent> evenly_spaced(std::size_t n) {
  std::vector<NormalizedEvent> out;
  for (std::size_t i = 0; i < n; ++i)
    out.push_back(scg::testing::make_event(static_cast<double>(i), "h", 1, Action::READ, "/f"));
  return out;
}

TEST(SplitByTime, Examples) {
  auto events = evenly_spaced(10);
  auto [train, eval] = split_by_time(events, 0.5);
  EXPECT_EQ(train.size(), 5u);
  EXPECT_EQ(eval.size(), 5u);
  EXPECT_EQ(error_of([&] { split_by_time(events, 1.0); }), Errc::BadFraction);
  EXPECT_EQ(error_of([&] { split_by_time(events, 0.0); }), Errc::BadFraction);
  EXPECT_EQ(error_of([&] { split_by_time(events, std::nan("")); }), Errc::BadFraction);
}

TEST(SplitByTime, PartitionWithoutStraddling) {
  Rng rng(12);
  for (int trial = 0; trial < 300; ++trial) {
    auto events = scg::testing::random_events(rng, 1 + uniform_index(rng, 60), 3, 3, 3);
    const double f = uniform(rng, 0.01, 0.99);
    auto [train, eval] = split_by_time(events, f);
    ASSERT_EQ(train.size() + eval.size(), events.size());
    EXPECT_FALSE(eval.empty());
    for (std::size_t i = 0; i < train.size(); ++i) EXPECT_EQ(to_json_line(train[i]), to_json_line(events[i]));
    for (std::size_t i = 0; i < eval.size(); ++i)
      EXPECT_EQ(to_json_line(eval[i]), to_json_line(events[train.size() + i]));
    if (!train.empty()) {
      EXPECT_LT(train.back().ts, eval.front().ts);
    }
  }
}

}  // namespace
