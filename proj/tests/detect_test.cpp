#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <gtest/gtest.h>

#include "scg/detect.hpp"
#include "scg/reduce.hpp"
#include "scg/simgen.hpp"
#include "scg/train.hpp"
#include "support.hpp"

using namespace scg;
using namespace scg::detect;
using scg::testing::error_of;

namespace {

tgn::Dims small_dims() { return {.d_m = 8, .d_e = 8, .d_h = 8, .d_s = 16, .d_f = 8, .d_t = 8}; }

// ---------------------------------------------------------------- threshold

TEST(ScoreStream, FirstScoreInitializesWithoutFlag) {
  ScoreStream st({0.5, 3.0, 0});
  auto d = st.observe(7.0);
  EXPECT_FALSE(d.flag);
  EXPECT_TRUE(std::isinf(d.tau));
  EXPECT_EQ(st.mean(), 7.0);
  EXPECT_EQ(st.variance(), 0.0);
  EXPECT_EQ(st.count(), 1u);
}

TEST(ScoreStream, HandEvaluatedRecurrence) {
  ScoreStream st({0.5, 3.0, 1});
  st.set_state(5, 1.0, 0.0);
  auto d = st.observe(10.0);
  EXPECT_TRUE(d.flag);
  EXPECT_EQ(d.tau, 1.0);
  EXPECT_DOUBLE_EQ(st.mean(), 5.5);
  EXPECT_DOUBLE_EQ(st.variance(), 20.25);
  EXPECT_EQ(st.count(), 6u);
}

TEST(ScoreStream, ConstantStreamNeverFlags) {
  ScoreStream st({0.1, 0.0, 0});
  for (int i = 0; i < 1000; ++i) EXPECT_FALSE(st.observe(2.5).flag);
  EXPECT_EQ(st.variance(), 0.0);
}

TEST(ScoreStream, NonFiniteRejected) {
  ScoreStream st;
  EXPECT_EQ(error_of([&] { st.observe(std::numeric_limits<double>::quiet_NaN()); }), Errc::NonFinite);
  EXPECT_EQ(error_of([&] { st.observe(std::numeric_limits<double>::infinity()); }), Errc::NonFinite);
  EXPECT_EQ(st.count(), 0u);
}

TEST(ScoreStream, BadConfigRejected) {
  EXPECT_EQ(error_of([] { ScoreStream({0.0, 3.0, 1}); }), Errc::BadConfig);
  EXPECT_EQ(error_of([] { ScoreStream({1.0, 3.0, 1}); }), Errc::BadConfig);
  EXPECT_EQ(error_of([] { ScoreStream({0.1, -1.0, 1}); }), Errc::BadConfig);
}

TEST(ScoreStream, WarmupNeverFlagsRegardlessOfScore) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const auto n_min = 1 + uniform_index(rng, 50);
    ScoreStream st({uniform(rng, 0.01, 0.9), uniform(rng, 0, 4), n_min});
    for (std::size_t i = 0; i < n_min + 20; ++i) {
      const bool warm = st.count() < n_min;
      const double s = uniform01(rng) < 0.2 ? 1e6 : uniform(rng, 0, 3);
      const auto d = st.observe(s);
      if (warm) {
        EXPECT_FALSE(d.flag) << "n=" << i;
      }
    }
  }
}

TEST(ScoreStream, FlagIsMonotoneInScore) {
  Rng rng(6);
  for (int trial = 0; trial < 10000; ++trial) {
    const ThresholdConfig cfg{uniform(rng, 0.01, 0.9), uniform(rng, 0, 5), 3};
    const auto n = 1 + uniform_index(rng, 10);
    const double mu = uniform(rng, -2, 2), var = uniform(rng, 0, 4);
    double s1 = uniform(rng, -5, 15), s2 = uniform(rng, -5, 15);
    if (s1 > s2) std::swap(s1, s2);
    ScoreStream a(cfg), b(cfg);
    a.set_state(n, mu, var);
    b.set_state(n, mu, var);
    const auto d1 = a.observe(s1), d2 = b.observe(s2);
    EXPECT_EQ(d1.tau, d2.tau);
    if (d1.flag) {
      EXPECT_TRUE(d2.flag);
    }
    EXPECT_EQ(d2.flag, n >= cfg.n_min && s2 > mu + cfg.kappa * std::sqrt(var));
  }
}

// ---------------------------------------------------------------- scoring

ProvenanceGraph small_stream_graph(std::uint64_t seed, std::size_t n_events) {
  Rng rng(seed);
  return build_graph(scg::testing::random_events(rng, n_events, 4, 5), small_dims().d_f);
}

TEST(AnomalyScore, HalfProbabilityGivesLn2) {
  tgn::Model model(small_dims());
  tgn::Params params = tgn::init_params(small_dims(), 3);  // zero output layer: p = 1/2
  auto g = small_stream_graph(1, 30);
  tgn::MemoryState mem(g.num_nodes(), small_dims().d_m);
  for (const auto& e : g.edges())
    EXPECT_NEAR(anomaly_score(model, params, g, mem, e.src, e.dst, e.t_first), std::log(2.0), 1e-15);
}

TEST(AnomalyScore, ClampedCertaintyIsTiny) {
  tgn::Model model(small_dims());
  auto params = tgn::init_params(small_dims(), 3);
  params[tgn::Block::b2].data[0] = 1e6;
  auto g = small_stream_graph(1, 10);
  tgn::MemoryState mem(g.num_nodes(), small_dims().d_m);
  const auto& e = g.edge(0);
  const double s = anomaly_score(model, params, g, mem, e.src, e.dst, e.t_first);
  EXPECT_GE(s, 0.0);
  EXPECT_NEAR(s, 1e-12, 1e-15);
}

TEST(AnomalyScore, UnknownNode) {
  tgn::Model model(small_dims());
  auto params = tgn::init_params(small_dims(), 3);
  auto g = small_stream_graph(1, 10);
  tgn::MemoryState mem(g.num_nodes(), small_dims().d_m);
  EXPECT_EQ(error_of([&] { anomaly_score(model, params, g, mem, 0, static_cast<NodeId>(g.num_nodes()), 1.0); }),
            Errc::UnknownNode);
}

tgn::Params perturbed_params(std::uint64_t seed) {
  auto p = tgn::init_params(small_dims(), seed);
  Rng rng(seed + 100);
  for (auto& x : p.data) x += uniform(rng, -0.3, 0.3);
  return p;
}

TEST(DetectStream, EmptyStream) {
  tgn::Model model(small_dims());
  auto params = perturbed_params(1);
  auto g = small_stream_graph(2, 20);
  tgn::MemoryState mem(g.num_nodes(), small_dims().d_m);
  ScoreStream st;
  auto r = detect_stream(model, params, g, mem, {}, st);
  EXPECT_TRUE(r.alerts.empty());
  EXPECT_TRUE(r.scored.empty());
  EXPECT_EQ(st.count(), 0u);
}

TEST(DetectStream, ScoresBeforeUpdatingMemory) {
  tgn::Model model(small_dims());
  auto params = perturbed_params(2);
  auto g = small_stream_graph(3, 120);
  std::vector<EdgeId> ids(g.num_edges());
  for (EdgeId i = 0; i < ids.size(); ++i) ids[i] = i;

  tgn::MemoryState mem(g.num_nodes(), small_dims().d_m);
  ScoreStream st({0.2, 0.5, 5});
  auto r = detect_stream(model, params, g, mem, ids, st);

  tgn::MemoryState ref(g.num_nodes(), small_dims().d_m);
  ScoreStream ref_st({0.2, 0.5, 5});
  std::vector<Alert> ref_alerts;
  ASSERT_EQ(r.scores.size(), ids.size());
  for (auto id : ids) {
    const auto& e = g.edge(id);
    const double s = anomaly_score(model, params, g, ref, e.src, e.dst, e.t_first);
    EXPECT_EQ(r.scores[id], s);
    EXPECT_EQ(r.scored[id], id);
    if (auto d = ref_st.observe(s); d.flag) ref_alerts.push_back({id, s, d.tau, e.t_first});
    model.update_memory(params, ref, e.src, e.dst, e.t_first, e.feat);
  }
  EXPECT_EQ(r.alerts, ref_alerts);
  EXPECT_FALSE(r.alerts.empty());
  EXPECT_EQ(mem, ref);

  tgn::MemoryState mem2(g.num_nodes(), small_dims().d_m);
  ScoreStream st2({0.2, 0.5, 5});
  auto r2 = detect_stream(model, params, g, mem2, ids, st2);
  EXPECT_EQ(r2.alerts, r.alerts);
  EXPECT_EQ(r2.scores, r.scores);
}

TEST(DetectStream, DefaultThresholdOnBenignSimulation) {
  simgen::ScenarioConfig sc;
  sc.seed = 11;
  sc.duration = 6 * 3600;
  sc.n_attack_chains = 0;
  auto events = simgen::generate(sc);
  auto red = reduce::reduce(build_graph(events, 16), {});
  const auto& g = red.graph;
  const tgn::Dims dims{.d_m = 16, .d_e = 16, .d_h = 16, .d_s = 32, .d_f = 16, .d_t = 8};
  tgn::Model model(dims);
  std::vector<EdgeId> ids(g.num_edges());
  for (EdgeId i = 0; i < ids.size(); ++i) ids[i] = i;
  auto [train, rest] = simgen::split_by_time(ids, 0.7, [&](EdgeId e) { return g.edge(e).t_first; });
  auto st = tgn::make_trainer_state(dims, g.num_nodes(), 11);
  tgn::Progress prog;
  tgn::Trainer(g, model, {.epochs = 1, .seed = 11}).run(st, prog, train);

  tgn::MemoryState mem(g.num_nodes(), dims.d_m);
  tgn::apply_memory_updates(model, st.params, g, mem, train);
  ScoreStream stream;
  auto r = detect_stream(model, st.params, g, mem, rest, stream);
  ASSERT_GT(rest.size(), 500u);
  const double rate = static_cast<double>(r.alerts.size()) / static_cast<double>(rest.size());
  EXPECT_LE(rate, 0.01) << r.alerts.size() << " alerts over " << rest.size();
}

TEST(Calibration, PicksSmallestPassingKappa) {
  Rng rng(9);
  std::vector<double> benign(3000);
  for (auto& s : benign) s = uniform01(rng) < 0.03 ? uniform(rng, 3, 8) : uniform(rng, 0, 1);
  const std::vector<double> alphas = {0.01, 0.05, 0.2};
  const std::vector<double> kappas = {0.5, 1, 2, 3, 4, 6, 10, 20};
  auto rate_of = [&](double a, double k) {
    ScoreStream st({a, k, 50});
    std::size_t n = 0;
    for (double s : benign) n += st.observe(s).flag;
    return static_cast<double>(n) / static_cast<double>(benign.size());
  };
  for (double target : {0.001, 0.01, 0.05}) {
    auto c = calibrate_threshold(benign, target, alphas, kappas, 50);
    ASSERT_TRUE(c.met_target) << target;
    EXPECT_LE(c.alert_rate, target);
    EXPECT_EQ(c.alert_rate, rate_of(c.alpha, c.kappa));
    for (double a : alphas)
      for (double k : kappas)
        if (k < c.kappa) {
          EXPECT_GT(rate_of(a, k), target) << a << " " << k;
        }
  }
}

TEST(Calibration, UnreachableTargetReportsBestEffort) {
  std::vector<double> benign;
  for (int i = 0; i < 400; ++i) benign.push_back(i % 2 == 0 ? 0.0 : 100.0 * (i + 1));
  auto c = calibrate_threshold(benign, 0.0, std::vector<double>{0.5}, std::vector<double>{0.0}, 1);
  EXPECT_FALSE(c.met_target);
  EXPECT_GT(c.alert_rate, 0.0);
}

// ---------------------------------------------------------------- reconstruction

/// Process-only graph whose edges carry random merge intervals.
ProvenanceGraph random_interval_graph(Rng& rng, std::size_t n_nodes, std::size_t n_edges) {
  ProvenanceGraph g(4);
  for (std::size_t i = 0; i < n_nodes; ++i) g.upsert_node(ObjectKind::PROCESS, "h:" + std::to_string(i + 1), 0);
  double t = 0;
  for (std::size_t i = 0; i < n_edges; ++i) {
    if (uniform01(rng) < 0.7) t += std::floor(uniform(rng, 0, 4));
    const auto src = static_cast<NodeId>(uniform_index(rng, n_nodes));
    const auto dst = static_cast<NodeId>(uniform_index(rng, n_nodes));
    const bool merged = uniform01(rng) < 0.4;
    const double t_last = merged ? t + std::floor(uniform(rng, 1, 10)) : t;
    g.append_edge(src, dst, Action::FORK, t, t_last, merged ? 3 : 1, std::vector<double>(4, 0.0));
  }
  return g;
}

struct OracleSide {
  std::vector<EdgeId> edges;
  std::vector<NodeId> nodes;
};

/// Every admissible chain, found by scanning the full edge list at each step.
void oracle_chains(const ProvenanceGraph& g, const ReconConfig& cfg, NodeId x, double tau, double t, bool fwd,
                   OracleSide& cur, std::vector<NodeId>& used, std::vector<OracleSide>& out) {
  out.push_back(cur);
  if (cur.edges.size() == cfg.depth) return;
  for (const auto& e : g.edges()) {
    if (e.src == e.dst) continue;
    NodeId next;
    double te;
    if (fwd) {
      if (e.src != x || e.t_last < tau) continue;
      te = std::max(tau, e.t_first);
      if (te - t > cfg.forward_window) continue;
      next = e.dst;
    } else {
      if (e.dst != x || e.t_first > tau) continue;
      te = std::min(tau, e.t_last);
      if (t - te > cfg.back_window) continue;
      next = e.src;
    }
    if (std::find(used.begin(), used.end(), next) != used.end()) continue;
    cur.edges.push_back(e.id);
    cur.nodes.push_back(next);
    used.push_back(next);
    oracle_chains(g, cfg, next, te, t, fwd, cur, used, out);
    used.pop_back();
    cur.nodes.pop_back();
    cur.edges.pop_back();
  }
}

std::vector<AttackPath> oracle_reconstruct(const ProvenanceGraph& g, const std::vector<Alert>& alerts,
                                           const ReconConfig& cfg, const std::vector<double>& score) {
  std::vector<AttackPath> all;
  for (std::size_t ai = 0; ai < alerts.size(); ++ai) {
    const auto& s = g.edge(alerts[ai].edge);
    std::vector<OracleSide> back, fwd;
    OracleSide cur;
    std::vector<NodeId> used = {s.src, s.dst};
    oracle_chains(g, cfg, s.src, s.t_first, s.t_first, false, cur, used, back);
    used = {s.src, s.dst};
    oracle_chains(g, cfg, s.dst, s.t_first, s.t_first, true, cur, used, fwd);
    for (const auto& b : back)
      for (const auto& f : fwd) {
        std::set<NodeId> nb(b.nodes.begin(), b.nodes.end());
        if (std::any_of(f.nodes.begin(), f.nodes.end(), [&](NodeId n) { return nb.count(n) > 0; })) continue;
        AttackPath p;
        p.edges.assign(b.edges.rbegin(), b.edges.rend());
        p.edges.push_back(s.id);
        p.edges.insert(p.edges.end(), f.edges.begin(), f.edges.end());
        double sum = 0;
        for (auto e : p.edges) sum += score[e];
        p.score = sum / static_cast<double>(p.edges.size());
        p.seed_alert = ai;
        all.push_back(std::move(p));
      }
  }
  std::sort(all.begin(), all.end(), [](const AttackPath& a, const AttackPath& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.edges.size() != b.edges.size()) return a.edges.size() > b.edges.size();
    if (a.edges != b.edges) return a.edges < b.edges;
    return a.seed_alert < b.seed_alert;
  });
  std::vector<AttackPath> top;
  for (auto& p : all) {
    if (top.size() == cfg.top_k) break;
    if (!top.empty() && top.back().edges == p.edges) continue;
    top.push_back(std::move(p));
  }
  return top;
}

/// Checks a path directly: a simple walk through its seed whose sides obey
/// the depth bound and admit traversal times inside their windows.
void expect_feasible(const ProvenanceGraph& g, const AttackPath& p, EdgeId seed, const ReconConfig& cfg) {
  const auto pos = static_cast<std::size_t>(std::find(p.edges.begin(), p.edges.end(), seed) - p.edges.begin());
  ASSERT_LT(pos, p.edges.size());
  EXPECT_LE(pos, cfg.depth);
  EXPECT_LE(p.edges.size() - pos - 1, cfg.depth);
  std::set<NodeId> nodes{g.edge(p.edges[0]).src};
  for (std::size_t i = 0; i < p.edges.size(); ++i) {
    const auto& e = g.edge(p.edges[i]);
    if (i > 0) {
      EXPECT_EQ(g.edge(p.edges[i - 1]).dst, e.src);
    }
    if (e.src == e.dst) {
      EXPECT_EQ(i, pos) << "only the seed may be a self-loop";
      continue;
    }
    EXPECT_TRUE(nodes.insert(e.dst).second) << "repeated node";
  }
  const double t = g.edge(seed).t_first;
  double latest = t;
  for (std::size_t i = pos; i-- > 0;) {
    const auto& e = g.edge(p.edges[i]);
    latest = std::min(latest, e.t_last);
    EXPECT_LE(e.t_first, latest);
    EXPECT_LE(t - latest, cfg.back_window);
  }
  double earliest = t;
  for (std::size_t i = pos + 1; i < p.edges.size(); ++i) {
    const auto& e = g.edge(p.edges[i]);
    earliest = std::max(earliest, e.t_first);
    EXPECT_LE(earliest, e.t_last);
    EXPECT_LE(earliest - t, cfg.forward_window);
  }
}

TEST(Reconstruct, ChainThroughSeed) {
  ProvenanceGraph g(4);
  for (int i = 1; i <= 4; ++i) g.upsert_node(ObjectKind::PROCESS, "h:" + std::to_string(i), 0);
  for (NodeId i = 0; i < 3; ++i) g.append_edge(i, i + 1, Action::FORK, 1.0 + i, 1.0 + i, 1, std::vector<double>(4, 0));
  const std::vector<Alert> alerts = {{1, 1.0, 0.5, 2.0}};
  ReconConfig cfg;
  cfg.depth = 5;

  std::vector<double> flat = {1.0, 1.0, 1.0};
  auto paths = reconstruct(g, alerts, cfg, [&](EdgeId e) { return flat[e]; });
  ASSERT_EQ(paths.size(), 4u);
  EXPECT_EQ(paths[0].edges, (std::vector<EdgeId>{0, 1, 2}));
  EXPECT_EQ(paths[0].score, 1.0);

  std::vector<double> varied = {0.5, 2.0, 1.0};
  paths = reconstruct(g, alerts, cfg, [&](EdgeId e) { return varied[e]; });
  auto it = std::find_if(paths.begin(), paths.end(), [](const AttackPath& p) { return p.edges.size() == 3; });
  ASSERT_NE(it, paths.end());
  EXPECT_EQ(it->edges, (std::vector<EdgeId>{0, 1, 2}));
  EXPECT_DOUBLE_EQ(it->score, 3.5 / 3.0);
  EXPECT_EQ(paths[0].edges, std::vector<EdgeId>{1});
}

TEST(Reconstruct, LaterBackEdgeIsNotCausal) {
  ProvenanceGraph g(4);
  for (int i = 1; i <= 3; ++i) g.upsert_node(ObjectKind::PROCESS, "h:" + std::to_string(i), 0);
  g.append_edge(1, 2, Action::FORK, 1.0, 1.0, 1, std::vector<double>(4, 0));
  g.append_edge(0, 1, Action::FORK, 5.0, 5.0, 1, std::vector<double>(4, 0));
  auto paths = reconstruct(g, {{0, 1.0, 0.5, 1.0}}, {}, [](EdgeId) { return 1.0; });
  ASSERT_EQ(paths.size(), 1u);
  EXPECT_EQ(paths[0].edges, std::vector<EdgeId>{0});
}

TEST(Reconstruct, IsolatedSeedAndZeroDepth) {
  ProvenanceGraph g(4);
  for (int i = 1; i <= 4; ++i) g.upsert_node(ObjectKind::PROCESS, "h:" + std::to_string(i), 0);
  g.append_edge(0, 1, Action::FORK, 1, 1, 1, std::vector<double>(4, 0));
  g.append_edge(2, 3, Action::FORK, 2, 2, 1, std::vector<double>(4, 0));
  auto iso = reconstruct(g, {{1, 0.7, 0.1, 2}}, {}, [](EdgeId e) { return e == 1 ? 0.7 : 9.0; });
  ASSERT_EQ(iso.size(), 1u);
  EXPECT_EQ(iso[0].edges, std::vector<EdgeId>{1});
  EXPECT_EQ(iso[0].score, 0.7);

  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    auto rg = random_interval_graph(rng, 8, 30);
    std::vector<Alert> alerts;
    for (int i = 0; i < 5; ++i) alerts.push_back({static_cast<EdgeId>(uniform_index(rng, 30)), 1, 0, 0});
    ReconConfig cfg;
    cfg.depth = 0;
    cfg.top_k = 100;
    for (const auto& p : reconstruct(rg, alerts, cfg, [](EdgeId e) { return static_cast<double>(e); })) {
      ASSERT_EQ(p.edges.size(), 1u);
      EXPECT_EQ(p.edges[0], alerts[p.seed_alert].edge);
    }
  }
}

TEST(Reconstruct, UnknownEdge) {
  ProvenanceGraph g(4);
  g.upsert_node(ObjectKind::PROCESS, "h:1", 0);
  EXPECT_EQ(error_of([&] { reconstruct(g, {{3, 1, 0, 0}}, {}, [](EdgeId) { return 1.0; }); }), Errc::UnknownEdge);
}

TEST(Reconstruct, MatchesBruteForceEnumeration) {
  Rng rng(23);
  std::size_t non_trivial = 0;
  for (int trial = 0; trial < 400; ++trial) {
    const auto n_nodes = 3 + uniform_index(rng, 18);
    const auto n_edges = 5 + uniform_index(rng, 40);
    auto g = random_interval_graph(rng, n_nodes, n_edges);
    // Dyadic scores keep every mean exact, so ties are real ties.
    std::vector<double> score(g.num_edges());
    for (auto& s : score) s = static_cast<double>(uniform_index(rng, 8)) / 8.0;
    std::vector<Alert> alerts;
    const auto n_alerts = 1 + uniform_index(rng, 4);
    for (std::size_t i = 0; i < n_alerts; ++i) {
      const auto e = static_cast<EdgeId>(uniform_index(rng, g.num_edges()));
      alerts.push_back({e, score[e], 0, g.edge(e).t_first});
    }
    ReconConfig cfg;
    cfg.depth = uniform_index(rng, 4);
    cfg.back_window = std::floor(uniform(rng, 1, 40));
    cfg.forward_window = std::floor(uniform(rng, 1, 40));
    cfg.top_k = 1 + uniform_index(rng, 12);

    auto got = reconstruct(g, alerts, cfg, [&](EdgeId e) { return score[e]; });
    auto want = oracle_reconstruct(g, alerts, cfg, score);
    ASSERT_EQ(got.size(), want.size()) << "trial " << trial;
    for (std::size_t i = 0; i < got.size(); ++i) {
      EXPECT_EQ(got[i].edges, want[i].edges) << "trial " << trial << " rank " << i;
      EXPECT_EQ(got[i].score, want[i].score);
      expect_feasible(g, got[i], alerts[got[i].seed_alert].edge, cfg);
      non_trivial += got[i].edges.size() > 2;
    }
  }
  EXPECT_GT(non_trivial, 100u);
}

TEST(Reconstruct, CapsStillYieldFeasiblePaths) {
  Rng rng(29);
  for (int trial = 0; trial < 200; ++trial) {
    auto g = random_interval_graph(rng, 12, 60);
    std::vector<Alert> alerts;
    for (int i = 0; i < 3; ++i) alerts.push_back({static_cast<EdgeId>(uniform_index(rng, 60)), 1, 0, 0});
    ReconConfig cfg{.depth = 4, .back_window = 30, .forward_window = 30, .top_k = 8, .max_fanout = 2, .max_chains = 5};
    auto paths = reconstruct(g, alerts, cfg, [](EdgeId e) { return 1.0 / (1.0 + e); });
    EXPECT_LE(paths.size(), cfg.top_k);
    for (std::size_t i = 0; i < paths.size(); ++i) {
      expect_feasible(g, paths[i], alerts[paths[i].seed_alert].edge, cfg);
      if (i > 0) {
        EXPECT_TRUE(ranks_before(paths[i - 1], paths[i]));
      }
    }
  }
}

// ---------------------------------------------------------------- evaluation

struct Labeled {
  std::vector<std::optional<Label>> labels;
  std::vector<EdgeId> identity;
  std::vector<EdgeId> scored;
  std::vector<double> scores;
  std::vector<Alert> attack_alerts;
};

Labeled labeled_fixture() {
  Labeled f;
  const std::vector<Label> ls = {Label::BENIGN, Label::STAGE1, Label::BENIGN, Label::STAGE3,
                                 Label::BENIGN, Label::BENIGN, Label::STAGE6, Label::BENIGN};
  for (std::size_t i = 0; i < ls.size(); ++i) {
    f.labels.push_back(ls[i]);
    f.identity.push_back(static_cast<EdgeId>(i));
    f.scored.push_back(static_cast<EdgeId>(i));
    f.scores.push_back(ls[i] == Label::BENIGN ? 0.1 * static_cast<double>(i) : 5.0);
    if (ls[i] != Label::BENIGN) f.attack_alerts.push_back({static_cast<EdgeId>(i), 5.0, 1.0, 0.0});
  }
  return f;
}

TEST(Evaluate, PerfectAlerts) {
  auto f = labeled_fixture();
  auto m = evaluate(f.attack_alerts, {}, f.labels, f.identity, f.scored, f.scores);
  EXPECT_EQ(m.tp, 3u);
  EXPECT_EQ(m.fp, 0u);
  EXPECT_EQ(m.precision, 1.0);
  EXPECT_EQ(m.recall, 1.0);
  EXPECT_EQ(m.f1, 1.0);
  EXPECT_EQ(m.benign_alert_rate, 0.0);
  ASSERT_TRUE(m.auc);
  EXPECT_EQ(*m.auc, 1.0);
}

TEST(Evaluate, NoAlertsUsesZeroOverZeroConvention) {
  auto f = labeled_fixture();
  auto m = evaluate({}, {}, f.labels, f.identity, f.scored, f.scores);
  EXPECT_EQ(m.recall, 0.0);
  EXPECT_EQ(m.precision, 1.0);
  EXPECT_EQ(m.f1, 0.0);
}

TEST(Evaluate, EverythingAlerted) {
  auto f = labeled_fixture();
  std::vector<Alert> all;
  for (auto e : f.scored) all.push_back({e, 1, 0, 0});
  auto m = evaluate(all, {}, f.labels, f.identity, f.scored, f.scores);
  EXPECT_EQ(m.recall, 1.0);
  EXPECT_DOUBLE_EQ(m.precision, 3.0 / 8.0);
  EXPECT_EQ(m.benign_alert_rate, 1.0);
}

TEST(Evaluate, StageCoverageFromPaths) {
  auto f = labeled_fixture();
  std::vector<AttackPath> paths = {{{0, 1, 2}, 1.0, 0}, {{6}, 1.0, 0}};
  auto m = evaluate({}, paths, f.labels, f.identity, f.scored, f.scores);
  EXPECT_EQ(m.stages_covered, (std::vector<int>{1, 6}));
  EXPECT_DOUBLE_EQ(m.stage_coverage, 2.0 / 6.0);
}

TEST(Evaluate, CountsOriginalEdgesThroughRemap) {
  // Four original events merged into two reduced edges; only edge 1 is scored.
  const std::vector<std::optional<Label>> labels = {Label::BENIGN, Label::STAGE2, Label::STAGE2, Label::BENIGN};
  const std::vector<EdgeId> remap = {0, 1, 1, 1};
  auto m = evaluate({{1, 3, 1, 0}}, {}, labels, remap, {1}, {3.0});
  EXPECT_EQ(m.tp, 2u);
  EXPECT_EQ(m.fp, 1u);
  EXPECT_EQ(m.tn, 0u);
  EXPECT_DOUBLE_EQ(m.precision, 2.0 / 3.0);
}

TEST(Evaluate, Errors) {
  auto f = labeled_fixture();
  auto missing = f.labels;
  missing[4].reset();
  EXPECT_EQ(error_of([&] { evaluate({}, {}, missing, f.identity, f.scored, f.scores); }), Errc::MissingLabels);
  auto short_map = f.identity;
  short_map.pop_back();
  EXPECT_EQ(error_of([&] { evaluate({}, {}, f.labels, short_map, f.scored, f.scores); }), Errc::ShapeMismatch);
}

TEST(RocAuc, MatchesPairCounting) {
  Rng rng(31);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<double> pos(1 + uniform_index(rng, 30)), neg(1 + uniform_index(rng, 30));
    for (auto& x : pos) x = static_cast<double>(uniform_index(rng, 10));
    for (auto& x : neg) x = static_cast<double>(uniform_index(rng, 10));
    double wins = 0;
    for (double p : pos)
      for (double n : neg) wins += p > n ? 1.0 : p == n ? 0.5 : 0.0;
    auto auc = roc_auc(pos, neg);
    ASSERT_TRUE(auc);
    EXPECT_NEAR(*auc, wins / static_cast<double>(pos.size() * neg.size()), 1e-12);
  }
  EXPECT_FALSE(roc_auc(std::vector<double>{}, std::vector<double>{1.0}));
}

}  // namespace
