#pragma once

#include <algorithm>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <queue>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "scg/graph.hpp"
#include "scg/rng.hpp"

namespace scg::reduce {

struct ReduceConfig {
  double window = 60.0;
  bool enable_dedup = true;
  bool enable_cluster = true;
};

/// Original id -> reduced id, for alert back-mapping.
struct Remap {
  std::vector<NodeId> node;
  std::vector<EdgeId> edge;
};

struct Reduced {
  ProvenanceGraph graph;
  Remap remap;
};

namespace detail {

inline ProvenanceGraph copy_nodes(const ProvenanceGraph& g) {
  ProvenanceGraph out(g.feature_dim());
  for (const auto& n : g.nodes()) {
    auto id = out.upsert_node(n.kind, n.key, n.first_seen);
    out.mutable_node(id).attrs = n.attrs;
  }
  return out;
}

struct Run {
  std::vector<EdgeId> members;  // in t_first order
  double t_first = 0, t_last = 0;
};

/// Appends runs in (t_first, first member id) order and fills the edge remap.
inline void emit_runs(const ProvenanceGraph& src, std::vector<Run>& runs, const std::vector<NodeId>& node_map,
                      ProvenanceGraph& out, std::vector<EdgeId>& edge_map) {
  std::sort(runs.begin(), runs.end(), [](const Run& a, const Run& b) {
    return std::tie(a.t_first, a.members.front()) < std::tie(b.t_first, b.members.front());
  });
  edge_map.assign(src.num_edges(), 0);
  for (const auto& r : runs) {
    const auto& first = src.edge(r.members.front());
    std::uint64_t count = 0;
    for (auto m : r.members) count += src.edge(m).count;
    auto id = out.append_edge(node_map[first.src], node_map[first.dst], first.kind, r.t_first, r.t_last, count,
                              first.feat);
    for (auto m : r.members) edge_map[m] = id;
  }
}

/// Out-edges per node (self-loops excluded), sorted by t_first, with the
/// running max of t_last for interval-overlap queries.
class OutIndex {
 public:
  explicit OutIndex(const ProvenanceGraph& g) : t_first_(g.num_nodes()), max_last_(g.num_nodes()) {
    for (const auto& e : g.edges()) {
      if (e.src == e.dst) continue;
      t_first_[e.src].push_back(e.t_first);
      max_last_[e.src].push_back(e.t_last);
    }
    for (auto& v : max_last_)
      for (std::size_t i = 1; i < v.size(); ++i) v[i] = std::max(v[i], v[i - 1]);
  }

  /// True if some out-edge of `node` has an interval meeting [s, e).
  bool overlaps(NodeId node, double s, double e) const {
    if (!(s < e)) return false;
    const auto& tf = t_first_[node];
    auto end = std::lower_bound(tf.begin(), tf.end(), e);  // t_first < e
    if (end == tf.begin()) return false;
    auto idx = static_cast<std::size_t>(end - tf.begin()) - 1;
    if (tf[idx] >= s) return true;  // t_first in [s, e)
    return max_last_[node][idx] >= s;
  }

 private:
  std::vector<std::vector<double>> t_first_;
  std::vector<std::vector<double>> max_last_;
};

}  // namespace detail

/// Merges consecutive (src, dst, kind) repeats whose t_first gaps are within
/// `window`. A run is not extended across a time span in which the
/// destination has another outgoing edge, which keeps forward temporal
/// reachability exact under the interval traversal rule.
inline Reduced dedup_edges(const ProvenanceGraph& g, double window) {
  detail::OutIndex out_index(g);
  std::map<std::tuple<NodeId, NodeId, Action>, std::vector<EdgeId>> groups;
  for (const auto& e : g.edges()) groups[{e.src, e.dst, e.kind}].push_back(e.id);

  std::vector<detail::Run> runs;
  for (const auto& [key, ids] : groups) {
    const NodeId dst = std::get<1>(key);
    const NodeId src = std::get<0>(key);
    detail::Run cur;
    for (auto id : ids) {
      const auto& e = g.edge(id);
      if (!cur.members.empty()) {
        const double prev = g.edge(cur.members.back()).t_first;
        const double new_last = std::max(cur.t_last, e.t_last);
        const bool close = e.t_first - prev <= window;
        const bool blocked = src != dst && out_index.overlaps(dst, cur.t_first, new_last);
        if (close && !blocked) {
          cur.members.push_back(id);
          cur.t_last = new_last;
          continue;
        }
        runs.push_back(std::move(cur));
        cur = {};
      }
      cur.members = {id};
      cur.t_first = e.t_first;
      cur.t_last = e.t_last;
    }
    if (!cur.members.empty()) runs.push_back(std::move(cur));
  }

  Reduced r{detail::copy_nodes(g), {}};
  r.remap.node.resize(g.num_nodes());
  std::iota(r.remap.node.begin(), r.remap.node.end(), NodeId{0});
  detail::emit_runs(g, runs, r.remap.node, r.graph, r.remap.edge);
  return r;
}

inline std::uint64_t member_count(const Node& n) {
  auto it = n.attrs.find("members");
  return it == n.attrs.end() ? 1 : std::stoull(it->second);
}

/// Merges non-process nodes with identical (kind, incident edge multiset)
/// signatures into template nodes; parallel edges that result are merged.
inline Reduced cluster_templates(const ProvenanceGraph& g) {
  using Sig = std::vector<std::tuple<int, int, NodeId>>;  // (edge kind, direction, peer)
  std::vector<Sig> sigs(g.num_nodes());
  for (const auto& e : g.edges()) {
    sigs[e.src].emplace_back(static_cast<int>(e.kind), 0, e.dst);
    if (e.dst != e.src) sigs[e.dst].emplace_back(static_cast<int>(e.kind), 1, e.src);
  }
  std::map<std::pair<ObjectKind, Sig>, NodeId> leader;
  std::vector<NodeId> rep(g.num_nodes());
  std::vector<std::uint64_t> members(g.num_nodes(), 0);
  for (const auto& n : g.nodes()) {
    rep[n.id] = n.id;
    if (n.kind != ObjectKind::PROCESS) {
      auto& s = sigs[n.id];
      std::sort(s.begin(), s.end());
      auto [it, inserted] = leader.try_emplace({n.kind, std::move(s)}, n.id);
      rep[n.id] = it->second;
    }
    members[rep[n.id]] += member_count(n);
  }

  Reduced r{ProvenanceGraph(g.feature_dim()), {}};
  r.remap.node.resize(g.num_nodes());
  for (const auto& n : g.nodes()) {
    if (rep[n.id] != n.id) continue;
    auto id = r.graph.upsert_node(n.kind, n.key, n.first_seen);
    r.graph.mutable_node(id).attrs = n.attrs;
    if (members[n.id] > 1) r.graph.mutable_node(id).attrs["members"] = std::to_string(members[n.id]);
    r.remap.node[n.id] = id;
  }
  for (const auto& n : g.nodes()) r.remap.node[n.id] = r.remap.node[rep[n.id]];

  std::vector<std::size_t> group_size(g.num_nodes(), 0);
  for (const auto& n : g.nodes()) ++group_size[rep[n.id]];
  auto templated = [&](NodeId n) { return group_size[n] > 1; };

  std::map<std::tuple<NodeId, NodeId, Action>, std::size_t> merged;
  std::vector<detail::Run> runs;
  for (const auto& e : g.edges()) {
    const bool parallel_possible = templated(rep[e.src]) || templated(rep[e.dst]);
    if (parallel_possible) {
      auto key = std::make_tuple(rep[e.src], rep[e.dst], e.kind);
      auto [it, inserted] = merged.try_emplace(key, runs.size());
      if (!inserted) {
        auto& run = runs[it->second];
        run.members.push_back(e.id);
        run.t_last = std::max(run.t_last, e.t_last);
        continue;
      }
    }
    runs.push_back({{e.id}, e.t_first, e.t_last});
  }
  detail::emit_runs(g, runs, r.remap.node, r.graph, r.remap.edge);
  return r;
}

/// Composes two remaps: original -> intermediate -> final.
inline Remap compose(const Remap& first, const Remap& second) {
  Remap out;
  out.node.resize(first.node.size());
  out.edge.resize(first.edge.size());
  for (std::size_t i = 0; i < first.node.size(); ++i) out.node[i] = second.node[first.node[i]];
  for (std::size_t i = 0; i < first.edge.size(); ++i) out.edge[i] = second.edge[first.edge[i]];
  return out;
}

inline Reduced reduce(const ProvenanceGraph& g, const ReduceConfig& cfg) {
  if (!(cfg.window > 0)) throw Error(Errc::BadConfig, "reduce.window must be > 0");
  Reduced cur{g, {}};
  cur.remap.node.resize(g.num_nodes());
  cur.remap.edge.resize(g.num_edges());
  std::iota(cur.remap.node.begin(), cur.remap.node.end(), NodeId{0});
  std::iota(cur.remap.edge.begin(), cur.remap.edge.end(), EdgeId{0});
  if (cfg.enable_dedup) {
    auto next = dedup_edges(cur.graph, cfg.window);
    cur = {std::move(next.graph), compose(cur.remap, next.remap)};
  }
  if (cfg.enable_cluster) {
    auto next = cluster_templates(cur.graph);
    cur = {std::move(next.graph), compose(cur.remap, next.remap)};
  }
  return cur;
}

inline void export_remap(const Remap& remap, std::ostream& out) {
  for (std::size_t i = 0; i < remap.node.size(); ++i)
    out << nlohmann::ordered_json{{"type", "node"}, {"orig", i}, {"reduced", remap.node[i]}}.dump() << '\n';
  for (std::size_t i = 0; i < remap.edge.size(); ++i)
    out << nlohmann::ordered_json{{"type", "edge"}, {"orig", i}, {"reduced", remap.edge[i]}}.dump() << '\n';
}

inline Remap import_remap(std::istream& in) {
  Remap r;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw Error(Errc::SyntaxError, "remap");
    auto& vec = j.at("type").get<std::string>() == "node" ? r.node : r.edge;
    const auto orig = j.at("orig").get<std::size_t>();
    if (orig != vec.size()) throw Error(Errc::BadKey, "remap order");
    vec.push_back(j.at("reduced").get<std::uint32_t>());
  }
  return r;
}

/// Earliest arrival times from (source, t_start). A merged edge is usable
/// at arrival a iff t_last >= a and is traversed at max(a, t_first).
inline std::vector<double> earliest_arrival(const ProvenanceGraph& g, NodeId source, double t_start) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> arr(g.num_nodes(), inf);
  std::vector<std::vector<EdgeId>> out(g.num_nodes());
  for (const auto& e : g.edges()) out[e.src].push_back(e.id);
  using Item = std::pair<double, NodeId>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  arr[source] = t_start;
  pq.push({t_start, source});
  while (!pq.empty()) {
    auto [a, u] = pq.top();
    pq.pop();
    if (a > arr[u]) continue;
    for (auto id : out[u]) {
      const auto& e = g.edge(id);
      if (e.t_last < a) continue;
      const double t = std::max(a, e.t_first);
      if (t < arr[e.dst]) {
        arr[e.dst] = t;
        pq.push({t, e.dst});
      }
    }
  }
  return arr;
}

struct ReachMismatch {
  NodeId from = 0, to = 0;
  double t_start = 0;
  bool original = false, reduced = false;
};

struct ReachReport {
  std::size_t trials = 0;
  std::vector<ReachMismatch> mismatches;
  bool preserved() const { return mismatches.empty(); }
};

/// Samples (u, v, t_start) triples and compares forward temporal
/// reachability; `reduced` must come from dedup only (same node ids).
inline ReachReport check_reachability_preserved(const ProvenanceGraph& original, const ProvenanceGraph& reduced,
                                                std::size_t trials, Rng& rng) {
  ReachReport rep;
  if (original.num_nodes() == 0) return rep;
  if (reduced.num_nodes() != original.num_nodes()) throw Error(Errc::ShapeMismatch, "node tables differ");
  double lo = 0, hi = 1;
  if (original.num_edges() > 0) {
    lo = original.edges().front().t_first - 1.0;
    hi = original.edges().back().t_first + 1.0;
  }
  for (std::size_t i = 0; i < trials; ++i) {
    const auto u = static_cast<NodeId>(uniform_index(rng, original.num_nodes()));
    const auto v = static_cast<NodeId>(uniform_index(rng, original.num_nodes()));
    const double t0 = uniform(rng, lo, hi);
    const bool a = std::isfinite(earliest_arrival(original, u, t0)[v]);
    const bool b = std::isfinite(earliest_arrival(reduced, u, t0)[v]);
    ++rep.trials;
    if (a != b) rep.mismatches.push_back({u, v, t0, a, b});
  }
  return rep;
}

}  // namespace scg::reduce
