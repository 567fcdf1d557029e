#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "scg/error.hpp"
#include "scg/events.hpp"
#include "scg/features.hpp"

namespace scg {

using NodeId = std::uint32_t;
using EdgeId = std::uint32_t;

struct Node {
  NodeId id = 0;
  ObjectKind kind = ObjectKind::PROCESS;
  std::string key;
  double first_seen = 0.0;
  std::map<std::string, std::string> attrs;

  friend bool operator==(const Node&, const Node&) = default;
};

/// Interaction record; [t_first, t_last] spans `count` merged occurrences.
struct TemporalEdge {
  EdgeId id = 0;
  NodeId src = 0;
  NodeId dst = 0;
  Action kind = Action::EXEC;
  double t_first = 0.0;
  double t_last = 0.0;
  std::uint64_t count = 1;
  std::vector<double> feat;

  friend bool operator==(const TemporalEdge&, const TemporalEdge&) = default;
};

struct AdjEntry {
  EdgeId edge;
  double t_first;
};

/// Shortest round-trip decimal form of a double.
inline std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

inline std::string node_identity(ObjectKind kind, std::string_view key) {
  return std::string(to_string(kind)) + ":" + std::string(key);
}

/// Append-only temporal provenance graph with per-node time-sorted adjacency.
class ProvenanceGraph {
 public:
  explicit ProvenanceGraph(std::size_t feature_dim = 32) : featurizer_(feature_dim) {}

  std::size_t feature_dim() const { return featurizer_.dim(); }
  const HashFeaturizer& featurizer() const { return featurizer_; }

  std::size_t num_nodes() const { return nodes_.size(); }
  std::size_t num_edges() const { return edges_.size(); }
  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<TemporalEdge>& edges() const { return edges_; }

  const Node& node(NodeId id) const {
    if (id >= nodes_.size()) throw Error(Errc::UnknownNode, std::to_string(id));
    return nodes_[id];
  }
  Node& mutable_node(NodeId id) {
    if (id >= nodes_.size()) throw Error(Errc::UnknownNode, std::to_string(id));
    return nodes_[id];
  }
  const TemporalEdge& edge(EdgeId id) const {
    if (id >= edges_.size()) throw Error(Errc::UnknownEdge, std::to_string(id));
    return edges_[id];
  }
  const std::vector<AdjEntry>& adjacency(NodeId id) const {
    if (id >= nodes_.size()) throw Error(Errc::UnknownNode, std::to_string(id));
    return adj_[id];
  }

  std::optional<NodeId> find_node(ObjectKind kind, std::string_view key) const {
    auto it = index_.find(node_identity(kind, key));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  NodeId upsert_node(ObjectKind kind, const std::string& key, double ts) {
    if (!valid_key(kind, key)) throw Error(Errc::BadKey, std::string(to_string(kind)) + "," + key);
    auto ident = node_identity(kind, key);
    if (auto it = index_.find(ident); it != index_.end()) return it->second;
    const auto id = static_cast<NodeId>(nodes_.size());
    nodes_.push_back({id, kind, key, ts, {}});
    adj_.emplace_back();
    index_.emplace(std::move(ident), id);
    return id;
  }

  /// Maps one event onto an information-flow edge (READ and RECV point at
  /// the process) and appends it.
  EdgeId add_event(const NormalizedEvent& ev) {
    if (!edges_.empty() && ev.ts < last_t_) throw Error(Errc::OutOfOrder, format_double(ev.ts));
    if (ev.object.kind != object_kind_for(ev.action)) throw Error(Errc::MappingGap, std::string(to_string(ev.action)));
    const NodeId proc = upsert_node(ObjectKind::PROCESS, ev.process_key(), ev.ts);
    const NodeId obj = upsert_node(ev.object.kind, ev.object.key, ev.ts);
    if (proc == obj) throw Error(Errc::BadKey, "self-" + std::string(to_string(ev.action)) + " " + ev.object.key);
    const bool inbound = ev.action == Action::READ || ev.action == Action::RECV;
    auto attrs = ev.attrs;
    attrs.emplace("exe", ev.exe);
    return append_edge(inbound ? obj : proc, inbound ? proc : obj, ev.action, ev.ts, ev.ts, 1,
                       featurizer_.featurize(ev.action, attrs));
  }

  /// Raw append used by reduction and import; keeps the t_first order.
  EdgeId append_edge(NodeId src, NodeId dst, Action kind, double t_first, double t_last, std::uint64_t count,
                     std::vector<double> feat) {
    if (src >= nodes_.size()) throw Error(Errc::UnknownNode, std::to_string(src));
    if (dst >= nodes_.size()) throw Error(Errc::UnknownNode, std::to_string(dst));
    if (!edges_.empty() && t_first < last_t_) throw Error(Errc::OutOfOrder, format_double(t_first));
    if (t_last < t_first || count == 0 || (count == 1 && t_last != t_first))
      throw Error(Errc::BadConfig, "edge interval");
    if (feat.size() != feature_dim()) throw Error(Errc::ShapeMismatch, "edge feature");
    const auto id = static_cast<EdgeId>(edges_.size());
    edges_.push_back({id, src, dst, kind, t_first, t_last, count, std::move(feat)});
    adj_[src].push_back({id, t_first});
    if (dst != src) adj_[dst].push_back({id, t_first});
    last_t_ = t_first;
    return id;
  }

  /// Up to k incident edges with t_first < t, most recent first (ties: higher id first).
  std::vector<EdgeId> neighbors_before(NodeId node, double t, std::size_t k) const {
    const auto& list = adjacency(node);
    auto end = std::lower_bound(list.begin(), list.end(), t,
                                [](const AdjEntry& e, double tt) { return e.t_first < tt; });
    std::vector<EdgeId> out;
    out.reserve(std::min<std::size_t>(k, static_cast<std::size_t>(end - list.begin())));
    for (auto it = end; it != list.begin() && out.size() < k;) {
      --it;
      out.push_back(it->edge);
    }
    return out;
  }

  /// The node at the other end of an edge.
  NodeId peer(const TemporalEdge& e, NodeId self) const { return e.src == self ? e.dst : e.src; }

  friend bool operator==(const ProvenanceGraph& a, const ProvenanceGraph& b) {
    return a.feature_dim() == b.feature_dim() && a.nodes_ == b.nodes_ && a.edges_ == b.edges_;
  }

 private:
  HashFeaturizer featurizer_;
  std::vector<Node> nodes_;
  std::vector<TemporalEdge> edges_;
  std::vector<std::vector<AdjEntry>> adj_;
  std::unordered_map<std::string, NodeId> index_;
  double last_t_ = 0.0;
};

inline ProvenanceGraph build_graph(const std::vector<NormalizedEvent>& events, std::size_t feature_dim = 32) {
  ProvenanceGraph g(feature_dim);
  for (const auto& ev : events) g.add_event(ev);
  return g;
}

namespace detail {

inline std::string dot_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

}  // namespace detail

/// Graphviz export. `edge_subset`, when given, restricts output to those
/// edges and their endpoints.
inline void export_dot(const ProvenanceGraph& g, std::ostream& out,
                       const std::vector<EdgeId>* edge_subset = nullptr) {
  out << "digraph provenance {\n";
  std::vector<char> node_on(g.num_nodes(), edge_subset == nullptr ? 1 : 0);
  std::vector<EdgeId> edges;
  if (edge_subset) {
    edges = *edge_subset;
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    for (auto e : edges) node_on[g.edge(e).src] = node_on[g.edge(e).dst] = 1;
  } else {
    edges.resize(g.num_edges());
    for (std::size_t i = 0; i < edges.size(); ++i) edges[i] = static_cast<EdgeId>(i);
  }
  for (const auto& n : g.nodes()) {
    if (!node_on[n.id]) continue;
    out << "  n" << n.id << " [label=\"" << detail::dot_escape(std::string(to_string(n.kind)) + ":" + n.key)
        << "\"];\n";
  }
  for (auto id : edges) {
    const auto& e = g.edge(id);
    out << "  n" << e.src << " -> n" << e.dst << " [label=\"" << to_string(e.kind) << "@"
        << format_double(e.t_first) << "\xC3\x97" << e.count << "\"];\n";
  }
  out << "}\n";
}

inline void export_jsonl(const ProvenanceGraph& g, std::ostream& out) {
  nlohmann::ordered_json head;
  head["type"] = "graph";
  head["feature_dim"] = g.feature_dim();
  head["nodes"] = g.num_nodes();
  head["edges"] = g.num_edges();
  out << head.dump() << '\n';
  for (const auto& n : g.nodes()) {
    nlohmann::ordered_json j;
    j["type"] = "node";
    j["id"] = n.id;
    j["kind"] = std::string(to_string(n.kind));
    j["key"] = n.key;
    j["first_seen"] = n.first_seen;
    j["attrs"] = nlohmann::ordered_json::object();
    for (const auto& [k, v] : n.attrs) j["attrs"][k] = v;
    out << j.dump() << '\n';
  }
  for (const auto& e : g.edges()) {
    nlohmann::ordered_json j;
    j["type"] = "edge";
    j["id"] = e.id;
    j["src"] = e.src;
    j["dst"] = e.dst;
    j["kind"] = std::string(to_string(e.kind));
    j["t_first"] = e.t_first;
    j["t_last"] = e.t_last;
    j["count"] = e.count;
    j["feat"] = e.feat;
    out << j.dump() << '\n';
  }
}

inline ProvenanceGraph import_jsonl(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  auto parse = [&](const std::string& l) {
    try {
      return nlohmann::json::parse(l);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(Errc::SyntaxError, "line " + std::to_string(lineno) + " offset " + std::to_string(e.byte));
    }
  };
  if (!std::getline(in, line)) throw Error(Errc::Io, "empty graph file");
  ++lineno;
  auto head = parse(line);
  if (head.value("type", "") != "graph") throw Error(Errc::TypeMismatch, "graph header");
  ProvenanceGraph g(head.at("feature_dim").get<std::size_t>());
  const auto n_nodes = head.at("nodes").get<std::size_t>();
  const auto n_edges = head.at("edges").get<std::size_t>();
  try {
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      auto j = parse(line);
      const auto type = j.at("type").get<std::string>();
      if (type == "node") {
        auto kind = parse_kind(j.at("kind").get<std::string>());
        if (!kind) throw Error(Errc::UnknownKind, j.at("kind").get<std::string>());
        const auto id = g.upsert_node(*kind, j.at("key").get<std::string>(), j.at("first_seen").get<double>());
        if (id != j.at("id").get<NodeId>()) throw Error(Errc::BadKey, "node id " + std::to_string(id));
        for (const auto& [k, v] : j.at("attrs").items()) g.mutable_node(id).attrs[k] = v.get<std::string>();
      } else if (type == "edge") {
        auto kind = parse_action(j.at("kind").get<std::string>());
        if (!kind) throw Error(Errc::UnknownAction, j.at("kind").get<std::string>());
        const auto id = g.append_edge(j.at("src").get<NodeId>(), j.at("dst").get<NodeId>(), *kind,
                                      j.at("t_first").get<double>(), j.at("t_last").get<double>(),
                                      j.at("count").get<std::uint64_t>(), j.at("feat").get<std::vector<double>>());
        if (id != j.at("id").get<EdgeId>()) throw Error(Errc::BadKey, "edge id " + std::to_string(id));
      } else {
        throw Error(Errc::TypeMismatch, "type " + type);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::TypeMismatch, "line " + std::to_string(lineno) + ": " + e.what());
  }
  if (g.num_nodes() != n_nodes || g.num_edges() != n_edges) throw Error(Errc::Truncated, "graph");
  return g;
}

}  // namespace scg
