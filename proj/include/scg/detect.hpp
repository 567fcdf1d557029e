#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <set>
#include <vector>

#include "scg/events.hpp"
#include "scg/model.hpp"

namespace scg::detect {

struct ThresholdConfig {
  double alpha = 0.01;
  double kappa = 3.0;
  std::size_t n_min = 100;

  void validate() const {
    if (!(alpha > 0 && alpha < 1)) throw Error(Errc::BadConfig, "detect.alpha must be in (0,1)");
    if (!(kappa >= 0) || !std::isfinite(kappa)) throw Error(Errc::BadConfig, "detect.kappa");
  }
};

/// Exponentially weighted mean/variance of anomaly scores; the threshold is
/// mu + kappa * sqrt(var), evaluated before the state absorbs the score.
class ScoreStream {
 public:
  explicit ScoreStream(ThresholdConfig cfg = {}) : cfg_(cfg) { cfg_.validate(); }

  struct Decision {
    bool flag = false;
    double tau = std::numeric_limits<double>::infinity();
  };

  Decision observe(double s) {
    if (!std::isfinite(s)) throw Error(Errc::NonFinite, format_double(s));
    if (n_ == 0) {
      mu_ = s;
      var_ = 0.0;
      n_ = 1;
      return {};
    }
    Decision d;
    d.tau = threshold();
    d.flag = n_ >= cfg_.n_min && s > d.tau;
    const double delta = s - mu_;
    mu_ += cfg_.alpha * delta;
    var_ = (1.0 - cfg_.alpha) * (var_ + cfg_.alpha * delta * delta);
    ++n_;
    return d;
  }

  double threshold() const { return mu_ + cfg_.kappa * std::sqrt(var_); }

  std::size_t count() const { return n_; }
  double mean() const { return mu_; }
  double variance() const { return var_; }
  const ThresholdConfig& config() const { return cfg_; }

  /// Test hook: overwrite the running state.
  void set_state(std::size_t n, double mu, double var) {
    n_ = n;
    mu_ = mu;
    var_ = var;
  }

 private:
  ThresholdConfig cfg_;
  std::size_t n_ = 0;
  double mu_ = 0.0;
  double var_ = 0.0;
};

/// Surprise -ln p of an edge under the link scorer at time t.
inline double anomaly_score(const tgn::Model& model, const tgn::Params& params, const ProvenanceGraph& g,
                            const tgn::MemoryState& memory, NodeId u, NodeId v, double t) {
  const auto hu = model.compute_embedding(params, g, memory, u, t);
  const auto hv = model.compute_embedding(params, g, memory, v, t);
  return -std::log(model.score_edge(params, hu, hv));
}

struct Alert {
  EdgeId edge = 0;
  double score = 0;
  double tau = 0;
  double ts = 0;
  friend bool operator==(const Alert&, const Alert&) = default;
};

struct StreamResult {
  std::vector<Alert> alerts;
  std::vector<EdgeId> scored;   // edges in processing order
  std::vector<double> scores;   // parallel to `scored`
};

/// Score each edge, feed the threshold, then advance memory (score before
/// update, so an edge cannot lower its own surprise).
inline StreamResult detect_stream(const tgn::Model& model, const tgn::Params& params, const ProvenanceGraph& g,
                                  tgn::MemoryState& memory, std::span<const EdgeId> edges, ScoreStream& stream) {
  StreamResult out;
  out.scored.reserve(edges.size());
  out.scores.reserve(edges.size());
  for (auto id : edges) {
    const auto& e = g.edge(id);
    const double s = anomaly_score(model, params, g, memory, e.src, e.dst, e.t_first);
    auto d = stream.observe(s);
    if (d.flag) out.alerts.push_back({id, s, d.tau, e.t_first});
    out.scored.push_back(id);
    out.scores.push_back(s);
    model.update_memory(params, memory, e.src, e.dst, e.t_first, e.feat);
  }
  return out;
}

struct Calibration {
  double alpha = 0.01;
  double kappa = 3.0;
  double alert_rate = 0.0;
  bool met_target = false;
};

/// Picks the smallest kappa (over the alpha grid, first match on ties) whose
/// alert rate on a known-benign score sequence is at most `target_rate`.
inline Calibration calibrate_threshold(std::span<const double> benign_scores, double target_rate,
                                       std::span<const double> alphas, std::span<const double> kappas,
                                       std::size_t n_min) {
  Calibration best;
  bool found = false;
  double fallback_rate = std::numeric_limits<double>::infinity();
  for (double a : alphas) {
    for (double k : kappas) {
      ScoreStream st({a, k, n_min});
      std::size_t flags = 0;
      for (double s : benign_scores) flags += st.observe(s).flag ? 1 : 0;
      const double rate =
          benign_scores.empty() ? 0.0 : static_cast<double>(flags) / static_cast<double>(benign_scores.size());
      if (rate <= target_rate) {
        if (!found || k < best.kappa) best = {a, k, rate, true};
        found = true;
        break;  // larger kappas only lower the rate
      }
      if (!found && rate < fallback_rate) {
        fallback_rate = rate;
        best = {a, k, rate, false};
      }
    }
  }
  return best;
}

struct ReconConfig {
  std::size_t depth = 5;
  double back_window = 3600;
  double forward_window = 3600;
  std::size_t top_k = 10;
  std::size_t max_fanout = 0;  // 0: unlimited branching per step
  std::size_t max_chains = 0;  // 0: unlimited chains per side per seed

  void validate() const {
    if (!(back_window > 0) || !(forward_window > 0) || top_k == 0)
      throw Error(Errc::BadConfig, "recon windows and top_k must be positive");
  }
};

struct AttackPath {
  std::vector<EdgeId> edges;
  double score = 0;
  std::size_t seed_alert = 0;
  friend bool operator==(const AttackPath&, const AttackPath&) = default;
};

using ScoreFn = std::function<double(EdgeId)>;

/// Ranking: score desc, length desc, then lexicographically smaller edge ids.
inline bool ranks_before(const AttackPath& a, const AttackPath& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.edges.size() != b.edges.size()) return a.edges.size() > b.edges.size();
  return a.edges < b.edges;
}

namespace detail {

struct Chain {
  std::vector<EdgeId> edges;  // walking away from the seed
  std::vector<NodeId> nodes;  // nodes added by the chain
  double sum = 0;
};

class ChainEnumerator {
 public:
  ChainEnumerator(const ProvenanceGraph& g, const ReconConfig& cfg, const ScoreFn& score)
      : g_(g), cfg_(cfg), score_(score) {}

  /// Backward chains ending at `u`, each edge traversed no later than the next.
  std::vector<Chain> backward(NodeId u, NodeId v, double t) const {
    std::vector<Chain> out;
    Chain cur;
    std::vector<NodeId> visited = {u, v};
    walk(u, t, t, false, cur, visited, out);
    return out;
  }

  std::vector<Chain> forward(NodeId u, NodeId v, double t) const {
    std::vector<Chain> out;
    Chain cur;
    std::vector<NodeId> visited = {u, v};
    walk(v, t, t, true, cur, visited, out);
    return out;
  }

 private:
  bool full(const std::vector<Chain>& out) const { return cfg_.max_chains != 0 && out.size() >= cfg_.max_chains; }

  void walk(NodeId x, double tau, double t, bool fwd, Chain& cur, std::vector<NodeId>& visited,
            std::vector<Chain>& out) const {
    if (full(out)) return;
    out.push_back(cur);
    if (cur.edges.size() >= cfg_.depth) return;
    struct Cand {
      EdgeId id;
      NodeId next;
      double tau;
      double score;
    };
    std::vector<Cand> cands;
    const auto& adj = g_.adjacency(x);
    const double horizon = fwd ? t + cfg_.forward_window : tau;
    auto end = std::upper_bound(adj.begin(), adj.end(), horizon,
                                [](double h, const AdjEntry& a) { return h < a.t_first; });
    for (auto it = adj.begin(); it != end; ++it) {
      const auto& e = g_.edge(it->edge);
      if (e.src == e.dst) continue;
      if (fwd) {
        if (e.src != x || e.t_last < tau) continue;
        const double te = std::max(tau, e.t_first);
        if (te - t > cfg_.forward_window) continue;
        if (std::find(visited.begin(), visited.end(), e.dst) != visited.end()) continue;
        cands.push_back({e.id, e.dst, te, score_(e.id)});
      } else {
        if (e.dst != x || e.t_first > tau) continue;
        const double te = std::min(tau, e.t_last);
        if (t - te > cfg_.back_window) continue;
        if (std::find(visited.begin(), visited.end(), e.src) != visited.end()) continue;
        cands.push_back({e.id, e.src, te, score_(e.id)});
      }
    }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.id < b.id;
    });
    if (cfg_.max_fanout != 0 && cands.size() > cfg_.max_fanout) cands.resize(cfg_.max_fanout);
    for (const auto& c : cands) {
      cur.edges.push_back(c.id);
      cur.nodes.push_back(c.next);
      cur.sum += c.score;
      visited.push_back(c.next);
      walk(c.next, c.tau, t, fwd, cur, visited, out);
      visited.pop_back();
      cur.sum -= c.score;
      cur.nodes.pop_back();
      cur.edges.pop_back();
      if (full(out)) return;
    }
  }

  const ProvenanceGraph& g_;
  const ReconConfig& cfg_;
  const ScoreFn& score_;
};

}  // namespace detail

/// Expands each alerted edge backward from its source and forward from its
/// destination, joins the two sides into simple paths through the seed, and
/// keeps the global top-K by mean member score.
inline std::vector<AttackPath> reconstruct(const ProvenanceGraph& g, const std::vector<Alert>& alerts,
                                           const ReconConfig& cfg, const ScoreFn& score) {
  cfg.validate();
  detail::ChainEnumerator chains(g, cfg, score);
  std::vector<AttackPath> top;
  std::set<std::vector<EdgeId>> seen;
  auto offer = [&](AttackPath&& p) {
    if (top.size() == cfg.top_k && !ranks_before(p, top.back())) return;
    if (seen.count(p.edges)) return;
    auto pos = std::upper_bound(top.begin(), top.end(), p, ranks_before);
    seen.insert(p.edges);
    top.insert(pos, std::move(p));
    if (top.size() > cfg.top_k) {
      seen.erase(top.back().edges);
      top.pop_back();
    }
  };

  for (std::size_t ai = 0; ai < alerts.size(); ++ai) {
    const auto& seed = g.edge(alerts[ai].edge);
    const double seed_score = score(seed.id);
    const double t = seed.t_first;
    auto back = chains.backward(seed.src, seed.dst, t);
    auto fwd = chains.forward(seed.src, seed.dst, t);
    for (const auto& b : back) {
      for (const auto& f : fwd) {
        bool disjoint = true;
        for (auto n : b.nodes)
          if (std::find(f.nodes.begin(), f.nodes.end(), n) != f.nodes.end()) {
            disjoint = false;
            break;
          }
        if (!disjoint) continue;
        const auto len = b.edges.size() + f.edges.size() + 1;
        const double s = (b.sum + seed_score + f.sum) / static_cast<double>(len);
        if (top.size() == cfg.top_k) {
          const auto& worst = top.back();
          if (s < worst.score || (s == worst.score && len < worst.edges.size())) continue;
        }
        AttackPath p;
        p.edges.reserve(len);
        p.edges.assign(b.edges.rbegin(), b.edges.rend());
        p.edges.push_back(seed.id);
        p.edges.insert(p.edges.end(), f.edges.begin(), f.edges.end());
        p.score = s;
        p.seed_alert = ai;
        offer(std::move(p));
      }
    }
  }
  return top;
}

struct Metrics {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  double precision = 1.0;
  double recall = 1.0;
  double f1 = 0.0;
  double benign_alert_rate = 0.0;
  std::optional<double> auc;
  std::vector<int> stages_covered;
  double stage_coverage = 0.0;  // covered / 6
};

/// Area under the ROC curve (Mann-Whitney, ties count one half).
inline std::optional<double> roc_auc(std::span<const double> positive, std::span<const double> negative) {
  if (positive.empty() || negative.empty()) return std::nullopt;
  std::vector<std::pair<double, int>> all;
  all.reserve(positive.size() + negative.size());
  for (double s : positive) all.emplace_back(s, 1);
  for (double s : negative) all.emplace_back(s, 0);
  std::sort(all.begin(), all.end());
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j].first == all[i].first) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k)
      if (all[k].second == 1) rank_sum += avg_rank;
    i = j;
  }
  const double np = static_cast<double>(positive.size());
  const double nn = static_cast<double>(negative.size());
  return (rank_sum - np * (np + 1) / 2.0) / (np * nn);
}

/// Labeled evaluation at original-edge (event) granularity. `labels` is
/// indexed by original edge id; `edge_map` maps original to reduced edges.
/// Only original edges whose reduced edge was scored are counted.
inline Metrics evaluate(const std::vector<Alert>& alerts, const std::vector<AttackPath>& paths,
                        const std::vector<std::optional<Label>>& labels, const std::vector<EdgeId>& edge_map,
                        const std::vector<EdgeId>& scored, const std::vector<double>& scores) {
  if (labels.size() != edge_map.size()) throw Error(Errc::ShapeMismatch, "labels vs remap");
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (!labels[i]) throw Error(Errc::MissingLabels, "edge " + std::to_string(i));

  std::size_t n_reduced = 0;
  for (auto r : edge_map) n_reduced = std::max<std::size_t>(n_reduced, r + 1);
  for (auto r : scored) n_reduced = std::max<std::size_t>(n_reduced, r + 1);
  std::vector<double> score_of(n_reduced, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i = 0; i < scored.size(); ++i) score_of[scored[i]] = scores[i];
  std::vector<char> alerted(n_reduced, 0);
  for (const auto& a : alerts) alerted[a.edge] = 1;
  std::vector<char> on_path(n_reduced, 0);
  for (const auto& p : paths)
    for (auto e : p.edges)
      if (e < n_reduced) on_path[e] = 1;

  Metrics m;
  std::vector<double> pos, neg;
  std::set<int> stages;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto r = edge_map[i];
    if (std::isnan(score_of[r])) continue;
    const bool attack = *labels[i] != Label::BENIGN;
    const bool flagged = alerted[r] != 0;
    if (attack) {
      pos.push_back(score_of[r]);
      (flagged ? m.tp : m.fn)++;
      if (on_path[r]) stages.insert(stage_of(*labels[i]));
    } else {
      neg.push_back(score_of[r]);
      (flagged ? m.fp : m.tn)++;
    }
  }
  m.precision = (m.tp + m.fp) == 0 ? 1.0 : static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp);
  m.recall = (m.tp + m.fn) == 0 ? 1.0 : static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn);
  m.f1 = (m.precision + m.recall) == 0 ? 0.0 : 2 * m.precision * m.recall / (m.precision + m.recall);
  m.benign_alert_rate = (m.fp + m.tn) == 0 ? 0.0 : static_cast<double>(m.fp) / static_cast<double>(m.fp + m.tn);
  m.auc = roc_auc(pos, neg);
  m.stages_covered.assign(stages.begin(), stages.end());
  m.stage_coverage = static_cast<double>(stages.size()) / 6.0;
  return m;
}

}  // namespace scg::detect
