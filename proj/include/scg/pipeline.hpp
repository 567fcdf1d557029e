#pragma once

#include <span>
#include <vector>

#include "scg/config.hpp"
#include "scg/ingest.hpp"

namespace scg::pipeline {

/// Number of leading (time-ordered) edges that form the training split.
inline std::size_t train_cut(const ProvenanceGraph& g, double fraction) {
  std::vector<EdgeId> ids(g.num_edges());
  for (EdgeId i = 0; i < ids.size(); ++i) ids[i] = i;
  auto [train, rest] = simgen::split_by_time(ids, fraction, [&](EdgeId e) { return g.edge(e).t_first; });
  return train.size();
}

inline std::vector<EdgeId> edge_range(std::size_t begin, std::size_t end) {
  std::vector<EdgeId> ids;
  ids.reserve(end - begin);
  for (auto i = begin; i < end; ++i) ids.push_back(static_cast<EdgeId>(i));
  return ids;
}

struct TrainOutcome {
  tgn::TrainerState state;
  tgn::Progress progress;
  std::vector<double> losses;
  std::size_t dropped_writes = 0;
  std::size_t rounds = 0;
};

/// Sequential training, or simulated distributed training when enabled.
/// `max_batches` interrupts sequential training for checkpoint/resume.
inline TrainOutcome train_model(const tgn::Model& model, const ProvenanceGraph& g, std::span<const EdgeId> events,
                                const PipelineConfig& cfg, std::optional<TrainOutcome> resume = std::nullopt,
                                std::size_t max_batches = static_cast<std::size_t>(-1)) {
  const auto tc = cfg.train_config();
  if (cfg.distrib.enabled) {
    auto r = distrib::train_distributed(model, g, events, tc, cfg.distrib.rounds, cfg.seed);
    TrainOutcome out{tgn::make_trainer_state(model.dims(), g.num_nodes(), cfg.seed), {tc.epochs, 0}, {},
                     r.dropped_writes, r.rounds};
    out.state.params = std::move(r.params);
    out.state.adam = std::move(r.adam);
    out.state.memory = std::move(r.memory);
    for (const auto& h : r.history) out.losses.push_back(h.loss);
    return out;
  }
  TrainOutcome out = resume ? std::move(*resume)
                            : TrainOutcome{tgn::make_trainer_state(model.dims(), g.num_nodes(), cfg.seed), {}, {}, 0, 0};
  tgn::Trainer trainer(g, model, tc);
  auto losses = trainer.run(out.state, out.progress, events, max_batches);
  out.losses.insert(out.losses.end(), losses.begin(), losses.end());
  return out;
}

/// Scores every edge in order from zero memory (score, then update).
inline std::vector<double> replay_scores(const tgn::Model& model, const tgn::Params& params, const ProvenanceGraph& g,
                                         tgn::MemoryState& memory, std::size_t begin, std::size_t end) {
  std::vector<double> scores;
  scores.reserve(end - begin);
  for (auto i = begin; i < end; ++i) {
    const auto& e = g.edge(static_cast<EdgeId>(i));
    scores.push_back(detect::anomaly_score(model, params, g, memory, e.src, e.dst, e.t_first));
    model.update_memory(params, memory, e.src, e.dst, e.t_first, e.feat);
  }
  return scores;
}

/// Benign-only companion scenario scored with the trained model; the
/// detection portion of its stream feeds the threshold calibration.
inline std::vector<double> benign_calibration_scores(const tgn::Model& model, const tgn::Params& params,
                                                     const PipelineConfig& cfg) {
  auto sc = cfg.scenario();
  sc.seed = cfg.seed + 1;
  sc.n_attack_chains = 0;
  auto events = simgen::generate(sc);
  for (auto& e : events) e.label.reset();
  auto g = build_graph(events, cfg.model.d_f);
  auto red = reduce::reduce(g, cfg.reduce);
  const auto cut = train_cut(red.graph, cfg.train.train_fraction);
  tgn::MemoryState mem(red.graph.num_nodes(), cfg.model.d_m);
  replay_scores(model, params, red.graph, mem, 0, cut);
  return replay_scores(model, params, red.graph, mem, cut, red.graph.num_edges());
}

struct Detection {
  detect::Calibration calibration;
  std::size_t cut = 0;
  std::vector<double> scores;  // every edge, training split included
  detect::StreamResult stream;
  std::vector<detect::AttackPath> paths;
};

/// Replays the training split for memory, streams the rest through the
/// (optionally calibrated) threshold, then reconstructs paths.
inline Detection run_detection(const tgn::Model& model, const tgn::Params& params, const ProvenanceGraph& g,
                               const PipelineConfig& cfg) {
  Detection d;
  d.calibration = {cfg.detect.threshold.alpha, cfg.detect.threshold.kappa, 0.0, false};
  if (cfg.detect.calibrate) {
    const auto benign = benign_calibration_scores(model, params, cfg);
    d.calibration = detect::calibrate_threshold(benign, cfg.detect.target_alert_rate, cfg.detect.alpha_grid,
                                                cfg.detect.kappa_grid, cfg.detect.threshold.n_min);
  }
  d.cut = train_cut(g, cfg.train.train_fraction);
  tgn::MemoryState mem(g.num_nodes(), cfg.model.d_m);
  d.scores = replay_scores(model, params, g, mem, 0, d.cut);
  detect::ScoreStream stream({d.calibration.alpha, d.calibration.kappa, cfg.detect.threshold.n_min});
  const auto rest = edge_range(d.cut, g.num_edges());
  d.stream = detect::detect_stream(model, params, g, mem, rest, stream);
  d.scores.insert(d.scores.end(), d.stream.scores.begin(), d.stream.scores.end());
  const auto& scores = d.scores;
  d.paths = detect::reconstruct(g, d.stream.alerts, cfg.detect.recon, [&](EdgeId e) { return scores.at(e); });
  return d;
}

inline std::vector<std::optional<Label>> labels_of(const std::vector<NormalizedEvent>& events) {
  std::vector<std::optional<Label>> out;
  out.reserve(events.size());
  for (const auto& e : events) out.push_back(e.label);
  return out;
}

inline detect::Metrics evaluate_detection(const Detection& d, const std::vector<std::optional<Label>>& labels,
                                          const reduce::Remap& remap) {
  return detect::evaluate(d.stream.alerts, d.paths, labels, remap.edge, d.stream.scored, d.stream.scores);
}

}  // namespace scg::pipeline
