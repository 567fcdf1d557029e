#pragma once

#include <algorithm>
#include <span>
#include <vector>

#include "scg/simgen.hpp"
#include "scg/train.hpp"

namespace scg::continual {

struct EwcState {
  std::vector<double> anchor;
  std::vector<double> fisher;
  double lambda = 100.0;

  friend bool operator==(const EwcState&, const EwcState&) = default;

  void validate(std::size_t n) const {
    if (anchor.size() != n || fisher.size() != n)
      throw Error(Errc::ShapeMismatch, "ewc state has " + std::to_string(anchor.size()) + "/" +
                                           std::to_string(fisher.size()) + " entries, params " + std::to_string(n));
    if (!(lambda >= 0) || !std::isfinite(lambda)) throw Error(Errc::BadConfig, "continual.lambda must be >= 0");
  }
};

/// Diagonal empirical Fisher: mean over batches of the squared batch-loss
/// gradient. Memory is read, never written; negatives use a private stream.
inline std::vector<double> estimate_fisher(const tgn::Model& model, const tgn::Params& params,
                                           const ProvenanceGraph& g, const tgn::MemoryState& memory,
                                           std::span<const EdgeId> sample, std::size_t n_batches,
                                           std::size_t batch_size, std::size_t negatives, std::uint64_t seed) {
  if (sample.empty() || n_batches == 0 || batch_size == 0)
    throw Error(Errc::EmptySample, std::to_string(sample.size()) + " events, " + std::to_string(n_batches) + " batches");
  tgn::NegativeSampler sampler(g);
  Rng rng(mix_seed(seed, 0xF15E));
  std::vector<double> fisher(params.data.size(), 0.0);
  std::size_t used = 0;
  for (std::size_t i = 0; i < sample.size() && used < n_batches; i += batch_size, ++used) {
    auto batch = sample.subspan(i, std::min(batch_size, sample.size() - i));
    auto plan = tgn::plan_batch(g, batch, sampler, negatives, rng);
    tgn::Params grad(params.dims);
    tgn::batch_loss(model, params, g, memory, plan, &grad);
    for (std::size_t k = 0; k < fisher.size(); ++k) fisher[k] += grad.data[k] * grad.data[k];
  }
  const double inv = 1.0 / static_cast<double>(used);
  for (auto& f : fisher) f *= inv;
  return fisher;
}

/// (lambda/2) * sum_i F_i (theta_i - anchor_i)^2
inline double ewc_penalty(std::span<const double> params, const EwcState& st) {
  st.validate(params.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double d = params[i] - st.anchor[i];
    sum += st.fisher[i] * d * d;
  }
  return 0.5 * st.lambda * sum;
}

/// Adds lambda * F (theta - anchor) to `grad`.
inline void add_penalty_gradient(std::span<const double> params, const EwcState& st, std::span<double> grad) {
  st.validate(params.size());
  if (grad.size() != params.size()) throw Error(Errc::ShapeMismatch, "gradient");
  for (std::size_t i = 0; i < params.size(); ++i) grad[i] += st.lambda * st.fisher[i] * (params[i] - st.anchor[i]);
}

inline tgn::GradientHook penalty_hook(const EwcState& st) {
  return [&st](const tgn::Params& p, tgn::Params& grad) {
    add_penalty_gradient(p.data, st, grad.data);
    return ewc_penalty(p.data, st);
  };
}

struct Phase {
  std::vector<EdgeId> train;
  std::vector<EdgeId> eval;
};

/// Splits time-ordered edges into phases at `boundaries` (by t_first), then
/// each phase into train/eval by time at `train_fraction`.
inline std::vector<Phase> time_phases(const ProvenanceGraph& g, std::span<const double> boundaries,
                                      double train_fraction) {
  std::vector<std::vector<EdgeId>> groups(boundaries.size() + 1);
  for (EdgeId e = 0; e < g.num_edges(); ++e) {
    const double t = g.edge(e).t_first;
    const auto k = static_cast<std::size_t>(std::upper_bound(boundaries.begin(), boundaries.end(), t) -
                                            boundaries.begin());
    groups[k].push_back(e);
  }
  std::vector<Phase> phases;
  for (auto& grp : groups) {
    if (grp.size() < 2) throw Error(Errc::BadConfig, "phase with fewer than two edges");
    auto [train, eval] = simgen::split_by_time(grp, train_fraction, [&](EdgeId e) { return g.edge(e).t_first; });
    phases.push_back({std::move(train), std::move(eval)});
  }
  return phases;
}

struct ContinualConfig {
  double lambda = 100.0;
  std::size_t fisher_batches = 20;
};

struct ContinualResult {
  tgn::TrainerState state;
  EwcState ewc;
  /// eval_loss[i][j]: loss on phase j's eval split after training phase i.
  std::vector<std::vector<double>> eval_loss;
  std::vector<std::vector<double>> train_losses;
};

/// Eval loss of one phase: memory rebuilt by replaying its training split,
/// then scored on its eval split.
inline double phase_eval_loss(const tgn::Model& model, const tgn::Params& params, const ProvenanceGraph& g,
                              const Phase& ph, const tgn::TrainConfig& cfg) {
  tgn::MemoryState mem(g.num_nodes(), model.dims().d_m);
  tgn::apply_memory_updates(model, params, g, mem, ph.train);
  return tgn::evaluate_loss(model, params, g, mem, ph.eval, cfg.batch_size, cfg.negatives, cfg.seed);
}

/// Train phase 0 normally; after each phase re-anchor at the current
/// parameters with a Fisher estimated on that phase, and train later phases
/// with the quadratic penalty added to every batch gradient.
inline ContinualResult train_continual(const tgn::Model& model, const ProvenanceGraph& g,
                                       const std::vector<Phase>& phases, const tgn::TrainConfig& cfg,
                                       const ContinualConfig& cc) {
  if (phases.size() < 2) throw Error(Errc::BadConfig, "continual training needs at least two phases");
  if (!(cc.lambda >= 0)) throw Error(Errc::BadConfig, "continual.lambda must be >= 0");
  tgn::Trainer trainer(g, model, cfg);
  ContinualResult res{tgn::make_trainer_state(model.dims(), g.num_nodes(), cfg.seed), {}, {}, {}};
  res.ewc.lambda = cc.lambda;
  for (std::size_t i = 0; i < phases.size(); ++i) {
    tgn::Progress prog;
    tgn::GradientHook hook;
    if (i > 0 && cc.lambda > 0) hook = penalty_hook(res.ewc);
    res.train_losses.push_back(trainer.run(res.state, prog, phases[i].train, static_cast<std::size_t>(-1), hook));

    std::vector<double> row;
    for (const auto& ph : phases) row.push_back(phase_eval_loss(model, res.state.params, g, ph, cfg));
    res.eval_loss.push_back(std::move(row));

    if (i + 1 < phases.size() && !phases[i].train.empty()) {
      // Fisher taken at the memory reached by replaying this phase.
      tgn::MemoryState mem(g.num_nodes(), model.dims().d_m);
      std::span<const EdgeId> train = phases[i].train;
      const auto warm = train.size() / 2;
      tgn::apply_memory_updates(model, res.state.params, g, mem, train.first(warm));
      res.ewc.anchor = res.state.params.data;
      res.ewc.fisher = estimate_fisher(model, res.state.params, g, mem, train.subspan(warm), cc.fisher_batches,
                                       cfg.batch_size, cfg.negatives, mix_seed(cfg.seed, i));
    }
  }
  return res;
}

}  // namespace scg::continual
