#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "scg/model.hpp"

namespace scg::tgn {

struct TrainConfig {
  std::size_t batch_size = 64;
  std::size_t negatives = 1;
  std::size_t fan_in = 10;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t epochs = 1;
  std::uint64_t seed = 0;

  void validate() const {
    if (batch_size == 0 || negatives == 0 || fan_in == 0) throw Error(Errc::BadConfig, "B, Q and k must be >= 1");
    if (!(lr > 0) || !(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1) || !(eps > 0))
      throw Error(Errc::BadConfig, "adam hyperparameters");
  }
};

struct AdamState {
  std::uint64_t step = 0;
  std::vector<double> m;
  std::vector<double> v;

  AdamState() = default;
  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
  friend bool operator==(const AdamState&, const AdamState&) = default;
};

inline void adam_step(Params& params, std::span<const double> grad, AdamState& st, const TrainConfig& cfg) {
  ++st.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < params.data.size(); ++i) {
    const double g = grad[i];
    st.m[i] = cfg.beta1 * st.m[i] + (1.0 - cfg.beta1) * g;
    st.v[i] = cfg.beta2 * st.v[i] + (1.0 - cfg.beta2) * g * g;
    const double mhat = st.m[i] / c1;
    const double vhat = st.v[i] / c2;
    params.data[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

/// Draws negatives uniformly among nodes of the true destination's kind,
/// excluding the destination; falls back to all other nodes when the kind
/// has fewer than two members.
class NegativeSampler {
 public:
  explicit NegativeSampler(const ProvenanceGraph& g) : rank_(g.num_nodes()), total_(g.num_nodes()) {
    for (const auto& n : g.nodes()) {
      auto& list = by_kind_[static_cast<std::size_t>(n.kind)];
      rank_[n.id] = list.size();
      list.push_back(n.id);
      kind_.push_back(n.kind);
    }
  }

  NodeId sample(NodeId v, Rng& rng) const {
    const auto& list = by_kind_[static_cast<std::size_t>(kind_[v])];
    if (list.size() >= 2) {
      auto i = uniform_index(rng, list.size() - 1);
      if (i >= rank_[v]) ++i;
      return list[i];
    }
    if (total_ < 2) throw Error(Errc::EmptySample, "graph has fewer than two nodes");
    auto i = uniform_index(rng, total_ - 1);
    if (i >= v) ++i;
    return static_cast<NodeId>(i);
  }

 private:
  std::array<std::vector<NodeId>, 5> by_kind_;
  std::vector<std::size_t> rank_;
  std::vector<ObjectKind> kind_;
  std::size_t total_;
};

/// One positive edge and its sampled negatives.
struct PlannedEvent {
  EdgeId edge = 0;
  NodeId u = 0, v = 0;
  double t = 0;
  std::vector<NodeId> negatives;
};

using BatchPlan = std::vector<PlannedEvent>;

inline BatchPlan plan_batch(const ProvenanceGraph& g, std::span<const EdgeId> events, const NegativeSampler& sampler,
                            std::size_t q, Rng& rng) {
  BatchPlan plan;
  plan.reserve(events.size());
  for (auto id : events) {
    const auto& e = g.edge(id);
    PlannedEvent pe{id, e.src, e.dst, e.t_first, {}};
    pe.negatives.reserve(q);
    for (std::size_t i = 0; i < q; ++i) pe.negatives.push_back(sampler.sample(e.dst, rng));
    plan.push_back(std::move(pe));
  }
  return plan;
}

/// Mean over the batch of -ln p(u,v) - (1/Q) sum ln(1 - p(u,v')).
/// Memories are constants; when `grad` is non-null it receives dL/dtheta.
inline double batch_loss(const Model& model, const Params& params, const ProvenanceGraph& g,
                         const MemoryState& memory, const BatchPlan& plan, Params* grad) {
  if (plan.empty()) throw Error(Errc::EmptyBatch, "0 events");
  const auto& d = model.dims();
  const double inv_b = 1.0 / static_cast<double>(plan.size());
  double total = 0.0;
  EmbedCache cu, cv;
  std::vector<EmbedCache> cn;
  ScoreCache sc;
  std::vector<double> dhu(d.d_e), dhv(d.d_e);
  for (const auto& ev : plan) {
    model.embed(params, g, memory, ev.u, ev.t, cu);
    model.embed(params, g, memory, ev.v, ev.t, cv);
    const double inv_q = 1.0 / static_cast<double>(ev.negatives.size());
    std::fill(dhu.begin(), dhu.end(), 0.0);

    const double p = model.score(params, cu.h, cv.h, sc);
    double loss = -std::log(p);
    if (grad) {
      std::fill(dhv.begin(), dhv.end(), 0.0);
      const double dout = sc.clamped ? 0.0 : (p - 1.0) * inv_b;
      if (dout != 0.0) {
        model.score_backward(params, sc, dout, dhu.data(), dhv.data(), *grad);
        model.embed_backward(params, cv, dhv.data(), *grad);
      }
    }
    cn.resize(ev.negatives.size());
    for (std::size_t i = 0; i < ev.negatives.size(); ++i) {
      model.embed(params, g, memory, ev.negatives[i], ev.t, cn[i]);
      const double pn = model.score(params, cu.h, cn[i].h, sc);
      loss -= inv_q * std::log(1.0 - pn);
      if (grad) {
        std::fill(dhv.begin(), dhv.end(), 0.0);
        const double dout = sc.clamped ? 0.0 : pn * inv_q * inv_b;
        if (dout != 0.0) {
          model.score_backward(params, sc, dout, dhu.data(), dhv.data(), *grad);
          model.embed_backward(params, cn[i], dhv.data(), *grad);
        }
      }
    }
    if (grad) model.embed_backward(params, cu, dhu.data(), *grad);
    total += loss;
  }
  return total * inv_b;
}

/// Extra gradient term (e.g. a regularizer); adds into grad, returns its value.
using GradientHook = std::function<double(const Params& params, Params& grad)>;

/// Mutable training state for one learner.
struct TrainerState {
  Params params;
  AdamState adam;
  MemoryState memory;
  Rng rng;
};

inline TrainerState make_trainer_state(const Dims& dims, std::size_t num_nodes, std::uint64_t seed) {
  TrainerState st{init_params(dims, seed), {}, MemoryState(num_nodes, dims.d_m), Rng(seed)};
  st.adam = AdamState(st.params.data.size());
  return st;
}

/// Applies the GRU update for every event of a batch in time order.
inline std::size_t apply_memory_updates(const Model& model, const Params& params, const ProvenanceGraph& g,
                                        MemoryState& memory, std::span<const EdgeId> events,
                                        const std::vector<char>* owned = nullptr) {
  std::size_t dropped = 0;
  for (auto id : events) {
    const auto& e = g.edge(id);
    dropped += model.update_memory(params, memory, e.src, e.dst, e.t_first, e.feat, owned);
  }
  return dropped;
}

struct StepResult {
  double loss = 0;
  std::size_t dropped_writes = 0;
};

/// Sample negatives, differentiate, take one Adam step, then advance memory.
/// Returns the pre-step batch loss.
inline StepResult train_batch(const Model& model, const ProvenanceGraph& g, const NegativeSampler& sampler,
                              TrainerState& st, std::span<const EdgeId> events, const TrainConfig& cfg,
                              const GradientHook& hook = {}, const std::vector<char>* owned = nullptr) {
  if (events.empty()) throw Error(Errc::EmptyBatch, "0 events");
  auto plan = plan_batch(g, events, sampler, cfg.negatives, st.rng);
  Params grad(st.params.dims);
  StepResult r;
  r.loss = batch_loss(model, st.params, g, st.memory, plan, &grad);
  if (hook) hook(st.params, grad);
  adam_step(st.params, grad.data, st.adam, cfg);
  r.dropped_writes = apply_memory_updates(model, st.params, g, st.memory, events, owned);
  return r;
}

/// Central-difference check of batch_loss gradients on a random coordinate
/// sample. Relative error uses max(1e-8, |a|+|b|) as denominator.
inline double grad_check(const Model& model, const Params& params, const ProvenanceGraph& g,
                         const MemoryState& memory, const BatchPlan& plan, double eps, Rng& rng,
                         double fraction = 0.05, const std::vector<std::size_t>* coords = nullptr) {
  if (!(eps > 0) || !std::isfinite(eps)) throw Error(Errc::BadEpsilon, format_double(eps));
  Params grad(params.dims);
  batch_loss(model, params, g, memory, plan, &grad);
  std::vector<std::size_t> sample;
  if (coords) {
    sample = *coords;
  } else {
    const std::size_t n = params.data.size();
    const auto want = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n))));
    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = i;
    for (std::size_t i = 0; i < want; ++i) std::swap(all[i], all[i + uniform_index(rng, n - i)]);
    sample.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(want));
  }
  Params probe = params;
  double worst = 0.0;
  for (auto i : sample) {
    const double orig = probe.data[i];
    probe.data[i] = orig + eps;
    const double up = batch_loss(model, probe, g, memory, plan, nullptr);
    probe.data[i] = orig - eps;
    const double down = batch_loss(model, probe, g, memory, plan, nullptr);
    probe.data[i] = orig;
    const double fd = (up - down) / (2.0 * eps);
    const double a = grad.data[i];
    const double rel = std::abs(a - fd) / std::max(1e-8, std::abs(a) + std::abs(fd));
    worst = std::max(worst, rel);
  }
  return worst;
}

/// Position within a multi-epoch pass, for exact resume.
struct Progress {
  std::uint64_t epoch = 0;
  std::uint64_t next = 0;  // index into the training event list
  friend bool operator==(const Progress&, const Progress&) = default;
};

/// Sequential trainer: epochs over a fixed event list, memory reset at each
/// epoch start.
class Trainer {
 public:
  Trainer(const ProvenanceGraph& g, const Model& model, TrainConfig cfg)
      : g_(g), model_(model), cfg_(cfg), sampler_(g) {
    cfg_.validate();
  }

  const NegativeSampler& sampler() const { return sampler_; }
  const TrainConfig& config() const { return cfg_; }

  /// Runs until all epochs finish or `max_batches` batches have run.
  /// Returns per-batch losses.
  std::vector<double> run(TrainerState& st, Progress& prog, std::span<const EdgeId> events,
                          std::size_t max_batches = static_cast<std::size_t>(-1), const GradientHook& hook = {}) const {
    std::vector<double> losses;
    while (prog.epoch < cfg_.epochs && losses.size() < max_batches) {
      if (events.empty()) {
        prog.epoch = cfg_.epochs;
        break;
      }
      if (prog.next == 0) st.memory.reset();
      const auto n = std::min<std::size_t>(cfg_.batch_size, events.size() - prog.next);
      losses.push_back(train_batch(model_, g_, sampler_, st, events.subspan(prog.next, n), cfg_, hook).loss);
      prog.next += n;
      if (prog.next >= events.size()) {
        ++prog.epoch;
        prog.next = 0;
      }
    }
    return losses;
  }

 private:
  const ProvenanceGraph& g_;
  const Model& model_;
  TrainConfig cfg_;
  NegativeSampler sampler_;
};

/// Mean loss over `events` without parameter updates; memory advances
/// batch by batch. Negatives come from a stream derived from `seed`.
inline double evaluate_loss(const Model& model, const Params& params, const ProvenanceGraph& g, MemoryState& memory,
                            std::span<const EdgeId> events, std::size_t batch_size, std::size_t negatives,
                            std::uint64_t seed) {
  if (events.empty()) return 0.0;
  NegativeSampler sampler(g);
  Rng rng(mix_seed(seed, 0xE7A1));
  double sum = 0.0;
  for (std::size_t i = 0; i < events.size(); i += batch_size) {
    const auto n = std::min(batch_size, events.size() - i);
    auto batch = events.subspan(i, n);
    auto plan = plan_batch(g, batch, sampler, negatives, rng);
    sum += batch_loss(model, params, g, memory, plan, nullptr) * static_cast<double>(n);
    apply_memory_updates(model, params, g, memory, batch);
  }
  return sum / static_cast<double>(events.size());
}

}  // namespace scg::tgn
