#pragma once

#include <exception>
#include <optional>
#include <thread>
#include <vector>

#include "scg/train.hpp"

namespace scg::distrib {

struct RoundConfig {
  std::size_t workers = 4;
  std::size_t batches_per_round = 10;
  std::optional<std::size_t> rounds;  // unset: run until every epoch is consumed
  bool threads = true;

  void validate() const {
    if (workers == 0 || batches_per_round == 0) throw Error(Errc::BadConfig, "workers and batches_per_round must be >= 1");
  }
};

/// Owner of a node: FNV-1a of "KIND:key" modulo the worker count.
inline std::size_t owner_of(const Node& n, std::size_t workers) {
  return static_cast<std::size_t>(fnv1a64(node_identity(n.kind, n.key)) % workers);
}

/// Routes each event to the worker owning its source node, preserving order.
inline std::vector<std::vector<EdgeId>> partition_events(const ProvenanceGraph& g, std::span<const EdgeId> events,
                                                         std::size_t workers) {
  std::vector<std::vector<EdgeId>> streams(workers);
  for (auto id : events) streams[owner_of(g.node(g.edge(id).src), workers)].push_back(id);
  return streams;
}

struct Worker {
  std::size_t id = 0;
  tgn::TrainerState state;
  std::vector<char> owned;
  std::vector<EdgeId> stream;
  std::size_t pos = 0;
  std::size_t dropped_writes = 0;

  bool exhausted() const { return pos >= stream.size(); }
};

struct LossRecord {
  std::size_t round = 0;
  std::size_t worker = 0;
  std::size_t batch = 0;
  double loss = 0;
};

/// Runs up to R batches on each worker. Workers share nothing but the
/// read-only graph, so thread scheduling cannot affect results.
inline std::vector<std::vector<double>> run_round(const tgn::Model& model, const ProvenanceGraph& g,
                                                  const tgn::NegativeSampler& sampler, std::vector<Worker>& workers,
                                                  const tgn::TrainConfig& cfg, std::size_t batches, bool threads,
                                                  const tgn::GradientHook& hook = {}) {
  std::vector<std::vector<double>> losses(workers.size());
  std::vector<std::exception_ptr> errors(workers.size());
  auto work = [&](std::size_t w) {
    try {
      auto& wk = workers[w];
      for (std::size_t b = 0; b < batches && !wk.exhausted(); ++b) {
        const auto n = std::min(cfg.batch_size, wk.stream.size() - wk.pos);
        auto r = tgn::train_batch(model, g, sampler, wk.state, std::span<const EdgeId>(wk.stream).subspan(wk.pos, n),
                                  cfg, hook, &wk.owned);
        wk.pos += n;
        wk.dropped_writes += r.dropped_writes;
        losses[w].push_back(r.loss);
      }
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };
  if (threads && workers.size() > 1) {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers.size(); ++w) pool.emplace_back(work, w);
  } else {
    for (std::size_t w = 0; w < workers.size(); ++w) work(w);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return losses;
}

/// Coordinate-wise mean of parameters and Adam moments in worker-id order,
/// broadcast back to every worker.
inline void average_params(std::vector<Worker>& workers) {
  if (workers.size() <= 1) return;
  const double inv = 1.0 / static_cast<double>(workers.size());
  auto avg = [&](auto&& field) {
    auto& first = field(workers[0]);
    std::vector<double> sum = first;
    for (std::size_t w = 1; w < workers.size(); ++w) {
      const auto& x = field(workers[w]);
      for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += x[i];
    }
    for (auto& s : sum) s *= inv;
    for (auto& wk : workers) field(wk) = sum;
  };
  avg([](Worker& w) -> std::vector<double>& { return w.state.params.data; });
  avg([](Worker& w) -> std::vector<double>& { return w.state.adam.m; });
  avg([](Worker& w) -> std::vector<double>& { return w.state.adam.v; });
}

struct DistResult {
  tgn::Params params;
  tgn::AdamState adam;
  tgn::MemoryState memory;
  std::vector<LossRecord> history;
  std::size_t rounds = 0;
  std::size_t dropped_writes = 0;
  std::vector<std::size_t> stream_sizes;
};

/// Partition, then repeat (snapshot refresh, round, barrier, averaging).
/// Memory is reset when every worker has consumed its stream (epoch end).
inline DistResult train_distributed(const tgn::Model& model, const ProvenanceGraph& g, std::span<const EdgeId> events,
                                    const tgn::TrainConfig& cfg, const RoundConfig& rc, std::uint64_t seed,
                                    const tgn::GradientHook& hook = {}) {
  cfg.validate();
  rc.validate();
  const auto W = rc.workers;
  tgn::NegativeSampler sampler(g);
  auto streams = partition_events(g, events, W);

  std::vector<Worker> workers(W);
  const auto init = tgn::init_params(model.dims(), seed);
  tgn::MemoryState global(g.num_nodes(), model.dims().d_m);
  std::vector<std::size_t> owner(g.num_nodes());
  for (const auto& n : g.nodes()) owner[n.id] = owner_of(n, W);
  DistResult res;
  for (std::size_t w = 0; w < W; ++w) {
    auto& wk = workers[w];
    wk.id = w;
    wk.state = {init, tgn::AdamState(init.data.size()), global, Rng(seed ^ w)};
    wk.owned.assign(g.num_nodes(), 0);
    for (std::size_t n = 0; n < g.num_nodes(); ++n) wk.owned[n] = owner[n] == w;
    wk.stream = std::move(streams[w]);
    res.stream_sizes.push_back(wk.stream.size());
  }

  std::size_t epoch = 0;
  const bool any_events = !events.empty();
  while (any_events && epoch < cfg.epochs && (!rc.rounds || res.rounds < *rc.rounds)) {
    for (auto& wk : workers) wk.state.memory = global;
    auto losses = run_round(model, g, sampler, workers, cfg, rc.batches_per_round, rc.threads, hook);
    for (std::size_t w = 0; w < W; ++w)
      for (std::size_t b = 0; b < losses[w].size(); ++b) res.history.push_back({res.rounds, w, b, losses[w][b]});
    average_params(workers);
    for (std::size_t n = 0; n < g.num_nodes(); ++n) {
      const auto& src = workers[owner[n]].state.memory;
      std::copy(src.row(static_cast<NodeId>(n)).begin(), src.row(static_cast<NodeId>(n)).end(),
                global.row(static_cast<NodeId>(n)).begin());
      global.last_update[n] = src.last_update[n];
    }
    ++res.rounds;
    bool done = true;
    for (const auto& wk : workers) done = done && wk.exhausted();
    if (done) {
      ++epoch;
      if (epoch < cfg.epochs) {
        global.reset();
        for (auto& wk : workers) wk.pos = 0;
      }
    }
  }
  res.params = workers[0].state.params;
  res.adam = workers[0].state.adam;
  res.memory = std::move(global);
  for (const auto& wk : workers) res.dropped_writes += wk.dropped_writes;
  return res;
}

}  // namespace scg::distrib
