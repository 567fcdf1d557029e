#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "scg/error.hpp"
#include "scg/features.hpp"
#include "scg/graph.hpp"
#include "scg/rng.hpp"

namespace scg::tgn {

struct Dims {
  std::size_t d_m = 32;  // memory
  std::size_t d_e = 32;  // embedding
  std::size_t d_h = 32;  // attention
  std::size_t d_s = 64;  // scorer hidden
  std::size_t d_f = 32;  // edge features
  std::size_t d_t = 16;  // time encoding

  std::size_t d_in() const { return d_m + d_f + d_t; }
  friend bool operator==(const Dims&, const Dims&) = default;
};

/// Parameter blocks in their fixed storage (and checkpoint) order.
enum class Block : std::uint8_t { Wq, Wk, Wv, Wo, bo, Wz, Wr, Wh, Uz, Ur, Uh, bz, br, bh, W1, b1, w2, b2 };
inline constexpr std::size_t kNumBlocks = 18;
inline constexpr std::array<std::string_view, kNumBlocks> kBlockNames = {
    "W_q", "W_k", "W_v", "W_o", "b_o", "W_z", "W_r", "W_h", "U_z",
    "U_r", "U_h", "b_z", "b_r", "b_h", "W_1", "b_1", "w_2", "b_2"};

struct Shape {
  std::size_t rows, cols;
  std::size_t size() const { return rows * cols; }
};

class Layout {
 public:
  explicit Layout(const Dims& d) {
    const Shape shapes[kNumBlocks] = {
        {d.d_h, d.d_in()}, {d.d_h, d.d_in()}, {d.d_h, d.d_in()}, {d.d_e, d.d_m + d.d_h}, {d.d_e, 1},
        {d.d_m, d.d_in()}, {d.d_m, d.d_in()}, {d.d_m, d.d_in()}, {d.d_m, d.d_m},         {d.d_m, d.d_m},
        {d.d_m, d.d_m},    {d.d_m, 1},        {d.d_m, 1},        {d.d_m, 1},             {d.d_s, 2 * d.d_e},
        {d.d_s, 1},        {d.d_s, 1},        {1, 1}};
    std::size_t off = 0;
    for (std::size_t i = 0; i < kNumBlocks; ++i) {
      shapes_[i] = shapes[i];
      offsets_[i] = off;
      off += shapes[i].size();
    }
    total_ = off;
  }

  std::size_t offset(Block b) const { return offsets_[static_cast<std::size_t>(b)]; }
  Shape shape(Block b) const { return shapes_[static_cast<std::size_t>(b)]; }
  std::size_t total() const { return total_; }
  bool is_bias(Block b) const { return shape(b).cols == 1; }

 private:
  std::array<Shape, kNumBlocks> shapes_{};
  std::array<std::size_t, kNumBlocks> offsets_{};
  std::size_t total_ = 0;
};

/// Row-major matrix view into a flat parameter or gradient vector.
template <typename T>
struct MatView {
  T* data;
  std::size_t rows, cols;
  T* row(std::size_t r) const { return data + r * cols; }
};

/// All learnable weights stored contiguously in Block order.
struct Params {
  Dims dims;
  Layout layout;
  std::vector<double> data;

  explicit Params(const Dims& d = {}) : dims(d), layout(d), data(layout.total(), 0.0) {}

  MatView<const double> operator[](Block b) const {
    return {data.data() + layout.offset(b), layout.shape(b).rows, layout.shape(b).cols};
  }
  MatView<double> operator[](Block b) {
    return {data.data() + layout.offset(b), layout.shape(b).rows, layout.shape(b).cols};
  }

  friend bool operator==(const Params& a, const Params& b) { return a.dims == b.dims && a.data == b.data; }
};

/// Uniform Glorot initialization for matrices, zero biases.
inline Params init_params(const Dims& dims, std::uint64_t seed) {
  Params p(dims);
  Layout l(dims);
  Rng rng(mix_seed(seed, 0x1417));
  for (std::size_t i = 0; i < kNumBlocks; ++i) {
    const auto b = static_cast<Block>(i);
    if (l.is_bias(b)) continue;
    const auto s = l.shape(b);
    const double limit = std::sqrt(6.0 / static_cast<double>(s.rows + s.cols));
    auto v = p[b];
    for (std::size_t k = 0; k < s.size(); ++k) v.data[k] = uniform(rng, -limit, limit);
  }
  return p;
}

/// Per-node memory vectors and last update times.
struct MemoryState {
  std::size_t d_m = 0;
  std::vector<double> mem;
  std::vector<double> last_update;

  MemoryState() = default;
  MemoryState(std::size_t num_nodes, std::size_t dim) : d_m(dim), mem(num_nodes * dim, 0.0), last_update(num_nodes, 0.0) {}

  std::size_t num_nodes() const { return last_update.size(); }
  std::span<const double> row(NodeId n) const { return {mem.data() + static_cast<std::size_t>(n) * d_m, d_m}; }
  std::span<double> row(NodeId n) { return {mem.data() + static_cast<std::size_t>(n) * d_m, d_m}; }
  void reset() {
    std::fill(mem.begin(), mem.end(), 0.0);
    std::fill(last_update.begin(), last_update.end(), 0.0);
  }

  friend bool operator==(const MemoryState&, const MemoryState&) = default;
};

namespace la {

/// out = W x
inline void matvec(MatView<const double> w, const double* x, double* out) {
  for (std::size_t r = 0; r < w.rows; ++r) {
    const double* row = w.row(r);
    double s = 0.0;
    for (std::size_t c = 0; c < w.cols; ++c) s += row[c] * x[c];
    out[r] = s;
  }
}

/// out += W^T y
inline void matvec_t_add(MatView<const double> w, const double* y, double* out) {
  for (std::size_t r = 0; r < w.rows; ++r) {
    const double* row = w.row(r);
    const double yr = y[r];
    if (yr == 0.0) continue;
    for (std::size_t c = 0; c < w.cols; ++c) out[c] += row[c] * yr;
  }
}

/// G += y x^T
inline void outer_add(MatView<double> g, const double* y, const double* x) {
  for (std::size_t r = 0; r < g.rows; ++r) {
    const double yr = y[r];
    if (yr == 0.0) continue;
    double* row = g.row(r);
    for (std::size_t c = 0; c < g.cols; ++c) row[c] += yr * x[c];
  }
}

inline double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace la

/// Intermediates of one attention embedding, kept for the backward pass.
struct EmbedCache {
  NodeId node = 0;
  double t = 0;
  std::size_t n = 0;       // attended neighbors
  std::vector<double> xu;  // [mem_u; 0; phi(0)]
  std::vector<double> q;
  std::vector<double> x;  // n x d_in
  std::vector<double> k;  // n x d_h
  std::vector<double> v;  // n x d_h
  std::vector<double> a;  // attention weights
  std::vector<double> oin;  // [mem_u; c]
  std::vector<double> z;
  std::vector<double> h;
};

struct ScoreCache {
  std::vector<double> in;  // [h_u; h_v]
  std::vector<double> z1;
  std::vector<double> r;
  double o = 0;
  double p = 0.5;
  bool clamped = false;
};

inline constexpr double kProbFloor = 1e-12;

/// Stateless model evaluation: embeddings, scorer, memory updates.
class Model {
 public:
  explicit Model(const Dims& dims, std::size_t fan_in = 10) : dims_(dims), enc_(dims.d_t), fan_in_(fan_in) {
    if (fan_in == 0) throw Error(Errc::BadConfig, "fan-in k must be >= 1");
  }

  const Dims& dims() const { return dims_; }
  const TimeEncoder& time_encoder() const { return enc_; }
  std::size_t fan_in() const { return fan_in_; }

  /// Temporal attention over the k most recent edges before t.
  void embed(const Params& p, const ProvenanceGraph& g, const MemoryState& memory, NodeId u, double t,
             EmbedCache& c) const {
    if (u >= g.num_nodes() || u >= memory.num_nodes()) throw Error(Errc::UnknownNode, std::to_string(u));
    const auto& d = dims_;
    const std::size_t din = d.d_in();
    const auto nbrs = g.neighbors_before(u, t, fan_in_);
    c.node = u;
    c.t = t;
    c.n = nbrs.size();
    c.xu.assign(din, 0.0);
    std::copy_n(memory.row(u).data(), d.d_m, c.xu.data());
    enc_.encode(0.0, std::span<double>(c.xu.data() + d.d_m + d.d_f, d.d_t));
    c.q.resize(d.d_h);
    la::matvec(p[Block::Wq], c.xu.data(), c.q.data());

    c.x.resize(c.n * din);
    c.k.resize(c.n * d.d_h);
    c.v.resize(c.n * d.d_h);
    c.a.resize(c.n);
    const double scale = 1.0 / std::sqrt(static_cast<double>(d.d_h));
    double amax = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c.n; ++j) {
      const auto& e = g.edge(nbrs[j]);
      double* xj = c.x.data() + j * din;
      const auto peer = g.peer(e, u);
      std::copy_n(memory.row(peer).data(), d.d_m, xj);
      std::copy_n(e.feat.data(), d.d_f, xj + d.d_m);
      enc_.encode(t - e.t_first, std::span<double>(xj + d.d_m + d.d_f, d.d_t));
      la::matvec(p[Block::Wk], xj, c.k.data() + j * d.d_h);
      la::matvec(p[Block::Wv], xj, c.v.data() + j * d.d_h);
      c.a[j] = la::dot(c.q.data(), c.k.data() + j * d.d_h, d.d_h) * scale;
      amax = std::max(amax, c.a[j]);
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < c.n; ++j) {
      c.a[j] = std::exp(c.a[j] - amax);
      sum += c.a[j];
    }
    for (std::size_t j = 0; j < c.n; ++j) c.a[j] /= sum;

    c.oin.assign(d.d_m + d.d_h, 0.0);
    std::copy_n(memory.row(u).data(), d.d_m, c.oin.data());
    double* ctx = c.oin.data() + d.d_m;
    for (std::size_t j = 0; j < c.n; ++j)
      for (std::size_t i = 0; i < d.d_h; ++i) ctx[i] += c.a[j] * c.v[j * d.d_h + i];

    c.z.resize(d.d_e);
    c.h.resize(d.d_e);
    la::matvec(p[Block::Wo], c.oin.data(), c.z.data());
    const auto bo = p[Block::bo];
    for (std::size_t i = 0; i < d.d_e; ++i) {
      c.z[i] += bo.data[i];
      c.h[i] = c.z[i] > 0 ? c.z[i] : 0.0;
    }
  }

  std::vector<double> compute_embedding(const Params& p, const ProvenanceGraph& g, const MemoryState& memory,
                                        NodeId u, double t) const {
    EmbedCache c;
    embed(p, g, memory, u, t, c);
    return c.h;
  }

  /// Accumulates parameter gradients given dL/dh.
  void embed_backward(const Params& p, const EmbedCache& c, const double* dh, Params& grad) const {
    const auto& d = dims_;
    const std::size_t din = d.d_in();
    std::vector<double> dz(d.d_e);
    bool any = false;
    for (std::size_t i = 0; i < d.d_e; ++i) {
      dz[i] = c.z[i] > 0 ? dh[i] : 0.0;
      any = any || dz[i] != 0.0;
    }
    if (!any) return;
    la::outer_add(grad[Block::Wo], dz.data(), c.oin.data());
    auto gbo = grad[Block::bo];
    for (std::size_t i = 0; i < d.d_e; ++i) gbo.data[i] += dz[i];
    if (c.n == 0) return;

    // d(context) = W_o[:, d_m:]^T dz
    std::vector<double> dctx(d.d_h, 0.0);
    const auto wo = p[Block::Wo];
    for (std::size_t r = 0; r < d.d_e; ++r) {
      if (dz[r] == 0.0) continue;
      const double* row = wo.row(r) + d.d_m;
      for (std::size_t i = 0; i < d.d_h; ++i) dctx[i] += row[i] * dz[r];
    }

    std::vector<double> da(c.n);
    std::vector<double> dval(d.d_h);
    auto gwv = grad[Block::Wv];
    double mean_da = 0.0;
    for (std::size_t j = 0; j < c.n; ++j) {
      da[j] = la::dot(dctx.data(), c.v.data() + j * d.d_h, d.d_h);
      mean_da += c.a[j] * da[j];
      for (std::size_t i = 0; i < d.d_h; ++i) dval[i] = c.a[j] * dctx[i];
      la::outer_add(gwv, dval.data(), c.x.data() + j * din);
    }

    const double scale = 1.0 / std::sqrt(static_cast<double>(d.d_h));
    std::vector<double> dq(d.d_h, 0.0);
    std::vector<double> dk(d.d_h);
    auto gwk = grad[Block::Wk];
    for (std::size_t j = 0; j < c.n; ++j) {
      const double ds = c.a[j] * (da[j] - mean_da) * scale;
      if (ds == 0.0) continue;
      const double* kj = c.k.data() + j * d.d_h;
      for (std::size_t i = 0; i < d.d_h; ++i) {
        dq[i] += ds * kj[i];
        dk[i] = ds * c.q[i];
      }
      la::outer_add(gwk, dk.data(), c.x.data() + j * din);
    }
    la::outer_add(grad[Block::Wq], dq.data(), c.xu.data());
  }

  /// Link probability sigma(w2 . relu(W1 [h_u; h_v] + b1) + b2), clamped.
  double score(const Params& p, std::span<const double> hu, std::span<const double> hv, ScoreCache& c) const {
    const auto& d = dims_;
    c.in.resize(2 * d.d_e);
    std::copy(hu.begin(), hu.end(), c.in.begin());
    std::copy(hv.begin(), hv.end(), c.in.begin() + static_cast<std::ptrdiff_t>(d.d_e));
    c.z1.resize(d.d_s);
    c.r.resize(d.d_s);
    la::matvec(p[Block::W1], c.in.data(), c.z1.data());
    const auto b1 = p[Block::b1];
    const auto w2 = p[Block::w2];
    c.o = p[Block::b2].data[0];
    for (std::size_t i = 0; i < d.d_s; ++i) {
      c.z1[i] += b1.data[i];
      c.r[i] = c.z1[i] > 0 ? c.z1[i] : 0.0;
      c.o += w2.data[i] * c.r[i];
    }
    const double s = la::sigmoid(c.o);
    c.clamped = !(s > kProbFloor && s < 1.0 - kProbFloor);
    c.p = std::clamp(s, kProbFloor, 1.0 - kProbFloor);
    return c.p;
  }

  double score_edge(const Params& p, std::span<const double> hu, std::span<const double> hv) const {
    ScoreCache c;
    return score(p, hu, hv, c);
  }

  /// Given dL/do (pre-sigmoid logit), accumulates parameter gradients and
  /// dL/dh_u, dL/dh_v.
  void score_backward(const Params& p, const ScoreCache& c, double dout, double* dhu, double* dhv,
                      Params& grad) const {
    const auto& d = dims_;
    grad[Block::b2].data[0] += dout;
    auto gw2 = grad[Block::w2];
    auto gb1 = grad[Block::b1];
    const auto w2 = p[Block::w2];
    std::vector<double> dz1(d.d_s);
    for (std::size_t i = 0; i < d.d_s; ++i) {
      gw2.data[i] += dout * c.r[i];
      dz1[i] = c.z1[i] > 0 ? dout * w2.data[i] : 0.0;
      gb1.data[i] += dz1[i];
    }
    la::outer_add(grad[Block::W1], dz1.data(), c.in.data());
    std::vector<double> din(2 * d.d_e, 0.0);
    la::matvec_t_add(p[Block::W1], dz1.data(), din.data());
    for (std::size_t i = 0; i < d.d_e; ++i) {
      dhu[i] += din[i];
      dhv[i] += din[d.d_e + i];
    }
  }

  /// GRU memory update for both endpoints from a pre-update snapshot.
  /// Writes to nodes outside `owned` (when given) are dropped and counted.
  std::size_t update_memory(const Params& p, MemoryState& memory, NodeId u, NodeId v, double t,
                            std::span<const double> feat, const std::vector<char>* owned = nullptr) const {
    for (NodeId n : {u, v})
      if (n >= memory.num_nodes()) throw Error(Errc::UnknownNode, std::to_string(n));
    const bool write_u = owned == nullptr || (*owned)[u];
    const bool write_v = owned == nullptr || (*owned)[v];
    // A snapshot row owned elsewhere may already be ahead of t; only rows we write must be monotone.
    for (auto [n, w] : {std::pair{u, write_u}, std::pair{v, write_v}})
      if (w && t < memory.last_update[n]) throw Error(Errc::TimeRegression, std::to_string(n) + "@" + format_double(t));
    std::vector<double> mem_u(memory.row(u).begin(), memory.row(u).end());
    std::vector<double> mem_v(memory.row(v).begin(), memory.row(v).end());
    const double last_u = memory.last_update[u];
    const double last_v = memory.last_update[v];
    std::vector<double> out_u, out_v;
    if (write_u) out_u = gru(p, mem_u, mem_v, feat, t - last_u);
    if (write_v) out_v = gru(p, mem_v, mem_u, feat, t - last_v);
    std::size_t dropped = 0;
    if (write_u) {
      std::copy(out_u.begin(), out_u.end(), memory.row(u).begin());
      memory.last_update[u] = t;
    } else {
      ++dropped;
    }
    if (write_v) {
      std::copy(out_v.begin(), out_v.end(), memory.row(v).begin());
      memory.last_update[v] = t;
    } else if (v != u) {
      ++dropped;
    }
    return dropped;
  }

  /// One GRU step for a node with memory `self` receiving message [peer; f; phi(dt)].
  std::vector<double> gru(const Params& p, std::span<const double> self, std::span<const double> peer,
                          std::span<const double> feat, double dt) const {
    const auto& d = dims_;
    std::vector<double> m(d.d_in());
    std::copy(peer.begin(), peer.end(), m.begin());
    std::copy(feat.begin(), feat.end(), m.begin() + static_cast<std::ptrdiff_t>(d.d_m));
    enc_.encode(dt, std::span<double>(m.data() + d.d_m + d.d_f, d.d_t));

    std::vector<double> z(d.d_m), r(d.d_m), hc(d.d_m), tmp(d.d_m), rm(d.d_m);
    const double* bz = p[Block::bz].data;
    const double* br = p[Block::br].data;
    const double* bh = p[Block::bh].data;
    la::matvec(p[Block::Wz], m.data(), z.data());
    la::matvec(p[Block::Uz], self.data(), tmp.data());
    for (std::size_t i = 0; i < d.d_m; ++i) z[i] = la::sigmoid(z[i] + tmp[i] + bz[i]);
    la::matvec(p[Block::Wr], m.data(), r.data());
    la::matvec(p[Block::Ur], self.data(), tmp.data());
    for (std::size_t i = 0; i < d.d_m; ++i) {
      r[i] = la::sigmoid(r[i] + tmp[i] + br[i]);
      rm[i] = r[i] * self[i];
    }
    la::matvec(p[Block::Wh], m.data(), hc.data());
    la::matvec(p[Block::Uh], rm.data(), tmp.data());
    std::vector<double> out(d.d_m);
    for (std::size_t i = 0; i < d.d_m; ++i) {
      const double cand = std::tanh(hc[i] + tmp[i] + bh[i]);
      out[i] = (1.0 - z[i]) * self[i] + z[i] * cand;
    }
    return out;
  }

 private:
  Dims dims_;
  TimeEncoder enc_;
  std::size_t fan_in_;
};

}  // namespace scg::tgn
