#pragma once

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "scg/continual.hpp"

namespace scg::checkpoint {

inline constexpr std::string_view kMagic = "PTGL0001";
inline constexpr std::string_view kMagicFamily = "PTGL";

/// Everything needed to resume training or run detection.
struct Checkpoint {
  tgn::Dims dims;
  tgn::Params params;
  tgn::AdamState adam;
  tgn::MemoryState memory;
  std::string rng;     // textual engine state
  std::string config;  // JSON text
  std::optional<continual::EwcState> ewc;
  std::optional<tgn::Progress> progress;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

namespace detail {

class Writer {
 public:
  void u32(std::uint32_t v) { put_le(v); }
  void u64(std::uint64_t v) { put_le(v); }
  void f64(double v) { put_le(std::bit_cast<std::uint64_t>(v)); }
  void f64s(const std::vector<double>& v) {
    u64(v.size());
    for (double x : v) f64(x);
  }
  void bytes(std::string_view s) { buf_.append(s); }
  std::string take() { return std::move(buf_); }

 private:
  template <class T>
  void put_le(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  std::string buf_;
};

class Reader {
 public:
  Reader(std::string_view data, std::string section) : data_(data), section_(std::move(section)) {}

  std::uint32_t u32() { return get_le<std::uint32_t>(); }
  std::uint64_t u64() { return get_le<std::uint64_t>(); }
  double f64() { return std::bit_cast<double>(get_le<std::uint64_t>()); }
  std::vector<double> f64s() {
    const auto n = u64();
    if (n > remaining() / 8) truncated();
    std::vector<double> v(n);
    for (auto& x : v) x = f64();
    return v;
  }
  std::string_view bytes(std::uint64_t n) {
    if (n > remaining()) truncated();
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return data_.size() - pos_; }
  void expect_end() const {
    if (remaining() != 0) throw Error(Errc::Truncated, section_ + ": trailing bytes");
  }
  [[noreturn]] void truncated() const { throw Error(Errc::Truncated, section_); }

 private:
  template <class T>
  T get_le() {
    if (remaining() < sizeof(T)) truncated();
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    return v;
  }
  std::string_view data_;
  std::size_t pos_ = 0;
  std::string section_;
};

}  // namespace detail

/// Serializes to the sectioned little-endian format. Section order is fixed,
/// so equal checkpoints produce identical bytes.
inline std::string encode(const Checkpoint& c) {
  using detail::Writer;
  std::vector<std::pair<std::string, std::string>> sections;
  {
    Writer w;
    for (auto d : {c.dims.d_m, c.dims.d_e, c.dims.d_h, c.dims.d_s, c.dims.d_f, c.dims.d_t}) w.u64(d);
    sections.emplace_back("dims", w.take());
  }
  {
    Writer w;
    w.f64s(c.params.data);
    sections.emplace_back("params", w.take());
  }
  {
    Writer w;
    w.u64(c.adam.step);
    w.f64s(c.adam.m);
    w.f64s(c.adam.v);
    sections.emplace_back("adam", w.take());
  }
  {
    Writer w;
    w.u64(c.memory.num_nodes());
    w.u64(c.memory.d_m);
    w.f64s(c.memory.mem);
    w.f64s(c.memory.last_update);
    sections.emplace_back("memory", w.take());
  }
  sections.emplace_back("rng", c.rng);
  sections.emplace_back("config", c.config);
  if (c.ewc) {
    Writer w;
    w.f64(c.ewc->lambda);
    w.f64s(c.ewc->anchor);
    w.f64s(c.ewc->fisher);
    sections.emplace_back("ewc", w.take());
  }
  if (c.progress) {
    Writer w;
    w.u64(c.progress->epoch);
    w.u64(c.progress->next);
    sections.emplace_back("progress", w.take());
  }
  Writer out;
  out.bytes(kMagic);
  out.u32(static_cast<std::uint32_t>(sections.size()));
  for (const auto& [name, payload] : sections) {
    out.u32(static_cast<std::uint32_t>(name.size()));
    out.bytes(name);
    out.u64(payload.size());
    out.bytes(payload);
  }
  return out.take();
}

inline Checkpoint decode(std::string_view data) {
  using detail::Reader;
  if (data.size() < kMagic.size() || data.substr(0, kMagicFamily.size()) != kMagicFamily)
    throw Error(Errc::BadMagic, std::string(data.substr(0, std::min(data.size(), kMagic.size()))));
  if (data.substr(0, kMagic.size()) != kMagic)
    throw Error(Errc::VersionUnsupported, std::string(data.substr(0, kMagic.size())));
  Reader top(data.substr(kMagic.size()), "header");
  const auto count = top.u32();
  Checkpoint c;
  std::set<std::string> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name = std::string(top.bytes(top.u32()));
    Reader r(top.bytes(top.u64()), name);
    if (!seen.insert(name).second) throw Error(Errc::VersionUnsupported, "duplicate section " + name);
    if (name == "dims") {
      c.dims = {r.u64(), r.u64(), r.u64(), r.u64(), r.u64(), r.u64()};
    } else if (name == "params") {
      c.params.data = r.f64s();
    } else if (name == "adam") {
      c.adam.step = r.u64();
      c.adam.m = r.f64s();
      c.adam.v = r.f64s();
    } else if (name == "memory") {
      const auto nodes = r.u64();
      c.memory.d_m = r.u64();
      c.memory.mem = r.f64s();
      c.memory.last_update = r.f64s();
      if (c.memory.last_update.size() != nodes || c.memory.mem.size() != nodes * c.memory.d_m) r.truncated();
    } else if (name == "rng") {
      c.rng = std::string(r.bytes(r.remaining()));
    } else if (name == "config") {
      c.config = std::string(r.bytes(r.remaining()));
    } else if (name == "ewc") {
      continual::EwcState e;
      e.lambda = r.f64();
      e.anchor = r.f64s();
      e.fisher = r.f64s();
      c.ewc = std::move(e);
    } else if (name == "progress") {
      c.progress = tgn::Progress{r.u64(), r.u64()};
    } else {
      throw Error(Errc::VersionUnsupported, "section " + name);
    }
    r.expect_end();
  }
  top.expect_end();
  for (const char* req : {"dims", "params", "adam", "memory", "rng", "config"})
    if (!seen.count(req)) throw Error(Errc::Truncated, std::string(req) + ": missing");

  // Rebind the parameter vector to its layout and check every shape.
  auto values = std::move(c.params.data);
  c.params = tgn::Params(c.dims);
  if (values.size() != c.params.data.size()) throw Error(Errc::Truncated, "params: size");
  c.params.data = std::move(values);
  if (c.adam.m.size() != c.params.data.size() || c.adam.v.size() != c.params.data.size())
    throw Error(Errc::Truncated, "adam: size");
  if (c.memory.d_m != c.dims.d_m) throw Error(Errc::Truncated, "memory: width");
  if (c.ewc && (c.ewc->anchor.size() != c.params.data.size() || c.ewc->fisher.size() != c.params.data.size()))
    throw Error(Errc::Truncated, "ewc: size");
  return c;
}

inline void save(const std::string& path, const Checkpoint& c) {
  const auto bytes = encode(c);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::Io, path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::Io, path);
}

inline Checkpoint load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode(bytes);
}

}  // namespace scg::checkpoint
