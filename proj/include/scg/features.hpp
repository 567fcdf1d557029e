#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "scg/error.hpp"
#include "scg/events.hpp"

namespace scg {

/// 64-bit FNV-1a over raw bytes.
inline constexpr std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

/// Sinusoidal encoding of a non-negative time gap.
/// out[2i] = cos(w_i * dt), out[2i+1] = sin(w_i * dt), w_i = 10000^(-2i/d).
class TimeEncoder {
 public:
  explicit TimeEncoder(std::size_t dim = 16) : dim_(dim) {
    if (dim < 2 || dim % 2 != 0) throw Error(Errc::BadConfig, "time dimension must be even and >= 2");
    freqs_.resize(dim / 2);
    for (std::size_t i = 0; i < freqs_.size(); ++i)
      freqs_[i] = 1.0 / std::pow(10000.0, 2.0 * static_cast<double>(i) / static_cast<double>(dim));
  }

  std::size_t dim() const { return dim_; }
  std::span<const double> frequencies() const { return freqs_; }

  void encode(double dt, std::span<double> out) const {
    if (!(dt >= 0.0) || !std::isfinite(dt)) throw Error(Errc::NegativeDelta, std::to_string(dt));
    for (std::size_t i = 0; i < freqs_.size(); ++i) {
      out[2 * i] = std::cos(freqs_[i] * dt);
      out[2 * i + 1] = std::sin(freqs_[i] * dt);
    }
  }

  std::vector<double> encode(double dt) const {
    std::vector<double> out(dim_);
    encode(dt, out);
    return out;
  }

 private:
  std::size_t dim_;
  std::vector<double> freqs_;
};

/// Signed feature hashing of "kind=..." and "key=value" tokens, L2-normalized.
class HashFeaturizer {
 public:
  explicit HashFeaturizer(std::size_t dim = 32) : dim_(dim) {
    if (dim == 0) throw Error(Errc::BadConfig, "feature dimension must be >= 1");
  }

  std::size_t dim() const { return dim_; }

  void add_token(std::string_view token, std::span<double> acc) const {
    const auto h = fnv1a64(token);
    const double sign = (h >> 63) == 0 ? 1.0 : -1.0;
    acc[h % dim_] += sign;
  }

  std::vector<double> featurize(Action kind, const std::map<std::string, std::string>& attrs) const {
    std::vector<double> v(dim_, 0.0);
    add_token("kind=" + std::string(to_string(kind)), v);
    for (const auto& [k, val] : attrs) add_token(k + "=" + val, v);
    double norm = 0.0;
    for (double x : v) norm += x * x;
    if (norm > 0.0) {
      norm = std::sqrt(norm);
      for (double& x : v) x /= norm;
    }
    return v;
  }

 private:
  std::size_t dim_;
};

}  // namespace scg
