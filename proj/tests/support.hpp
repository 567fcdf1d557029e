#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "scg/error.hpp"
#include "scg/graph.hpp"
#include "scg/rng.hpp"

namespace scg::testing {

inline std::string data_path(const std::string& rel) { return std::string(SCG_TEST_DATA_DIR) + "/" + rel; }

/// Error code thrown by `f`, or nullopt when it returns normally.
template <class F>
std::optional<Errc> error_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

inline NormalizedEvent make_event(double ts, const std::string& host, std::uint64_t pid, Action action,
                                  const std::string& target, const std::string& exe = "/bin/sh") {
  NormalizedEvent ev;
  ev.ts = ts;
  ev.host = host;
  ev.pid = pid;
  ev.exe = exe;
  ev.action = action;
  ev.object.kind = object_kind_for(action);
  switch (ev.object.kind) {
    case ObjectKind::FILE:
    case ObjectKind::PROCESS: ev.object.key = host + ":" + target; break;
    default: ev.object.key = target; break;
  }
  return ev;
}

/// Random event stream over a small universe of processes and objects;
/// timestamps are nondecreasing with frequent ties.
inline std::vector<NormalizedEvent> random_events(Rng& rng, std::size_t n_events, std::size_t n_procs,
                                                  std::size_t n_objects, double max_gap = 5.0) {
  std::vector<NormalizedEvent> out;
  double t = 0;
  for (std::size_t i = 0; i < n_events; ++i) {
    if (uniform01(rng) < 0.8) t += std::floor(uniform(rng, 0, max_gap));
    const auto pid = 100 + uniform_index(rng, n_procs);
    const auto action = kAllActions[uniform_index(rng, kAllActions.size())];
    const auto obj = uniform_index(rng, n_objects);
    std::string target;
    switch (object_kind_for(action)) {
      case ObjectKind::FILE: target = "/f" + std::to_string(obj); break;
      case ObjectKind::SOCKET: target = "10.0.0." + std::to_string(obj) + ":80"; break;
      case ObjectKind::DOMAIN: target = "d" + std::to_string(obj) + ".test"; break;
      case ObjectKind::PACKAGE: target = "pypi:p" + std::to_string(obj); break;
      case ObjectKind::PROCESS: {
        auto child = 100 + uniform_index(rng, n_procs);
        if (child == pid) child = 100 + (child - 100 + 1) % n_procs;
        if (child == pid) child += n_procs;
        target = std::to_string(child);
        break;
      }
    }
    auto ev = make_event(t, "h", pid, action, target);
    if (uniform01(rng) < 0.3) ev.attrs["uid"] = std::to_string(uniform_index(rng, 3));
    out.push_back(std::move(ev));
  }
  return out;
}

}  // namespace scg::testing
