#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "scg/error.hpp"

namespace scg {

enum class Action : std::uint8_t { FORK, EXEC, READ, WRITE, CONNECT, SEND, RECV, RESOLVE, INSTALL, CHMOD };
enum class ObjectKind : std::uint8_t { PROCESS, FILE, SOCKET, DOMAIN, PACKAGE };
enum class Label : std::uint8_t { BENIGN, STAGE1, STAGE2, STAGE3, STAGE4, STAGE5, STAGE6 };

inline constexpr std::array<Action, 10> kAllActions = {
    Action::FORK, Action::EXEC, Action::READ,    Action::WRITE,   Action::CONNECT,
    Action::SEND, Action::RECV, Action::RESOLVE, Action::INSTALL, Action::CHMOD};
inline constexpr std::array<ObjectKind, 5> kAllKinds = {
    ObjectKind::PROCESS, ObjectKind::FILE, ObjectKind::SOCKET, ObjectKind::DOMAIN, ObjectKind::PACKAGE};

inline constexpr std::string_view to_string(Action a) {
  constexpr std::array<std::string_view, 10> names = {"FORK", "EXEC", "READ",    "WRITE",   "CONNECT",
                                                      "SEND", "RECV", "RESOLVE", "INSTALL", "CHMOD"};
  return names[static_cast<std::size_t>(a)];
}

inline constexpr std::string_view to_string(ObjectKind k) {
  constexpr std::array<std::string_view, 5> names = {"PROCESS", "FILE", "SOCKET", "DOMAIN", "PACKAGE"};
  return names[static_cast<std::size_t>(k)];
}

inline constexpr std::string_view to_string(Label l) {
  constexpr std::array<std::string_view, 7> names = {"BENIGN", "STAGE1", "STAGE2", "STAGE3",
                                                     "STAGE4", "STAGE5", "STAGE6"};
  return names[static_cast<std::size_t>(l)];
}

inline std::optional<Action> parse_action(std::string_view s) {
  for (auto a : kAllActions)
    if (to_string(a) == s) return a;
  return std::nullopt;
}

inline std::optional<ObjectKind> parse_kind(std::string_view s) {
  for (auto k : kAllKinds)
    if (to_string(k) == s) return k;
  return std::nullopt;
}

inline std::optional<Label> parse_label(std::string_view s) {
  for (int i = 0; i < 7; ++i)
    if (to_string(static_cast<Label>(i)) == s) return static_cast<Label>(i);
  return std::nullopt;
}

/// Stage number 1..6 for attack labels, 0 for BENIGN.
inline constexpr int stage_of(Label l) { return static_cast<int>(l); }

/// Object kind an action's target must have.
inline constexpr ObjectKind object_kind_for(Action a) {
  switch (a) {
    case Action::FORK: return ObjectKind::PROCESS;
    case Action::EXEC:
    case Action::READ:
    case Action::WRITE:
    case Action::CHMOD: return ObjectKind::FILE;
    case Action::CONNECT:
    case Action::SEND:
    case Action::RECV: return ObjectKind::SOCKET;
    case Action::RESOLVE: return ObjectKind::DOMAIN;
    case Action::INSTALL: return ObjectKind::PACKAGE;
  }
  return ObjectKind::FILE;
}

namespace detail {

inline bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c) != 0; });
}

inline bool has_space(std::string_view s) {
  return std::any_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

}  // namespace detail

/// Checks the key grammar for a kind: FILE host:/path, SOCKET ip:port,
/// DOMAIN name, PACKAGE ecosystem:name, PROCESS host:pid.
inline bool valid_key(ObjectKind kind, std::string_view key) {
  if (key.empty()) return false;
  switch (kind) {
    case ObjectKind::FILE: {
      auto p = key.find(':');
      return p != std::string_view::npos && p > 0 && p + 1 < key.size() && key[p + 1] == '/';
    }
    case ObjectKind::SOCKET: {
      auto p = key.rfind(':');
      return p != std::string_view::npos && p > 0 && detail::all_digits(key.substr(p + 1)) &&
             !detail::has_space(key);
    }
    case ObjectKind::DOMAIN:
      return key.find(':') == std::string_view::npos && !detail::has_space(key);
    case ObjectKind::PACKAGE: {
      auto p = key.find(':');
      return p != std::string_view::npos && p > 0 && p + 1 < key.size() &&
             key.find(':', p + 1) == std::string_view::npos;
    }
    case ObjectKind::PROCESS: {
      auto p = key.rfind(':');
      return p != std::string_view::npos && p > 0 && detail::all_digits(key.substr(p + 1));
    }
  }
  return false;
}

struct ObjectRef {
  ObjectKind kind = ObjectKind::FILE;
  std::string key;

  friend bool operator==(const ObjectRef&, const ObjectRef&) = default;
};

/// One timestamped, typed action by a process on an object.
struct NormalizedEvent {
  double ts = 0.0;
  std::string host;
  Action action = Action::EXEC;
  std::uint64_t pid = 0;
  std::string exe;
  ObjectRef object;
  std::map<std::string, std::string> attrs;
  std::optional<Label> label;  // evaluation only

  std::string process_key() const { return host + ":" + std::to_string(pid); }

  friend bool operator==(const NormalizedEvent&, const NormalizedEvent&) = default;
};

/// Enforces the event invariants shared by all parsers.
inline void validate_event(const NormalizedEvent& ev) {
  if (!std::isfinite(ev.ts) || ev.ts < 0) throw Error(Errc::BadNumber, "ts");
  if (ev.exe.empty()) throw Error(Errc::MissingKey, "exe");
  if (ev.object.kind != object_kind_for(ev.action))
    throw Error(Errc::KindMismatch, std::string(to_string(ev.object.kind)));
  if (!valid_key(ev.object.kind, ev.object.key)) throw Error(Errc::BadKey, ev.object.key);
}

}  // namespace scg
