#pragma once

#include <algorithm>
#include <charconv>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "scg/error.hpp"
#include "scg/events.hpp"

namespace scg::ingest {

enum class Format { AuditKv, DnsTsv, Jsonl };

inline std::optional<Format> parse_format(std::string_view s) {
  if (s == "audit-kv") return Format::AuditKv;
  if (s == "dns-tsv") return Format::DnsTsv;
  if (s == "jsonl") return Format::Jsonl;
  return std::nullopt;
}

namespace detail {

inline bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && p == s.data() + s.size() && std::isfinite(out);
}

inline bool parse_u64(std::string_view s, std::uint64_t& out) {
  if (s.empty()) return false;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && p == s.data() + s.size();
}

inline double require_ts(std::string_view s, const char* field) {
  double ts = 0;
  if (!parse_double(s, ts) || ts < 0) throw Error(Errc::BadNumber, field);
  return ts;
}

inline std::uint64_t require_u64(std::string_view s, const char* field) {
  std::uint64_t v = 0;
  if (!parse_u64(s, v)) throw Error(Errc::BadNumber, field);
  return v;
}

/// Splits an audit-kv line into ordered (key, value) pairs.
inline std::vector<std::pair<std::string, std::string>> tokenize_kv(std::string_view line) {
  std::vector<std::pair<std::string, std::string>> out;
  std::size_t i = 0;
  const std::size_t n = line.size();
  while (i < n) {
    while (i < n && line[i] == ' ') ++i;
    if (i >= n) break;
    const std::size_t start = i;
    while (i < n && line[i] != '=' && line[i] != ' ') ++i;
    if (i >= n || line[i] != '=' || i == start) {
      while (i < n && line[i] != ' ') ++i;
      throw Error(Errc::MalformedToken, std::string(line.substr(start, i - start)));
    }
    std::string key(line.substr(start, i - start));
    ++i;  // '='
    std::string value;
    if (i < n && line[i] == '"') {
      auto close = line.find('"', i + 1);
      if (close == std::string_view::npos)
        throw Error(Errc::MalformedQuote, std::string(line.substr(start)));
      value = std::string(line.substr(i + 1, close - i - 1));
      i = close + 1;
      if (i < n && line[i] != ' ') {
        auto end = line.find(' ', i);
        throw Error(Errc::MalformedQuote, std::string(line.substr(start, end == std::string_view::npos ? n - start : end - start)));
      }
    } else {
      const std::size_t vstart = i;
      while (i < n && line[i] != ' ') ++i;
      value = std::string(line.substr(vstart, i - vstart));
      if (value.find('"') != std::string::npos)
        throw Error(Errc::MalformedQuote, std::string(line.substr(start, i - start)));
    }
    for (const auto& kv : out)
      if (kv.first == key) throw Error(Errc::DuplicateKey, key);
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

}  // namespace detail

/// Parses one `key=value` audit record. Keys not consumed by the action's
/// object mapping are kept verbatim in attrs.
inline NormalizedEvent parse_audit_kv_line(std::string_view line) {
  auto tokens = detail::tokenize_kv(line);
  auto find = [&](std::string_view k) -> const std::string* {
    for (const auto& kv : tokens)
      if (kv.first == k) return &kv.second;
    return nullptr;
  };
  auto need = [&](const char* k) -> const std::string& {
    const auto* v = find(k);
    if (!v) throw Error(Errc::MissingKey, k);
    return *v;
  };

  NormalizedEvent ev;
  ev.ts = detail::require_ts(need("ts"), "ts");
  ev.host = need("host");
  ev.pid = detail::require_u64(need("pid"), "pid");
  ev.exe = need("exe");
  const auto& action = need("action");
  auto a = parse_action(action);
  if (!a) throw Error(Errc::UnknownAction, action);
  ev.action = *a;

  std::vector<std::string_view> consumed = {"ts", "host", "pid", "exe", "action"};
  ev.object.kind = object_kind_for(ev.action);
  switch (ev.object.kind) {
    case ObjectKind::FILE:
      ev.object.key = ev.host + ":" + need("path");
      consumed.push_back("path");
      break;
    case ObjectKind::SOCKET: {
      const auto& daddr = need("daddr");
      const auto& dport = need("dport");
      detail::require_u64(dport, "dport");
      ev.object.key = daddr + ":" + dport;
      consumed.insert(consumed.end(), {"daddr", "dport"});
      break;
    }
    case ObjectKind::DOMAIN:
      ev.object.key = need("domain");
      consumed.push_back("domain");
      break;
    case ObjectKind::PACKAGE:
      ev.object.key = need("package");
      consumed.push_back("package");
      break;
    case ObjectKind::PROCESS: {
      const auto& child = need("child_pid");
      detail::require_u64(child, "child_pid");
      ev.object.key = ev.host + ":" + child;
      consumed.push_back("child_pid");
      break;
    }
  }
  if (const auto* l = find("label")) {
    auto lab = parse_label(*l);
    if (!lab) throw Error(Errc::UnknownLabel, *l);
    ev.label = *lab;
    consumed.push_back("label");
  }
  for (const auto& [k, v] : tokens)
    if (std::find(consumed.begin(), consumed.end(), k) == consumed.end()) ev.attrs[k] = v;

  validate_event(ev);
  return ev;
}

/// Parses `ts<TAB>host<TAB>pid<TAB>exe<TAB>query` into a RESOLVE event.
inline NormalizedEvent parse_dns_tsv_line(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    auto tab = line.find('\t', start);
    fields.push_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  if (fields.size() != 5) throw Error(Errc::FieldCount, std::to_string(fields.size()));

  NormalizedEvent ev;
  ev.ts = detail::require_ts(fields[0], "ts");
  if (fields[1].empty()) throw Error(Errc::MissingKey, "host");
  ev.host = std::string(fields[1]);
  ev.pid = detail::require_u64(fields[2], "pid");
  ev.exe = std::string(fields[3]);
  if (ev.exe.empty()) throw Error(Errc::MissingKey, "exe");
  ev.action = Action::RESOLVE;
  ev.object = {ObjectKind::DOMAIN, std::string(fields[4])};
  validate_event(ev);
  return ev;
}

inline nlohmann::ordered_json event_to_json(const NormalizedEvent& ev, bool with_label = true) {
  nlohmann::ordered_json j;
  j["ts"] = ev.ts;
  j["host"] = ev.host;
  j["pid"] = ev.pid;
  j["exe"] = ev.exe;
  j["action"] = std::string(to_string(ev.action));
  j["object"] = {{"kind", std::string(to_string(ev.object.kind))}, {"key", ev.object.key}};
  j["attrs"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : ev.attrs) j["attrs"][k] = v;
  if (with_label && ev.label) j["label"] = std::string(to_string(*ev.label));
  return j;
}

/// Canonical single-line JSON serialization.
inline std::string to_json_line(const NormalizedEvent& ev, bool with_label = true) {
  return event_to_json(ev, with_label).dump();
}

inline NormalizedEvent event_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(Errc::TypeMismatch, "<root>");
  auto need = [&](const char* k) -> const nlohmann::json& {
    auto it = j.find(k);
    if (it == j.end()) throw Error(Errc::MissingKey, k);
    return *it;
  };
  NormalizedEvent ev;
  const auto& ts = need("ts");
  if (!ts.is_number()) throw Error(Errc::TypeMismatch, "ts");
  ev.ts = ts.get<double>();
  if (!std::isfinite(ev.ts) || ev.ts < 0) throw Error(Errc::BadNumber, "ts");
  const auto& host = need("host");
  if (!host.is_string()) throw Error(Errc::TypeMismatch, "host");
  ev.host = host.get<std::string>();
  const auto& pid = need("pid");
  if (!pid.is_number_unsigned()) throw Error(Errc::TypeMismatch, "pid");
  ev.pid = pid.get<std::uint64_t>();
  const auto& exe = need("exe");
  if (!exe.is_string()) throw Error(Errc::TypeMismatch, "exe");
  ev.exe = exe.get<std::string>();
  const auto& action = need("action");
  if (!action.is_string()) throw Error(Errc::TypeMismatch, "action");
  auto a = parse_action(action.get<std::string>());
  if (!a) throw Error(Errc::UnknownAction, action.get<std::string>());
  ev.action = *a;

  const auto& object = need("object");
  if (!object.is_object()) throw Error(Errc::TypeMismatch, "object");
  auto kit = object.find("kind");
  auto keyit = object.find("key");
  if (kit == object.end()) throw Error(Errc::MissingKey, "object.kind");
  if (keyit == object.end()) throw Error(Errc::MissingKey, "object.key");
  if (!kit->is_string()) throw Error(Errc::TypeMismatch, "object.kind");
  if (!keyit->is_string()) throw Error(Errc::TypeMismatch, "object.key");
  auto kind = parse_kind(kit->get<std::string>());
  if (!kind) throw Error(Errc::UnknownKind, kit->get<std::string>());
  ev.object = {*kind, keyit->get<std::string>()};

  if (auto it = j.find("attrs"); it != j.end()) {
    if (!it->is_object()) throw Error(Errc::TypeMismatch, "attrs");
    for (const auto& [k, v] : it->items()) {
      if (!v.is_string()) throw Error(Errc::TypeMismatch, "attrs." + k);
      ev.attrs[k] = v.get<std::string>();
    }
  }
  if (auto it = j.find("label"); it != j.end()) {
    if (!it->is_string()) throw Error(Errc::TypeMismatch, "label");
    auto lab = parse_label(it->get<std::string>());
    if (!lab) throw Error(Errc::UnknownLabel, it->get<std::string>());
    ev.label = *lab;
  }
  validate_event(ev);
  return ev;
}

inline NormalizedEvent parse_json_event_line(std::string_view line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::SyntaxError, std::to_string(e.byte));
  }
  return event_from_json(j);
}

inline NormalizedEvent parse_line(Format f, std::string_view line) {
  switch (f) {
    case Format::AuditKv: return parse_audit_kv_line(line);
    case Format::DnsTsv: return parse_dns_tsv_line(line);
    case Format::Jsonl: return parse_json_event_line(line);
  }
  throw Error(Errc::UnknownCommand, "format");
}

struct Source {
  Format format;
  std::string name;
  std::istream* stream;
};

struct Origin {
  std::size_t source = 0;
  std::size_t line = 0;  // 1-based
};

struct SourceStats {
  std::string name;
  std::size_t lines = 0;
  std::size_t parsed = 0;
  std::size_t skipped = 0;
  std::vector<std::string> errors;  // first few, "line N: Code(detail)"
};

struct IngestOptions {
  bool strict = false;
  bool keep_labels = false;
};

struct IngestResult {
  std::vector<NormalizedEvent> events;
  std::vector<Origin> origins;  // parallel to events
  std::vector<SourceStats> stats;

  std::size_t skipped() const {
    std::size_t s = 0;
    for (const auto& st : stats) s += st.skipped;
    return s;
  }
};

/// Parses every source and merges into one stream ordered by
/// (ts, input index, line number). Blank lines are ignored.
inline IngestResult ingest_sources(const std::vector<Source>& inputs, const IngestOptions& opt = {}) {
  struct Rec {
    NormalizedEvent ev;
    Origin origin;
  };
  std::vector<Rec> recs;
  IngestResult out;
  for (std::size_t si = 0; si < inputs.size(); ++si) {
    const auto& src = inputs[si];
    SourceStats st;
    st.name = src.name;
    if (!src.stream || !*src.stream) throw Error(Errc::Io, src.name);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(*src.stream, line)) {
      ++lineno;
      if (line.empty()) continue;
      ++st.lines;
      try {
        auto ev = parse_line(src.format, line);
        if (!opt.keep_labels) ev.label.reset();
        recs.push_back({std::move(ev), {si, lineno}});
        ++st.parsed;
      } catch (const Error& e) {
        if (opt.strict) throw Error(e.code(), e.detail() + " at " + src.name + ":" + std::to_string(lineno));
        ++st.skipped;
        if (st.errors.size() < 16) st.errors.push_back("line " + std::to_string(lineno) + ": " + e.what());
      }
    }
    if (src.stream->bad()) throw Error(Errc::Io, src.name);
    out.stats.push_back(std::move(st));
  }
  std::stable_sort(recs.begin(), recs.end(), [](const Rec& a, const Rec& b) {
    if (a.ev.ts != b.ev.ts) return a.ev.ts < b.ev.ts;
    if (a.origin.source != b.origin.source) return a.origin.source < b.origin.source;
    return a.origin.line < b.origin.line;
  });
  out.events.reserve(recs.size());
  out.origins.reserve(recs.size());
  for (auto& r : recs) {
    out.events.push_back(std::move(r.ev));
    out.origins.push_back(r.origin);
  }
  return out;
}

/// Reads a canonical jsonl event file (strict).
inline std::vector<NormalizedEvent> read_events_jsonl(std::istream& in, bool keep_labels = true) {
  IngestOptions opt;
  opt.strict = true;
  opt.keep_labels = keep_labels;
  return ingest_sources({{Format::Jsonl, "events", &in}}, opt).events;
}

inline void write_events_jsonl(std::ostream& out, const std::vector<NormalizedEvent>& events,
                               bool with_labels = true) {
  for (const auto& ev : events) out << to_json_line(ev, with_labels) << '\n';
}

}  // namespace scg::ingest
