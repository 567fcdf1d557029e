#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "scg/pipeline.hpp"

namespace scg::report {

using ojson = nlohmann::ordered_json;

inline constexpr std::string_view kVersion = "scg 0.1.0";

inline ojson calibration_to_json(const detect::Calibration& c) {
  return {{"alpha", c.alpha}, {"kappa", c.kappa}, {"alert_rate", c.alert_rate}, {"met_target", c.met_target}};
}

inline ojson edge_detail(const ProvenanceGraph& g, EdgeId id) {
  const auto& e = g.edge(id);
  const auto& s = g.node(e.src);
  const auto& d = g.node(e.dst);
  return {{"id", e.id},
          {"src", node_identity(s.kind, s.key)},
          {"dst", node_identity(d.kind, d.key)},
          {"kind", to_string(e.kind)},
          {"t_first", e.t_first},
          {"t_last", e.t_last},
          {"count", e.count}};
}

/// Detection output, self-contained enough for a later `eval`.
inline ojson detections_to_json(const pipeline::Detection& d, const ProvenanceGraph& g) {
  ojson alerts = ojson::array();
  for (const auto& a : d.stream.alerts) alerts.push_back({{"edge", a.edge}, {"score", a.score}, {"tau", a.tau}, {"ts", a.ts}});
  ojson paths = ojson::array();
  for (const auto& p : d.paths) {
    ojson edges = ojson::array();
    for (auto e : p.edges) edges.push_back(edge_detail(g, e));
    paths.push_back({{"score", p.score}, {"seed_alert", p.seed_alert}, {"edges", std::move(edges)}});
  }
  return {{"calibration", calibration_to_json(d.calibration)},
          {"cut", d.cut},
          {"alerts", std::move(alerts)},
          {"paths", std::move(paths)},
          {"scores", d.scores}};
}

inline pipeline::Detection detections_from_json(const nlohmann::json& j) {
  try {
    pipeline::Detection d;
    const auto& c = j.at("calibration");
    d.calibration = {c.at("alpha").get<double>(), c.at("kappa").get<double>(), c.at("alert_rate").get<double>(),
                     c.at("met_target").get<bool>()};
    d.cut = j.at("cut").get<std::size_t>();
    d.scores = j.at("scores").get<std::vector<double>>();
    if (d.cut > d.scores.size()) throw Error(Errc::ShapeMismatch, "cut beyond scores");
    for (std::size_t i = d.cut; i < d.scores.size(); ++i) {
      d.stream.scored.push_back(static_cast<EdgeId>(i));
      d.stream.scores.push_back(d.scores[i]);
    }
    for (const auto& a : j.at("alerts"))
      d.stream.alerts.push_back({a.at("edge").get<EdgeId>(), a.at("score").get<double>(), a.at("tau").get<double>(),
                                 a.at("ts").get<double>()});
    for (const auto& p : j.at("paths")) {
      detect::AttackPath ap;
      ap.score = p.at("score").get<double>();
      ap.seed_alert = p.at("seed_alert").get<std::size_t>();
      for (const auto& e : p.at("edges")) ap.edges.push_back(e.at("id").get<EdgeId>());
      d.paths.push_back(std::move(ap));
    }
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::TypeMismatch, std::string("detections: ") + e.what());
  }
}

inline ojson metrics_to_json(const detect::Metrics& m) {
  return {{"tp", m.tp},
          {"fp", m.fp},
          {"fn", m.fn},
          {"tn", m.tn},
          {"precision", m.precision},
          {"recall", m.recall},
          {"f1", m.f1},
          {"benign_alert_rate", m.benign_alert_rate},
          {"auc", m.auc ? ojson(*m.auc) : ojson(nullptr)},
          {"stages_covered", m.stages_covered},
          {"stage_coverage", m.stage_coverage}};
}

struct ReportInput {
  const PipelineConfig* config = nullptr;
  ojson counts = ojson::object();
  ojson drops = ojson::object();
  ojson detections = ojson::object();
  std::optional<detect::Metrics> metrics;
  std::optional<ojson> timing;  // wall-clock seconds; omitted for byte-stable reports
};

inline ojson build_report(const ReportInput& in) {
  ojson r;
  r["version"] = kVersion;
  r["seed"] = in.config->seed;
  r["config"] = config_to_json(*in.config);
  r["counts"] = in.counts;
  r["drops"] = in.drops;
  for (const char* key : {"calibration", "alerts", "paths"})
    if (in.detections.contains(key)) r[key] = in.detections.at(key);
  r["metrics"] = in.metrics ? metrics_to_json(*in.metrics) : ojson(nullptr);
  if (in.timing) r["timing"] = *in.timing;
  return r;
}

inline void write_json(const std::string& path, const ojson& j) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::Io, path);
  out << j.dump(2) << '\n';
  if (!out) throw Error(Errc::Io, path);
}

inline void write_report(const std::string& path, const ReportInput& in) { write_json(path, build_report(in)); }

}  // namespace scg::report
