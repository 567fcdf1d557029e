#pragma once

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "scg/checkpoint.hpp"
#include "scg/report.hpp"

namespace scg::cli {

inline constexpr std::array<std::string_view, 9> kCommands = {"simgen", "ingest", "build",  "reduce",  "train",
                                                              "detect", "eval",   "export", "pipeline"};

/// 1 for invalid user input (config, flags, data that fails validation),
/// 2 for failures while running.
inline int exit_code_for(Errc c) {
  switch (c) {
    case Errc::ConfigError:
    case Errc::UnknownCommand:
    case Errc::BadConfig:
    case Errc::BadFraction:
    case Errc::BadEpsilon:
    case Errc::MissingLabels: return 1;
    default: return 2;
  }
}

namespace detail {

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, path);
  return in;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::Io, path);
  return out;
}

inline ProvenanceGraph load_graph(const std::string& path) {
  auto in = open_in(path);
  return import_jsonl(in);
}

inline void save_graph(const std::string& path, const ProvenanceGraph& g) {
  auto out = open_out(path);
  export_jsonl(g, out);
}

inline std::vector<NormalizedEvent> load_events(const std::string& path, bool keep_labels) {
  auto in = open_in(path);
  return ingest::read_events_jsonl(in, keep_labels);
}

inline void write_losses(const std::string& path, const std::vector<double>& losses) {
  auto out = open_out(path);
  out << "batch,loss\n";
  for (std::size_t i = 0; i < losses.size(); ++i) out << i << ',' << format_double(losses[i]) << '\n';
}

inline checkpoint::Checkpoint make_checkpoint(const PipelineConfig& cfg, const pipeline::TrainOutcome& t) {
  checkpoint::Checkpoint c;
  c.dims = cfg.model;
  c.params = t.state.params;
  c.adam = t.state.adam;
  c.memory = t.state.memory;
  c.rng = rng_state(t.state.rng);
  c.config = config_to_json(cfg).dump();
  if (!cfg.distrib.enabled) c.progress = t.progress;
  return c;
}

inline pipeline::TrainOutcome outcome_from(const checkpoint::Checkpoint& c) {
  pipeline::TrainOutcome t{{c.params, c.adam, c.memory, rng_from_state(c.rng)}, {}, {}, 0, 0};
  if (c.progress) t.progress = *c.progress;
  return t;
}

inline void check_dims(const PipelineConfig& cfg, const checkpoint::Checkpoint& c) {
  if (!(cfg.model == c.dims)) throw Error(Errc::ConfigError, "model dims differ from checkpoint");
}

/// Union of the path subgraphs, as a DOT edge subset.
inline std::vector<EdgeId> path_edges(const std::vector<detect::AttackPath>& paths) {
  std::vector<EdgeId> out;
  for (const auto& p : paths) out.insert(out.end(), p.edges.begin(), p.edges.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  report::ojson laps = report::ojson::object();
  void lap(const char* name) {
    const auto now = std::chrono::steady_clock::now();
    laps[name] = std::chrono::duration<double>(now - start).count();
    start = now;
  }
};

}  // namespace detail

struct Options {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  bool strict = false;
  bool keep_labels = false;

  PipelineConfig load() const {
    auto o = overrides;
    if (seed) o.push_back("seed=" + std::to_string(*seed));
    if (strict) o.push_back("ingest.strict=true");
    if (keep_labels) o.push_back("ingest.keep_labels=true");
    return load_config(config_path, o);
  }
};

inline int cmd_simgen(const PipelineConfig& cfg, const std::string& out_path, std::ostream& out) {
  const auto events = simgen::generate(cfg.scenario());
  auto f = detail::open_out(out_path);
  ingest::write_events_jsonl(f, events, true);
  out << events.size() << " events\n";
  return 0;
}

inline int cmd_ingest(const PipelineConfig& cfg, const std::vector<std::string>& inputs, const std::string& out_path,
                      std::ostream& out) {
  std::vector<std::ifstream> files;
  files.reserve(inputs.size());
  std::vector<ingest::Source> sources;
  for (const auto& input : inputs) {
    const auto colon = input.find(':');
    const auto fmt = colon == std::string::npos ? std::nullopt : ingest::parse_format(input.substr(0, colon));
    if (!fmt) throw Error(Errc::ConfigError, "--input expects FORMAT:PATH, got " + input);
    const auto path = input.substr(colon + 1);
    files.push_back(detail::open_in(path));
    sources.push_back({*fmt, path, &files.back()});
  }
  auto res = ingest::ingest_sources(sources, {cfg.ingest.strict, cfg.ingest.keep_labels});
  auto f = detail::open_out(out_path);
  ingest::write_events_jsonl(f, res.events, cfg.ingest.keep_labels);
  report::ojson stats = report::ojson::array();
  for (const auto& s : res.stats) stats.push_back({{"source", s.name}, {"lines", s.lines}, {"parsed", s.parsed}, {"skipped", s.skipped}, {"errors", s.errors}});
  out << stats.dump() << '\n';
  return 0;
}

inline int cmd_build(const PipelineConfig& cfg, const std::string& events_path, const std::string& out_path,
                     std::ostream& out) {
  const auto events = detail::load_events(events_path, false);
  const auto g = build_graph(events, cfg.model.d_f);
  detail::save_graph(out_path, g);
  out << g.num_nodes() << " nodes, " << g.num_edges() << " edges\n";
  return 0;
}

inline int cmd_reduce(const PipelineConfig& cfg, const std::string& graph_path, const std::string& out_path,
                      const std::string& remap_path, std::ostream& out) {
  const auto g = detail::load_graph(graph_path);
  const auto red = reduce::reduce(g, cfg.reduce);
  detail::save_graph(out_path, red.graph);
  if (!remap_path.empty()) {
    auto f = detail::open_out(remap_path);
    reduce::export_remap(red.remap, f);
  }
  out << g.num_edges() << " -> " << red.graph.num_edges() << " edges\n";
  return 0;
}

inline int cmd_train(const PipelineConfig& cfg, const std::string& graph_path, const std::string& ckpt_path,
                     const std::string& resume_path, std::optional<std::size_t> max_batches,
                     const std::string& losses_path, std::ostream& out) {
  const auto g = detail::load_graph(graph_path);
  tgn::Model model(cfg.model, cfg.train.opt.fan_in);
  const auto events = pipeline::edge_range(0, pipeline::train_cut(g, cfg.train.train_fraction));
  std::optional<pipeline::TrainOutcome> resume;
  if (!resume_path.empty()) {
    if (cfg.distrib.enabled) throw Error(Errc::ConfigError, "resume is only supported for sequential training");
    const auto c = checkpoint::load(resume_path);
    detail::check_dims(cfg, c);
    resume = detail::outcome_from(c);
  }
  const auto t = pipeline::train_model(model, g, events, cfg, std::move(resume),
                                       max_batches.value_or(static_cast<std::size_t>(-1)));
  checkpoint::save(ckpt_path, detail::make_checkpoint(cfg, t));
  if (!losses_path.empty()) detail::write_losses(losses_path, t.losses);
  out << t.losses.size() << " batches";
  if (!t.losses.empty()) out << ", last loss " << format_double(t.losses.back());
  out << '\n';
  return 0;
}

inline int cmd_detect(const PipelineConfig& cfg, const std::string& graph_path, const std::string& ckpt_path,
                      const std::string& out_path, std::ostream& out) {
  const auto g = detail::load_graph(graph_path);
  const auto c = checkpoint::load(ckpt_path);
  detail::check_dims(cfg, c);
  tgn::Model model(cfg.model, cfg.train.opt.fan_in);
  const auto d = pipeline::run_detection(model, c.params, g, cfg);
  report::write_json(out_path, report::detections_to_json(d, g));
  out << d.stream.alerts.size() << " alerts, " << d.paths.size() << " paths\n";
  return 0;
}

inline int cmd_eval(const PipelineConfig& cfg, const std::string& det_path, const std::string& events_path,
                    const std::string& remap_path, const std::string& out_path, std::ostream& out) {
  auto din = detail::open_in(det_path);
  const auto dj = nlohmann::json::parse(din, nullptr, false);
  if (dj.is_discarded()) throw Error(Errc::SyntaxError, det_path);
  const auto d = report::detections_from_json(dj);
  const auto events = detail::load_events(events_path, true);
  auto rin = detail::open_in(remap_path);
  const auto remap = reduce::import_remap(rin);
  const auto m = pipeline::evaluate_detection(d, pipeline::labels_of(events), remap);
  report::ReportInput in;
  in.config = &cfg;
  in.counts = {{"events", events.size()}, {"scored_edges", d.stream.scored.size()}};
  in.detections = report::ojson::parse(dj.dump());
  in.metrics = m;
  report::write_report(out_path, in);
  out << report::metrics_to_json(m).dump() << '\n';
  return 0;
}

inline int cmd_export(const std::string& graph_path, const std::string& format, const std::string& det_path,
                      const std::string& out_path) {
  if (format != "jsonl" && format != "dot") throw Error(Errc::ConfigError, "--format must be dot or jsonl");
  const auto g = detail::load_graph(graph_path);
  auto f = detail::open_out(out_path);
  if (format == "jsonl") {
    export_jsonl(g, f);
  } else if (det_path.empty()) {
    export_dot(g, f);
  } else {
    auto din = detail::open_in(det_path);
    const auto d = report::detections_from_json(nlohmann::json::parse(din));
    const auto edges = detail::path_edges(d.paths);
    export_dot(g, f, &edges);
  }
  return 0;
}

/// simgen -> ingest -> build -> reduce -> train -> detect -> eval, writing
/// every intermediate artifact into `dir`.
inline int cmd_pipeline(const PipelineConfig& cfg, const std::string& dir, bool timing, std::ostream& out) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto at = [&](const char* name) { return (fs::path(dir) / name).string(); };
  detail::Timer timer;

  const auto labeled = simgen::generate(cfg.scenario());
  {
    auto f = detail::open_out(at("events.jsonl"));
    ingest::write_events_jsonl(f, labeled, true);
  }
  timer.lap("simgen");
  auto ev_in = detail::open_in(at("events.jsonl"));
  const auto ing = ingest::ingest_sources({{ingest::Format::Jsonl, "events.jsonl", &ev_in}},
                                          {cfg.ingest.strict, cfg.ingest.keep_labels});
  timer.lap("ingest");
  const auto g = build_graph(ing.events, cfg.model.d_f);
  detail::save_graph(at("graph.jsonl"), g);
  timer.lap("build");
  const auto red = reduce::reduce(g, cfg.reduce);
  detail::save_graph(at("reduced.jsonl"), red.graph);
  {
    auto f = detail::open_out(at("remap.jsonl"));
    reduce::export_remap(red.remap, f);
  }
  timer.lap("reduce");
  tgn::Model model(cfg.model, cfg.train.opt.fan_in);
  const auto cut = pipeline::train_cut(red.graph, cfg.train.train_fraction);
  const auto t = pipeline::train_model(model, red.graph, pipeline::edge_range(0, cut), cfg);
  checkpoint::save(at("model.ckpt"), detail::make_checkpoint(cfg, t));
  detail::write_losses(at("losses.csv"), t.losses);
  timer.lap("train");
  const auto d = pipeline::run_detection(model, t.state.params, red.graph, cfg);
  const auto dj = report::detections_to_json(d, red.graph);
  report::write_json(at("detections.json"), dj);
  {
    auto f = detail::open_out(at("paths.dot"));
    const auto edges = detail::path_edges(d.paths);
    export_dot(red.graph, f, &edges);
  }
  timer.lap("detect");
  const auto m = pipeline::evaluate_detection(d, pipeline::labels_of(labeled), red.remap);
  timer.lap("eval");

  report::ReportInput in;
  in.config = &cfg;
  in.counts = {{"events", ing.events.size()},
               {"graph_nodes", g.num_nodes()},
               {"graph_edges", g.num_edges()},
               {"reduced_nodes", red.graph.num_nodes()},
               {"reduced_edges", red.graph.num_edges()},
               {"train_edges", cut},
               {"detect_edges", red.graph.num_edges() - cut},
               {"train_batches", t.losses.size()}};
  in.drops = {{"ingest_skipped", ing.skipped()}, {"distrib_dropped_writes", t.dropped_writes}};
  in.detections = dj;
  in.metrics = m;
  if (timing) in.timing = timer.laps;
  report::write_report(at("report.json"), in);
  out << report::metrics_to_json(m).dump() << '\n';
  return 0;
}

/// Entry point shared by the executable and the tests.
inline int run_command(int argc, const char* const* argv, std::ostream& out = std::cout,
                       std::ostream& err = std::cerr) {
  if (argc >= 2) {
    const std::string_view first = argv[1];
    const bool known = std::find(kCommands.begin(), kCommands.end(), first) != kCommands.end();
    if (!known && !first.starts_with("-")) {
      err << "error: " << Error(Errc::UnknownCommand, std::string(first)).what() << '\n';
      return 1;
    }
  }
  CLI::App app{"Provenance-graph APT detection pipeline", "scg"};
  app.require_subcommand(1);
  Options opt;
  app.add_option("--config", opt.config_path, "pipeline config JSON")->envname("SCG_CONFIG");
  app.add_option("--set", opt.overrides, "override a config field, e.g. train.lr=0.002");
  app.add_option("--seed", opt.seed, "seed for all randomness");
  app.add_flag("--strict", opt.strict, "abort on the first malformed input line");
  app.add_flag("--keep-labels", opt.keep_labels, "keep evaluation labels when ingesting");

  std::string out_path, graph_path, events_path, ckpt_path, resume_path, losses_path, remap_path, det_path, format,
      dir;
  std::vector<std::string> inputs;
  std::optional<std::size_t> max_batches;
  bool timing = false;

  auto* simgen = app.add_subcommand("simgen", "generate a labeled scenario");
  simgen->add_option("--out", out_path, "events jsonl")->required();
  auto* ingest = app.add_subcommand("ingest", "parse and merge log sources");
  ingest->add_option("--input", inputs, "FORMAT:PATH with FORMAT in audit-kv, dns-tsv, jsonl")->required();
  ingest->add_option("--out", out_path, "events jsonl")->required();
  auto* build = app.add_subcommand("build", "build the provenance graph");
  build->add_option("--events", events_path)->required();
  build->add_option("--out", out_path, "graph jsonl")->required();
  auto* reduce = app.add_subcommand("reduce", "deduplicate and cluster the graph");
  reduce->add_option("--graph", graph_path)->required();
  reduce->add_option("--out", out_path, "reduced graph jsonl")->required();
  reduce->add_option("--remap", remap_path, "original-to-reduced id table");
  auto* train = app.add_subcommand("train", "train the temporal model on the training split");
  train->add_option("--graph", graph_path)->required();
  train->add_option("--checkpoint", ckpt_path, "output checkpoint")->required();
  train->add_option("--resume", resume_path, "continue from this checkpoint");
  train->add_option("--max-batches", max_batches, "stop after this many batches");
  train->add_option("--losses", losses_path, "per-batch loss CSV");
  auto* detect = app.add_subcommand("detect", "score the detection split and reconstruct paths");
  detect->add_option("--graph", graph_path)->required();
  detect->add_option("--checkpoint", ckpt_path)->required();
  detect->add_option("--out", out_path, "detections JSON")->required();
  auto* eval = app.add_subcommand("eval", "labeled evaluation of detections");
  eval->add_option("--detections", det_path)->required();
  eval->add_option("--events", events_path, "labeled events jsonl")->required();
  eval->add_option("--remap", remap_path)->required();
  eval->add_option("--out", out_path, "report JSON")->required();
  auto* exp = app.add_subcommand("export", "export a graph as DOT or jsonl");
  exp->add_option("--graph", graph_path)->required();
  exp->add_option("--format", format)->required();
  exp->add_option("--detections", det_path, "restrict DOT output to the reconstructed paths");
  exp->add_option("--out", out_path)->required();
  auto* pipe = app.add_subcommand("pipeline", "run every stage end to end");
  pipe->add_option("--out-dir", dir)->required();
  pipe->add_flag("--timing", timing, "record stage wall-clock times in the report");

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    const auto cfg = opt.load();
    if (simgen->parsed()) return cmd_simgen(cfg, out_path, out);
    if (ingest->parsed()) return cmd_ingest(cfg, inputs, out_path, out);
    if (build->parsed()) return cmd_build(cfg, events_path, out_path, out);
    if (reduce->parsed()) return cmd_reduce(cfg, graph_path, out_path, remap_path, out);
    if (train->parsed()) return cmd_train(cfg, graph_path, ckpt_path, resume_path, max_batches, losses_path, out);
    if (detect->parsed()) return cmd_detect(cfg, graph_path, ckpt_path, out_path, out);
    if (eval->parsed()) return cmd_eval(cfg, det_path, events_path, remap_path, out_path, out);
    if (exp->parsed()) return cmd_export(graph_path, format, det_path, out_path);
    return cmd_pipeline(cfg, dir, timing, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace scg::cli
