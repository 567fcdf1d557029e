#pragma once

#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "scg/continual.hpp"
#include "scg/detect.hpp"
#include "scg/distrib.hpp"
#include "scg/reduce.hpp"
#include "scg/simgen.hpp"

namespace scg {

struct IngestSection {
  bool strict = false;
  bool keep_labels = false;
};

struct TrainSection {
  tgn::TrainConfig opt{.epochs = 2};
  double train_fraction = 0.7;
};

struct DistribSection {
  bool enabled = false;
  distrib::RoundConfig rounds;
};

struct DetectSection {
  detect::ThresholdConfig threshold;
  bool calibrate = true;
  double target_alert_rate = 0.01;
  std::vector<double> alpha_grid = {0.005, 0.01, 0.02, 0.05};
  std::vector<double> kappa_grid = {1.0, 1.25, 1.5, 1.75, 2.0, 2.25, 2.5, 2.75, 3.0, 3.5, 4.0, 4.5, 5.0, 5.5, 6.0};
  detect::ReconConfig recon{.max_fanout = 8, .max_chains = 256};
};

/// Every tunable of the pipeline. A single seed drives all randomness.
struct PipelineConfig {
  std::uint64_t seed = 42;
  IngestSection ingest;
  reduce::ReduceConfig reduce;
  tgn::Dims model;
  TrainSection train;
  DistribSection distrib;
  DetectSection detect;
  continual::ContinualConfig continual;
  simgen::ScenarioConfig simgen;

  tgn::TrainConfig train_config() const {
    auto c = train.opt;
    c.seed = seed;
    return c;
  }
  simgen::ScenarioConfig scenario() const {
    auto s = simgen;
    s.seed = seed;
    return s;
  }

  void validate() const {
    train.opt.validate();
    if (!(train.train_fraction > 0 && train.train_fraction < 1))
      throw Error(Errc::ConfigError, "train.train_fraction must be in (0,1)");
    if (!(reduce.window > 0)) throw Error(Errc::ConfigError, "reduce.window must be > 0");
    if (model.d_t < 2 || model.d_t % 2 != 0) throw Error(Errc::ConfigError, "model.d_t must be even and >= 2");
    if (model.d_m == 0 || model.d_e == 0 || model.d_h == 0 || model.d_s == 0 || model.d_f == 0)
      throw Error(Errc::ConfigError, "model dimensions must be >= 1");
    distrib.rounds.validate();
    detect.threshold.validate();
    detect.recon.validate();
    if (detect.alpha_grid.empty() || detect.kappa_grid.empty()) throw Error(Errc::ConfigError, "detect grids empty");
    for (double a : detect.alpha_grid)
      if (!(a > 0 && a < 1)) throw Error(Errc::ConfigError, "detect.alpha_grid entries must be in (0,1)");
    if (!std::is_sorted(detect.kappa_grid.begin(), detect.kappa_grid.end()))
      throw Error(Errc::ConfigError, "detect.kappa_grid must be ascending");
    if (!(continual.lambda >= 0)) throw Error(Errc::ConfigError, "continual.lambda must be >= 0");
    simgen.validate();
  }
};

namespace config_detail {

using nlohmann::json;

/// Reads known keys of one JSON object and rejects the rest.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw Error(Errc::ConfigError, name_ + ": expected object");
  }

  void get(const char* key, bool& out) { read(key, [&](const json& v) { return v.is_boolean() && (out = v.get<bool>(), true); }); }
  void get(const char* key, double& out) {
    read(key, [&](const json& v) { return v.is_number() && (out = v.get<double>(), true); });
  }
  void get(const char* key, std::size_t& out) {
    read(key, [&](const json& v) { return v.is_number_unsigned() && (out = v.get<std::size_t>(), true); });
  }
  void get(const char* key, std::optional<std::size_t>& out) {
    read(key, [&](const json& v) {
      if (v.is_null()) return out.reset(), true;
      return v.is_number_unsigned() && (out = v.get<std::size_t>(), true);
    });
  }
  void get(const char* key, std::vector<double>& out) {
    read(key, [&](const json& v) {
      if (!v.is_array()) return false;
      std::vector<double> tmp;
      for (const auto& x : v) {
        if (!x.is_number()) return false;
        tmp.push_back(x.get<double>());
      }
      out = std::move(tmp);
      return true;
    });
  }
  const json* child(const char* key) {
    if (!j_.contains(key)) return nullptr;
    seen_.insert(key);
    return &j_.at(key);
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw Error(Errc::ConfigError, qualified(it.key()) + ": unknown key");
  }

 private:
  std::string qualified(const std::string& key) const { return name_.empty() ? key : name_ + "." + key; }

  template <class F>
  void read(const char* key, F&& assign) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    if (!assign(j_.at(key))) throw Error(Errc::ConfigError, qualified(key) + ": wrong type");
  }

  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

}  // namespace config_detail

/// Strict parse: unknown keys and wrong types raise ConfigError naming the key.
inline PipelineConfig config_from_json(const nlohmann::json& j) {
  using config_detail::Section;
  PipelineConfig c;
  Section top(j, "");
  std::size_t seed = c.seed;
  top.get("seed", seed);
  c.seed = seed;
  if (auto* s = top.child("ingest")) {
    Section x(*s, "ingest");
    x.get("strict", c.ingest.strict);
    x.get("keep_labels", c.ingest.keep_labels);
    x.finish();
  }
  if (auto* s = top.child("reduce")) {
    Section x(*s, "reduce");
    x.get("window", c.reduce.window);
    x.get("enable_dedup", c.reduce.enable_dedup);
    x.get("enable_cluster", c.reduce.enable_cluster);
    x.finish();
  }
  if (auto* s = top.child("model")) {
    Section x(*s, "model");
    x.get("d_m", c.model.d_m);
    x.get("d_e", c.model.d_e);
    x.get("d_h", c.model.d_h);
    x.get("d_s", c.model.d_s);
    x.get("d_f", c.model.d_f);
    x.get("d_t", c.model.d_t);
    x.finish();
  }
  if (auto* s = top.child("train")) {
    Section x(*s, "train");
    auto& o = c.train.opt;
    x.get("batch_size", o.batch_size);
    x.get("negatives", o.negatives);
    x.get("fan_in", o.fan_in);
    x.get("lr", o.lr);
    x.get("beta1", o.beta1);
    x.get("beta2", o.beta2);
    x.get("eps", o.eps);
    x.get("epochs", o.epochs);
    x.get("train_fraction", c.train.train_fraction);
    x.finish();
  }
  if (auto* s = top.child("distrib")) {
    Section x(*s, "distrib");
    x.get("enabled", c.distrib.enabled);
    x.get("workers", c.distrib.rounds.workers);
    x.get("batches_per_round", c.distrib.rounds.batches_per_round);
    x.get("rounds", c.distrib.rounds.rounds);
    x.get("threads", c.distrib.rounds.threads);
    x.finish();
  }
  if (auto* s = top.child("detect")) {
    Section x(*s, "detect");
    x.get("alpha", c.detect.threshold.alpha);
    x.get("kappa", c.detect.threshold.kappa);
    x.get("n_min", c.detect.threshold.n_min);
    x.get("calibrate", c.detect.calibrate);
    x.get("target_alert_rate", c.detect.target_alert_rate);
    x.get("alpha_grid", c.detect.alpha_grid);
    x.get("kappa_grid", c.detect.kappa_grid);
    x.get("depth", c.detect.recon.depth);
    x.get("back_window", c.detect.recon.back_window);
    x.get("forward_window", c.detect.recon.forward_window);
    x.get("top_k", c.detect.recon.top_k);
    x.get("max_fanout", c.detect.recon.max_fanout);
    x.get("max_chains", c.detect.recon.max_chains);
    x.finish();
  }
  if (auto* s = top.child("continual")) {
    Section x(*s, "continual");
    x.get("lambda", c.continual.lambda);
    x.get("fisher_batches", c.continual.fisher_batches);
    x.finish();
  }
  if (auto* s = top.child("simgen")) {
    Section x(*s, "simgen");
    auto& g = c.simgen;
    x.get("n_hosts", g.n_hosts);
    x.get("duration", g.duration);
    x.get("rate_package_install", g.rate_package_install);
    x.get("rate_build_job", g.rate_build_job);
    x.get("rate_web_activity", g.rate_web_activity);
    x.get("rate_cron", g.rate_cron);
    x.get("n_attack_chains", g.n_attack_chains);
    x.get("phase_b", g.phase_b);
    x.finish();
  }
  top.finish();
  try {
    c.validate();
  } catch (const Error& e) {
    if (e.code() == Errc::ConfigError) throw;
    throw Error(Errc::ConfigError, e.detail());
  }
  return c;
}

inline nlohmann::ordered_json config_to_json(const PipelineConfig& c) {
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  j["ingest"] = {{"strict", c.ingest.strict}, {"keep_labels", c.ingest.keep_labels}};
  j["reduce"] = {{"window", c.reduce.window},
                 {"enable_dedup", c.reduce.enable_dedup},
                 {"enable_cluster", c.reduce.enable_cluster}};
  j["model"] = {{"d_m", c.model.d_m}, {"d_e", c.model.d_e}, {"d_h", c.model.d_h},
                {"d_s", c.model.d_s}, {"d_f", c.model.d_f}, {"d_t", c.model.d_t}};
  const auto& o = c.train.opt;
  j["train"] = {{"batch_size", o.batch_size}, {"negatives", o.negatives}, {"fan_in", o.fan_in},
                {"lr", o.lr},                 {"beta1", o.beta1},         {"beta2", o.beta2},
                {"eps", o.eps},               {"epochs", o.epochs},       {"train_fraction", c.train.train_fraction}};
  const auto& r = c.distrib.rounds;
  j["distrib"] = {{"enabled", c.distrib.enabled},
                  {"workers", r.workers},
                  {"batches_per_round", r.batches_per_round},
                  {"rounds", r.rounds ? nlohmann::ordered_json(*r.rounds) : nlohmann::ordered_json(nullptr)},
                  {"threads", r.threads}};
  const auto& d = c.detect;
  j["detect"] = {{"alpha", d.threshold.alpha},
                 {"kappa", d.threshold.kappa},
                 {"n_min", d.threshold.n_min},
                 {"calibrate", d.calibrate},
                 {"target_alert_rate", d.target_alert_rate},
                 {"alpha_grid", d.alpha_grid},
                 {"kappa_grid", d.kappa_grid},
                 {"depth", d.recon.depth},
                 {"back_window", d.recon.back_window},
                 {"forward_window", d.recon.forward_window},
                 {"top_k", d.recon.top_k},
                 {"max_fanout", d.recon.max_fanout},
                 {"max_chains", d.recon.max_chains}};
  j["continual"] = {{"lambda", c.continual.lambda}, {"fisher_batches", c.continual.fisher_batches}};
  const auto& g = c.simgen;
  j["simgen"] = {{"n_hosts", g.n_hosts},
                 {"duration", g.duration},
                 {"rate_package_install", g.rate_package_install},
                 {"rate_build_job", g.rate_build_job},
                 {"rate_web_activity", g.rate_web_activity},
                 {"rate_cron", g.rate_cron},
                 {"n_attack_chains", g.n_attack_chains},
                 {"phase_b", g.phase_b}};
  return j;
}

/// Applies "section.key=value"; the value is parsed as JSON when possible,
/// otherwise taken as a string.
inline void apply_override(nlohmann::json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw Error(Errc::ConfigError, assignment + ": expected key=value");
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  auto value = nlohmann::json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  nlohmann::json* cur = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const auto part = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw Error(Errc::ConfigError, path + ": empty path segment");
    if (!cur->is_object()) throw Error(Errc::ConfigError, path + ": not an object");
    if (dot == std::string::npos) {
      (*cur)[part] = value;
      return;
    }
    cur = &(*cur)[part];
    if (cur->is_null()) *cur = nlohmann::json::object();
    start = dot + 1;
  }
}

/// Loads a config file (or defaults when `path` is empty), applying overrides.
inline PipelineConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {}) {
  nlohmann::json j = nlohmann::json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::ConfigError, path + ": cannot open");
    j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw Error(Errc::ConfigError, path + ": invalid JSON");
  }
  for (const auto& o : overrides) apply_override(j, o);
  try {
    return config_from_json(j);
  } catch (const Error& e) {
    if (path.empty()) throw;
    throw Error(Errc::ConfigError, path + ": " + e.detail());
  }
}

}  // namespace scg
