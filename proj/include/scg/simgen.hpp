#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "scg/events.hpp"
#include "scg/features.hpp"
#include "scg/graph.hpp"
#include "scg/rng.hpp"

namespace scg::simgen {

struct ScenarioConfig {
  std::uint64_t seed = 42;
  std::size_t n_hosts = 5;
  double duration = 86400;
  double rate_package_install = 2;
  double rate_build_job = 4;
  double rate_web_activity = 20;
  double rate_cron = 6;
  std::size_t n_attack_chains = 3;
  bool phase_b = false;

  void validate() const {
    auto bad = [](double x) { return !std::isfinite(x) || x < 0; };
    if (bad(duration)) throw Error(Errc::BadConfig, "simgen.duration must be >= 0");
    if (bad(rate_package_install) || bad(rate_build_job) || bad(rate_web_activity) || bad(rate_cron))
      throw Error(Errc::BadConfig, "simgen rates must be >= 0");
    if (n_attack_chains > 0 && n_hosts == 0) throw Error(Errc::BadConfig, "attack chains need at least one host");
  }
};

/// Labeled events emitted per attack chain (stages 5 and 6 emit two each).
inline constexpr std::size_t kLabeledEventsPerChain = 8;

namespace detail {

inline constexpr std::array<std::string_view, 16> kPypi = {
    "requests", "numpy",  "pandas", "flask",  "django",     "pyyaml",   "urllib3", "boto3",
    "click",    "jinja2", "pytest", "scipy",  "setuptools", "attrs",    "rich",    "httpx"};
inline constexpr std::array<std::string_view, 12> kNpm = {"react",  "lodash", "express", "axios",
                                                          "chalk",  "debug",  "commander", "moment",
                                                          "uuid",   "yargs",  "webpack", "typescript"};
inline constexpr std::array<std::string_view, 16> kWebA = {
    "github.com",      "stackoverflow.com", "docs.python.org", "news.example.com", "mail.example.com",
    "wiki.example.org", "cdn.jsdelivr.net", "fonts.gstatic.com", "api.example.com", "status.example.io",
    "blog.example.net", "search.example.com", "maps.example.com", "video.example.com", "shop.example.com",
    "chat.example.org"};
inline constexpr std::array<std::string_view, 12> kWebB = {
    "gitlab.com",      "npmjs.com",          "developer.mozilla.org", "nodejs.org",
    "reddit.example",  "forum.example.org",  "cloud.example.io",      "metrics.example.net",
    "board.example.com", "tickets.example.io", "auth.example.com",    "assets.example.net"};
inline constexpr std::array<std::string_view, 4> kSrc = {"main.c", "util.c", "io.c", "net.c"};
inline constexpr std::array<std::string_view, 3> kCronJobs = {"/usr/sbin/logrotate", "/usr/local/bin/backup.sh",
                                                              "/usr/bin/updatedb"};
inline constexpr std::array<std::string_view, 3> kCronConf = {"/etc/logrotate.conf", "/etc/backup.conf",
                                                              "/etc/updatedb.conf"};
inline constexpr std::array<std::string_view, 3> kCronOut = {"/var/log/syslog.1", "/var/backups/home.tar",
                                                             "/var/lib/mlocate/mlocate.db"};

inline std::string ip_for(std::string_view name, int first_octet) {
  const auto h = fnv1a64(name);
  return std::to_string(first_octet) + "." + std::to_string((h >> 8) & 0xFF) + "." + std::to_string((h >> 16) & 0xFF) +
         "." + std::to_string(1 + ((h >> 24) % 254));
}

inline std::string hex(Rng& rng, int digits) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string s;
  for (int i = 0; i < digits; ++i) s.push_back(kHex[uniform_index(rng, 16)]);
  return s;
}

/// Rank drawn with probability proportional to 1/(rank+1)^s.
inline std::size_t zipf_rank(Rng& rng, std::size_t n, double s = 1.2) {
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) total += std::pow(static_cast<double>(r + 1), -s);
  double x = uniform01(rng) * total;
  for (std::size_t r = 0; r < n; ++r) {
    x -= std::pow(static_cast<double>(r + 1), -s);
    if (x < 0) return r;
  }
  return n - 1;
}

/// Host-specific popularity: each host rotates the shared catalog.
template <std::size_t N>
std::string_view pick(Rng& rng, const std::array<std::string_view, N>& items, std::size_t host_index) {
  return items[(zipf_rank(rng, N) + 3 * host_index) % N];
}

inline std::string bytes_bucket(double b) { return b < 4096 ? "small" : b < 262144 ? "medium" : "large"; }

struct Pending {
  NormalizedEvent ev;
  std::size_t seq;
};

class Emitter {
 public:
  explicit Emitter(std::vector<Pending>& out) : out_(out) {}

  void emit(double ts, const std::string& host, std::uint64_t pid, std::string exe, Action a, ObjectKind kind,
            std::string key, Label label = Label::BENIGN, std::map<std::string, std::string> attrs = {}) {
    NormalizedEvent ev;
    ev.ts = std::round(ts * 1000.0) / 1000.0;
    ev.host = host;
    ev.pid = pid;
    ev.exe = std::move(exe);
    ev.action = a;
    ev.object = {kind, std::move(key)};
    ev.attrs = std::move(attrs);
    ev.label = label;
    out_.push_back({std::move(ev), out_.size()});
  }

 private:
  std::vector<Pending>& out_;
};

struct Host {
  std::string name;
  std::size_t index = 0;
  std::uint64_t next_pid = 1000;
  static constexpr std::uint64_t kShell = 100, kBrowser = 200, kCron = 300, kRunner = 400;
  std::string file(std::string_view path) const { return name + ":" + std::string(path); }
  std::string proc(std::uint64_t pid) const { return name + ":" + std::to_string(pid); }
};

/// Benign and attack templates; each emits a causally consistent sequence
/// starting at `t` with small positive offsets.
class Scenario {
 public:
  Scenario(const ScenarioConfig& cfg, Rng& rng, Emitter& em) : cfg_(cfg), rng_(rng), em_(em) {}

  bool drifted(double t) const { return cfg_.phase_b && t >= cfg_.duration / 2; }

  double step(double& t, double mean = 0.4) {
    t += 0.01 + exponential(rng_, 1.0 / mean);
    return t;
  }

  void package_install(Host& h, double t) {
    const bool npm = drifted(t);
    const auto pid = h.next_pid++;
    const std::string pm = npm ? "/usr/bin/npm" : "/usr/bin/pip";
    const std::string registry = npm ? "registry.npmjs.org" : "pypi.org";
    const std::string sock = ip_for(registry, 151) + ":443";
    const std::string pkg = npm ? std::string(pick(rng_, kNpm, h.index)) : std::string(pick(rng_, kPypi, h.index));
    const std::string root = npm ? "/home/dev/app/node_modules/" + pkg : "/usr/lib/python3/site-packages/" + pkg;
    em_.emit(t, h.name, Host::kShell, "/bin/bash", Action::FORK, ObjectKind::PROCESS, h.proc(pid));
    em_.emit(step(t), h.name, pid, "/bin/bash", Action::EXEC, ObjectKind::FILE, h.file(pm));
    em_.emit(step(t), h.name, pid, pm, Action::RESOLVE, ObjectKind::DOMAIN, registry);
    em_.emit(step(t), h.name, pid, pm, Action::CONNECT, ObjectKind::SOCKET, sock, Label::BENIGN, {{"proto", "tcp"}});
    em_.emit(step(t), h.name, pid, pm, Action::RECV, ObjectKind::SOCKET, sock, Label::BENIGN,
             {{"bytes", bytes_bucket(uniform(rng_, 1e4, 2e6))}});
    em_.emit(step(t), h.name, pid, pm, Action::INSTALL, ObjectKind::PACKAGE, (npm ? "npm:" : "pypi:") + pkg);
    const auto m = 2 + uniform_index(rng_, 4);
    for (std::size_t i = 0; i < m; ++i)
      em_.emit(step(t, 0.1), h.name, pid, pm, Action::WRITE, ObjectKind::FILE,
               h.file(root + "/mod" + std::to_string(i) + (npm ? ".js" : ".py")));
    const std::string runtime = npm ? "/usr/bin/node" : "/usr/bin/python3";
    em_.emit(step(t), h.name, pid, pm, Action::EXEC, ObjectKind::FILE, h.file(runtime));
  }

  void build_job(Host& h, double t) {
    const auto pid = h.next_pid++;
    em_.emit(t, h.name, Host::kRunner, "/usr/bin/ci-runner", Action::FORK, ObjectKind::PROCESS, h.proc(pid));
    em_.emit(step(t), h.name, pid, "/usr/bin/ci-runner", Action::EXEC, ObjectKind::FILE, h.file("/usr/bin/make"));
    const auto k = 1 + uniform_index(rng_, kSrc.size());
    for (std::size_t i = 0; i < k; ++i)
      em_.emit(step(t, 0.1), h.name, pid, "/usr/bin/make", Action::READ, ObjectKind::FILE,
               h.file("/home/dev/proj/src/" + std::string(kSrc[i])));
    const std::string tmp = "/tmp/cc" + hex(rng_, 6) + ".o";
    em_.emit(step(t), h.name, pid, "/usr/bin/make", Action::WRITE, ObjectKind::FILE, h.file(tmp));
    em_.emit(step(t), h.name, pid, "/usr/bin/make", Action::READ, ObjectKind::FILE, h.file(tmp));
    em_.emit(step(t), h.name, pid, "/usr/bin/make", Action::WRITE, ObjectKind::FILE, h.file("/home/dev/proj/build/app"));
    em_.emit(step(t), h.name, pid, "/usr/bin/make", Action::CHMOD, ObjectKind::FILE, h.file("/home/dev/proj/build/app"));
  }

  void web_activity(Host& h, double t) {
    const bool b = drifted(t);
    const std::string domain = b ? std::string(pick(rng_, kWebB, h.index)) : std::string(pick(rng_, kWebA, h.index));
    const std::string sock = ip_for(domain, 104) + ":443";
    const std::string exe = "/usr/bin/firefox";
    em_.emit(t, h.name, Host::kBrowser, exe, Action::RESOLVE, ObjectKind::DOMAIN, domain);
    em_.emit(step(t, 0.1), h.name, Host::kBrowser, exe, Action::CONNECT, ObjectKind::SOCKET, sock, Label::BENIGN,
             {{"proto", "tcp"}});
    em_.emit(step(t, 0.2), h.name, Host::kBrowser, exe, Action::SEND, ObjectKind::SOCKET, sock, Label::BENIGN,
             {{"bytes", bytes_bucket(uniform(rng_, 200, 8000))}});
    em_.emit(step(t, 0.5), h.name, Host::kBrowser, exe, Action::RECV, ObjectKind::SOCKET, sock, Label::BENIGN,
             {{"bytes", bytes_bucket(uniform(rng_, 1e3, 1e6))}});
  }

  void cron(Host& h, double t) {
    const auto pid = h.next_pid++;
    const auto j = (zipf_rank(rng_, kCronJobs.size()) + h.index) % kCronJobs.size();
    const std::string job(kCronJobs[j]);
    em_.emit(t, h.name, Host::kCron, "/usr/sbin/cron", Action::FORK, ObjectKind::PROCESS, h.proc(pid));
    em_.emit(step(t), h.name, pid, "/usr/sbin/cron", Action::EXEC, ObjectKind::FILE, h.file(job));
    em_.emit(step(t), h.name, pid, job, Action::READ, ObjectKind::FILE, h.file(kCronConf[j]));
    em_.emit(step(t), h.name, pid, job, Action::WRITE, ObjectKind::FILE, h.file(kCronOut[j]));
  }

  /// Benign-looking package fetch by one process, then eight staged events.
  void attack_chain(Host& h, double t, bool family_b) {
    const auto pid = h.next_pid++;
    const std::string pm = family_b ? "/usr/bin/npm" : "/usr/bin/pip";
    const std::string registry = family_b ? "registry.npmjs.org" : "pypi.org";
    const std::string reg_sock = ip_for(registry, 151) + ":443";
    const std::string typo = family_b ? "lodahs-" + hex(rng_, 3) : "reqeusts-" + hex(rng_, 3);
    const std::string hook = family_b ? "/home/dev/app/node_modules/" + typo + "/postinstall.js"
                                      : "/usr/lib/python3/site-packages/" + typo + "/setup_hook.py";
    const std::string runtime = family_b ? "/usr/bin/node" : "/usr/bin/python3";
    const std::string dropper = (family_b ? "/tmp/.npm-" : "/tmp/.cache-") + hex(rng_, 8);
    const std::string c2 = (family_b ? "upd-" : "cdn-") + hex(rng_, 6) + (family_b ? ".xyz" : ".top");
    const std::string c2_sock = ip_for(c2, 185) + (family_b ? ":4444" : ":8443");
    const std::string secret = family_b ? "/home/dev/.ssh/id_rsa" : "/etc/shadow";

    em_.emit(t, h.name, Host::kShell, "/bin/bash", Action::FORK, ObjectKind::PROCESS, h.proc(pid));
    em_.emit(step(t), h.name, pid, "/bin/bash", Action::EXEC, ObjectKind::FILE, h.file(pm));
    em_.emit(step(t), h.name, pid, pm, Action::RESOLVE, ObjectKind::DOMAIN, registry);
    em_.emit(step(t), h.name, pid, pm, Action::CONNECT, ObjectKind::SOCKET, reg_sock, Label::BENIGN, {{"proto", "tcp"}});
    em_.emit(step(t), h.name, pid, pm, Action::RECV, ObjectKind::SOCKET, reg_sock, Label::BENIGN,
             {{"bytes", bytes_bucket(uniform(rng_, 1e4, 2e6))}});

    auto gap = [&] { return t += uniform(rng_, 10, 300); };
    em_.emit(gap(), h.name, pid, pm, Action::INSTALL, ObjectKind::PACKAGE, (family_b ? "npm:" : "pypi:") + typo,
             Label::STAGE1);
    em_.emit(gap(), h.name, pid, runtime, Action::EXEC, ObjectKind::FILE, h.file(hook), Label::STAGE2);
    em_.emit(gap(), h.name, pid, runtime, Action::WRITE, ObjectKind::FILE, h.file(dropper), Label::STAGE3);
    em_.emit(gap(), h.name, pid, runtime, Action::EXEC, ObjectKind::FILE, h.file(dropper), Label::STAGE4);
    em_.emit(gap(), h.name, pid, dropper, Action::RESOLVE, ObjectKind::DOMAIN, c2, Label::STAGE5);
    em_.emit(step(t, 0.2), h.name, pid, dropper, Action::CONNECT, ObjectKind::SOCKET, c2_sock, Label::STAGE5,
             {{"proto", "tcp"}});
    em_.emit(gap(), h.name, pid, dropper, Action::READ, ObjectKind::FILE, h.file(secret), Label::STAGE6);
    em_.emit(step(t, 0.5), h.name, pid, dropper, Action::SEND, ObjectKind::SOCKET, c2_sock, Label::STAGE6,
             {{"bytes", bytes_bucket(uniform(rng_, 3e5, 5e6))}});
  }

 private:
  const ScenarioConfig& cfg_;
  Rng& rng_;
  Emitter& em_;
};

}  // namespace detail

/// Deterministic labeled event stream: Poisson benign templates per host plus
/// staged attack chains, time-sorted with millisecond timestamps.
inline std::vector<NormalizedEvent> generate(const ScenarioConfig& cfg) {
  cfg.validate();
  std::vector<NormalizedEvent> events;
  if (cfg.duration <= 0) return events;
  Rng rng(cfg.seed);
  std::vector<detail::Pending> pending;
  detail::Emitter em(pending);
  detail::Scenario sc(cfg, rng, em);

  std::vector<detail::Host> hosts(cfg.n_hosts);
  for (std::size_t i = 0; i < cfg.n_hosts; ++i) {
    hosts[i].name = "host" + std::to_string(i + 1);
    hosts[i].index = i;
  }

  using Tmpl = void (detail::Scenario::*)(detail::Host&, double);
  const std::array<std::pair<double, Tmpl>, 4> templates = {{{cfg.rate_package_install, &detail::Scenario::package_install},
                                                             {cfg.rate_build_job, &detail::Scenario::build_job},
                                                             {cfg.rate_web_activity, &detail::Scenario::web_activity},
                                                             {cfg.rate_cron, &detail::Scenario::cron}}};
  for (auto& h : hosts) {
    for (const auto& [rate, fn] : templates) {
      if (rate <= 0) continue;
      double t = exponential(rng, rate / 3600.0);
      while (t < cfg.duration) {
        (sc.*fn)(h, t);
        t += exponential(rng, rate / 3600.0);
      }
    }
  }

  // Chain placement has its own stream so benign rates do not move attacks.
  Rng attack_rng(mix_seed(cfg.seed, 0xA77C));
  auto chains = [&](std::size_t n, double lo, double hi, bool family_b) {
    for (std::size_t i = 0; i < n; ++i) {
      auto& h = hosts[uniform_index(attack_rng, hosts.size())];
      sc.attack_chain(h, uniform(attack_rng, lo, hi) * cfg.duration, family_b);
    }
  };
  if (cfg.phase_b) {
    chains(cfg.n_attack_chains, 0.1, 0.5, false);
    chains(cfg.n_attack_chains, 0.5, 0.9, true);
  } else {
    chains(cfg.n_attack_chains, 0.1, 0.9, false);
  }

  std::stable_sort(pending.begin(), pending.end(),
                   [](const detail::Pending& a, const detail::Pending& b) { return a.ev.ts < b.ev.ts; });
  events.reserve(pending.size());
  for (auto& p : pending) events.push_back(std::move(p.ev));
  return events;
}

/// Splits a time-sorted stream at the `fraction` quantile timestamp; events
/// sharing the cut timestamp all go to the eval side.
template <class T, class TsFn>
std::pair<std::vector<T>, std::vector<T>> split_by_time(const std::vector<T>& items, double fraction, TsFn ts) {
  if (!(fraction > 0 && fraction < 1)) throw Error(Errc::BadFraction, format_double(fraction));
  if (items.empty()) return {};
  const auto k = std::min(items.size() - 1, static_cast<std::size_t>(std::floor(fraction * items.size())));
  const double cut = ts(items[k]);
  auto mid = std::find_if(items.begin(), items.end(), [&](const T& x) { return ts(x) >= cut; });
  return {std::vector<T>(items.begin(), mid), std::vector<T>(mid, items.end())};
}

inline std::pair<std::vector<NormalizedEvent>, std::vector<NormalizedEvent>> split_by_time(
    const std::vector<NormalizedEvent>& events, double fraction) {
  return split_by_time(events, fraction, [](const NormalizedEvent& e) { return e.ts; });
}

}  // namespace scg::simgen
