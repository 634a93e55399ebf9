// coexist: experiment runner, sweeps, linting, store export and the HTTP service.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <unistd.h>

#include "CLI11.hpp"
#include "coexist/serialize.hpp"
#include "coexist/service.hpp"

#ifndef COEXIST_DEFAULT_FIXTURES
#define COEXIST_DEFAULT_FIXTURES "fixtures"
#endif

namespace fs = std::filesystem;
using namespace coexist;

namespace {

struct CommonOptions {
  std::string scenario = "blacksburg_synth";
  std::string policy;
  std::string weather = "clear";
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<double> ez_min, ez_max, ez_step;
  std::string fixtures;
  std::string store;
  std::string config;
  unsigned threads = 1;
};

void add_experiment_flags(CLI::App* app, CommonOptions& o) {
  app->add_option("--scenario", o.scenario, "Fixture name, scenario directory or manifest file");
  app->add_option("--policy", o.policy, "Policy file (default: fixtures/policies/default.json)");
  app->add_option("--weather", o.weather,
                  "clear | cloudy | rainy | rain:<mm/h> | extreme:<mm/h> | trace:<unix time>");
  app->add_option("--seed", o.seed, "Seed for both UE drops and shadow fading");
  app->add_option("--ez-min", o.ez_min, "Exclusion zone start radius (m)");
  app->add_option("--ez-max", o.ez_max, "Exclusion zone maximum radius (m)");
  app->add_option("--ez-step", o.ez_step, "Exclusion zone step (m)");
  app->add_option("--threads", o.threads, "Worker threads for interference evaluation");
}

void add_engine_flags(CLI::App* app, CommonOptions& o) {
  app->add_option("--fixtures", o.fixtures, "Directory of named scenario fixtures");
  app->add_option("--store", o.store, "Store file to persist experiments into");
  app->add_option("--config", o.config, "Engine configuration file (JSON)");
}

EngineConfig engine_config(const CommonOptions& o) {
  EngineConfig c;
  c.fixtures_dir = COEXIST_DEFAULT_FIXTURES;
  const fs::path policy = c.fixtures_dir / "policies" / "default.json";
  if (fs::exists(policy)) c.default_policy = policy;
  if (!o.config.empty()) c = EngineConfig::load(o.config, c);
  c.apply_env();
  if (!o.fixtures.empty()) c.fixtures_dir = o.fixtures;
  if (!o.store.empty()) c.store_path = o.store;
  c.eval_threads = std::max(1u, o.threads);
  return c;
}

ExperimentRequest make_request(const CommonOptions& o, ExperimentMode mode, const PolicySet& policy) {
  ExperimentRequest r;
  r.scenario = o.scenario;
  r.weather = o.weather;
  r.policy = o.policy;
  r.seed = o.seed;
  r.mode = mode;
  if (o.ez_min || o.ez_max || o.ez_step) {
    ExclusionZonePolicy ez = policy.exclusion_zone;
    if (o.ez_min) ez.min_m = *o.ez_min;
    if (o.ez_max) ez.max_m = *o.ez_max;
    if (o.ez_step) ez.step_m = *o.ez_step;
    r.exclusion_zone = ez;
  }
  return r;
}

std::string fmt(double v, int decimals = 3) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return buf;
}

std::string fmt_in(const std::optional<double>& v) { return v ? fmt(*v) + " dB" : "none (no interference)"; }

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
}

std::string summary(const ExperimentRecord& r) {
  const auto& d = *r.decision;
  std::string s;
  s += "scenario        " + r.scenario_ref + "\n";
  s += "context         " + r.context.id + " (" + std::string(to_string(r.context.weather)) + ", " +
       fmt(r.context.rain_rate_mm_per_hr, 1) + " mm/h)\n";
  s += "policy          " + r.policy.version + "\n";
  s += "threshold       " + fmt(d.threshold_db, 1) + " dB\n";
  s += "converged       " + std::string(d.converged ? "yes" : "no") + "\n";
  s += "ez radius       " + fmt(d.ez_radius_m, 0) + " m\n";
  s += "aggregate I/N   " + fmt_in(d.report.aggregate_in_db) + "\n";
  s += "active MBSs     " + std::to_string(d.report.active_mbs_count) + " of " +
       std::to_string(d.report.per_mbs.size()) + "\n";
  s += "revoked         " + std::to_string(d.revoked.size()) + "\n";
  s += "iterations      " + std::to_string(d.trace.size()) + "\n";
  s += "setup           " + fmt(r.timings.setup_ms) + " ms\n";
  s += "interference    " + fmt(r.timings.interference_ms) + " ms\n";
  s += "dsa decisions   " + fmt(r.timings.dsa_ms) + " ms\n";
  return s;
}

int cmd_run(const CommonOptions& o) {
  if (o.out.empty()) throw Error(ErrorCode::kInvalidArgument, "--out is required");
  Engine engine(engine_config(o));
  const PolicySet policy = engine.resolve_policy(o.policy);
  auto rec = engine.run(make_request(o, ExperimentMode::kFeedbackLoop, policy));

  // Stage everything next to the target and move it in only when complete.
  const fs::path out = o.out;
  const fs::path staging = out.string() + ".partial-" + std::to_string(::getpid());
  fs::remove_all(staging);
  try {
    fs::create_directories(staging);
    write_file(staging / "record.json", record_json(*rec).dump(2) + "\n");
    write_file(staging / "trace.csv", record_trace_csv(*rec));
    write_file(staging / "latency.csv", record_latency_csv(*rec));
    write_file(staging / "report.csv", record_report_csv(*rec));
    write_file(staging / "map.geojson", record_map(*rec).dump() + "\n");
    write_file(staging / "summary.txt", summary(*rec));
    fs::create_directories(out);
    for (const auto& entry : fs::directory_iterator(staging))
      fs::rename(entry.path(), out / entry.path().filename());
    fs::remove_all(staging);
  } catch (...) {
    std::error_code ec;
    fs::remove_all(staging, ec);
    throw;
  }
  std::cout << summary(*rec);
  return rec->decision->converged ? 0 : 2;
}

int cmd_sweep(const CommonOptions& o) {
  Engine engine(engine_config(o));
  const PolicySet policy = engine.resolve_policy(o.policy);
  auto rec = engine.run(make_request(o, ExperimentMode::kEzSweep, policy));
  const std::string csv = record_trace_csv(*rec);
  if (o.out.empty()) {
    std::cout << csv;
  } else {
    fs::create_directories(o.out);
    write_file(fs::path(o.out) / "sweep.csv", csv);
    std::cout << "wrote " << (fs::path(o.out) / "sweep.csv").string() << "\n";
  }
  return 0;
}

int cmd_validate(const CommonOptions& o, bool scenario_given, bool policy_given, bool print) {
  Engine engine(engine_config(o));
  bool any = false;
  if (policy_given || !scenario_given) {
    const PolicySet p = engine.resolve_policy(o.policy);
    std::cout << "policy ok: " << p.version << " (" << p.band_id << ")\n";
    if (print) std::cout << policy_to_json(p).dump(2) << "\n";
    any = true;
  }
  if (scenario_given) {
    auto s = engine.resolve_scenario(o.scenario);
    s->validate();
    std::cout << "scenario ok: " << s->name << ", " << s->mbs.size() << " MBSs, "
              << s->buildings.size() << " buildings\n";
    for (const auto& w : s->warnings) std::cout << "  warning: " << w << "\n";
    any = true;
  }
  return any ? 0 : 1;
}

int cmd_export(const CommonOptions& o, const std::string& kind, const std::string& format) {
  if (o.store.empty()) throw Error(ErrorCode::kInvalidArgument, "--store is required");
  if (!fs::exists(o.store)) throw Error(ErrorCode::kNotFound, "no store at " + o.store);
  Store store(o.store);
  const std::string text = format == "json" ? store.export_json(kind).dump(2) + "\n" : store.export_csv(kind);
  if (o.out.empty()) std::cout << text;
  else write_file(o.out, text);
  return 0;
}

int cmd_timings(const CommonOptions& o, int repeat) {
  Engine engine(engine_config(o));
  const PolicySet policy = engine.resolve_policy(o.policy);
  const auto request = make_request(o, ExperimentMode::kFeedbackLoop, policy);
  struct Stat {
    double sum = 0, lo = std::numeric_limits<double>::infinity(), hi = 0;
    void add(double v) {
      sum += v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  } setup, interference, dsa, total;
  for (int i = 0; i < repeat; ++i) {
    auto rec = engine.run(request);
    const auto& t = rec->timings;
    setup.add(t.setup_ms);
    interference.add(t.interference_ms);
    dsa.add(t.dsa_ms);
    total.add(t.setup_ms + t.interference_ms + t.dsa_ms);
  }
  std::printf("%-34s %10s %10s %10s\n", "stage", "mean ms", "min ms", "max ms");
  auto row = [&](const char* name, const Stat& s) {
    std::printf("%-34s %10.3f %10.3f %10.3f\n", name, s.sum / repeat, s.lo, s.hi);
  };
  row("experiment setup", setup);
  row("interference analysis", interference);
  row("dsa decisions", dsa);
  row("total", total);
  return 0;
}

int cmd_serve(const CommonOptions& o, std::optional<int> port, const std::string& host,
              std::optional<unsigned> workers, const std::string& ui) {
  EngineConfig c = engine_config(o);
  if (port) c.port = *port;
  if (!host.empty()) c.host = host;
  if (workers) c.workers = *workers;
  if (!ui.empty()) c.ui_dir = ui;
  Engine engine(c);
  HttpServer server(engine);
  const int bound = server.bind(c.host, c.port);
  std::cout << "listening on http://" << c.host << ":" << bound << std::endl;
  server.listen();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Terrestrial/satellite coexistence experiments"};
  app.require_subcommand(1);
  CommonOptions o;

  auto* run = app.add_subcommand("run", "Run the exclusion-zone feedback loop end to end");
  add_experiment_flags(run, o);
  add_engine_flags(run, o);
  run->add_option("--out", o.out, "Output directory")->required();

  auto* sweep = app.add_subcommand("sweep-ez", "Aggregate I/N and active MBS count per EZ radius");
  add_experiment_flags(sweep, o);
  add_engine_flags(sweep, o);
  sweep->add_option("--out", o.out, "Output directory (default: stdout)");

  auto* validate = app.add_subcommand("validate", "Lint a scenario and/or a policy");
  bool print = false;
  validate->add_option("--scenario", o.scenario, "Scenario to check");
  validate->add_option("--policy", o.policy, "Policy file to check");
  validate->add_flag("--print", print, "Pretty-print the policy");
  add_engine_flags(validate, o);

  auto* serve = app.add_subcommand("serve", "Start the HTTP API");
  std::optional<int> port;
  std::optional<unsigned> workers;
  std::string host, ui;
  serve->add_option("--port", port, "Port (0 picks a free one)");
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--workers", workers, "Experiment worker threads");
  serve->add_option("--ui", ui, "Directory served at /");
  add_engine_flags(serve, o);

  auto* exp = app.add_subcommand("export", "Dump a store table");
  std::string kind = "experiments", format = "csv";
  exp->add_option("--store", o.store, "Store file")->required();
  exp->add_option("--kind", kind, "registrations | contexts | priorities | policies | experiments");
  exp->add_option("--format", format, "csv | json")->check(CLI::IsMember({"csv", "json"}));
  exp->add_option("--out", o.out, "Output file (default: stdout)");

  auto* timings = app.add_subcommand("timings", "Per-stage latency table");
  int repeat = 5;
  add_experiment_flags(timings, o);
  add_engine_flags(timings, o);
  timings->add_option("--repeat", repeat, "Runs to average")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(o);
    if (*sweep) return cmd_sweep(o);
    if (*validate)
      return cmd_validate(o, validate->count("--scenario") > 0, validate->count("--policy") > 0, print);
    if (*serve) return cmd_serve(o, port, host, workers, ui);
    if (*exp) return cmd_export(o, kind, format);
    if (*timings) return cmd_timings(o, repeat);
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.code()) << "): " << e.what() << "\n";
    for (const auto& d : e.detail()) std::cerr << "  " << d << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
