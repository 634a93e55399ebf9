#include "coexist/service.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "coexist/serialize.hpp"
#include "httplib.h"
#include "text_util.hpp"

namespace coexist {
namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

std::int64_t unix_now() {
  return std::chrono::duration_cast<std::chrono::seconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double parse_rate(const std::string& text, const std::string& spec) {
  auto v = parse_double(text);
  if (!v || *v < 0.0)
    throw Error(ErrorCode::kInvalidArgument, "invalid rain rate in weather '" + spec + "'");
  return *v;
}

}  // namespace

// ---------------------------------------------------------------- config

EngineConfig EngineConfig::load(const std::filesystem::path& file, EngineConfig c) {
  json doc;
  try {
    doc = json::parse(read_text(file));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kParse, file.string() + ": " + e.what());
  }
  const auto dir = file.parent_path();
  auto path_field = [&](const char* key, std::filesystem::path& out) {
    if (doc.contains(key) && doc[key].is_string()) {
      std::filesystem::path p = doc[key].get<std::string>();
      out = p.is_relative() ? dir / p : p;
    }
  };
  path_field("fixtures_dir", c.fixtures_dir);
  path_field("default_policy", c.default_policy);
  path_field("store_path", c.store_path);
  path_field("ui_dir", c.ui_dir);
  c.workers = doc.value("workers", c.workers);
  c.eval_threads = doc.value("eval_threads", c.eval_threads);
  c.port = doc.value("port", c.port);
  c.host = doc.value("host", c.host);
  return c;
}

void EngineConfig::apply_env() {
  if (const char* v = std::getenv("COEXIST_PORT")) port = std::atoi(v);
  if (const char* v = std::getenv("COEXIST_STORE")) store_path = v;
  if (const char* v = std::getenv("COEXIST_WORKERS")) workers = static_cast<unsigned>(std::atoi(v));
  if (const char* v = std::getenv("COEXIST_FIXTURES")) fixtures_dir = v;
}

// ---------------------------------------------------------------- requests

std::string_view to_string(ExperimentMode mode) {
  switch (mode) {
    case ExperimentMode::kFeedbackLoop: return "feedback_loop";
    case ExperimentMode::kSingleStep: return "single_step";
    case ExperimentMode::kEzSweep: return "ez_sweep";
  }
  return "feedback_loop";
}

std::string_view to_string(ExperimentStatus status) {
  switch (status) {
    case ExperimentStatus::kQueued: return "queued";
    case ExperimentStatus::kRunning: return "running";
    case ExperimentStatus::kDone: return "done";
    case ExperimentStatus::kFailed: return "failed";
  }
  return "failed";
}

std::optional<ExperimentMode> parse_experiment_mode(std::string_view text) {
  for (auto m : {ExperimentMode::kFeedbackLoop, ExperimentMode::kSingleStep, ExperimentMode::kEzSweep})
    if (to_string(m) == text) return m;
  return std::nullopt;
}

Controls controls_from_json(const json& doc) {
  Controls c;
  if (!doc.is_object()) throw Error(ErrorCode::kInvalidArgument, "controls must be an object");
  try {
    if (doc.contains("ez_radius_m") && !doc["ez_radius_m"].is_null())
      c.ez_radius_m = doc["ez_radius_m"].get<double>();
    const char* key = doc.contains("mbs") ? "mbs" : "mbs_on";
    if (doc.contains(key)) c.mbs_on = doc[key].get<std::map<std::string, bool>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("controls: ") + e.what());
  }
  return c;
}

ExperimentRequest request_from_json(const json& doc) {
  if (!doc.is_object()) throw Error(ErrorCode::kInvalidArgument, "request must be an object");
  ExperimentRequest r;
  try {
    if (!doc.contains("scenario") || !doc["scenario"].is_string())
      throw Error(ErrorCode::kInvalidArgument, "request: 'scenario' is required");
    r.scenario = doc["scenario"].get<std::string>();
    r.weather = doc.value("weather", r.weather);
    r.policy = doc.value("policy", r.policy);
    if (doc.contains("seed") && !doc["seed"].is_null()) r.seed = doc["seed"].get<std::uint64_t>();
    if (doc.contains("mode")) {
      auto m = parse_experiment_mode(doc["mode"].get<std::string>());
      if (!m) throw Error(ErrorCode::kInvalidArgument, "request: unknown mode");
      r.mode = *m;
    }
    if (doc.contains("controls")) r.controls = controls_from_json(doc["controls"]);
    if (doc.contains("exclusion_zone")) {
      const auto& ez = doc["exclusion_zone"];
      ExclusionZonePolicy z;
      z.min_m = ez.value("min_m", z.min_m);
      z.max_m = ez.value("max_m", z.max_m);
      z.step_m = ez.value("step_m", z.step_m);
      r.exclusion_zone = z;
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("request: ") + e.what());
  }
  return r;
}

json request_to_json(const ExperimentRequest& r) {
  json doc{{"scenario", r.scenario},
           {"weather", r.weather},
           {"policy", r.policy},
           {"seed", r.seed ? json(*r.seed) : json(nullptr)},
           {"mode", std::string(to_string(r.mode))}};
  if (r.mode == ExperimentMode::kSingleStep) {
    doc["controls"] = {{"ez_radius_m", r.controls.ez_radius_m ? json(*r.controls.ez_radius_m) : json(nullptr)},
                       {"mbs", r.controls.mbs_on}};
  }
  if (r.exclusion_zone)
    doc["exclusion_zone"] = {{"min_m", r.exclusion_zone->min_m},
                             {"max_m", r.exclusion_zone->max_m},
                             {"step_m", r.exclusion_zone->step_m}};
  return doc;
}

// ---------------------------------------------------------------- records

const InterferenceReport* ExperimentRecord::final_report() const {
  if (!done()) return nullptr;
  if (decision) return &decision->report;
  if (step) return &step->report;
  return nullptr;
}

json record_json(const ExperimentRecord& r, bool include_volatile) {
  json doc{{"schema_version", kWireSchemaVersion}, {"status", std::string(to_string(r.status))}};
  if (include_volatile) doc["id"] = r.id;
  if (r.status == ExperimentStatus::kFailed) {
    doc["error"] = error_body(r.error_code.value_or(ErrorCode::kIo), r.error_message, r.error_detail);
    return doc;
  }
  if (!r.done()) return doc;
  doc["mode"] = std::string(to_string(r.request.mode));
  doc["scenario_ref"] = r.scenario_ref;
  doc["request"] = request_to_json(r.request);
  doc["context"] = context_json(r.context);
  doc["policy_version"] = r.policy.version;
  doc["threshold_db"] = threshold_for(r.context, r.policy);
  if (include_volatile)
    doc["timings"] = {{"setup_ms", r.timings.setup_ms},
                      {"interference_ms", r.timings.interference_ms},
                      {"dsa_ms", r.timings.dsa_ms}};
  if (r.decision) doc["decision"] = decision_json(*r.decision, *r.world);
  if (r.step) doc["step"] = step_json(*r.step);
  if (r.request.mode == ExperimentMode::kEzSweep) doc["sweep"] = sweep_json(r.sweep);
  if (const auto* rep = r.final_report()) doc["report"] = report_json(*rep);
  return doc;
}

namespace {

void require_done(const ExperimentRecord& r) {
  if (r.status == ExperimentStatus::kFailed)
    throw Error(ErrorCode::kNotReady, "experiment " + r.id + " failed: " + r.error_message);
  if (!r.done()) throw Error(ErrorCode::kNotReady, "experiment " + r.id + " is not ready");
}

}  // namespace

std::string record_trace_csv(const ExperimentRecord& r) {
  require_done(r);
  if (r.decision) return trace_csv(r.decision->trace);
  if (r.request.mode == ExperimentMode::kEzSweep) return sweep_csv(r.sweep);
  throw Error(ErrorCode::kNotFound, "single_step experiments have no trace");
}

std::string record_latency_csv(const ExperimentRecord& r) {
  require_done(r);
  if (r.decision) return latency_csv(r.decision->trace);
  throw Error(ErrorCode::kNotFound, "only feedback_loop experiments have per-iteration latency");
}

std::string record_report_csv(const ExperimentRecord& r) {
  require_done(r);
  if (const auto* rep = r.final_report()) return report_csv(*rep);
  throw Error(ErrorCode::kNotFound, "ez_sweep experiments have no final report");
}

json record_map(const ExperimentRecord& r) {
  require_done(r);
  MapState state;
  state.medium_band_db = r.policy.tier_medium_band_db;
  if (r.decision) {
    state.report = &r.decision->report;
    state.revoked = &r.decision->revoked;
    state.ez_radius_m = r.decision->ez_radius_m;
    state.threshold_db = r.decision->threshold_db;
  } else if (r.step) {
    state.report = &r.step->report;
    state.revoked = &r.step->revoked;
    state.ez_radius_m = r.request.controls.ez_radius_m.value_or(0.0);
    state.threshold_db = r.step->threshold_db;
  } else {
    throw Error(ErrorCode::kNotFound, "ez_sweep experiments have no map state");
  }
  return map_geojson(*r.world, state);
}

// ---------------------------------------------------------------- pool

WorkerPool::WorkerPool(unsigned workers) {
  const unsigned n = std::max(1u, workers);
  for (unsigned i = 0; i < n; ++i) {
    threads_.emplace_back([this](std::stop_token stop) {
      while (true) {
        std::function<void()> job;
        {
          std::unique_lock lock(mutex_);
          if (!ready_.wait(lock, stop, [this] { return !jobs_.empty(); })) return;
          job = std::move(jobs_.front());
          jobs_.pop_front();
          ++busy_;
        }
        job();
        {
          std::lock_guard lock(mutex_);
          --busy_;
          if (jobs_.empty() && busy_ == 0) idle_.notify_all();
        }
      }
    });
  }
}

WorkerPool::~WorkerPool() {
  wait_idle();
  for (auto& t : threads_) t.request_stop();
  ready_.notify_all();
}

void WorkerPool::post(std::function<void()> job) {
  {
    std::lock_guard lock(mutex_);
    jobs_.push_back(std::move(job));
  }
  ready_.notify_one();
}

void WorkerPool::wait_idle() {
  std::unique_lock lock(mutex_);
  idle_.wait(lock, [this] { return jobs_.empty() && busy_ == 0; });
}

// ---------------------------------------------------------------- engine

struct Engine::Prepared {
  ExperimentRequest request;
  std::string scenario_ref;
  std::shared_ptr<const Scenario> scenario;
  PolicySet policy;
  ContextSnapshot context;
  double setup_ms = 0.0;
};

Engine::Engine(EngineConfig config) : config_(std::move(config)) {
  if (!config_.store_path.empty()) {
    store_ = std::make_unique<Store>(config_.store_path);
    broker_.attach_store(store_.get());
    for (const auto& e : store_->list_experiments()) {
      unsigned long long n = 0;
      if (std::sscanf(e.id.c_str(), "exp-%llu", &n) == 1)
        next_experiment_ = std::max<std::uint64_t>(next_experiment_, n + 1);
    }
  }
  broker_.register_provider(
      std::make_shared<FixedWeatherProvider>("default", WeatherKind::kClear, 0.0));
  priorities_ = std::make_unique<PrioritizationFramework>(resolve_policy(""));
  broker_.subscribe(ContextKind::kWeather, [this](const ContextSnapshot& snapshot) {
    priorities_->on_context(snapshot, snapshot.timestamp);
    if (store_)
      for (const auto& p : priorities_->records()) store_->put_priority(p);
  });
  pool_ = std::make_unique<WorkerPool>(config_.workers);
}

Engine::~Engine() { pool_.reset(); }

std::string Engine::register_scenario(const json& manifest, const std::filesystem::path& base_dir) {
  auto scenario = std::make_shared<Scenario>(
      parse_scenario_manifest(manifest, base_dir.empty() ? std::filesystem::current_path() : base_dir));
  std::lock_guard lock(mutex_);
  char id[32];
  std::snprintf(id, sizeof(id), "scn-%06llu", static_cast<unsigned long long>(next_scenario_++));
  scenarios_[id] = std::move(scenario);
  return id;
}

std::shared_ptr<const Scenario> Engine::resolve_scenario(const std::string& ref,
                                                         std::optional<std::uint64_t> seed) const {
  std::shared_ptr<const Scenario> base;
  {
    std::lock_guard lock(mutex_);
    if (auto it = scenarios_.find(ref); it != scenarios_.end()) base = it->second;
  }
  if (!base) {
    std::filesystem::path path;
    if (!config_.fixtures_dir.empty() && !ref.empty() &&
        std::filesystem::exists(config_.fixtures_dir / ref))
      path = config_.fixtures_dir / ref;
    else if (!ref.empty() && std::filesystem::exists(ref))
      path = ref;
    else
      throw Error(ErrorCode::kNotFound, "unknown scenario '" + ref + "'", {ref});
    base = std::make_shared<Scenario>(load_scenario(path));
  }
  if (!seed) return base;
  auto seeded = std::make_shared<Scenario>(*base);
  seeded->ue_drop.seed = *seed;
  seeded->path_loss.shadow_seed = *seed;
  return seeded;
}

PolicySet Engine::resolve_policy(const std::string& ref) const {
  PolicySet p;
  if (ref.empty() || ref == "default") {
    p = config_.default_policy.empty() ? default_policy() : load_policy(config_.default_policy);
  } else if (std::filesystem::exists(ref)) {
    p = load_policy(ref);
  } else if (store_) {
    try {
      p = parse_policy(store_->get_policy(ref).document);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNotFound) throw;
      throw Error(ErrorCode::kNotFound, "unknown policy '" + ref + "'", {ref});
    }
  } else {
    throw Error(ErrorCode::kNotFound, "unknown policy '" + ref + "'", {ref});
  }
  p.validate();
  return p;
}

ContextSnapshot Engine::resolve_context(const std::string& weather, const Scenario& scenario) {
  const auto colon = weather.find(':');
  const std::string kind = to_lower(trim(weather.substr(0, colon)));
  const std::string arg = colon == std::string::npos ? std::string() : trim(weather.substr(colon + 1));
  const GeoPoint& at = scenario.fss.location;

  auto fixed = [&](WeatherKind k, double rate) {
    const std::string id = "fixed-" + std::string(to_string(k)) + "-" + format_number(rate);
    return *FixedWeatherProvider(id, k, rate).fetch(at, 0);
  };

  if (kind == "clear" || kind == "sunny") return fixed(WeatherKind::kClear, 0.0);
  if (kind == "cloudy") return fixed(WeatherKind::kCloudy, 0.0);
  if (kind == "rainy" || kind == "rain_snow")
    return fixed(WeatherKind::kRainSnow, arg.empty() ? scenario.rainy_rate_mm_per_hr : parse_rate(arg, weather));
  if (kind == "rain") {
    const double rate = arg.empty() ? scenario.rainy_rate_mm_per_hr : parse_rate(arg, weather);
    return fixed(weather_from_rain_rate(rate, false), rate);
  }
  if (kind == "extreme")
    return fixed(WeatherKind::kExtreme, arg.empty() ? scenario.rainy_rate_mm_per_hr : parse_rate(arg, weather));
  if (kind == "trace") {
    if (scenario.weather_trace.empty())
      throw Error(ErrorCode::kContextUnavailable, "context unavailable: scenario has no weather trace");
    std::int64_t t = 0;
    if (!arg.empty()) {
      auto v = parse_double(arg);
      if (!v) throw Error(ErrorCode::kInvalidArgument, "invalid trace time in '" + weather + "'");
      t = static_cast<std::int64_t>(*v);
    }
    auto provider = TraceWeatherProvider::load("trace", scenario.weather_trace);
    auto snap = provider.fetch(at, t);
    if (!snap)
      throw Error(ErrorCode::kContextUnavailable, "context unavailable: trace has no entry at or before t");
    snap->validate();
    return *snap;
  }
  if (kind == "current") return current_context(unix_now());
  throw Error(ErrorCode::kInvalidArgument, "unknown weather '" + weather + "'", {weather});
}

Engine::Prepared Engine::prepare(const ExperimentRequest& request) {
  const auto start = Clock::now();
  Prepared p;
  p.request = request;
  p.scenario = resolve_scenario(request.scenario, request.seed);
  p.scenario_ref = request.scenario;
  p.policy = resolve_policy(request.policy);
  if (request.exclusion_zone) {
    PolicySet check = p.policy;
    check.exclusion_zone = *request.exclusion_zone;
    check.validate();
  }
  p.context = resolve_context(request.weather, *p.scenario);
  p.setup_ms = ms_since(start);
  return p;
}

std::shared_ptr<ExperimentRecord> Engine::execute(Prepared p, std::string id) {
  auto rec = std::make_shared<ExperimentRecord>();
  rec->id = std::move(id);
  rec->status = ExperimentStatus::kRunning;
  rec->request = p.request;
  rec->scenario_ref = p.scenario_ref;
  rec->context = p.context;
  rec->policy = p.policy;

  auto start = Clock::now();
  rec->world = std::make_shared<World>(p.scenario);
  rec->timings.setup_ms = p.setup_ms + ms_since(start);

  const EvaluateOptions eval{config_.eval_threads, true};
  start = Clock::now();
  switch (p.request.mode) {
    case ExperimentMode::kFeedbackLoop: {
      LoopOptions opts{p.request.exclusion_zone, eval};
      rec->decision = run_feedback_loop(*rec->world, rec->context, rec->policy, opts);
      rec->timings.interference_ms = rec->decision->report.elapsed_ms;
      break;
    }
    case ExperimentMode::kSingleStep:
      rec->step = single_step(*rec->world, p.request.controls, rec->context, rec->policy, eval);
      rec->timings.interference_ms = rec->step->report.elapsed_ms;
      break;
    case ExperimentMode::kEzSweep: {
      const auto range = p.request.exclusion_zone.value_or(rec->policy.exclusion_zone);
      rec->sweep = sweep_ez(*rec->world, rec->context, range, eval);
      rec->timings.interference_ms = ms_since(start);
      break;
    }
  }
  rec->timings.dsa_ms = std::max(0.0, ms_since(start) - rec->timings.interference_ms);
  rec->status = ExperimentStatus::kDone;
  return rec;
}

std::string Engine::next_id() {
  std::lock_guard lock(mutex_);
  char id[32];
  std::snprintf(id, sizeof(id), "exp-%06llu", static_cast<unsigned long long>(next_experiment_++));
  return id;
}

void Engine::persist(const ExperimentRecord& r) {
  if (!store_ || !r.done()) return;
  const std::int64_t now = unix_now();
  store_->put_context(r.context, now);
  store_->put_policy({r.policy.version, policy_to_json(r.policy), now});
  const Scenario& s = r.world->scenario();
  store_->put_registration({r.scenario_ref, s.fss.id, EntityKind::kFss, s.fss.location,
                            {{"noise_temperature_k", s.fss.noise_temperature_k}}, now});
  for (const auto& m : s.mbs)
    store_->put_registration({r.scenario_ref, m.id, EntityKind::kMbs, m.location,
                              {{"ue_per_sector", m.ue_per_sector},
                               {"sector_azimuths_deg", m.sector_azimuths_deg},
                               {"active", m.active}},
                              now});
  store_->put_experiment({r.id, r.scenario_ref, r.context.id, r.policy.version, record_json(r), now});
}

std::shared_ptr<const ExperimentRecord> Engine::run(const ExperimentRequest& request) {
  auto prepared = prepare(request);
  auto rec = execute(std::move(prepared), next_id());
  persist(*rec);
  std::lock_guard lock(mutex_);
  experiments_[rec->id] = rec;
  return rec;
}

std::string Engine::submit(const ExperimentRequest& request) {
  auto prepared = prepare(request);
  const std::string id = next_id();
  {
    auto queued = std::make_shared<ExperimentRecord>();
    queued->id = id;
    queued->request = request;
    std::lock_guard lock(mutex_);
    experiments_[id] = std::move(queued);
  }
  pool_->post([this, id, p = std::move(prepared)]() mutable {
    {
      std::lock_guard lock(mutex_);
      auto running = std::make_shared<ExperimentRecord>(*experiments_[id]);
      running->status = ExperimentStatus::kRunning;
      experiments_[id] = std::move(running);
    }
    std::shared_ptr<const ExperimentRecord> result;
    try {
      auto rec = execute(std::move(p), id);
      persist(*rec);
      result = std::move(rec);
    } catch (const Error& e) {
      auto failed = std::make_shared<ExperimentRecord>();
      failed->id = id;
      failed->status = ExperimentStatus::kFailed;
      failed->error_code = e.code();
      failed->error_message = e.what();
      failed->error_detail = e.detail();
      result = std::move(failed);
    } catch (const std::exception& e) {
      auto failed = std::make_shared<ExperimentRecord>();
      failed->id = id;
      failed->status = ExperimentStatus::kFailed;
      failed->error_code = ErrorCode::kIo;
      failed->error_message = "internal error";
      result = std::move(failed);
    }
    std::lock_guard lock(mutex_);
    experiments_[id] = std::move(result);
  });
  return id;
}

std::shared_ptr<const ExperimentRecord> Engine::get(const std::string& id) const {
  {
    std::lock_guard lock(mutex_);
    if (auto it = experiments_.find(id); it != experiments_.end()) return it->second;
  }
  throw Error(ErrorCode::kNotFound, "unknown experiment '" + id + "'", {id});
}

void Engine::wait_idle() { pool_->wait_idle(); }

StepResult Engine::step(const std::string& id, const Controls& controls, const std::string& weather) {
  auto rec = get(id);
  require_done(*rec);
  const ContextSnapshot ctx =
      weather.empty() ? rec->context : resolve_context(weather, rec->world->scenario());
  return single_step(*rec->world, controls, ctx, rec->policy, {config_.eval_threads, true});
}

ContextSnapshot Engine::current_context(std::int64_t time) {
  const GeoPoint at = FssReceiver{}.location;
  broker_.poll(ContextKind::kWeather, at, time);
  return broker_.get_context(ContextKind::kWeather, at, time);
}

PriorityRecord Engine::register_user(const SecondaryUser& user, std::int64_t time) {
  const ContextSnapshot ctx = current_context(time);
  priorities_->register_user(user, ctx, time);
  auto rec = *priorities_->record(user.id);
  if (store_) store_->put_priority(rec);
  return rec;
}

std::vector<PriorityRecord> Engine::priorities() const { return priorities_->records(); }

// ---------------------------------------------------------------- http

int http_status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kParse: return 400;
    case ErrorCode::kNotFound: return 404;
    case ErrorCode::kConflict:
    case ErrorCode::kNotReady: return 409;
    case ErrorCode::kUnknownEntity:
    case ErrorCode::kPolicyGap:
    case ErrorCode::kModelValidity: return 422;
    case ErrorCode::kContextUnavailable: return 503;
    case ErrorCode::kIo: return 500;
  }
  return 500;
}

json error_body(ErrorCode code, const std::string& message, const std::vector<std::string>& detail) {
  return {{"schema_version", kWireSchemaVersion},
          {"code", std::string(to_string(code))},
          {"message", message},
          {"detail", detail}};
}

struct HttpServer::Impl {
  Engine& engine;
  httplib::Server server;

  explicit Impl(Engine& e) : engine(e) { routes(); }

  static void send_json(httplib::Response& res, const json& body, int status = 200) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  template <typename Fn>
  static void guard(httplib::Response& res, Fn&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      send_json(res, error_body(e.code(), e.what(), e.detail()), http_status_for(e.code()));
    } catch (const json::exception& e) {
      send_json(res, error_body(ErrorCode::kParse, std::string("invalid JSON body: ") + e.what()), 400);
    } catch (const std::exception&) {
      send_json(res, error_body(ErrorCode::kIo, "internal error"), 500);
    }
  }

  static json body_json(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    return json::parse(req.body);
  }

  void routes() {
    server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
      send_json(res, {{"schema_version", kWireSchemaVersion}, {"status", "ok"}});
    });

    server.Post("/scenarios", [this](const httplib::Request& req, httplib::Response& res) {
      guard(res, [&] {
        json manifest;
        try {
          manifest = body_json(req);
        } catch (const json::parse_error& e) {
          throw Error(ErrorCode::kParse, std::string("manifest: ") + e.what());
        }
        const std::string id = engine.register_scenario(manifest);
        auto s = engine.resolve_scenario(id);
        send_json(res, {{"schema_version", kWireSchemaVersion},
                        {"id", id},
                        {"name", s->name},
                        {"mbs_count", s->mbs.size()},
                        {"building_count", s->buildings.size()},
                        {"warnings", s->warnings}});
      });
    });

    server.Post("/experiments", [this](const httplib::Request& req, httplib::Response& res) {
      guard(res, [&] {
        const std::string id = engine.submit(request_from_json(body_json(req)));
        send_json(res, {{"schema_version", kWireSchemaVersion}, {"id", id}, {"status", "queued"}});
      });
    });

    server.Get(R"(/experiments/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      guard(res, [&] { send_json(res, record_json(*engine.get(req.matches[1]))); });
    });

    auto csv_route = [this](const char* pattern, std::string (*fn)(const ExperimentRecord&)) {
      server.Get(pattern, [this, fn](const httplib::Request& req, httplib::Response& res) {
        guard(res, [&] { res.set_content(fn(*engine.get(req.matches[1])), "text/csv"); });
      });
    };
    csv_route(R"(/experiments/([^/]+)/trace\.csv)", &record_trace_csv);
    csv_route(R"(/experiments/([^/]+)/latency\.csv)", &record_latency_csv);
    csv_route(R"(/experiments/([^/]+)/report\.csv)", &record_report_csv);

    server.Get(R"(/experiments/([^/]+)/map\.geojson)",
               [this](const httplib::Request& req, httplib::Response& res) {
                 guard(res, [&] {
                   res.set_content(record_map(*engine.get(req.matches[1])).dump(),
                                   "application/geo+json");
                 });
               });

    server.Post(R"(/experiments/([^/]+)/step)", [this](const httplib::Request& req, httplib::Response& res) {
      guard(res, [&] {
        const json body = body_json(req);
        const Controls controls =
            controls_from_json(body.contains("controls") ? body["controls"] : body);
        const std::string weather = body.value("weather", std::string());
        send_json(res, step_json(engine.step(req.matches[1], controls, weather)));
      });
    });

    server.Get("/contexts/current", [this](const httplib::Request&, httplib::Response& res) {
      guard(res, [&] {
        json doc = context_json(engine.current_context(unix_now()));
        doc["schema_version"] = kWireSchemaVersion;
        send_json(res, doc);
      });
    });

    server.Post("/contexts/override", [this](const httplib::Request& req, httplib::Response& res) {
      guard(res, [&] {
        const json body = body_json(req);
        if (!body.contains("weather") || body["weather"].is_null()) {
          engine.broker().clear_override();
        } else {
          const auto kind = parse_weather_kind(body["weather"].get<std::string>());
          if (!kind) throw Error(ErrorCode::kInvalidArgument, "unknown weather kind");
          double rate = body.value("rain_rate_mm_per_hr", 0.0);
          if (body.find("rain_rate_mm_per_hr") == body.end() &&
              (*kind == WeatherKind::kRainSnow || *kind == WeatherKind::kExtreme))
            rate = 10.0;
          engine.broker().set_override(*kind, rate);
        }
        json doc = context_json(engine.current_context(unix_now()));
        doc["schema_version"] = kWireSchemaVersion;
        send_json(res, doc);
      });
    });

    server.Post("/users", [this](const httplib::Request& req, httplib::Response& res) {
      guard(res, [&] {
        const json body = body_json(req);
        SecondaryUser u;
        u.id = body.at("id").get<std::string>();
        auto cls = parse_user_class(body.value("user_class", "general"));
        auto sub = parse_general_subclass(body.value("subclass", "commercial"));
        auto traffic = parse_traffic_type(body.value("traffic", "bulk"));
        if (!cls || !sub || !traffic)
          throw Error(ErrorCode::kInvalidArgument, "unknown user class, subclass or traffic type");
        u.user_class = *cls;
        u.subclass = *sub;
        u.traffic = *traffic;
        u.first_responder = body.value("first_responder", false);
        const auto rec = engine.register_user(u, unix_now());
        send_json(res, {{"schema_version", kWireSchemaVersion},
                        {"user_id", rec.user_id},
                        {"score", rec.score},
                        {"context_id", rec.context_id},
                        {"computed_at", rec.computed_at},
                        {"stale", rec.stale}});
      });
    });

    if (!engine.config().ui_dir.empty()) server.set_mount_point("/", engine.config().ui_dir.string());
  }
};

HttpServer::HttpServer(Engine& engine) : impl_(std::make_unique<Impl>(engine)) {}
HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  if (!impl_->server.bind_to_port(host, port))
    throw Error(ErrorCode::kIo, "cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace coexist
