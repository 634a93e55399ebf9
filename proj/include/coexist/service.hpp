#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "coexist/context.hpp"
#include "coexist/dsaf.hpp"
#include "coexist/error.hpp"
#include "coexist/iet.hpp"
#include "coexist/policy.hpp"
#include "coexist/scenario.hpp"
#include "coexist/store.hpp"
#include "json.hpp"

namespace coexist {

struct EngineConfig {
  std::filesystem::path fixtures_dir;    // scenario names resolve to <fixtures_dir>/<name>
  std::filesystem::path default_policy;  // empty: built-in default tables
  std::filesystem::path store_path;      // empty: nothing persisted
  unsigned workers = 2;
  unsigned eval_threads = 1;
  int port = 8080;
  std::string host = "127.0.0.1";
  std::filesystem::path ui_dir;  // served at / when set

  // Optional JSON file with the same keys, then COEXIST_PORT, COEXIST_STORE,
  // COEXIST_WORKERS, COEXIST_FIXTURES on top.
  static EngineConfig load(const std::filesystem::path& file, EngineConfig base);
  void apply_env();
};

enum class ExperimentMode { kFeedbackLoop, kSingleStep, kEzSweep };
enum class ExperimentStatus { kQueued, kRunning, kDone, kFailed };

std::string_view to_string(ExperimentMode mode);
std::string_view to_string(ExperimentStatus status);
std::optional<ExperimentMode> parse_experiment_mode(std::string_view text);

struct ExperimentRequest {
  std::string scenario;              // registered id, fixture name, directory or manifest
  std::string weather = "clear";     // clear|cloudy|rainy|rain:<mm/h>|extreme:<mm/h>|trace:<unix>|current
  std::string policy;                // empty or "default", a file, or a stored version
  std::optional<std::uint64_t> seed;  // replaces both manifest seeds
  ExperimentMode mode = ExperimentMode::kFeedbackLoop;
  Controls controls;                                  // single_step
  std::optional<ExclusionZonePolicy> exclusion_zone;  // loop / sweep range override
};

ExperimentRequest request_from_json(const nlohmann::json& doc);
nlohmann::json request_to_json(const ExperimentRequest& request);
Controls controls_from_json(const nlohmann::json& doc);

struct StageTimings {
  double setup_ms = 0.0;
  double interference_ms = 0.0;
  double dsa_ms = 0.0;
};

struct ExperimentRecord {
  std::string id;
  ExperimentStatus status = ExperimentStatus::kQueued;
  ExperimentRequest request;
  std::string scenario_ref;
  ContextSnapshot context;
  PolicySet policy;
  std::shared_ptr<const World> world;
  std::optional<DsaDecision> decision;  // feedback_loop
  std::optional<StepResult> step;       // single_step
  std::vector<SweepRow> sweep;          // ez_sweep
  StageTimings timings;
  std::optional<ErrorCode> error_code;
  std::string error_message;
  std::vector<std::string> error_detail;

  bool done() const { return status == ExperimentStatus::kDone; }
  // Final report of the experiment (nullptr for sweeps and unfinished runs).
  const InterferenceReport* final_report() const;
};

// Structured form. `include_volatile` adds id and timings; without them two
// runs on identical inputs produce identical documents.
nlohmann::json record_json(const ExperimentRecord& record, bool include_volatile = true);

// Throw Error(kNotReady) before completion and Error(kNotFound) when the
// experiment's mode has no such artefact.
std::string record_trace_csv(const ExperimentRecord& record);
std::string record_latency_csv(const ExperimentRecord& record);
std::string record_report_csv(const ExperimentRecord& record);
nlohmann::json record_map(const ExperimentRecord& record);

// Fixed-size pool; jobs run in submission order across `workers` threads.
class WorkerPool {
 public:
  explicit WorkerPool(unsigned workers);
  ~WorkerPool();
  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  void post(std::function<void()> job);
  void wait_idle();

 private:
  std::mutex mutex_;
  std::condition_variable_any ready_;
  std::condition_variable idle_;
  std::deque<std::function<void()>> jobs_;
  std::size_t busy_ = 0;
  std::vector<std::jthread> threads_;
};

// The controller shared by the CLI and the HTTP API.
class Engine {
 public:
  explicit Engine(EngineConfig config = {});
  ~Engine();

  const EngineConfig& config() const noexcept { return config_; }
  Store* store() noexcept { return store_.get(); }
  ContextBroker& broker() noexcept { return broker_; }

  // Returns the scenario id ("scn-000001", ...). Parse errors throw kParse.
  std::string register_scenario(const nlohmann::json& manifest,
                                const std::filesystem::path& base_dir = {});
  std::shared_ptr<const Scenario> resolve_scenario(const std::string& ref,
                                                   std::optional<std::uint64_t> seed = {}) const;
  PolicySet resolve_policy(const std::string& ref) const;
  ContextSnapshot resolve_context(const std::string& weather, const Scenario& scenario);

  // Synchronous end-to-end run; failures propagate as Error.
  std::shared_ptr<const ExperimentRecord> run(const ExperimentRequest& request);
  // Resolves references now (throwing kNotFound etc.) and queues the rest.
  std::string submit(const ExperimentRequest& request);
  std::shared_ptr<const ExperimentRecord> get(const std::string& id) const;
  void wait_idle();

  // What-if evaluation against a finished experiment's world and policy.
  // `weather` empty keeps the experiment's context.
  StepResult step(const std::string& id, const Controls& controls, const std::string& weather = {});

  ContextSnapshot current_context(std::int64_t time);

  PriorityRecord register_user(const SecondaryUser& user, std::int64_t time);
  std::vector<PriorityRecord> priorities() const;

 private:
  struct Prepared;
  Prepared prepare(const ExperimentRequest& request);
  std::shared_ptr<ExperimentRecord> execute(Prepared prepared, std::string id);
  std::string next_id();
  void persist(const ExperimentRecord& record);

  EngineConfig config_;
  std::unique_ptr<Store> store_;
  ContextBroker broker_;
  std::unique_ptr<PrioritizationFramework> priorities_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<const Scenario>> scenarios_;
  std::map<std::string, std::shared_ptr<const ExperimentRecord>> experiments_;
  std::uint64_t next_scenario_ = 1;
  std::uint64_t next_experiment_ = 1;
  std::unique_ptr<WorkerPool> pool_;  // last member: drained before the rest is destroyed
};

// HTTP front end over an Engine.
class HttpServer {
 public:
  explicit HttpServer(Engine& engine);
  ~HttpServer();

  // Binds (port 0 picks a free one) and returns the bound port.
  int bind(const std::string& host, int port);
  // Blocks until stop().
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

int http_status_for(ErrorCode code);
nlohmann::json error_body(ErrorCode code, const std::string& message,
                          const std::vector<std::string>& detail = {});

}  // namespace coexist
