#pragma once

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "coexist/context.hpp"
#include "coexist/geo.hpp"
#include "coexist/policy.hpp"
#include "json.hpp"

struct sqlite3;

namespace coexist {

enum class EntityKind { kFss, kMbs, kSu };

std::string_view to_string(EntityKind kind);
std::optional<EntityKind> parse_entity_kind(std::string_view text);

struct Registration {
  std::string scenario_id;
  std::string id;
  EntityKind kind = EntityKind::kMbs;
  GeoPoint location;
  nlohmann::json parameters = nlohmann::json::object();
  std::int64_t registered_at = 0;

  friend bool operator==(const Registration&, const Registration&) = default;
};

struct StoredPolicy {
  std::string version;
  nlohmann::json document;
  std::int64_t created_at = 0;
};

struct StoredExperiment {
  std::string id;
  std::string scenario_ref;
  std::string context_id;
  std::string policy_version;
  nlohmann::json record;
  std::int64_t created_at = 0;
};

struct TimeRange {
  std::int64_t from = INT64_MIN;
  std::int64_t to = INT64_MAX;  // inclusive
};

// Per-kind horizons in seconds; nullopt keeps records forever.
struct RetentionPolicy {
  std::optional<std::int64_t> contexts_s = 90LL * 24 * 3600;
  std::optional<std::int64_t> priorities_s = 90LL * 24 * 3600;
  std::optional<std::int64_t> policies_s;
  std::optional<std::int64_t> experiments_s;

  static RetentionPolicy keep_everything() { return {std::nullopt, std::nullopt, std::nullopt, std::nullopt}; }
};

struct PurgeStats {
  std::size_t experiments = 0;
  std::size_t contexts = 0;
  std::size_t priorities = 0;
  std::size_t policies = 0;
};

// Single-file embedded store. Every put is its own committed transaction, so a
// returned put survives a crash of the process. Calls are serialized.
class Store {
 public:
  // ":memory:" opens a private in-memory database.
  explicit Store(const std::filesystem::path& path);
  ~Store();
  Store(const Store&) = delete;
  Store& operator=(const Store&) = delete;

  // Upsert by (scenario, kind, id). A second FSS id in one scenario throws
  // Error(kConflict).
  void put_registration(const Registration& r);
  Registration get_registration(const std::string& scenario_id, EntityKind kind,
                                const std::string& id) const;
  std::vector<Registration> list_registrations(const std::string& scenario_id,
                                               std::optional<EntityKind> kind = {}) const;

  // Snapshot ids are content-addressed, so re-putting one is a no-op.
  void put_context(const ContextSnapshot& snapshot, std::int64_t created_at);
  ContextSnapshot get_context(const std::string& id) const;
  std::vector<ContextSnapshot> list_contexts(TimeRange range = {}) const;

  void put_priority(const PriorityRecord& record);
  std::vector<PriorityRecord> list_priorities(TimeRange range = {}) const;

  void put_policy(const StoredPolicy& policy);
  StoredPolicy get_policy(const std::string& version) const;
  std::vector<StoredPolicy> list_policies() const;

  // Append-only: a repeated id throws Error(kConflict).
  void put_experiment(const StoredExperiment& experiment);
  StoredExperiment get_experiment(const std::string& id) const;
  std::vector<StoredExperiment> list_experiments(TimeRange range = {}) const;

  // Drops records older than their horizon (relative to `now`), except contexts
  // and policies still referenced by a retained experiment.
  PurgeStats purge(const RetentionPolicy& retention, std::int64_t now);

  // kind: registrations, contexts, priorities, policies, experiments.
  std::string export_csv(std::string_view kind) const;
  nlohmann::json export_json(std::string_view kind) const;

 private:
  sqlite3* db_ = nullptr;
  mutable std::mutex mutex_;
};

}  // namespace coexist
