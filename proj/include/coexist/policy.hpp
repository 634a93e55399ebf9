#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "coexist/context.hpp"
#include "json.hpp"

namespace coexist {

inline constexpr int kPolicySchemaVersion = 1;

struct ExclusionZonePolicy {
  double min_m = 500.0;
  double max_m = 5000.0;
  double step_m = 500.0;

  // ceil((max - min) / step) + 1
  std::size_t max_iterations() const;
};

// Regulator rules for one band. Score tables map an aspect value (e.g.
// "rain_snow", "streaming_video", "commercial", "true") to a score in [0, 1].
struct PolicySet {
  std::string band_id = "12.2-12.7GHz";
  std::string version = "default";
  std::map<WeatherKind, double> thresholds_db;
  double individual_offset_db = 0.0;  // individual revocation threshold offset
  double de_exclusion_margin_db = 3.0;
  double tier_medium_band_db = 10.0;  // map tiers: [threshold - band, threshold) is medium
  ExclusionZonePolicy exclusion_zone;
  std::map<std::string, double> weights;
  std::map<std::string, std::map<std::string, double>> score_tables;

  // Throws Error(kInvalidArgument) naming the violated invariant.
  void validate() const;
};

PolicySet default_policy();
PolicySet parse_policy(const nlohmann::json& doc);
PolicySet load_policy(const std::filesystem::path& path);
nlohmann::json policy_to_json(const PolicySet& policy);

// Throws Error(kPolicyGap) when the weather kind has no threshold.
double threshold_for(const ContextSnapshot& context, const PolicySet& policy);

enum class UserClass { kFederal, kPriority, kGeneral };
enum class GeneralSubclass { kEducational, kScientific, kGovernmental, kCommercial };
enum class TrafficType { kRealtimeVoice, kStreamingVideo, kEmergencyVideo, kBulk };

std::string_view to_string(UserClass c);
std::string_view to_string(GeneralSubclass c);
std::string_view to_string(TrafficType t);
std::optional<UserClass> parse_user_class(std::string_view text);
std::optional<GeneralSubclass> parse_general_subclass(std::string_view text);
std::optional<TrafficType> parse_traffic_type(std::string_view text);

struct SecondaryUser {
  std::string id;
  UserClass user_class = UserClass::kGeneral;
  GeneralSubclass subclass = GeneralSubclass::kCommercial;  // only for kGeneral
  TrafficType traffic = TrafficType::kBulk;
  bool first_responder = false;
};

// Key looked up in the "user_class" score table: "federal", "priority" or the
// general sub-class name.
std::string class_key(const SecondaryUser& user);

// Sum over weighted aspects of weight * score, divided by the weight total.
// Aspects: weather, traffic, user_class, first_responder. Throws
// Error(kPolicyGap) naming the aspect when a table entry is missing.
double priority_score(const SecondaryUser& user, const ContextSnapshot& context,
                      const PolicySet& policy);

struct PriorityRecord {
  std::string user_id;
  double score = 0.0;
  std::string context_id;
  std::int64_t computed_at = 0;
  bool stale = false;
};

// Keeps one PriorityRecord per registered user, recomputed on every context
// change; records computed against an older context are flagged stale until
// recomputed.
class PrioritizationFramework {
 public:
  explicit PrioritizationFramework(PolicySet policy);

  void register_user(const SecondaryUser& user, const ContextSnapshot& context, std::int64_t now);
  void on_context(const ContextSnapshot& context, std::int64_t now);
  void mark_stale(const std::string& current_context_id);

  std::vector<PriorityRecord> records() const;
  std::optional<PriorityRecord> record(const std::string& user_id) const;
  // User ids by descending score, ties broken by id.
  std::vector<std::string> ranking() const;

 private:
  PolicySet policy_;
  mutable std::mutex mutex_;
  std::map<std::string, SecondaryUser> users_;
  std::map<std::string, PriorityRecord> records_;
};

}  // namespace coexist
