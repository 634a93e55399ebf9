#include "coexist/policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "coexist/error.hpp"
#include "text_util.hpp"

namespace coexist {
namespace {

using nlohmann::json;

const std::set<std::string>& known_aspects() {
  static const std::set<std::string> aspects{"weather", "traffic", "user_class", "first_responder"};
  return aspects;
}

void require(bool ok, const std::string& message) {
  if (!ok) throw Error(ErrorCode::kInvalidArgument, "invalid policy: " + message);
}

}  // namespace

std::size_t ExclusionZonePolicy::max_iterations() const {
  return static_cast<std::size_t>(std::ceil((max_m - min_m) / step_m)) + 1;
}

void PolicySet::validate() const {
  require(!thresholds_db.empty(), "no I/N thresholds");
  for (const auto& [kind, value] : thresholds_db)
    require(std::isfinite(value), "threshold for " + std::string(to_string(kind)) + " not finite");

  double sunny_min = std::numeric_limits<double>::infinity();
  double rainy_max = -std::numeric_limits<double>::infinity();
  for (auto k : {WeatherKind::kClear, WeatherKind::kCloudy})
    if (thresholds_db.contains(k)) sunny_min = std::min(sunny_min, thresholds_db.at(k));
  for (auto k : {WeatherKind::kRainSnow, WeatherKind::kExtreme})
    if (thresholds_db.contains(k)) rainy_max = std::max(rainy_max, thresholds_db.at(k));
  require(rainy_max <= sunny_min, "rainy threshold (" + format_number(rainy_max) +
                                      " dB) must not exceed sunny threshold (" +
                                      format_number(sunny_min) + " dB)");

  const auto& ez = exclusion_zone;
  require(ez.min_m > 0.0, "exclusion zone minimum must be > 0");
  require(ez.min_m <= ez.max_m, "exclusion zone minimum must not exceed maximum");
  require(ez.step_m > 0.0, "exclusion zone step must be > 0");
  require(std::isfinite(individual_offset_db), "individual offset not finite");
  require(de_exclusion_margin_db >= 0.0, "de-exclusion margin must be >= 0");
  require(tier_medium_band_db >= 0.0, "tier band must be >= 0");

  double total = 0.0;
  for (const auto& [aspect, w] : weights) {
    require(known_aspects().contains(aspect), "unknown context aspect '" + aspect + "'");
    require(w >= 0.0 && w <= 1.0, "weight for '" + aspect + "' outside [0, 1]");
    if (w > 0.0) {
      require(score_tables.contains(aspect), "no score table for weighted aspect '" + aspect + "'");
      total += w;
    }
  }
  if (!weights.empty())
    require(std::abs(total - 1.0) <= 1e-6, "weights sum to " + format_number(total) + ", not 1");
  for (const auto& [aspect, table] : score_tables)
    for (const auto& [key, score] : table)
      require(score >= 0.0 && score <= 1.0,
              "score for " + aspect + "/" + key + " outside [0, 1]");
}

PolicySet default_policy() {
  PolicySet p;
  p.version = "default-1";
  p.thresholds_db = {{WeatherKind::kClear, -8.5},
                     {WeatherKind::kCloudy, -8.5},
                     {WeatherKind::kRainSnow, -12.0},
                     {WeatherKind::kExtreme, -12.0}};
  p.weights = {{"weather", 0.2}, {"traffic", 0.3}, {"user_class", 0.2}, {"first_responder", 0.3}};
  p.score_tables = {
      {"weather", {{"clear", 0.25}, {"cloudy", 0.5}, {"rain_snow", 0.75}, {"extreme", 1.0}}},
      {"traffic",
       {{"emergency_video", 1.0}, {"realtime_voice", 0.6}, {"streaming_video", 0.2}, {"bulk", 0.1}}},
      {"user_class",
       {{"federal", 1.0},
        {"priority", 0.7},
        {"educational", 0.5},
        {"scientific", 0.45},
        {"governmental", 0.4},
        {"commercial", 0.3}}},
      {"first_responder", {{"true", 1.0}, {"false", 0.0}}},
  };
  return p;
}

PolicySet parse_policy(const json& doc) {
  if (!doc.is_object()) throw Error(ErrorCode::kParse, "policy document must be an object");
  const int version = doc.value("schema_version", 0);
  if (version != kPolicySchemaVersion)
    throw Error(ErrorCode::kParse, "unsupported policy schema_version " + std::to_string(version));
  PolicySet p;
  try {
    p.band_id = doc.value("band_id", p.band_id);
    p.version = doc.value("version", p.version);
    if (!doc.contains("thresholds_db") || !doc["thresholds_db"].is_object())
      throw Error(ErrorCode::kParse, "policy: missing thresholds_db table");
    for (const auto& [key, value] : doc["thresholds_db"].items()) {
      auto kind = parse_weather_kind(key);
      if (!kind) throw Error(ErrorCode::kParse, "policy: unknown weather kind '" + key + "'");
      p.thresholds_db[*kind] = value.get<double>();
    }
    p.individual_offset_db = doc.value("individual_offset_db", p.individual_offset_db);
    p.de_exclusion_margin_db = doc.value("de_exclusion_margin_db", p.de_exclusion_margin_db);
    p.tier_medium_band_db = doc.value("tier_medium_band_db", p.tier_medium_band_db);
    if (doc.contains("exclusion_zone")) {
      const auto& ez = doc["exclusion_zone"];
      p.exclusion_zone.min_m = ez.value("min_m", p.exclusion_zone.min_m);
      p.exclusion_zone.max_m = ez.value("max_m", p.exclusion_zone.max_m);
      p.exclusion_zone.step_m = ez.value("step_m", p.exclusion_zone.step_m);
    }
    if (doc.contains("weights"))
      p.weights = doc["weights"].get<std::map<std::string, double>>();
    if (doc.contains("score_tables"))
      p.score_tables = doc["score_tables"].get<std::map<std::string, std::map<std::string, double>>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("policy: ") + e.what());
  }
  return p;
}

PolicySet load_policy(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kNotFound, "policy file not found: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  json doc;
  try {
    doc = json::parse(ss.str());
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kParse, path.string() + ": " + e.what());
  }
  return parse_policy(doc);
}

json policy_to_json(const PolicySet& p) {
  json thresholds = json::object();
  for (const auto& [kind, value] : p.thresholds_db) thresholds[std::string(to_string(kind))] = value;
  return {{"schema_version", kPolicySchemaVersion},
          {"band_id", p.band_id},
          {"version", p.version},
          {"thresholds_db", thresholds},
          {"individual_offset_db", p.individual_offset_db},
          {"de_exclusion_margin_db", p.de_exclusion_margin_db},
          {"tier_medium_band_db", p.tier_medium_band_db},
          {"exclusion_zone",
           {{"min_m", p.exclusion_zone.min_m},
            {"max_m", p.exclusion_zone.max_m},
            {"step_m", p.exclusion_zone.step_m}}},
          {"weights", p.weights},
          {"score_tables", p.score_tables}};
}

double threshold_for(const ContextSnapshot& context, const PolicySet& policy) {
  auto it = policy.thresholds_db.find(context.weather);
  if (it == policy.thresholds_db.end())
    throw Error(ErrorCode::kPolicyGap, "policy gap: no I/N threshold for weather '" +
                                           std::string(to_string(context.weather)) + "'");
  return it->second;
}

std::string_view to_string(UserClass c) {
  switch (c) {
    case UserClass::kFederal: return "federal";
    case UserClass::kPriority: return "priority";
    case UserClass::kGeneral: return "general";
  }
  return "general";
}

std::string_view to_string(GeneralSubclass c) {
  switch (c) {
    case GeneralSubclass::kEducational: return "educational";
    case GeneralSubclass::kScientific: return "scientific";
    case GeneralSubclass::kGovernmental: return "governmental";
    case GeneralSubclass::kCommercial: return "commercial";
  }
  return "commercial";
}

std::string_view to_string(TrafficType t) {
  switch (t) {
    case TrafficType::kRealtimeVoice: return "realtime_voice";
    case TrafficType::kStreamingVideo: return "streaming_video";
    case TrafficType::kEmergencyVideo: return "emergency_video";
    case TrafficType::kBulk: return "bulk";
  }
  return "bulk";
}

std::optional<UserClass> parse_user_class(std::string_view text) {
  for (auto c : {UserClass::kFederal, UserClass::kPriority, UserClass::kGeneral})
    if (to_string(c) == text) return c;
  return std::nullopt;
}

std::optional<GeneralSubclass> parse_general_subclass(std::string_view text) {
  for (auto c : {GeneralSubclass::kEducational, GeneralSubclass::kScientific,
                 GeneralSubclass::kGovernmental, GeneralSubclass::kCommercial})
    if (to_string(c) == text) return c;
  return std::nullopt;
}

std::optional<TrafficType> parse_traffic_type(std::string_view text) {
  for (auto t : {TrafficType::kRealtimeVoice, TrafficType::kStreamingVideo,
                 TrafficType::kEmergencyVideo, TrafficType::kBulk})
    if (to_string(t) == text) return t;
  return std::nullopt;
}

std::string class_key(const SecondaryUser& user) {
  if (user.user_class == UserClass::kGeneral) return std::string(to_string(user.subclass));
  return std::string(to_string(user.user_class));
}

double priority_score(const SecondaryUser& user, const ContextSnapshot& context,
                      const PolicySet& policy) {
  double weighted = 0.0;
  double total = 0.0;
  for (const auto& [aspect, weight] : policy.weights) {
    if (weight <= 0.0) continue;
    std::string key;
    if (aspect == "weather") key = std::string(to_string(context.weather));
    else if (aspect == "traffic") key = std::string(to_string(user.traffic));
    else if (aspect == "user_class") key = class_key(user);
    else if (aspect == "first_responder") key = user.first_responder ? "true" : "false";
    else
      throw Error(ErrorCode::kPolicyGap, "policy gap: unknown aspect '" + aspect + "'", {aspect});

    auto table = policy.score_tables.find(aspect);
    if (table == policy.score_tables.end() || !table->second.contains(key))
      throw Error(ErrorCode::kPolicyGap,
                  "policy gap: no score for aspect '" + aspect + "' value '" + key + "'", {aspect});
    weighted += weight * table->second.at(key);
    total += weight;
  }
  if (total <= 0.0)
    throw Error(ErrorCode::kPolicyGap, "policy gap: no positively weighted aspect");
  return std::clamp(weighted / total, 0.0, 1.0);
}

PrioritizationFramework::PrioritizationFramework(PolicySet policy) : policy_(std::move(policy)) {}

void PrioritizationFramework::register_user(const SecondaryUser& user,
                                            const ContextSnapshot& context, std::int64_t now) {
  const double score = priority_score(user, context, policy_);
  std::lock_guard lock(mutex_);
  users_[user.id] = user;
  records_[user.id] = PriorityRecord{user.id, score, context.id, now, false};
}

void PrioritizationFramework::on_context(const ContextSnapshot& context, std::int64_t now) {
  std::lock_guard lock(mutex_);
  for (const auto& [id, user] : users_)
    records_[id] = PriorityRecord{id, priority_score(user, context, policy_), context.id, now, false};
}

void PrioritizationFramework::mark_stale(const std::string& current_context_id) {
  std::lock_guard lock(mutex_);
  for (auto& [id, rec] : records_) rec.stale = rec.context_id != current_context_id;
}

std::vector<PriorityRecord> PrioritizationFramework::records() const {
  std::lock_guard lock(mutex_);
  std::vector<PriorityRecord> out;
  for (const auto& [id, rec] : records_) out.push_back(rec);
  return out;
}

std::optional<PriorityRecord> PrioritizationFramework::record(const std::string& user_id) const {
  std::lock_guard lock(mutex_);
  auto it = records_.find(user_id);
  if (it == records_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> PrioritizationFramework::ranking() const {
  auto recs = records();
  std::sort(recs.begin(), recs.end(), [](const PriorityRecord& a, const PriorityRecord& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.user_id < b.user_id;
  });
  std::vector<std::string> out;
  for (const auto& r : recs) out.push_back(r.user_id);
  return out;
}

}  // namespace coexist
