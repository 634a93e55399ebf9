#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "coexist/dsaf.hpp"
#include "coexist/iet.hpp"
#include "json.hpp"

namespace coexist {

inline constexpr int kWireSchemaVersion = 1;

enum class InterferenceTier { kHigh, kMedium, kLow };

std::string_view to_string(InterferenceTier tier);

// >= threshold: high; within `medium_band_db` below it: medium; else low.
// MBSs with no interference are low.
InterferenceTier interference_tier(const std::optional<double>& individual_in_db,
                                   double threshold_db, double medium_band_db);

// Number fields use the shortest round-trip representation; a missing I/N is
// an empty field. Every CSV here is a pure function of its input.
std::string report_csv(const InterferenceReport& report);  // id,distance_m,los,individual_in_db,active
std::string trace_csv(const std::vector<IterationRecord>& trace);  // iteration,ez_m,aggregate_in_db,active_count
std::string latency_csv(const std::vector<IterationRecord>& trace);  // iteration,ez_m,elapsed_ms
std::string sweep_csv(const std::vector<SweepRow>& rows);  // ez_m,aggregate_in_db,active_count

nlohmann::json report_json(const InterferenceReport& report, bool include_beams = false);
nlohmann::json decision_json(const DsaDecision& decision, const World& world);
nlohmann::json step_json(const StepResult& step);
nlohmann::json sweep_json(const std::vector<SweepRow>& rows);
nlohmann::json context_json(const ContextSnapshot& snapshot);
ContextSnapshot context_from_json(const nlohmann::json& doc);

struct MapState {
  const InterferenceReport* report = nullptr;
  const std::map<std::string, RevocationReason>* revoked = nullptr;
  double ez_radius_m = 0.0;
  double threshold_db = 0.0;
  double medium_band_db = 10.0;
};

// FeatureCollection: FSS point, one point per MBS, exclusion-zone circle.
nlohmann::json map_geojson(const World& world, const MapState& state, int circle_vertices = 64);

}  // namespace coexist
