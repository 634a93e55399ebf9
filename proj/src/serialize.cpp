#include "coexist/serialize.hpp"

#include <cmath>
#include <numbers>

#include "coexist/error.hpp"
#include "text_util.hpp"

namespace coexist {
namespace {

using nlohmann::json;

std::string opt_number(const std::optional<double>& v) { return v ? format_number(*v) : std::string(); }

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

std::string_view to_string(InterferenceTier tier) {
  switch (tier) {
    case InterferenceTier::kHigh: return "high";
    case InterferenceTier::kMedium: return "medium";
    case InterferenceTier::kLow: return "low";
  }
  return "low";
}

InterferenceTier interference_tier(const std::optional<double>& individual_in_db,
                                   double threshold_db, double medium_band_db) {
  if (!individual_in_db) return InterferenceTier::kLow;
  if (*individual_in_db >= threshold_db) return InterferenceTier::kHigh;
  if (*individual_in_db >= threshold_db - medium_band_db) return InterferenceTier::kMedium;
  return InterferenceTier::kLow;
}

std::string report_csv(const InterferenceReport& report) {
  std::string out = "id,distance_m,los,individual_in_db,active\n";
  for (const auto& m : report.per_mbs) {
    out += m.mbs_id + ',' + format_number(m.distance_m) + ',' + (m.los ? "1" : "0") + ',' +
           opt_number(m.individual_in_db) + ',' + (m.active ? "1" : "0") + '\n';
  }
  return out;
}

std::string trace_csv(const std::vector<IterationRecord>& trace) {
  std::string out = "iteration,ez_m,aggregate_in_db,active_count\n";
  for (const auto& t : trace)
    out += std::to_string(t.iteration) + ',' + format_number(t.ez_radius_m) + ',' +
           opt_number(t.aggregate_in_db) + ',' + std::to_string(t.active_count) + '\n';
  return out;
}

std::string latency_csv(const std::vector<IterationRecord>& trace) {
  std::string out = "iteration,ez_m,elapsed_ms\n";
  for (const auto& t : trace)
    out += std::to_string(t.iteration) + ',' + format_number(t.ez_radius_m) + ',' +
           format_fixed(t.elapsed_ms, 3) + '\n';
  return out;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "ez_m,aggregate_in_db,active_count\n";
  for (const auto& r : rows)
    out += format_number(r.ez_radius_m) + ',' + opt_number(r.aggregate_in_db) + ',' +
           std::to_string(r.active_count) + '\n';
  return out;
}

json report_json(const InterferenceReport& report, bool include_beams) {
  json per_mbs = json::array();
  for (const auto& m : report.per_mbs) {
    json entry{{"id", m.mbs_id},
               {"active", m.active},
               {"distance_m", m.distance_m},
               {"los", m.los},
               {"path_loss",
                {{"base_db", m.propagation.base_loss_db},
                 {"shadow_db", m.propagation.shadow_db},
                 {"rain_db", m.propagation.rain_db},
                 {"total_db", m.propagation.total_db}}},
               {"interference_w", m.interference_w},
               {"individual_in_db", opt_json(m.individual_in_db)}};
    if (include_beams) {
      json beams = json::array();
      for (const auto& b : m.beams)
        beams.push_back({{"ue_id", b.ue_id},
                         {"sector", b.sector_index},
                         {"power_dbw", b.terms.power_dbw},
                         {"mbs_gain_dbi", b.terms.mbs_gain_dbi},
                         {"fss_gain_dbi", b.terms.fss_gain_dbi},
                         {"path_loss_db", b.terms.path_loss_db},
                         {"interference_dbw", b.interference_dbw}});
      entry["beams"] = std::move(beams);
    }
    per_mbs.push_back(std::move(entry));
  }
  return {{"noise_floor_dbw", report.noise_floor_dbw},
          {"aggregate_interference_w", report.aggregate_interference_w},
          {"aggregate_in_db", opt_json(report.aggregate_in_db)},
          {"active_mbs_count", report.active_mbs_count},
          {"rain_rate_mm_per_hr", report.rain_rate_mm_per_hr},
          {"total_power_w", report.total_power_w},
          {"per_mbs", per_mbs}};
}

json decision_json(const DsaDecision& d, const World& world) {
  json revoked = json::array();
  for (const auto& [id, reason] : d.revoked)
    revoked.push_back({{"mbs_id", id}, {"reason", std::string(to_string(reason))}});
  json trace = json::array();
  for (const auto& t : d.trace)
    trace.push_back({{"iteration", t.iteration},
                     {"ez_m", t.ez_radius_m},
                     {"aggregate_in_db", opt_json(t.aggregate_in_db)},
                     {"active_count", t.active_count}});
  json active = json::array();
  const auto sites = world.sites();
  for (std::size_t i = 0; i < sites.size(); ++i)
    if (d.active[i]) active.push_back(sites[i].id);
  return {{"ez_radius_m", d.ez_radius_m},
          {"converged", d.converged},
          {"threshold_db", d.threshold_db},
          {"context_id", d.context_id},
          {"aggregate_in_db", opt_json(d.report.aggregate_in_db)},
          {"active_mbs", active},
          {"revoked", revoked},
          {"trace", trace}};
}

json step_json(const StepResult& step) {
  json revoked = json::array();
  for (const auto& [id, reason] : step.revoked)
    revoked.push_back({{"mbs_id", id}, {"reason", std::string(to_string(reason))}});
  const auto& agg = step.report.aggregate_in_db;
  return {{"schema_version", kWireSchemaVersion},
          {"verdict", step.pass ? "pass" : "fail"},
          {"threshold_db", step.threshold_db},
          {"aggregate_in_db", opt_json(agg)},
          {"margin_db", agg ? json(step.threshold_db - *agg) : json(nullptr)},
          {"context_id", step.context_id},
          {"revoked", revoked},
          {"report", report_json(step.report)}};
}

json sweep_json(const std::vector<SweepRow>& rows) {
  json out = json::array();
  for (const auto& r : rows)
    out.push_back({{"ez_m", r.ez_radius_m},
                   {"aggregate_in_db", opt_json(r.aggregate_in_db)},
                   {"active_count", r.active_count}});
  return out;
}

json context_json(const ContextSnapshot& s) {
  return {{"id", s.id},
          {"timestamp", s.timestamp},
          {"weather", std::string(to_string(s.weather))},
          {"rain_rate_mm_per_hr", s.rain_rate_mm_per_hr},
          {"location",
           {{"lat", s.location.latitude_deg},
            {"lon", s.location.longitude_deg},
            {"height_m", s.location.height_m}}},
          {"provider_id", s.provider_id},
          {"raw_record", s.raw_record},
          {"stale", s.stale}};
}

ContextSnapshot context_from_json(const json& doc) {
  try {
    ContextSnapshot s;
    s.id = doc.at("id").get<std::string>();
    s.timestamp = doc.at("timestamp").get<std::int64_t>();
    const auto kind = parse_weather_kind(doc.at("weather").get<std::string>());
    if (!kind) throw Error(ErrorCode::kParse, "unknown weather kind");
    s.weather = *kind;
    s.rain_rate_mm_per_hr = doc.at("rain_rate_mm_per_hr").get<double>();
    const auto& loc = doc.at("location");
    s.location = {loc.at("lat").get<double>(), loc.at("lon").get<double>(),
                  loc.value("height_m", 0.0)};
    s.provider_id = doc.value("provider_id", "");
    s.raw_record = doc.value("raw_record", "");
    s.stale = doc.value("stale", false);
    return s;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("context: ") + e.what());
  }
}

json map_geojson(const World& world, const MapState& state, int circle_vertices) {
  if (!state.report || !state.revoked) throw Error(ErrorCode::kNotReady, "map state incomplete");
  const Scenario& s = world.scenario();
  json features = json::array();
  features.push_back(
      {{"type", "Feature"},
       {"id", s.fss.id},
       {"geometry",
        {{"type", "Point"}, {"coordinates", {s.fss.location.longitude_deg, s.fss.location.latitude_deg}}}},
       {"properties", {{"role", "fss"}, {"id", s.fss.id}, {"height_m", s.fss.location.height_m}}}});

  const auto sites = world.sites();
  for (std::size_t i = 0; i < sites.size(); ++i) {
    const auto& m = s.mbs[sites[i].mbs_index];
    const auto& c = state.report->per_mbs[i];
    auto it = state.revoked->find(sites[i].id);
    const json reason =
        it == state.revoked->end() ? json(nullptr) : json(std::string(to_string(it->second)));
    features.push_back(
        {{"type", "Feature"},
         {"id", sites[i].id},
         {"geometry",
          {{"type", "Point"}, {"coordinates", {m.location.longitude_deg, m.location.latitude_deg}}}},
         {"properties",
          {{"role", "mbs"},
           {"id", sites[i].id},
           {"active", c.active},
           {"revoked_reason", reason},
           {"distance_m", sites[i].distance_2d_m},
           {"los", sites[i].los},
           {"individual_in_db", opt_json(c.individual_in_db)},
           {"interference_tier",
            std::string(to_string(interference_tier(c.individual_in_db, state.threshold_db,
                                                    state.medium_band_db)))}}}});
  }

  json ring = json::array();
  const EnuPoint centre = world.fss_position();
  for (int k = 0; k <= circle_vertices; ++k) {
    const double a = 2.0 * std::numbers::pi * (k % circle_vertices) / circle_vertices;
    const GeoPoint g = world.frame().to_geo(
        {centre.east_m + state.ez_radius_m * std::sin(a), centre.north_m + state.ez_radius_m * std::cos(a), 0.0});
    ring.push_back({g.longitude_deg, g.latitude_deg});
  }
  features.push_back({{"type", "Feature"},
                      {"id", "exclusion_zone"},
                      {"geometry", {{"type", "Polygon"}, {"coordinates", {ring}}}},
                      {"properties", {{"role", "exclusion_zone"}, {"radius_m", state.ez_radius_m}}}});

  return {{"type", "FeatureCollection"},
          {"schema_version", kWireSchemaVersion},
          {"threshold_db", state.threshold_db},
          {"aggregate_in_db", opt_json(state.report->aggregate_in_db)},
          {"features", features}};
}

}  // namespace coexist
