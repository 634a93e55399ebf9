#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "coexist/antenna.hpp"
#include "coexist/geo.hpp"
#include "coexist/propagation.hpp"
#include "coexist/radio.hpp"
#include "json.hpp"

namespace coexist {

inline constexpr int kScenarioSchemaVersion = 1;

struct FssReceiver {
  std::string id = "fss";
  GeoPoint location{37.2025, -80.434444, 4.5};
  FssAntennaParams antenna;
  double noise_temperature_k = 290.0;
};

struct MacroBaseStation {
  std::string id;
  GeoPoint location;
  std::array<double, 3> sector_azimuths_deg{0.0, 120.0, 240.0};
  int ue_per_sector = 10;
  double coverage_radius_m = 500.0;
  bool active = true;  // registered on-air; DSA revocations live in decisions
};

struct UeDropParams {
  double min_radius_m = 35.0;
  double max_radius_m = 500.0;
  double ue_height_m = 1.5;
  std::uint64_t seed = 1;
};

struct BandPlan {
  double low_ghz = 12.2;
  double high_ghz = 12.7;
  int channel_count = 5;
  double channel_bandwidth_hz = 1.0e8;

  double center_ghz() const { return (low_ghz + high_ghz) / 2.0; }
};

// MBS defaults applied to CSV rows that don't carry the field.
struct MbsDefaults {
  double height_m = 25.0;
  std::array<double, 3> sector_azimuths_deg{0.0, 120.0, 240.0};
  int ue_per_sector = 10;
  double coverage_radius_m = 500.0;
};

struct Scenario {
  std::string name;
  FssReceiver fss;
  std::vector<MacroBaseStation> mbs;
  std::vector<Building> buildings;
  RadioParams radio;
  PathLossParams path_loss;  // shadow_seed is the scenario's shadow seed
  MbsAntennaParams mbs_antenna;
  UeDropParams ue_drop;       // seed is the scenario's UE drop seed
  BandPlan band;
  MbsDefaults mbs_defaults;
  double max_mbs_distance_m = 5000.0;
  double rainy_rate_mm_per_hr = 10.0;  // what "rainy" means for this site
  std::filesystem::path weather_trace;  // optional, absolute once loaded
  std::vector<std::string> warnings;

  // ENU frame origin: FSS position at ground level.
  GeoPoint frame_origin() const { return {fss.location.latitude_deg, fss.location.longitude_deg, 0.0}; }
  void validate() const;
};

// Accepts the manifest file or a directory containing `manifest.json`.
// MBSs beyond max_mbs_distance_m are dropped with a warning; buildings
// without a height get 15 m with a warning.
Scenario load_scenario(const std::filesystem::path& manifest_or_dir);

// `base_dir` resolves relative file references in the manifest. Manifests may
// also inline `mbs` (array) and `buildings` (FeatureCollection).
Scenario parse_scenario_manifest(const nlohmann::json& manifest,
                                 const std::filesystem::path& base_dir);

// Writes manifest.json, mbs.csv and buildings.geojson (plus the weather trace
// copy when present) into `dir`.
void save_scenario(const Scenario& scenario, const std::filesystem::path& dir);

struct MbsCsvResult {
  std::vector<MacroBaseStation> stations;
  std::vector<std::string> warnings;
};

// Header must name `id` (or `cell`), `lat` and `lon`; `height_m` optional;
// other columns ignored.
MbsCsvResult parse_mbs_csv(const std::string& text, const MbsDefaults& defaults);
std::string mbs_to_csv(const std::vector<MacroBaseStation>& stations);

// UEs per sector spread uniformly over the sector's annulus, one beam each.
// Deterministic in (ue_drop.seed, mbs id); result is indexed like scenario.mbs.
std::vector<std::vector<Beam>> drop_ues(const Scenario& scenario);

}  // namespace coexist
