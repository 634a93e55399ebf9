#include "coexist/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "coexist/error.hpp"
#include "text_util.hpp"

namespace coexist {
namespace {

using nlohmann::json;

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << text;
}

template <typename T>
void read_field(const json& j, const char* key, T& out) {
  if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("manifest field '") + key + "': " + e.what());
  }
}

std::array<double, 3> read_sectors(const json& j, const char* key, std::array<double, 3> fallback) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  const auto& arr = j.at(key);
  if (!arr.is_array() || arr.size() != 3)
    throw Error(ErrorCode::kParse, std::string("'") + key + "' must list 3 sector azimuths");
  return {arr[0].get<double>(), arr[1].get<double>(), arr[2].get<double>()};
}

FssAntennaParams parse_fss_antenna(const json& j) {
  FssAntennaParams p;
  read_field(j, "boresight_gain_dbi", p.boresight_gain_dbi);
  read_field(j, "boresight_azimuth_deg", p.boresight_azimuth_deg);
  read_field(j, "boresight_elevation_deg", p.boresight_elevation_deg);
  read_field(j, "near_in_deg", p.near_in_deg);
  read_field(j, "far_out_deg", p.far_out_deg);
  read_field(j, "backlobe_dbi", p.backlobe_dbi);
  return p;
}

json fss_antenna_json(const FssAntennaParams& p) {
  return {{"boresight_gain_dbi", p.boresight_gain_dbi},
          {"boresight_azimuth_deg", p.boresight_azimuth_deg},
          {"boresight_elevation_deg", p.boresight_elevation_deg},
          {"near_in_deg", p.near_in_deg},
          {"far_out_deg", p.far_out_deg},
          {"backlobe_dbi", p.backlobe_dbi}};
}

MacroBaseStation station_from_json(const json& j, const MbsDefaults& defaults, std::size_t index) {
  const std::string where = "mbs[" + std::to_string(index) + "]";
  if (!j.is_object() || !j.contains("id") || !j.contains("lat") || !j.contains("lon"))
    throw Error(ErrorCode::kParse, where + ": needs id, lat, lon");
  MacroBaseStation m;
  m.id = j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump();
  m.location = {j["lat"].get<double>(), j["lon"].get<double>(), defaults.height_m};
  read_field(j, "height_m", m.location.height_m);
  m.sector_azimuths_deg = read_sectors(j, "sector_azimuths_deg", defaults.sector_azimuths_deg);
  m.ue_per_sector = defaults.ue_per_sector;
  read_field(j, "ue_per_sector", m.ue_per_sector);
  m.coverage_radius_m = defaults.coverage_radius_m;
  read_field(j, "coverage_radius_m", m.coverage_radius_m);
  read_field(j, "active", m.active);
  return m;
}

std::string sectors_cell(const std::array<double, 3>& s) {
  return format_number(s[0]) + ";" + format_number(s[1]) + ";" + format_number(s[2]);
}

}  // namespace

void Scenario::validate() const {
  fss.location.validate();
  if (!(fss.location.height_m > 0.0))
    throw Error(ErrorCode::kInvalidArgument, "FSS height must be > 0");
  fss.antenna.validate();
  radio.validate();
  path_loss.validate();
  mbs_antenna.validate();
  if (!(ue_drop.min_radius_m >= 0.0 && ue_drop.min_radius_m < ue_drop.max_radius_m))
    throw Error(ErrorCode::kInvalidArgument, "UE drop needs 0 <= min_radius < max_radius");
  if (!(rainy_rate_mm_per_hr >= 0.0))
    throw Error(ErrorCode::kInvalidArgument, "rainy rate must be >= 0");

  std::set<std::string> ids;
  ids.insert(fss.id);
  const EnuFrame frame(frame_origin());
  const EnuPoint fss_enu = frame.to_enu(fss.location);
  for (const auto& m : mbs) {
    m.location.validate();
    if (!ids.insert(m.id).second)
      throw Error(ErrorCode::kInvalidArgument, "duplicate id '" + m.id + "'");
    if (m.ue_per_sector < 0)
      throw Error(ErrorCode::kInvalidArgument, "MBS " + m.id + ": negative ue_per_sector");
    if (distance_2d(frame.to_enu(m.location), fss_enu) > max_mbs_distance_m)
      throw Error(ErrorCode::kInvalidArgument,
                  "MBS " + m.id + " lies beyond " + format_number(max_mbs_distance_m) + " m");
  }
  std::set<std::string> building_ids;
  for (const auto& b : buildings) {
    if (!building_ids.insert(b.id).second)
      throw Error(ErrorCode::kInvalidArgument, "duplicate building id '" + b.id + "'");
    b.validate();
  }
}

MbsCsvResult parse_mbs_csv(const std::string& text, const MbsDefaults& defaults) {
  MbsCsvResult result;
  std::istringstream in(text);
  std::vector<std::pair<std::size_t, std::string>> rows;
  std::string line;
  for (std::size_t line_no = 1; std::getline(in, line); ++line_no) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!trim(line).empty()) rows.emplace_back(line_no, line);
  }
  if (rows.empty()) return result;  // empty file: no stations

  std::vector<std::string> header = split_csv_line(rows.front().second);
  for (auto& h : header) h = to_lower(trim(h));
  auto column = [&](std::initializer_list<const char*> names) -> std::optional<std::size_t> {
    for (const char* name : names) {
      auto it = std::find(header.begin(), header.end(), name);
      if (it != header.end()) return static_cast<std::size_t>(it - header.begin());
    }
    return std::nullopt;
  };
  const auto id_col = column({"id", "cell"});
  const auto lat_col = column({"lat", "latitude"});
  const auto lon_col = column({"lon", "longitude"});
  const auto height_col = column({"height_m"});
  const auto ue_col = column({"ue_per_sector"});
  const auto sectors_col = column({"sector_azimuths_deg"});
  const auto active_col = column({"active"});
  if (!id_col || !lat_col || !lon_col)
    throw Error(ErrorCode::kParse, "MBS CSV line " + std::to_string(rows.front().first) +
                                       ": header must contain id, lat, lon");

  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& [line_no, row] = rows[r];
    const std::string where = "MBS CSV line " + std::to_string(line_no);
    auto number = [&](const std::string& cell, const char* what) {
      const auto v = parse_double(trim(cell));
      if (!v) throw Error(ErrorCode::kParse, where + ": invalid " + what + " '" + cell + "'");
      return *v;
    };
    const auto cells = split_csv_line(row);
    if (cells.size() < header.size())
      throw Error(ErrorCode::kParse, where + ": expected " + std::to_string(header.size()) +
                                         " columns, got " + std::to_string(cells.size()));
    MacroBaseStation m;
    m.id = trim(cells[*id_col]);
    if (m.id.empty()) throw Error(ErrorCode::kParse, where + ": empty id");
    m.location.latitude_deg = number(cells[*lat_col], "lat");
    m.location.longitude_deg = number(cells[*lon_col], "lon");
    m.location.height_m = defaults.height_m;
    if (height_col && !trim(cells[*height_col]).empty())
      m.location.height_m = number(cells[*height_col], "height_m");
    m.sector_azimuths_deg = defaults.sector_azimuths_deg;
    if (sectors_col && !trim(cells[*sectors_col]).empty()) {
      const auto parts = split(trim(cells[*sectors_col]), ';');
      if (parts.size() != 3)
        throw Error(ErrorCode::kParse, where + ": sector_azimuths_deg needs 3 values");
      for (std::size_t k = 0; k < 3; ++k) m.sector_azimuths_deg[k] = number(parts[k], "sector azimuth");
    }
    m.ue_per_sector = defaults.ue_per_sector;
    if (ue_col && !trim(cells[*ue_col]).empty())
      m.ue_per_sector = static_cast<int>(number(cells[*ue_col], "ue_per_sector"));
    m.coverage_radius_m = defaults.coverage_radius_m;
    if (active_col && !trim(cells[*active_col]).empty()) {
      const std::string a = to_lower(trim(cells[*active_col]));
      m.active = !(a == "0" || a == "false" || a == "no");
    }
    try {
      m.location.validate();
    } catch (const Error& e) {
      throw Error(ErrorCode::kParse, where + ": " + e.what());
    }
    result.stations.push_back(std::move(m));
  }
  return result;
}

std::string mbs_to_csv(const std::vector<MacroBaseStation>& stations) {
  std::string out = "id,lat,lon,height_m,ue_per_sector,sector_azimuths_deg,active\n";
  for (const auto& m : stations) {
    out += m.id + "," + format_number(m.location.latitude_deg) + "," +
           format_number(m.location.longitude_deg) + "," + format_number(m.location.height_m) +
           "," + std::to_string(m.ue_per_sector) + "," + sectors_cell(m.sector_azimuths_deg) + "," +
           (m.active ? "1" : "0") + "\n";
  }
  return out;
}

Scenario parse_scenario_manifest(const json& manifest, const std::filesystem::path& base_dir) {
  if (!manifest.is_object()) throw Error(ErrorCode::kParse, "scenario manifest must be an object");
  const int version = manifest.value("schema_version", kScenarioSchemaVersion);
  if (version != kScenarioSchemaVersion)
    throw Error(ErrorCode::kParse, "unsupported scenario schema_version " + std::to_string(version));

  Scenario s;
  s.name = manifest.value("name", std::string("unnamed"));

  if (!manifest.contains("fss") || !manifest["fss"].is_object())
    throw Error(ErrorCode::kParse, "scenario manifest: missing FSS");
  const json& fss = manifest["fss"];
  if (!fss.contains("lat") || !fss.contains("lon"))
    throw Error(ErrorCode::kParse, "scenario manifest: FSS needs lat and lon");
  read_field(fss, "id", s.fss.id);
  s.fss.location.latitude_deg = fss["lat"].get<double>();
  s.fss.location.longitude_deg = fss["lon"].get<double>();
  read_field(fss, "height_m", s.fss.location.height_m);
  read_field(fss, "noise_temperature_k", s.fss.noise_temperature_k);
  if (fss.contains("antenna")) s.fss.antenna = parse_fss_antenna(fss["antenna"]);

  if (manifest.contains("mbs_defaults")) {
    const json& d = manifest["mbs_defaults"];
    read_field(d, "height_m", s.mbs_defaults.height_m);
    read_field(d, "ue_per_sector", s.mbs_defaults.ue_per_sector);
    read_field(d, "coverage_radius_m", s.mbs_defaults.coverage_radius_m);
    s.mbs_defaults.sector_azimuths_deg =
        read_sectors(d, "sector_azimuths_deg", s.mbs_defaults.sector_azimuths_deg);
  }

  if (manifest.contains("band")) {
    const json& b = manifest["band"];
    read_field(b, "low_ghz", s.band.low_ghz);
    read_field(b, "high_ghz", s.band.high_ghz);
    read_field(b, "channel_count", s.band.channel_count);
    read_field(b, "channel_bandwidth_hz", s.band.channel_bandwidth_hz);
  }

  s.radio.noise_temperature_k = s.fss.noise_temperature_k;
  s.radio.channel_bandwidth_hz = s.band.channel_bandwidth_hz;
  if (manifest.contains("radio")) {
    const json& r = manifest["radio"];
    read_field(r, "total_power_w", s.radio.total_power_w);
    read_field(r, "channel_bandwidth_hz", s.radio.channel_bandwidth_hz);
    if (r.contains("power_split_beams") && !r["power_split_beams"].is_null())
      s.radio.power_split_beams = r["power_split_beams"].get<int>();
  }

  s.path_loss.frequency_ghz = s.band.center_ghz();
  s.path_loss.tx_height_m = s.mbs_defaults.height_m;
  s.path_loss.rx_height_m = s.fss.location.height_m;
  if (manifest.contains("path_loss")) {
    const json& p = manifest["path_loss"];
    read_field(p, "frequency_ghz", s.path_loss.frequency_ghz);
    read_field(p, "tx_height_m", s.path_loss.tx_height_m);
    read_field(p, "rx_height_m", s.path_loss.rx_height_m);
    read_field(p, "sigma_los_db", s.path_loss.sigma_los_db);
    read_field(p, "sigma_nlos_db", s.path_loss.sigma_nlos_db);
  }
  if (manifest.contains("mbs_antenna")) {
    const json& a = manifest["mbs_antenna"];
    read_field(a, "peak_gain_dbi", s.mbs_antenna.peak_gain_dbi);
    read_field(a, "theta_3db_deg", s.mbs_antenna.theta_3db_deg);
    read_field(a, "phi_3db_deg", s.mbs_antenna.phi_3db_deg);
    read_field(a, "sidelobe_floor_db", s.mbs_antenna.sidelobe_floor_db);
    read_field(a, "sector_width_deg", s.mbs_antenna.sector_width_deg);
  }
  s.ue_drop.max_radius_m = s.mbs_defaults.coverage_radius_m;
  if (manifest.contains("ue_drop")) {
    const json& u = manifest["ue_drop"];
    read_field(u, "min_radius_m", s.ue_drop.min_radius_m);
    read_field(u, "max_radius_m", s.ue_drop.max_radius_m);
    read_field(u, "ue_height_m", s.ue_drop.ue_height_m);
  }
  if (manifest.contains("seeds")) {
    read_field(manifest["seeds"], "ue_drop", s.ue_drop.seed);
    read_field(manifest["seeds"], "shadow", s.path_loss.shadow_seed);
  }
  read_field(manifest, "max_mbs_distance_m", s.max_mbs_distance_m);
  read_field(manifest, "rainy_rate_mm_per_hr", s.rainy_rate_mm_per_hr);
  if (manifest.contains("weather_trace") && manifest["weather_trace"].is_string()) {
    s.weather_trace = base_dir / manifest["weather_trace"].get<std::string>();
  }

  std::vector<MacroBaseStation> stations;
  if (manifest.contains("mbs")) {
    const json& arr = manifest["mbs"];
    if (!arr.is_array()) throw Error(ErrorCode::kParse, "'mbs' must be an array");
    for (std::size_t i = 0; i < arr.size(); ++i)
      stations.push_back(station_from_json(arr[i], s.mbs_defaults, i));
  } else if (manifest.contains("mbs_csv")) {
    auto parsed = parse_mbs_csv(read_file(base_dir / manifest["mbs_csv"].get<std::string>()),
                                s.mbs_defaults);
    stations = std::move(parsed.stations);
    s.warnings.insert(s.warnings.end(), parsed.warnings.begin(), parsed.warnings.end());
  }

  const GeoPoint origin = s.frame_origin();
  const EnuPoint fss_enu = to_enu(origin, s.fss.location);
  std::size_t dropped = 0;
  for (auto& m : stations) {
    if (distance_2d(to_enu(origin, m.location), fss_enu) > s.max_mbs_distance_m) {
      ++dropped;
      continue;
    }
    s.mbs.push_back(std::move(m));
  }
  if (dropped > 0)
    s.warnings.push_back("dropped " + std::to_string(dropped) + " MBS(s) beyond " +
                         format_number(s.max_mbs_distance_m) + " m of the FSS");

  BuildingLoadResult buildings;
  if (manifest.contains("buildings")) {
    buildings = parse_buildings_geojson(manifest["buildings"].dump(), origin);
  } else if (manifest.contains("buildings_geojson")) {
    buildings = load_buildings_geojson(
        base_dir / manifest["buildings_geojson"].get<std::string>(), origin);
  }
  s.warnings.insert(s.warnings.end(), buildings.warnings.begin(), buildings.warnings.end());
  // Scenario box: MBS radius plus one cell radius around the FSS.
  const double half_extent = s.max_mbs_distance_m + s.mbs_defaults.coverage_radius_m;
  std::size_t outside = 0;
  for (auto& b : buildings.buildings) {
    const bool inside = std::all_of(b.footprint.begin(), b.footprint.end(), [&](const Vec2& v) {
      return std::abs(v.east_m - fss_enu.east_m) <= half_extent &&
             std::abs(v.north_m - fss_enu.north_m) <= half_extent;
    });
    if (!inside) {
      ++outside;
      continue;
    }
    s.buildings.push_back(std::move(b));
  }
  if (outside > 0)
    s.warnings.push_back("dropped " + std::to_string(outside) +
                         " building(s) outside the scenario bounding box");

  try {
    s.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::kParse, std::string("scenario '") + s.name + "': " + e.what());
  }
  return s;
}

Scenario load_scenario(const std::filesystem::path& manifest_or_dir) {
  std::filesystem::path manifest = manifest_or_dir;
  if (std::filesystem::is_directory(manifest)) manifest /= "manifest.json";
  if (!std::filesystem::exists(manifest))
    throw Error(ErrorCode::kNotFound, "scenario manifest not found: " + manifest.string());
  json doc;
  try {
    doc = json::parse(read_file(manifest));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kParse, manifest.string() + ": " + e.what());
  }
  return parse_scenario_manifest(doc, manifest.parent_path());
}

void save_scenario(const Scenario& s, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json manifest = {
      {"schema_version", kScenarioSchemaVersion},
      {"name", s.name},
      {"fss",
       {{"id", s.fss.id},
        {"lat", s.fss.location.latitude_deg},
        {"lon", s.fss.location.longitude_deg},
        {"height_m", s.fss.location.height_m},
        {"noise_temperature_k", s.fss.noise_temperature_k},
        {"antenna", fss_antenna_json(s.fss.antenna)}}},
      {"mbs_csv", "mbs.csv"},
      {"buildings_geojson", "buildings.geojson"},
      {"mbs_defaults",
       {{"height_m", s.mbs_defaults.height_m},
        {"ue_per_sector", s.mbs_defaults.ue_per_sector},
        {"coverage_radius_m", s.mbs_defaults.coverage_radius_m},
        {"sector_azimuths_deg", s.mbs_defaults.sector_azimuths_deg}}},
      {"band",
       {{"low_ghz", s.band.low_ghz},
        {"high_ghz", s.band.high_ghz},
        {"channel_count", s.band.channel_count},
        {"channel_bandwidth_hz", s.band.channel_bandwidth_hz}}},
      {"radio",
       {{"total_power_w", s.radio.total_power_w},
        {"channel_bandwidth_hz", s.radio.channel_bandwidth_hz},
        {"power_split_beams",
         s.radio.power_split_beams ? json(*s.radio.power_split_beams) : json(nullptr)}}},
      {"path_loss",
       {{"frequency_ghz", s.path_loss.frequency_ghz},
        {"tx_height_m", s.path_loss.tx_height_m},
        {"rx_height_m", s.path_loss.rx_height_m},
        {"sigma_los_db", s.path_loss.sigma_los_db},
        {"sigma_nlos_db", s.path_loss.sigma_nlos_db}}},
      {"mbs_antenna",
       {{"peak_gain_dbi", s.mbs_antenna.peak_gain_dbi},
        {"theta_3db_deg", s.mbs_antenna.theta_3db_deg},
        {"phi_3db_deg", s.mbs_antenna.phi_3db_deg},
        {"sidelobe_floor_db", s.mbs_antenna.sidelobe_floor_db},
        {"sector_width_deg", s.mbs_antenna.sector_width_deg}}},
      {"ue_drop",
       {{"min_radius_m", s.ue_drop.min_radius_m},
        {"max_radius_m", s.ue_drop.max_radius_m},
        {"ue_height_m", s.ue_drop.ue_height_m}}},
      {"seeds", {{"ue_drop", s.ue_drop.seed}, {"shadow", s.path_loss.shadow_seed}}},
      {"max_mbs_distance_m", s.max_mbs_distance_m},
      {"rainy_rate_mm_per_hr", s.rainy_rate_mm_per_hr},
  };
  if (!s.weather_trace.empty() && std::filesystem::exists(s.weather_trace)) {
    const auto target = dir / "weather.csv";
    if (std::filesystem::absolute(s.weather_trace) != std::filesystem::absolute(target))
      std::filesystem::copy_file(s.weather_trace, target,
                                 std::filesystem::copy_options::overwrite_existing);
    manifest["weather_trace"] = "weather.csv";
  }
  write_file(dir / "mbs.csv", mbs_to_csv(s.mbs));
  write_file(dir / "buildings.geojson", buildings_to_geojson(s.buildings, s.frame_origin()));
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

std::vector<std::vector<Beam>> drop_ues(const Scenario& scenario) {
  const GeoPoint origin = scenario.frame_origin();
  const auto& ue = scenario.ue_drop;
  const double half_width = scenario.mbs_antenna.sector_width_deg / 2.0;
  const double r0_sq = ue.min_radius_m * ue.min_radius_m;
  const double r1_sq = ue.max_radius_m * ue.max_radius_m;

  std::vector<std::vector<Beam>> out;
  out.reserve(scenario.mbs.size());
  for (const auto& m : scenario.mbs) {
    const EnuPoint site = to_enu(origin, m.location);
    // Independent stream per MBS: the drop never depends on list order.
    std::seed_seq seq{static_cast<std::uint32_t>(ue.seed), static_cast<std::uint32_t>(ue.seed >> 32),
                      static_cast<std::uint32_t>(link_key(m.id)),
                      static_cast<std::uint32_t>(link_key(m.id) >> 32), 0x0ed5u};
    std::mt19937_64 engine(seq);
    auto uniform = [&engine] { return static_cast<double>(engine() >> 11) * 0x1.0p-53; };

    std::vector<Beam> beams;
    beams.reserve(3 * static_cast<std::size_t>(std::max(m.ue_per_sector, 0)));
    for (int s = 0; s < 3; ++s) {
      const double center = m.sector_azimuths_deg[static_cast<std::size_t>(s)];
      for (int k = 0; k < m.ue_per_sector; ++k) {
        double az = std::fmod(center - half_width + 2.0 * half_width * uniform(), 360.0);
        if (az < 0.0) az += 360.0;
        const double r = std::sqrt(r0_sq + uniform() * (r1_sq - r0_sq));
        const double rad = az * std::numbers::pi / 180.0;
        Beam b;
        b.mbs_id = m.id;
        b.sector_index = s;
        b.sector_azimuth_deg = center;
        b.ue_id = m.id + "-s" + std::to_string(s) + "-u" + std::to_string(k);
        b.ue_position = {site.east_m + r * std::sin(rad), site.north_m + r * std::cos(rad),
                         ue.ue_height_m};
        b.steering = angles_between(site, b.ue_position);
        beams.push_back(std::move(b));
      }
    }
    out.push_back(std::move(beams));
  }
  return out;
}

}  // namespace coexist
