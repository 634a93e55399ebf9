#include "coexist/context.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "coexist/error.hpp"
#include "coexist/store.hpp"
#include "httplib.h"
#include "json.hpp"
#include "text_util.hpp"

namespace coexist {

std::string_view to_string(WeatherKind kind) {
  switch (kind) {
    case WeatherKind::kClear: return "clear";
    case WeatherKind::kCloudy: return "cloudy";
    case WeatherKind::kRainSnow: return "rain_snow";
    case WeatherKind::kExtreme: return "extreme";
  }
  return "clear";
}

std::optional<WeatherKind> parse_weather_kind(std::string_view text) {
  const std::string t = to_lower(trim(text));
  if (t == "clear" || t == "sunny") return WeatherKind::kClear;
  if (t == "cloudy") return WeatherKind::kCloudy;
  if (t == "rain_snow" || t == "rain" || t == "snow" || t == "rainy" || t == "rain/snow")
    return WeatherKind::kRainSnow;
  if (t == "extreme") return WeatherKind::kExtreme;
  return std::nullopt;
}

std::string_view to_string(ContextKind) { return "weather"; }

void ContextSnapshot::validate() const {
  if (!(rain_rate_mm_per_hr >= 0.0))
    throw Error(ErrorCode::kInvalidArgument, "context: rain rate must be >= 0");
  if (rain_rate_mm_per_hr > 0.0 && weather != WeatherKind::kRainSnow &&
      weather != WeatherKind::kExtreme)
    throw Error(ErrorCode::kInvalidArgument,
                "context: positive rain rate requires rain_snow or extreme weather");
  if (weather == WeatherKind::kClear && rain_rate_mm_per_hr != 0.0)
    throw Error(ErrorCode::kInvalidArgument, "context: clear weather cannot carry rain");
}

bool ContextSnapshot::same_value(const ContextSnapshot& other) const {
  return weather == other.weather && rain_rate_mm_per_hr == other.rain_rate_mm_per_hr;
}

WeatherKind weather_from_rain_rate(double rain_rate, bool alert) {
  if (rain_rate <= 0.0) return WeatherKind::kClear;
  if (rain_rate < 10.0) return WeatherKind::kRainSnow;
  return alert ? WeatherKind::kExtreme : WeatherKind::kRainSnow;
}

std::string make_snapshot_id(std::string_view provider_id, std::int64_t timestamp) {
  return "ctx:" + std::string(provider_id) + ":" + std::to_string(timestamp);
}

TraceWeatherProvider::TraceWeatherProvider(std::string id, std::vector<Entry> entries,
                                           std::chrono::seconds refresh)
    : id_(std::move(id)), entries_(std::move(entries)), refresh_(refresh) {
  std::stable_sort(entries_.begin(), entries_.end(),
                   [](const Entry& a, const Entry& b) { return a.time < b.time; });
}

TraceWeatherProvider TraceWeatherProvider::from_csv(std::string id, const std::string& text,
                                                    std::chrono::seconds refresh) {
  std::istringstream in(text);
  std::string line;
  std::vector<Entry> entries;
  bool header_seen = false;
  for (std::size_t line_no = 1; std::getline(in, line); ++line_no) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    if (!header_seen) {
      header_seen = true;
      if (cells.size() < 3 || to_lower(trim(cells[0])) != "unix_time")
        throw Error(ErrorCode::kParse, "weather trace line " + std::to_string(line_no) +
                                           ": header must be unix_time,kind,rain_rate");
      continue;
    }
    const std::string where = "weather trace line " + std::to_string(line_no);
    if (cells.size() < 3) throw Error(ErrorCode::kParse, where + ": expected 3 columns");
    Entry e;
    const auto t = parse_double(trim(cells[0]));
    const auto rate = parse_double(trim(cells[2]));
    if (!t || !rate || *rate < 0.0) throw Error(ErrorCode::kParse, where + ": invalid number");
    e.time = static_cast<std::int64_t>(*t);
    e.rain_rate_mm_per_hr = *rate;
    const std::string kind_text = trim(cells[1]);
    if (kind_text.empty()) {
      e.kind = weather_from_rain_rate(*rate, false);
    } else if (auto k = parse_weather_kind(kind_text)) {
      e.kind = *k;
    } else {
      throw Error(ErrorCode::kParse, where + ": unknown weather kind '" + kind_text + "'");
    }
    e.raw = line;
    entries.push_back(std::move(e));
  }
  return TraceWeatherProvider(std::move(id), std::move(entries), refresh);
}

TraceWeatherProvider TraceWeatherProvider::load(std::string id, const std::filesystem::path& path,
                                                std::chrono::seconds refresh) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open weather trace " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_csv(std::move(id), ss.str(), refresh);
}

std::optional<ContextSnapshot> TraceWeatherProvider::fetch(const GeoPoint& location,
                                                           std::int64_t time) {
  auto it = std::upper_bound(entries_.begin(), entries_.end(), time,
                             [](std::int64_t t, const Entry& e) { return t < e.time; });
  if (it == entries_.begin()) return std::nullopt;
  const Entry& e = *std::prev(it);
  ContextSnapshot s;
  s.timestamp = e.time;
  s.weather = e.kind;
  s.rain_rate_mm_per_hr = e.rain_rate_mm_per_hr;
  s.location = location;
  s.provider_id = id_;
  s.id = make_snapshot_id(id_, e.time);
  s.raw_record = e.raw;
  return s;
}

FixedWeatherProvider::FixedWeatherProvider(std::string id, WeatherKind kind, double rain_rate)
    : id_(std::move(id)), kind_(kind), rain_rate_(rain_rate) {
  ContextSnapshot probe;
  probe.weather = kind;
  probe.rain_rate_mm_per_hr = rain_rate;
  probe.validate();
}

std::optional<ContextSnapshot> FixedWeatherProvider::fetch(const GeoPoint& location,
                                                           std::int64_t time) {
  ContextSnapshot s;
  s.timestamp = time;
  s.weather = kind_;
  s.rain_rate_mm_per_hr = rain_rate_;
  s.location = location;
  s.provider_id = id_;
  s.id = make_snapshot_id(id_, time);
  s.raw_record = std::string(to_string(kind_)) + "," + format_number(rain_rate_);
  return s;
}

ContextSnapshot parse_openweathermap(const std::string& body, const std::string& provider_id,
                                     const GeoPoint& location, std::int64_t time) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kParse, std::string("weather response: ") + e.what());
  }
  double rate = 0.0;
  if (doc.contains("rain") && doc["rain"].is_object()) {
    if (doc["rain"].contains("1h")) rate = doc["rain"]["1h"].get<double>();
    else if (doc["rain"].contains("3h")) rate = doc["rain"]["3h"].get<double>() / 3.0;
  }
  if (doc.contains("snow") && doc["snow"].is_object() && doc["snow"].contains("1h"))
    rate += doc["snow"]["1h"].get<double>();
  const bool alert = doc.contains("alerts") && doc["alerts"].is_array() && !doc["alerts"].empty();

  std::string main;
  if (doc.contains("weather") && doc["weather"].is_array() && !doc["weather"].empty())
    main = to_lower(doc["weather"][0].value("main", std::string()));

  ContextSnapshot s;
  s.weather = weather_from_rain_rate(rate, alert);
  if (rate == 0.0 && main == "clouds") s.weather = WeatherKind::kCloudy;
  if (rate > 0.0 && (main == "tornado" || main == "squall")) s.weather = WeatherKind::kExtreme;
  s.rain_rate_mm_per_hr = rate;
  s.timestamp = doc.contains("dt") ? doc["dt"].get<std::int64_t>() : time;
  s.location = location;
  s.provider_id = provider_id;
  s.id = make_snapshot_id(provider_id, s.timestamp);
  s.raw_record = body;
  return s;
}

OpenWeatherMapProvider::OpenWeatherMapProvider(std::string id, std::string endpoint,
                                               std::chrono::seconds refresh)
    : id_(std::move(id)), endpoint_(std::move(endpoint)), refresh_(refresh) {
  if (endpoint_.empty()) {
    if (const char* env = std::getenv(kEndpointEnv)) endpoint_ = env;
  }
}

std::optional<ContextSnapshot> OpenWeatherMapProvider::fetch(const GeoPoint& location,
                                                             std::int64_t time) {
  if (!enabled()) return std::nullopt;
  // Split "http://host:port/path" into client base and path.
  const auto scheme_end = endpoint_.find("://");
  const auto path_start =
      endpoint_.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
  const std::string base = endpoint_.substr(0, path_start);
  std::string path = path_start == std::string::npos ? "/" : endpoint_.substr(path_start);
  path += (path.find('?') == std::string::npos ? "?" : "&");
  path += "lat=" + format_number(location.latitude_deg) +
          "&lon=" + format_number(location.longitude_deg);

  httplib::Client client(base);
  client.set_connection_timeout(5);
  client.set_read_timeout(5);
  auto res = client.Get(path);
  if (!res || res->status != 200) return std::nullopt;
  return parse_openweathermap(res->body, id_, location, time);
}

ContextBroker::ContextBroker(std::chrono::seconds max_age) : max_age_(max_age) {}

void ContextBroker::register_provider(std::shared_ptr<ContextProvider> provider) {
  std::lock_guard lock(mutex_);
  cache_.erase(provider->kind());
  providers_[provider->kind()] = std::move(provider);
}

void ContextBroker::attach_store(Store* store) {
  std::lock_guard lock(mutex_);
  store_ = store;
}

void ContextBroker::set_override(WeatherKind kind, double rain_rate) {
  auto provider = std::make_shared<FixedWeatherProvider>("override", kind, rain_rate);
  std::lock_guard lock(mutex_);
  override_ = std::move(provider);
  cache_.erase(ContextKind::kWeather);
}

void ContextBroker::clear_override() {
  std::lock_guard lock(mutex_);
  override_.reset();
  cache_.erase(ContextKind::kWeather);
}

ContextSnapshot ContextBroker::fetch_locked(ContextKind kind, const GeoPoint& location,
                                            std::int64_t time) {
  std::shared_ptr<ContextProvider> provider = override_;
  if (!provider) {
    auto it = providers_.find(kind);
    if (it == providers_.end())
      throw Error(ErrorCode::kContextUnavailable,
                  "context unavailable: no provider for " + std::string(to_string(kind)));
    provider = it->second;
  }

  auto cached = cache_.find(kind);
  if (cached != cache_.end() && cached->second.snapshot.provider_id == provider->id()) {
    // Never step backwards in time; serve the cache while it is fresh.
    if (time < cached->second.fetched_at ||
        time - cached->second.fetched_at < provider->refresh_period().count()) {
      return cached->second.snapshot;
    }
  }

  auto fetched = provider->fetch(location, time);
  if (!fetched)
    throw Error(ErrorCode::kContextUnavailable,
                "context unavailable: provider '" + provider->id() + "' returned no data");
  ContextSnapshot snapshot = std::move(*fetched);
  snapshot.validate();
  if (cached != cache_.end() && snapshot.timestamp < cached->second.snapshot.timestamp)
    snapshot = cached->second.snapshot;  // keep the stream monotone
  snapshot.stale = time - snapshot.timestamp > max_age_.count();

  cache_[kind] = Cached{snapshot, time};
  if (!history_.contains(snapshot.id)) {
    history_[snapshot.id] = snapshot;
    if (store_) store_->put_context(snapshot, time);
  }
  return snapshot;
}

ContextSnapshot ContextBroker::get_context(ContextKind kind, const GeoPoint& location,
                                           std::int64_t time) {
  std::lock_guard lock(mutex_);
  return fetch_locked(kind, location, time);
}

ContextBroker::SubscriptionId ContextBroker::subscribe(ContextKind kind, Callback callback) {
  std::lock_guard lock(mutex_);
  const SubscriptionId id = next_subscription_++;
  subscribers_[id] = Subscriber{kind, std::move(callback)};
  return id;
}

void ContextBroker::unsubscribe(SubscriptionId id) {
  std::lock_guard lock(mutex_);
  subscribers_.erase(id);
}

bool ContextBroker::poll(ContextKind kind, const GeoPoint& location, std::int64_t time) {
  std::vector<Callback> targets;
  ContextSnapshot snapshot;
  {
    std::lock_guard lock(mutex_);
    snapshot = fetch_locked(kind, location, time);
    auto last = last_notified_.find(kind);
    const bool changed = last != last_notified_.end() && !last->second.same_value(snapshot);
    const bool first = last == last_notified_.end();
    if (first || changed) last_notified_[kind] = snapshot;
    if (!changed) return false;
    for (const auto& [id, sub] : subscribers_)
      if (sub.kind == kind) targets.push_back(sub.callback);
  }
  std::lock_guard dispatch(dispatch_mutex_);
  for (const auto& cb : targets) cb(snapshot);
  return true;
}

std::map<std::string, ContextSnapshot> ContextBroker::history() const {
  std::lock_guard lock(mutex_);
  return history_;
}

}  // namespace coexist
