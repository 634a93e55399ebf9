#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "coexist/geo.hpp"

namespace coexist {

class Store;

enum class WeatherKind { kClear, kCloudy, kRainSnow, kExtreme };

std::string_view to_string(WeatherKind kind);
// Accepts "clear", "cloudy", "rain_snow" (also "rain", "snow", "rainy"), "extreme".
std::optional<WeatherKind> parse_weather_kind(std::string_view text);

// Only weather is acquired from providers; traffic and user class arrive with
// user registrations.
enum class ContextKind { kWeather };

std::string_view to_string(ContextKind kind);

struct ContextSnapshot {
  std::string id;
  std::int64_t timestamp = 0;  // unix seconds
  WeatherKind weather = WeatherKind::kClear;
  double rain_rate_mm_per_hr = 0.0;
  GeoPoint location;
  std::string provider_id;
  std::string raw_record;  // provider's original record, for audit
  bool stale = false;

  // rain_rate >= 0; rain implies rain_snow/extreme; clear implies zero rain.
  void validate() const;
  // Same observable value (weather, rain rate), ignoring time and identity.
  bool same_value(const ContextSnapshot& other) const;
};

// Rate-only providers: 0 -> clear, (0, 10) -> rain_snow, >= 10 -> extreme when
// an alert is raised, rain_snow otherwise.
WeatherKind weather_from_rain_rate(double rain_rate_mm_per_hr, bool alert);

std::string make_snapshot_id(std::string_view provider_id, std::int64_t timestamp);

class ContextProvider {
 public:
  virtual ~ContextProvider() = default;

  virtual std::string id() const = 0;
  virtual ContextKind kind() const = 0;
  virtual std::chrono::seconds refresh_period() const = 0;
  // Latest record at or before `time`; nullopt when the provider has nothing.
  virtual std::optional<ContextSnapshot> fetch(const GeoPoint& location, std::int64_t time) = 0;
};

// CSV trace with header `unix_time,kind,rain_rate`.
class TraceWeatherProvider : public ContextProvider {
 public:
  struct Entry {
    std::int64_t time = 0;
    WeatherKind kind = WeatherKind::kClear;
    double rain_rate_mm_per_hr = 0.0;
    std::string raw;
  };

  TraceWeatherProvider(std::string id, std::vector<Entry> entries,
                       std::chrono::seconds refresh = std::chrono::seconds(600));

  static TraceWeatherProvider from_csv(std::string id, const std::string& text,
                                       std::chrono::seconds refresh = std::chrono::seconds(600));
  static TraceWeatherProvider load(std::string id, const std::filesystem::path& path,
                                   std::chrono::seconds refresh = std::chrono::seconds(600));

  std::string id() const override { return id_; }
  ContextKind kind() const override { return ContextKind::kWeather; }
  std::chrono::seconds refresh_period() const override { return refresh_; }
  std::optional<ContextSnapshot> fetch(const GeoPoint& location, std::int64_t time) override;

  const std::vector<Entry>& entries() const noexcept { return entries_; }

 private:
  std::string id_;
  std::vector<Entry> entries_;  // sorted by time
  std::chrono::seconds refresh_;
};

// Constant weather; backs the what-if override and CLI --weather flags.
class FixedWeatherProvider : public ContextProvider {
 public:
  FixedWeatherProvider(std::string id, WeatherKind kind, double rain_rate_mm_per_hr);

  std::string id() const override { return id_; }
  ContextKind kind() const override { return ContextKind::kWeather; }
  std::chrono::seconds refresh_period() const override { return std::chrono::seconds(0); }
  std::optional<ContextSnapshot> fetch(const GeoPoint& location, std::int64_t time) override;

 private:
  std::string id_;
  WeatherKind kind_;
  double rain_rate_;
};

// Maps an OpenWeatherMap "current weather" JSON body onto a snapshot:
// rain.1h (mm/h) for the rate, weather[0].main for cloudy/extreme hints,
// `alerts` presence as the extreme-weather flag.
ContextSnapshot parse_openweathermap(const std::string& body, const std::string& provider_id,
                                     const GeoPoint& location, std::int64_t time);

// HTTP adapter, disabled unless an endpoint is configured (constructor argument
// or COEXIST_WEATHER_ENDPOINT). The endpoint is `http://host[:port]/path`;
// lat/lon query parameters are appended.
class OpenWeatherMapProvider : public ContextProvider {
 public:
  static constexpr const char* kEndpointEnv = "COEXIST_WEATHER_ENDPOINT";

  explicit OpenWeatherMapProvider(std::string id, std::string endpoint = {},
                                  std::chrono::seconds refresh = std::chrono::seconds(600));

  bool enabled() const noexcept { return !endpoint_.empty(); }
  std::string id() const override { return id_; }
  ContextKind kind() const override { return ContextKind::kWeather; }
  std::chrono::seconds refresh_period() const override { return refresh_; }
  std::optional<ContextSnapshot> fetch(const GeoPoint& location, std::int64_t time) override;

 private:
  std::string id_;
  std::string endpoint_;
  std::chrono::seconds refresh_;
};

// Caches snapshots per kind, persists them to the store when one is attached,
// and fans change notifications out to subscribers. Callbacks run one at a time
// (serialized by the dispatch lock), never concurrently.
class ContextBroker {
 public:
  using Callback = std::function<void(const ContextSnapshot&)>;
  using SubscriptionId = std::uint64_t;

  explicit ContextBroker(std::chrono::seconds max_age = std::chrono::hours(6));

  void register_provider(std::shared_ptr<ContextProvider> provider);
  void attach_store(Store* store);

  // Override replaces the registered provider's answers until cleared.
  void set_override(WeatherKind kind, double rain_rate_mm_per_hr);
  void clear_override();

  // Freshest snapshot; re-fetches once the cached one is older than the
  // provider's refresh period. Throws Error(kContextUnavailable).
  ContextSnapshot get_context(ContextKind kind, const GeoPoint& location, std::int64_t time);

  SubscriptionId subscribe(ContextKind kind, Callback callback);
  void unsubscribe(SubscriptionId id);  // idempotent

  // get_context plus change notification; returns whether the value changed.
  bool poll(ContextKind kind, const GeoPoint& location, std::int64_t time);

  // Every snapshot id the broker has handed out, with its provider.
  std::map<std::string, ContextSnapshot> history() const;

 private:
  struct Subscriber {
    ContextKind kind;
    Callback callback;
  };
  struct Cached {
    ContextSnapshot snapshot;
    std::int64_t fetched_at = 0;
  };

  ContextSnapshot fetch_locked(ContextKind kind, const GeoPoint& location, std::int64_t time);

  std::chrono::seconds max_age_;
  mutable std::mutex mutex_;
  std::mutex dispatch_mutex_;
  std::map<ContextKind, std::shared_ptr<ContextProvider>> providers_;
  std::shared_ptr<ContextProvider> override_;
  std::map<ContextKind, Cached> cache_;
  std::map<ContextKind, ContextSnapshot> last_notified_;
  std::map<SubscriptionId, Subscriber> subscribers_;
  std::map<std::string, ContextSnapshot> history_;
  SubscriptionId next_subscription_ = 1;
  Store* store_ = nullptr;
};

}  // namespace coexist
