#include <sys/wait.h>
#include <unistd.h>

#include <filesystem>

#include "coexist/error.hpp"
#include "coexist/store.hpp"
#include "doctest.h"
#include "json.hpp"
#include "worlds.hpp"

using namespace coexist;
using nlohmann::json;

namespace {

ContextSnapshot snapshot(const std::string& provider, std::int64_t t, double rain = 0.0) {
  ContextSnapshot s;
  s.provider_id = provider;
  s.timestamp = t;
  s.id = make_snapshot_id(provider, t);
  s.weather = rain > 0 ? WeatherKind::kRainSnow : WeatherKind::kClear;
  s.rain_rate_mm_per_hr = rain;
  s.location = {37.2, -80.4, 4.5};
  s.raw_record = "raw-" + std::to_string(t);
  return s;
}

StoredExperiment experiment(const std::string& id, const std::string& ctx, const std::string& policy,
                            std::int64_t at) {
  return {id, "blacksburg_synth", ctx, policy, json{{"id", id}, {"ez_radius_m", 2500}}, at};
}

template <class F>
ErrorCode code_of(F f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::kIo;
}

}  // namespace

TEST_CASE("registration round trip and FSS uniqueness") {
  Store st(":memory:");
  Registration fss{"scn", "fss-1", EntityKind::kFss, {37.2, -80.4, 4.5}, json{{"noise_temperature_k", 290}}, 10};
  st.put_registration(fss);
  CHECK(st.get_registration("scn", EntityKind::kFss, "fss-1") == fss);
  Registration mbs{"scn", "mbs-1", EntityKind::kMbs, {37.21, -80.41, 25}, json{{"ue_per_sector", 10}}, 11};
  st.put_registration(mbs);
  mbs.parameters["ue_per_sector"] = 5;
  st.put_registration(mbs);  // upsert
  CHECK(st.get_registration("scn", EntityKind::kMbs, "mbs-1") == mbs);
  CHECK(st.list_registrations("scn").size() == 2);
  CHECK(st.list_registrations("scn", EntityKind::kMbs).size() == 1);

  Registration other = fss;
  other.id = "fss-2";
  try {
    st.put_registration(other);
    FAIL("expected a conflict");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kConflict);
    CHECK(std::string(e.what()).find("one FSS per scenario") != std::string::npos);
  }
  other.scenario_id = "scn-b";
  CHECK_NOTHROW(st.put_registration(other));
  CHECK(code_of([&] { st.get_registration("scn", EntityKind::kSu, "nobody"); }) == ErrorCode::kNotFound);
}

TEST_CASE("contexts, priorities, policies, experiments") {
  Store st(":memory:");
  const auto a = snapshot("trace", 0), b = snapshot("trace", 3600, 10.0);
  st.put_context(a, 100);
  st.put_context(b, 200);
  st.put_context(b, 300);  // same id again: no-op
  const auto got = st.get_context(b.id);
  CHECK(got.rain_rate_mm_per_hr == 10.0);
  CHECK(got.weather == WeatherKind::kRainSnow);
  CHECK(got.raw_record == b.raw_record);
  CHECK(st.list_contexts().size() == 2);
  CHECK(st.list_contexts({1000, 5000}).size() == 1);
  CHECK(code_of([&] { st.get_context("ctx:none:0"); }) == ErrorCode::kNotFound);

  st.put_priority({"su-1", 0.4, a.id, 100, false});
  st.put_priority({"su-1", 0.6, a.id, 150, false});
  st.put_priority({"su-1", 0.7, b.id, 200, true});
  const auto pr = st.list_priorities();
  REQUIRE(pr.size() == 2);
  CHECK(st.list_priorities({160, 300}).size() == 1);

  st.put_policy({"default-1", json{{"version", "default-1"}}, 50});
  CHECK(st.get_policy("default-1").document["version"] == "default-1");
  CHECK(code_of([&] { st.get_policy("v9"); }) == ErrorCode::kNotFound);

  st.put_experiment(experiment("exp-1", a.id, "default-1", 500));
  CHECK(st.get_experiment("exp-1").record["ez_radius_m"] == 2500);
  CHECK(code_of([&] { st.put_experiment(experiment("exp-1", a.id, "default-1", 600)); }) == ErrorCode::kConflict);
  CHECK(code_of([&] { st.get_experiment("exp-404"); }) == ErrorCode::kNotFound);
}

TEST_CASE("purge") {
  Store st(":memory:");
  const std::int64_t day = 24 * 3600;
  for (int i = 0; i < 3; ++i) {
    const auto c = snapshot("p", i * day);
    st.put_context(c, i * day);
    st.put_policy({"pol-" + std::to_string(i), json::object(), i * day});
    st.put_experiment(experiment("exp-" + std::to_string(i), c.id, "pol-" + std::to_string(i), i * day));
  }
  st.put_context(snapshot("orphan", 0), 0);

  SUBCASE("infinite retention keeps everything") {
    const auto stats = st.purge(RetentionPolicy::keep_everything(), 100 * day);
    CHECK(stats.experiments == 0);
    CHECK(stats.contexts == 0);
    CHECK(st.list_experiments().size() == 3);
    CHECK(st.list_contexts().size() == 4);
  }
  SUBCASE("horizon drops the oldest experiment only") {
    RetentionPolicy r = RetentionPolicy::keep_everything();
    r.experiments_s = day + day / 2;  // now = 2.5 days: keeps day 1 and day 2
    r.contexts_s = 0;
    r.policies_s = 0;
    const auto stats = st.purge(r, 2 * day + day / 2);
    CHECK(stats.experiments == 1);
    const auto left = st.list_experiments();
    REQUIRE(left.size() == 2);
    for (const auto& e : left) {
      CHECK_NOTHROW(st.get_context(e.context_id));
      CHECK_NOTHROW(st.get_policy(e.policy_version));
    }
    CHECK(st.list_contexts().size() == 2);
    CHECK(code_of([&] { st.get_context(snapshot("orphan", 0).id); }) == ErrorCode::kNotFound);
    CHECK(code_of([&] { st.get_policy("pol-0"); }) == ErrorCode::kNotFound);
  }
}

TEST_CASE("acknowledged writes survive an abrupt exit") {
  const auto dir = testworld::temp_dir("store");
  const auto path = dir / "dsa.db";
  const pid_t pid = fork();
  REQUIRE(pid >= 0);
  if (pid == 0) {
    {
      auto* st = new Store(path);  // never destroyed: the process dies holding it
      for (int i = 0; i < 25; ++i)
        st->put_experiment(experiment("exp-" + std::to_string(i), "ctx:x:0", "default-1", i));
      st->put_context(snapshot("crash", 7), 7);
    }
    _exit(0);
  }
  int status = 0;
  waitpid(pid, &status, 0);
  REQUIRE(WIFEXITED(status));
  Store reopened(path);
  CHECK(reopened.list_experiments().size() == 25);
  CHECK(reopened.get_context("ctx:crash:7").raw_record == "raw-7");
  std::filesystem::remove_all(dir);
}

TEST_CASE("exports") {
  Store st(":memory:");
  st.put_registration({"scn", "mbs,odd", EntityKind::kMbs, {37.2, -80.4, 25}, json{{"a", 1}}, 3});
  st.put_context(snapshot("x", 1), 1);
  const std::string csv = st.export_csv("registrations");
  CHECK(csv.find("\"mbs,odd\"") != std::string::npos);
  CHECK(csv.substr(0, csv.find('\n')).find("scenario_id") != std::string::npos);
  const json doc = st.export_json("registrations");
  CHECK(doc["schema_version"] == 1);
  CHECK(doc["kind"] == "registrations");
  REQUIRE(doc["rows"].size() == 1);
  CHECK(doc["rows"][0]["parameters"]["a"] == 1);
  CHECK(st.export_json("contexts")["rows"].size() == 1);
  CHECK(code_of([&] { st.export_csv("secrets"); }) == ErrorCode::kInvalidArgument);
}
