#include <cmath>
#include <memory>

#include "coexist/dsaf.hpp"
#include "coexist/error.hpp"
#include "doctest.h"
#include "oracle.hpp"
#include "worlds.hpp"

using namespace coexist;
using doctest::Approx;

namespace {

ContextSnapshot ctx(WeatherKind kind, double rate = 0.0) {
  ContextSnapshot c;
  c.id = "ctx:dsaf:" + std::string(to_string(kind));
  c.weather = kind;
  c.rain_rate_mm_per_hr = rate;
  return c;
}

struct Station {
  std::string id;
  double east, north;
};

std::shared_ptr<Scenario> built(const std::vector<Station>& stations, std::vector<Building> buildings = {}) {
  auto s = std::make_shared<Scenario>();
  s->name = "built";
  s->fss.id = "fss-b";
  s->path_loss.sigma_los_db = 0.0;
  s->path_loss.sigma_nlos_db = 0.0;
  s->path_loss.shadow_seed = 1;
  s->ue_drop.seed = 7;
  for (const auto& st : stations) {
    MacroBaseStation m;
    m.id = st.id;
    m.location = from_enu(s->frame_origin(), {st.east, st.north, 25.0});
    s->mbs.push_back(m);
  }
  s->buildings = std::move(buildings);
  return s;
}

// Individual I/N of every station from the reference model.
std::vector<double> reference_in_db(const Scenario& s, double rain) {
  std::vector<double> out;
  const double n = oracle::noise_dbw(s.radio.noise_temperature_k, s.radio.channel_bandwidth_hz);
  for (const auto& m : oracle::per_mbs(s, drop_ues(s), rain)) out.push_back(10.0 * std::log10(m.watts) - n);
  return out;
}

double reference_aggregate_db(const Scenario& s, const std::vector<bool>& on, double rain) {
  const auto per = oracle::per_mbs(s, drop_ues(s), rain);
  double w = 0.0;
  for (std::size_t i = 0; i < per.size(); ++i)
    if (on[i]) w += per[i].watts;
  return 10.0 * std::log10(w) - oracle::noise_dbw(s.radio.noise_temperature_k, s.radio.channel_bandwidth_hz);
}

std::shared_ptr<Scenario> dominant_world() {
  // LOS station at 800 m; the rest far out and shadowed by a wall of buildings.
  std::vector<Building> wall;
  for (int k = 0; k < 12; ++k) {
    const double a = 2.0 * M_PI * (k + 0.5) / 12.0;
    if (std::abs(std::cos(a) - 1.0) < 0.2) continue;  // keep the northern sightline open
    wall.push_back(testworld::rectangle("w" + std::to_string(k), 1500.0 * std::sin(a), 1500.0 * std::cos(a), 900.0,
                                        60.0, -a, 45.0));
  }
  return built({{"dom", 0.0, 800.0}, {"far-e", 3200.0, 300.0}, {"far-s", -200.0, -3600.0}, {"far-w", -3900.0, -900.0}},
               wall);
}

}  // namespace

TEST_CASE("zero stations converge at once") {
  World w(built({}));
  const auto d = run_feedback_loop(w, ctx(WeatherKind::kClear), default_policy());
  CHECK(d.converged);
  CHECK(d.ez_radius_m == 500.0);
  REQUIRE(d.trace.size() == 1);
  CHECK_FALSE(d.trace[0].aggregate_in_db.has_value());
  CHECK_FALSE(d.report.aggregate_in_db.has_value());
  CHECK(d.revoked.empty());
}

TEST_CASE("a dominant station is revoked by the 1000 m iteration") {
  const auto s = dominant_world();
  World w(s);
  const PolicySet p = default_policy();
  const auto ref = reference_in_db(*s, 0.0);
  REQUIRE(w.sites()[0].los);
  REQUIRE(ref[0] > -8.5);
  for (std::size_t i = 1; i < ref.size(); ++i) REQUIRE(ref[i] < -8.5);

  const auto d = run_feedback_loop(w, ctx(WeatherKind::kClear), p);
  CHECK(d.converged);
  REQUIRE(d.revoked.count("dom") == 1);
  CHECK_FALSE(d.active[0]);
  REQUIRE(d.trace.size() >= 1);
  std::size_t revoked_at = 0;
  for (const auto& t : d.trace)
    if (!revoked_at && t.active_count < s->mbs.size()) revoked_at = t.iteration;
  CHECK(revoked_at >= 1);
  CHECK(d.trace[revoked_at - 1].ez_radius_m <= 1000.0);
  CHECK(d.report.aggregate_in_db.has_value());
  CHECK(*d.report.aggregate_in_db ==
        Approx(reference_aggregate_db(*s, {false, true, true, true}, 0.0)).epsilon(1e-9));
}

TEST_CASE("trace is monotone and capped") {
  auto s = std::make_shared<Scenario>(
      load_scenario(std::filesystem::path(COEXIST_FIXTURES_DIR) / "blacksburg_synth"));
  World w(s);
  for (const auto& c : {ctx(WeatherKind::kClear), ctx(WeatherKind::kRainSnow, 10.0)}) {
    const auto d = run_feedback_loop(w, c, default_policy());
    CHECK(d.converged);
    CHECK(d.trace.size() <= default_policy().exclusion_zone.max_iterations());
    for (std::size_t k = 1; k < d.trace.size(); ++k) {
      CHECK(d.trace[k].active_count <= d.trace[k - 1].active_count);
      CHECK(d.trace[k].ez_radius_m == d.trace[k - 1].ez_radius_m + 500.0);
      if (d.trace[k].aggregate_in_db && d.trace[k - 1].aggregate_in_db)
        CHECK(*d.trace[k].aggregate_in_db <= *d.trace[k - 1].aggregate_in_db);
    }
    CHECK(d.trace.back().ez_radius_m == d.ez_radius_m);
    for (std::size_t i = 0; i < w.sites().size(); ++i) {
      if (w.sites()[i].distance_2d_m < d.ez_radius_m) CHECK_FALSE(d.active[i]);
      CHECK(d.active[i] != (d.revoked.count(w.sites()[i].id) == 1));
    }
  }
}

TEST_CASE("unconverged runs shut everything down") {
  World w(dominant_world());
  PolicySet p = default_policy();
  p.thresholds_db[WeatherKind::kClear] = -400.0;
  p.individual_offset_db = 1000.0;  // leave revocation to the distance rule
  LoopOptions opts;
  opts.exclusion_zone = ExclusionZonePolicy{500.0, 3000.0, 500.0};
  const auto d = run_feedback_loop(w, ctx(WeatherKind::kClear), p, opts);
  CHECK_FALSE(d.converged);
  CHECK(d.trace.size() == 6);
  CHECK(d.trace.back().active_count == 3);
  CHECK(d.ez_radius_m == 3000.0);
  CHECK(d.report.active_mbs_count == 0);
  CHECK_FALSE(d.report.aggregate_in_db.has_value());
  CHECK(d.revoked.size() == 4);
  CHECK(d.revoked.at("dom") == RevocationReason::kInsideEz);
  CHECK(d.revoked.at("far-e") == RevocationReason::kPolicy);
  CHECK(d.revoked.at("far-w") == RevocationReason::kPolicy);
}

TEST_CASE("re-running on the converged state changes nothing") {
  auto s = std::make_shared<Scenario>(
      load_scenario(std::filesystem::path(COEXIST_FIXTURES_DIR) / "blacksburg_synth"));
  const auto c = ctx(WeatherKind::kClear);
  World w(s);
  const auto first = run_feedback_loop(w, c, default_policy());
  auto again = std::make_shared<Scenario>(*s);
  for (std::size_t i = 0; i < again->mbs.size(); ++i) again->mbs[i].active = first.active[i];
  World w2(again);
  const auto second = run_feedback_loop(w2, c, default_policy());
  CHECK(second.converged);
  CHECK(second.active == first.active);
  CHECK(second.report.aggregate_in_db == first.report.aggregate_in_db);
  CHECK(second.trace.size() == 1);
}

TEST_CASE("de-exclusion") {
  const auto s = dominant_world();
  World w(s);
  const PolicySet p = default_policy();
  const auto clear = ctx(WeatherKind::kClear);

  // hand-made decision: radius 3500 m, far-e revoked by distance
  auto make = [&](double radius, std::vector<bool> on, std::map<std::string, RevocationReason> revoked) {
    DsaDecision d;
    d.ez_radius_m = radius;
    d.active = std::move(on);
    d.revoked = std::move(revoked);
    d.converged = true;
    d.threshold_db = -8.5;
    d.context_id = clear.id;
    d.report = evaluate(w, d.active, clear);
    return d;
  };

  SUBCASE("headroom and a harmless station: shrinks one step") {
    const auto d = make(3500.0, {false, false, true, true},
                        {{"dom", RevocationReason::kIndividualExcess}, {"far-e", RevocationReason::kInsideEz}});
    REQUIRE(*d.report.aggregate_in_db <= -8.5 - 3.0);
    REQUIRE(reference_aggregate_db(*s, {false, true, true, true}, 0.0) <= -8.5);
    const auto n = de_exclusion_check(w, d, clear, p, 3.0);
    CHECK(n.ez_radius_m == 3000.0);
    CHECK(n.active == std::vector<bool>{false, true, true, true});
    CHECK(n.revoked.count("far-e") == 0);
    CHECK(n.revoked.at("dom") == RevocationReason::kIndividualExcess);
    CHECK(n.trace.size() == d.trace.size());
    CHECK(n.report.within(-8.5));
  }
  SUBCASE("reactivation that would break the threshold is refused") {
    const auto d = make(1000.0, {false, true, true, true}, {{"dom", RevocationReason::kInsideEz}});
    REQUIRE(*d.report.aggregate_in_db <= -8.5 - 3.0);
    const auto n = de_exclusion_check(w, d, clear, p, 3.0);
    CHECK(n.ez_radius_m == 1000.0);
    CHECK(n.active == d.active);
  }
  SUBCASE("inside the margin: no change") {
    const auto d = make(3500.0, {false, false, true, true},
                        {{"dom", RevocationReason::kIndividualExcess}, {"far-e", RevocationReason::kInsideEz}});
    const double margin = -8.5 - *d.report.aggregate_in_db + 0.5;
    const auto n = de_exclusion_check(w, d, clear, p, margin);
    CHECK(n.ez_radius_m == 3500.0);
    CHECK(n.active == d.active);
  }
  SUBCASE("already at the minimum radius") {
    const auto d = make(500.0, {false, true, true, true}, {{"dom", RevocationReason::kIndividualExcess}});
    const auto n = de_exclusion_check(w, d, clear, p, 0.0);
    CHECK(n.ez_radius_m == 500.0);
  }
}

TEST_CASE("single step") {
  const auto s = dominant_world();
  World w(s);
  const PolicySet p = default_policy();
  const auto clear = ctx(WeatherKind::kClear);
  const auto d = run_feedback_loop(w, clear, p);
  REQUIRE(d.converged);

  const auto same = single_step(w, controls_from(w, d), clear, p);
  CHECK(same.pass);
  CHECK(same.active == d.active);
  CHECK(same.report.aggregate_in_db == d.report.aggregate_in_db);

  Controls back_on = controls_from(w, d);
  back_on.ez_radius_m.reset();
  back_on.mbs_on["dom"] = true;
  const auto bad = single_step(w, back_on, clear, p);
  CHECK_FALSE(bad.pass);
  REQUIRE(bad.report.aggregate_in_db.has_value());
  CHECK(*bad.report.aggregate_in_db > -8.5);

  Controls dark;
  for (const auto& site : w.sites()) dark.mbs_on[site.id] = false;
  const auto off = single_step(w, dark, clear, p);
  CHECK(off.pass);
  CHECK_FALSE(off.report.aggregate_in_db.has_value());
  CHECK(off.revoked.size() == 4);

  Controls ghost;
  ghost.mbs_on = {{"ghost-2", true}, {"dom", false}, {"ghost-1", false}};
  try {
    single_step(w, ghost, clear, p);
    FAIL("expected unknown entity");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kUnknownEntity);
    CHECK(std::string(e.what()).find("ghost-1") != std::string::npos);
    CHECK(std::string(e.what()).find("ghost-2") != std::string::npos);
    CHECK(e.detail() == std::vector<std::string>{"ghost-1", "ghost-2"});
  }

  Controls ez_only;
  ez_only.ez_radius_m = 1000.0;
  const auto r = single_step(w, ez_only, clear, p);
  CHECK(r.revoked.at("dom") == RevocationReason::kInsideEz);
  CHECK(r.active == std::vector<bool>{false, true, true, true});
}

TEST_CASE("sweep applies the distance rule only") {
  const auto s = dominant_world();
  World w(s);
  const auto rows = sweep_ez(w, ctx(WeatherKind::kClear), {500.0, 5000.0, 500.0});
  REQUIRE(rows.size() == 10);
  CHECK(rows[0].active_count == 4);
  CHECK(rows[1].active_count == 3);
  CHECK(rows.back().active_count == 0);
  CHECK_FALSE(rows.back().aggregate_in_db.has_value());
  CHECK(*rows[0].aggregate_in_db == Approx(reference_aggregate_db(*s, {true, true, true, true}, 0.0)).epsilon(1e-9));
  CHECK_THROWS_AS(sweep_ez(w, ctx(WeatherKind::kClear), {500.0, 400.0, 500.0}), Error);
}

TEST_CASE("revocation reason names") {
  for (auto r : {RevocationReason::kInsideEz, RevocationReason::kIndividualExcess, RevocationReason::kPolicy})
    CHECK(parse_revocation_reason(to_string(r)) == r);
  CHECK(to_string(RevocationReason::kInsideEz) == "inside_ez");
  CHECK_FALSE(parse_revocation_reason("bored").has_value());
}
