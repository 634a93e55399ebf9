// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "coexist/dsaf.hpp"
#include "coexist/iet.hpp"
#include "coexist/policy.hpp"
#include "coexist/propagation.hpp"
#include "coexist/radio.hpp"
#include "coexist/scenario.hpp"
#include "coexist/service.hpp"
#include "enums.hpp"
#include "json.hpp"
#include "oracle.hpp"
#include "worlds.hpp"

namespace fs = std::filesystem;
using namespace coexist;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool ok = true;
  std::string note;

  void require(bool cond, const std::string& what) {
    if (cond) return;
    if (ok) note = what;
    ok = false;
  }
};

struct Criterion {
  std::string name;
  double budget_ms;  // 0: no time limit
  std::function<Outcome()> body;
};

std::string num(double v, int decimals = 6) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return buf;
}

const fs::path kFixture = fs::path(COEXIST_FIXTURES_DIR) / "blacksburg_synth";

std::shared_ptr<const Scenario> fixture() {
  static auto s = std::make_shared<const Scenario>(load_scenario(kFixture));
  return s;
}

ContextSnapshot weather(WeatherKind kind, double rate, const std::string& id) {
  ContextSnapshot c;
  c.id = id;
  c.weather = kind;
  c.rain_rate_mm_per_hr = rate;
  return c;
}

bool rel_close(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max(std::abs(b), 1e-300);
}

std::vector<std::string> csv_rows(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

// ----------------------------------------------------------------------

Outcome rain_anchor() {
  Outcome o;
  const auto t0 = Clock::now();
  const double got = rain_specific_attenuation_db_per_km(10.0, 12.45);
  const double us = std::chrono::duration<double, std::micro>(Clock::now() - t0).count();
  const double ref = oracle::rain_a(10.0, 12.45);
  o.require(got >= 0.9 && got <= 1.1, "value " + num(got) + " outside [0.9, 1.1]");
  o.require(rel_close(got, ref, 1e-12), "library " + num(got, 12) + " vs reference " + num(ref, 12));
  o.require(us < 1000.0, "took " + num(us, 1) + " us");
  if (o.ok) o.note = num(got) + " dB/km, reference " + num(ref) + ", " + num(us, 2) + " us";
  return o;
}

Outcome noise_floor() {
  Outcome o;
  RadioParams r;
  r.noise_temperature_k = 290.0;
  r.channel_bandwidth_hz = 100e6;
  const double n = noise_floor_dbw(r);
  const double ref = oracle::noise_dbw(290.0, 100e6);
  o.require(std::abs(n - (-123.975)) <= 0.001, "noise floor " + num(n));
  o.require(std::abs(n - ref) <= 1e-9, "library " + num(n, 9) + " vs reference " + num(ref, 9));
  RadioParams wide = r;
  wide.channel_bandwidth_hz *= 2.0;
  const double shift = noise_floor_dbw(wide) - n;
  o.require(std::abs(shift - 3.0103) <= 5e-5, "doubling shifts " + num(shift));
  if (o.ok) o.note = num(n, 4) + " dBW, doubling +" + num(shift, 5) + " dB";
  return o;
}

Outcome oracle_equivalence() {
  Outcome o;
  double worst = 0.0;
  std::size_t beams = 0;
  for (std::uint64_t k = 0; k < 100; ++k) {
    const std::uint64_t seed = 9000 + k;
    auto s = std::make_shared<Scenario>(testworld::random_scenario(seed, 5, 20));
    World w(s);
    const double rain = k % 4 == 0 ? 0.0 : double(k % 50);
    const auto ctx = rain > 0 ? weather(weather_from_rain_rate(rain, false), rain, "ctx:acc:rain")
                              : weather(WeatherKind::kClear, 0.0, "ctx:acc:clear");
    const auto r = evaluate(w, ActivationMask(w.sites().size(), true), ctx);
    const auto drop = drop_ues(*s);
    const auto ref = oracle::per_mbs(*s, drop, rain);
    double total = 0.0;
    for (const auto& m : ref) total += m.watts;
    for (const auto& b : drop) beams += b.size();
    const double rel = std::abs(r.aggregate_interference_w - total) / total;
    worst = std::max(worst, rel);
    o.require(rel <= 1e-9, "world " + std::to_string(seed) + ": relative error " + num(rel, 12));
    for (std::size_t m = 0; m < ref.size(); ++m)
      o.require(rel_close(r.per_mbs[m].interference_w, ref[m].watts, 1e-9),
                "world " + std::to_string(seed) + " station " + ref[m].id + " differs");
  }
  if (o.ok) o.note = "100 worlds, " + std::to_string(beams) + " beams, worst relative error " + num(worst, 15);
  return o;
}

Outcome los_oracle() {
  Outcome o;
  std::size_t blocked = 0, segments = 0, against_oracle = 0, against_scan = 0;
  for (std::uint64_t scene = 0; scene < 1000; ++scene) {
    std::mt19937_64 rng(424242 + scene);
    auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
    std::vector<Building> bs;
    const int n = std::uniform_int_distribution<int>(1, 40)(rng);
    for (int i = 0; i < n; ++i)
      bs.push_back(testworld::rectangle("b" + std::to_string(i), uni(-800, 800), uni(-800, 800), uni(10, 150),
                                        uni(10, 150), uni(0, M_PI), uni(5, 50)));
    const SpatialIndex index(bs, uni(20.0, 300.0));
    for (int k = 0; k < 5; ++k) {
      const EnuPoint tx{uni(-1000, 1000), uni(-1000, 1000), uni(10, 45)};
      const EnuPoint rx{uni(-1000, 1000), uni(-1000, 1000), uni(1.5, 10)};
      const bool indexed = is_los(tx, rx, index, bs);
      bool scan = true;
      for (const auto& b : bs)
        if (building_blocks(b, tx, rx)) scan = false;
      const bool ref = oracle::line_of_sight(bs, {tx.east_m, tx.north_m, tx.up_m}, {rx.east_m, rx.north_m, rx.up_m});
      ++segments;
      if (!indexed) ++blocked;
      if (indexed != scan) ++against_scan;
      if (indexed != ref) ++against_oracle;
    }
  }
  o.require(against_scan == 0, std::to_string(against_scan) + " disagreements with the full scan");
  o.require(against_oracle == 0, std::to_string(against_oracle) + " disagreements with the reference geometry");
  o.require(blocked > segments / 10 && blocked < segments, "degenerate scene mix: " + std::to_string(blocked) +
                                                               " of " + std::to_string(segments) + " blocked");
  if (o.ok)
    o.note = "1000 scenes, " + std::to_string(segments) + " segments, " + std::to_string(blocked) +
             " blocked, 0 disagreements";
  return o;
}

Outcome sweep_monotone() {
  Outcome o;
  std::string summary;
  for (const char* w : {"clear", "rainy"}) {
    const auto r = testcli::run("sweep-ez --fixtures " + testcli::quote(COEXIST_FIXTURES_DIR) +
                                " --scenario blacksburg_synth --weather " + w + " --ez-min 500 --ez-max 5000 --ez-step 500");
    o.require(r.exit_code == 0, std::string("sweep-ez ") + w + " exited " + std::to_string(r.exit_code));
    if (r.exit_code != 0) continue;
    const auto rows = csv_rows(r.output);
    o.require(rows.size() == 11, std::string(w) + ": expected 10 radii, got " + std::to_string(rows.size() - 1));
    double prev_agg = INFINITY;
    long prev_n = LONG_MAX;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const auto c1 = rows[i].find(','), c2 = rows[i].find(',', c1 + 1);
      const std::string agg = rows[i].substr(c1 + 1, c2 - c1 - 1);
      const long n = std::stol(rows[i].substr(c2 + 1));
      const double a = agg.empty() ? -INFINITY : std::stod(agg);
      o.require(a <= prev_agg, std::string(w) + ": aggregate rises at row " + std::to_string(i));
      o.require(n <= prev_n, std::string(w) + ": active count rises at row " + std::to_string(i));
      prev_agg = a;
      prev_n = n;
    }
    summary += std::string(w) + " " + rows[1].substr(rows[1].find(',') + 1) + " -> " +
               rows.back().substr(rows.back().find(',') + 1) + "; ";
  }
  if (o.ok) o.note = summary;
  return o;
}

Outcome weather_ordering() {
  Outcome o;
  const World w(fixture());
  const PolicySet p = default_policy();
  const auto clear = run_feedback_loop(w, weather(WeatherKind::kClear, 0.0, "ctx:acc:clear"), p);
  const auto rainy = run_feedback_loop(w, weather(WeatherKind::kRainSnow, 10.0, "ctx:acc:rainy"), p);
  const std::size_t cap = p.exclusion_zone.max_iterations();
  o.require(cap == 10, "iteration cap " + std::to_string(cap));
  o.require(clear.converged && rainy.converged, "a run did not converge");
  o.require(clear.trace.size() <= 10 && rainy.trace.size() <= 10, "more than 10 iterations");
  o.require(rainy.ez_radius_m >= clear.ez_radius_m, "rainy radius below clear radius");
  o.require(clear.ez_radius_m == 2500.0, "clear radius " + num(clear.ez_radius_m, 0) + ", golden 2500");
  o.require(rainy.ez_radius_m == 3500.0, "rainy radius " + num(rainy.ez_radius_m, 0) + ", golden 3500");
  if (o.ok)
    o.note = "clear " + num(clear.ez_radius_m, 0) + " m in " + std::to_string(clear.trace.size()) + ", rainy " +
             num(rainy.ez_radius_m, 0) + " m in " + std::to_string(rainy.trace.size()) + " iterations";
  return o;
}

Outcome determinism() {
  Outcome o;
  const auto dir = testworld::temp_dir("acceptance-run");
  for (const char* name : {"first", "second"}) {
    const auto r = testcli::run("run --fixtures " + testcli::quote(COEXIST_FIXTURES_DIR) +
                                " --scenario blacksburg_synth --weather clear --out " +
                                testcli::quote((dir / name).string()));
    o.require(r.exit_code == 0, std::string("run exited ") + std::to_string(r.exit_code) + ": " + r.output);
  }
  for (const char* file : {"trace.csv", "report.csv"}) {
    const auto a = testcli::slurp(dir / "first" / file), b = testcli::slurp(dir / "second" / file);
    o.require(!a.empty(), std::string(file) + " is empty");
    o.require(a == b, std::string(file) + " differs between runs");
  }
  fs::remove_all(dir);
  if (o.ok) o.note = "trace.csv and report.csv byte-identical";
  return o;
}

Outcome degeneracies() {
  Outcome o;
  // rain rate 0: rainy loss is the sunny loss on every link
  const World w(fixture());
  const auto all = ActivationMask(w.sites().size(), true);
  const auto sunny = evaluate(w, all, weather(WeatherKind::kClear, 0.0, "ctx:acc:sunny"));
  const auto wet0 = evaluate(w, all, weather(WeatherKind::kRainSnow, 0.0, "ctx:acc:wet0"));
  for (std::size_t i = 0; i < sunny.per_mbs.size(); ++i) {
    o.require(wet0.per_mbs[i].propagation.total_db == sunny.per_mbs[i].propagation.total_db,
              "link " + sunny.per_mbs[i].mbs_id + " differs at zero rain");
    o.require(wet0.per_mbs[i].propagation.rain_db == 0.0, "nonzero rain term at zero rain");
  }
  for (double d : {10.0, 250.0, 4999.0}) {
    const auto a = path_loss(d, 17, true, 0.0, fixture()->path_loss);
    o.require(a.rain_db == 0.0 && a.total_db == a.base_loss_db + a.shadow_db, "path_loss keeps rain at zero rate");
  }

  // sigma 0: no shadow term
  PathLossParams flat = fixture()->path_loss;
  flat.sigma_los_db = 0.0;
  flat.sigma_nlos_db = 0.0;
  for (std::uint64_t link = 1; link < 2000; link += 37) {
    o.require(shadow_fading_db(link, true, flat) == 0.0, "LOS shadow nonzero at sigma 0");
    o.require(shadow_fading_db(link, false, flat) == 0.0, "NLOS shadow nonzero at sigma 0");
  }

  // no active MBS: sentinel and convergence on the first iteration
  const auto off = evaluate(w, ActivationMask(w.sites().size(), false), weather(WeatherKind::kClear, 0.0, "c"));
  o.require(!off.aggregate_in_db.has_value(), "all-off aggregate is not the sentinel");
  auto empty = std::make_shared<Scenario>(*fixture());
  empty->mbs.clear();
  const World none(empty);
  const auto d = run_feedback_loop(none, weather(WeatherKind::kClear, 0.0, "c"), default_policy());
  o.require(d.converged && d.trace.size() == 1, "zero-MBS loop did not converge at once");
  o.require(!d.report.aggregate_in_db.has_value(), "zero-MBS aggregate is not the sentinel");
  o.require(d.ez_radius_m == default_policy().exclusion_zone.min_m, "zero-MBS radius is not the minimum");
  if (o.ok) o.note = "zero rain, zero sigma and zero stations all collapse as expected";
  return o;
}

Outcome policy_invariants() {
  Outcome o;
  const PolicySet p = default_policy();
  const auto users = testenum::all_users();
  std::size_t scored = 0;
  for (const auto& ctx : testenum::all_weather()) {
    std::vector<double> base;
    for (const auto& u : users) {
      const double s = priority_score(u, ctx, p);
      o.require(s >= 0.0 && s <= 1.0, "score " + num(s) + " for " + u.id);
      base.push_back(s);
      ++scored;
    }
    for (double k : {0.001, 0.25, 4.0, 1e4}) {
      PolicySet scaled = p;
      for (auto& [aspect, wt] : scaled.weights) wt *= k;
      std::vector<double> s;
      for (const auto& u : users) s.push_back(priority_score(u, ctx, scaled));
      for (std::size_t i = 0; i < users.size(); ++i)
        for (std::size_t j = 0; j < users.size(); ++j)
          if (base[i] < base[j] - 1e-12) o.require(s[i] < s[j], "ordering changes at weight scale " + num(k, 3));
    }
    SecondaryUser responder{"fr", UserClass::kGeneral, GeneralSubclass::kCommercial, TrafficType::kStreamingVideo, true};
    SecondaryUser voice{"cv", UserClass::kGeneral, GeneralSubclass::kCommercial, TrafficType::kRealtimeVoice, false};
    o.require(priority_score(responder, ctx, p) > priority_score(voice, ctx, p),
              "first-responder streaming not above commercial voice in " + ctx.id);
  }
  if (o.ok) o.note = std::to_string(scored) + " scores in [0,1], ordering stable under rescaling";
  return o;
}

Outcome timing_fields() {
  Outcome o;
  EngineConfig c;
  c.fixtures_dir = COEXIST_FIXTURES_DIR;
  Engine engine(c);
  std::vector<std::shared_ptr<const ExperimentRecord>> recs;
  ExperimentRequest r;
  r.scenario = "blacksburg_synth";
  recs.push_back(engine.run(r));
  r.mode = ExperimentMode::kSingleStep;
  r.controls.ez_radius_m = 2500.0;
  recs.push_back(engine.run(r));
  r.mode = ExperimentMode::kEzSweep;
  const std::string queued = engine.submit(r);
  engine.wait_idle();
  recs.push_back(engine.get(queued));
  for (const auto& rec : recs) {
    const auto doc = record_json(*rec);
    const std::string mode(to_string(rec->request.mode));
    o.require(doc.contains("timings"), mode + ": no timings");
    if (!doc.contains("timings")) continue;
    for (const char* k : {"setup_ms", "interference_ms", "dsa_ms"}) {
      o.require(doc["timings"].contains(k) && doc["timings"][k].is_number(), mode + ": missing " + k);
      if (doc["timings"].contains(k)) o.require(doc["timings"][k].get<double>() >= 0.0, mode + ": negative " + k);
    }
  }
  if (o.ok) {
    const auto& t = recs[0]->timings;
    o.note = "setup " + num(t.setup_ms, 2) + " ms, interference " + num(t.interference_ms, 2) + " ms, dsa " +
             num(t.dsa_ms, 2) + " ms";
  }
  return o;
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {"rain attenuation anchor at 10 mm/h, 12.45 GHz", 0, rain_anchor},
      {"noise floor at 290 K, 100 MHz", 0, noise_floor},
      {"aggregate interference equals the beam-by-beam reference", 30000, oracle_equivalence},
      {"indexed line of sight equals the full scan", 10000, los_oracle},
      {"EZ sweep is non-increasing, clear and rainy", 60000, sweep_monotone},
      {"rainy EZ at least the clear EZ, within 10 iterations", 60000, weather_ordering},
      {"run outputs are byte-identical across invocations", 0, determinism},
      {"zero rain, zero sigma and zero stations degenerate cleanly", 0, degeneracies},
      {"priority score invariants", 0, policy_invariants},
      {"per-stage timings on every experiment record", 0, timing_fields},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = c.body();
    } catch (const std::exception& e) {
      o.ok = false;
      o.note = std::string("exception: ") + e.what();
    }
    const double ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    if (c.budget_ms > 0 && ms > c.budget_ms) {
      o.ok = false;
      o.note = "over budget (" + num(c.budget_ms, 0) + " ms). " + o.note;
    }
    if (!o.ok) ++failures;
    std::printf("%s  %-60s %10.1f ms  %s\n", o.ok ? "PASS" : "FAIL", c.name.c_str(), ms, o.note.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
