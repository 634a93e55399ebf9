#include <cmath>
#include <random>

#include "coexist/error.hpp"
#include "coexist/geo.hpp"
#include "doctest.h"
#include "oracle.hpp"
#include "worlds.hpp"

using namespace coexist;
using doctest::Approx;

namespace {

const GeoPoint kOrigin{37.2025, -80.434444, 0.0};

std::string feature_collection(const std::string& features) {
  return R"({"type":"FeatureCollection","features":[)" + features + "]}";
}

std::string square_feature(const std::string& id, const std::string& props) {
  return R"({"type":"Feature","id":")" + id + R"(","properties":)" + props +
         R"(,"geometry":{"type":"Polygon","coordinates":[[[-80.4340,37.2030],[-80.4339,37.2030],[-80.4339,37.2031],[-80.4340,37.2031],[-80.4340,37.2030]]]}})";
}

}  // namespace

TEST_CASE("to_enu: origin, a step north, a step east") {
  const EnuPoint o = to_enu(kOrigin, {kOrigin.latitude_deg, kOrigin.longitude_deg, 7.0});
  CHECK(o.east_m == 0.0);
  CHECK(o.north_m == 0.0);
  CHECK(o.up_m == 7.0);

  const EnuPoint n = to_enu(kOrigin, {kOrigin.latitude_deg + 0.01, kOrigin.longitude_deg, 0.0});
  CHECK(n.north_m == Approx(1111.95).epsilon(1e-5));
  CHECK(n.east_m == 0.0);

  const EnuPoint e = to_enu(kOrigin, {kOrigin.latitude_deg, kOrigin.longitude_deg + 0.01, 0.0});
  CHECK(e.east_m == Approx(885.6715).epsilon(1e-6));
  CHECK(e.east_m == Approx(1111.949266 * std::cos(oracle::rad(37.2025))).epsilon(1e-9));
}

TEST_CASE("from_enu inverts to_enu") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-5000.0, 5000.0);
  for (int i = 0; i < 200; ++i) {
    const EnuPoint p{u(rng), u(rng), std::abs(u(rng)) / 100.0};
    const EnuPoint back = to_enu(kOrigin, from_enu(kOrigin, p));
    // degrees near -80 carry ~1e-9 m of rounding
    CHECK(std::abs(back.east_m - p.east_m) < 1e-6);
    CHECK(std::abs(back.north_m - p.north_m) < 1e-6);
    CHECK(back.up_m == Approx(p.up_m));
  }
}

TEST_CASE("distances") {
  CHECK(distance_2d({1, 2, 3}, {1, 2, 3}) == 0.0);
  CHECK(distance_2d({0, 0, 0}, {3, 4, 0}) == 5.0);
  CHECK(distance_3d({0, 0, 0}, {3, 4, 0}) == 5.0);
  CHECK(distance_3d({0, 0, 0}, {3, 4, 12}) == 13.0);

  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1000.0, 1000.0);
  for (int i = 0; i < 500; ++i) {
    const EnuPoint a{u(rng), u(rng), u(rng)}, b{u(rng), u(rng), u(rng)}, c{u(rng), u(rng), u(rng)};
    CHECK(distance_3d(a, b) >= distance_2d(a, b));
    CHECK(distance_3d(a, b) <= distance_3d(a, c) + distance_3d(c, b) + 1e-9);
  }
}

TEST_CASE("angles_between") {
  auto d = angles_between({0, 0, 0}, {0, 100, 0});
  CHECK(d.azimuth_deg == 0.0);
  CHECK(d.elevation_deg == 0.0);
  d = angles_between({0, 0, 0}, {100, 0, 0});
  CHECK(d.azimuth_deg == Approx(90.0));
  CHECK(d.elevation_deg == 0.0);
  d = angles_between({0, 0, 0}, {0, 100, 100});
  CHECK(d.azimuth_deg == 0.0);
  CHECK(d.elevation_deg == Approx(45.0));
  d = angles_between({0, 0, 0}, {-1, -1, 0});
  CHECK(d.azimuth_deg == Approx(225.0));
  d = angles_between({0, 0, 0}, {-1, 1e-12, 0});
  CHECK(d.azimuth_deg >= 0.0);
  CHECK(d.azimuth_deg < 360.0);

  try {
    angles_between({1, 2, 3}, {1, 2, 3});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kInvalidArgument);
    CHECK(std::string(e.what()).find("degenerate direction") != std::string::npos);
  }
}

TEST_CASE("azimuth wrap and separation") {
  CHECK(wrap_azimuth_delta(350.0, 10.0) == Approx(20.0));
  CHECK(wrap_azimuth_delta(10.0, 350.0) == Approx(-20.0));
  CHECK(wrap_azimuth_delta(0.0, 180.0) == Approx(-180.0));
  CHECK(angular_separation_deg({180, 40}, {180, 40}) == 0.0);
  CHECK(angular_separation_deg({0, 0}, {90, 0}) == Approx(90.0));
  CHECK(angular_separation_deg({0, 90}, {123, 0}) == Approx(90.0));

  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> az(0, 360), el(-89, 89);
  for (int i = 0; i < 500; ++i) {
    const Direction a{az(rng), el(rng)}, b{az(rng), el(rng)};
    CHECK(angular_separation_deg(a, b) ==
          Approx(oracle::separation(a.azimuth_deg, a.elevation_deg, b.azimuth_deg, b.elevation_deg))
              .epsilon(1e-9));
  }
}

TEST_CASE("building validation") {
  Building b = testworld::rectangle("ok", 0, 0, 10, 10, 0.3, 12);
  CHECK_NOTHROW(b.validate());
  Building bow{"bow", {{0, 0}, {10, 10}, {10, 0}, {0, 10}}, 10.0};
  CHECK_THROWS_AS(bow.validate(), Error);
  Building flat = b;
  flat.height_m = 0.0;
  CHECK_THROWS_AS(flat.validate(), Error);
  Building two{"two", {{0, 0}, {1, 1}}, 5.0};
  CHECK_THROWS_AS(two.validate(), Error);
}

TEST_CASE("building occlusion, hand-built link") {
  // 25 m MBS 200 m west of a 4.5 m dish; building straddles the midpoint.
  const EnuPoint tx{-200, 0, 25}, rx{0, 0, 4.5};
  const Building tall = testworld::rectangle("tall", -100, 0, 20, 20, 0, 30);
  const Building low = testworld::rectangle("low", -100, 0, 20, 20, 0, 5);
  CHECK(building_blocks(tall, tx, rx));
  CHECK_FALSE(building_blocks(low, tx, rx));
  CHECK(building_blocks(tall, rx, tx));

  const std::vector<Building> none;
  const SpatialIndex empty(none);
  CHECK(is_los(tx, rx, empty, none));

  const std::vector<Building> one{tall};
  CHECK_FALSE(is_los(tx, rx, SpatialIndex(one), one));
  const std::vector<Building> lows{low};
  CHECK(is_los(tx, rx, SpatialIndex(lows), lows));

  // antenna on the roof of its own building
  const Building under = testworld::rectangle("under", 0, 0, 30, 30, 0, 40);
  CHECK_FALSE(building_blocks(under, tx, rx));

  // off to the side
  const Building aside = testworld::rectangle("aside", -100, 60, 20, 20, 0, 80);
  CHECK_FALSE(building_blocks(aside, tx, rx));
}

TEST_CASE("occlusion agrees with the reference and is symmetric on random scenes") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> pos(-600, 600), size(5, 120), ht(1, 50), rot(0, M_PI);
  int blocked = 0;
  for (int scene = 0; scene < 2000; ++scene) {
    const Building b = testworld::rectangle("b", pos(rng) / 2, pos(rng) / 2, size(rng), size(rng), rot(rng), ht(rng));
    const EnuPoint tx{pos(rng), pos(rng), ht(rng)}, rx{pos(rng), pos(rng), ht(rng)};
    const bool lib = building_blocks(b, tx, rx);
    CHECK(lib == oracle::blocks(b, {tx.east_m, tx.north_m, tx.up_m}, {rx.east_m, rx.north_m, rx.up_m}));
    CHECK(lib == building_blocks(b, rx, tx));
    blocked += lib;
  }
  CHECK(blocked > 50);  // enough blocked cases to mean something
}

TEST_CASE("index candidates are a superset for any cell size") {
  std::mt19937_64 rng(33);
  std::uniform_real_distribution<double> pos(-2000, 2000), size(5, 80), rot(0, M_PI);
  std::vector<Building> bs;
  for (int i = 0; i < 300; ++i)
    bs.push_back(testworld::rectangle("b" + std::to_string(i), pos(rng), pos(rng), size(rng), size(rng), rot(rng), 20));
  for (double cell : {7.0, 50.0, 100.0, 900.0}) {
    const SpatialIndex idx(bs, cell);
    for (int q = 0; q < 200; ++q) {
      const EnuPoint a{pos(rng), pos(rng), 0}, b{pos(rng), pos(rng), 0};
      const auto cand = idx.candidates(a, b);
      for (std::size_t i = 0; i < bs.size(); ++i) {
        const bool crosses = oracle::blocks({bs[i].id, bs[i].footprint, 1e9}, {a.east_m, a.north_m, 0},
                                            {b.east_m, b.north_m, 0});
        if (crosses) CHECK(std::binary_search(cand.begin(), cand.end(), i));
      }
    }
  }
}

TEST_CASE("GeoJSON buildings") {
  SUBCASE("heights, fallback key and default") {
    const auto r = parse_buildings_geojson(
        feature_collection(square_feature("a", R"({"height_m":22})") + "," +
                           square_feature("b", R"({"height":"18 m"})") + "," +
                           square_feature("c", "{}")),
        kOrigin);
    REQUIRE(r.buildings.size() == 3);
    CHECK(r.buildings[0].height_m == 22.0);
    CHECK(r.buildings[1].height_m == 18.0);
    CHECK(r.buildings[2].height_m == 15.0);
    REQUIRE(r.warnings.size() == 1);
    CHECK(r.warnings[0].find("(c)") != std::string::npos);
    CHECK(r.buildings[0].footprint.size() == 4);
  }
  SUBCASE("multipolygon splits") {
    const std::string mp =
        R"({"type":"Feature","id":"m","properties":{"height_m":10},"geometry":{"type":"MultiPolygon","coordinates":[[[[-80.4340,37.2030],[-80.4339,37.2030],[-80.4339,37.2031],[-80.4340,37.2030]]],[[[-80.4330,37.2030],[-80.4329,37.2030],[-80.4329,37.2031],[-80.4330,37.2030]]]]}})";
    const auto r = parse_buildings_geojson(feature_collection(mp), kOrigin);
    REQUIRE(r.buildings.size() == 2);
    CHECK(r.buildings[0].id == "m#0");
    CHECK(r.buildings[1].id == "m#1");
  }
  SUBCASE("errors name the feature") {
    const std::string bad =
        R"({"type":"Feature","id":"broken","properties":{},"geometry":{"type":"Polygon","coordinates":[[[-80.4,37.2],[-80.4,37.2]]]}})";
    try {
      parse_buildings_geojson(feature_collection(bad), kOrigin);
      FAIL("expected a parse error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kParse);
      CHECK(std::string(e.what()).find("broken") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_buildings_geojson("{not json", kOrigin), Error);
    CHECK_THROWS_AS(parse_buildings_geojson(R"({"type":"Feature"})", kOrigin), Error);
    const std::string point =
        R"({"type":"Feature","id":"p","properties":{},"geometry":{"type":"Point","coordinates":[-80.4,37.2]}})";
    CHECK_THROWS_AS(parse_buildings_geojson(feature_collection(point), kOrigin), Error);
  }
  SUBCASE("round trip through GeoJSON") {
    std::vector<Building> bs{testworld::rectangle("r1", 120, -40, 30, 12, 0.4, 17.5)};
    const auto r = parse_buildings_geojson(buildings_to_geojson(bs, kOrigin), kOrigin);
    REQUIRE(r.buildings.size() == 1);
    CHECK(r.buildings[0].id == "r1");
    CHECK(r.buildings[0].height_m == 17.5);
    for (std::size_t k = 0; k < 4; ++k) {
      CHECK(r.buildings[0].footprint[k].east_m == Approx(bs[0].footprint[k].east_m).epsilon(1e-9));
      CHECK(r.buildings[0].footprint[k].north_m == Approx(bs[0].footprint[k].north_m).epsilon(1e-9));
    }
  }
}
