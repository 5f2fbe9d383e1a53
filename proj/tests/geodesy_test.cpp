#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "geoloc/error.hpp"
#include "geoloc/geodesy.hpp"
#include "geoloc/random.hpp"

using namespace geoloc;

namespace {

GeoPoint random_point(Rng& rng) {
  return GeoPoint(-90.0 + 180.0 * uniform01(rng), -180.0 + 360.0 * uniform01(rng));
}

}  // namespace

TEST_CASE("GeoPoint enforces bounds") {
  CHECK_NOTHROW(GeoPoint(90.0, -180.0));
  CHECK_THROWS_AS(GeoPoint(90.5, 0.0), Error);
  CHECK_THROWS_AS(GeoPoint(0.0, 180.01), Error);
  CHECK_THROWS_AS(GeoPoint(std::nan(""), 0.0), Error);
}

TEST_CASE("haversine examples") {
  CHECK(haversine_km({40.0, -75.0}, {40.0, -75.0}) == 0.0);
  CHECK(haversine_km({0, 0}, {0, 180}) == doctest::Approx(std::numbers::pi * 6371.0).epsilon(1e-15));
  CHECK(haversine_km({0, 0}, {0, 180}) == doctest::Approx(20015.0869).epsilon(1e-8));
  // Spherical law of cosines at 50 digits: 3935.74625460972 km.
  CHECK(std::abs(haversine_km({40.7128, -74.0060}, {34.0522, -118.2437}) - 3935.7463) < 5e-5);
}

TEST_CASE("haversine properties") {
  Rng rng(2024);
  const double max_km = std::numbers::pi * kEarthRadiusKm + 1e-6;
  for (int i = 0; i < 1000; ++i) {
    const auto a = random_point(rng);
    const auto b = random_point(rng);
    const auto c = random_point(rng);
    const double ab = haversine_km(a, b);
    const double ba = haversine_km(b, a);
    CHECK(std::abs(ab - ba) <= 1e-9 * std::max(ab, 1.0));
    CHECK(ab >= 0.0);
    CHECK(ab <= max_km);
    const double ac = haversine_km(a, c);
    const double cb = haversine_km(c, b);
    CHECK(ab <= (ac + cb) * (1.0 + 1e-6) + 1e-9);
  }
}

TEST_CASE("evaluate examples") {
  const std::vector<GeoPoint> gold{{1, 2}, {3, 4}, {-5, 6}};
  const auto perfect = evaluate(gold, gold);
  CHECK(perfect.acc_at_161 == 100.0);
  CHECK(perfect.mean_km == 0.0);
  CHECK(perfect.median_km == 0.0);
  CHECK(perfect.n_users == 3);

  // Two users at 111.19492664455874 and 222.38985328911747 km (50-digit oracle).
  const std::vector<GeoPoint> pred{{0, 1}, {12, 10}};
  const std::vector<GeoPoint> truth{{0, 0}, {10, 10}};
  const auto pair = evaluate(pred, truth);
  CHECK(pair.mean_km == doctest::Approx(166.79238996683811).epsilon(1e-13));
  CHECK(pair.median_km == doctest::Approx(166.79238996683811).epsilon(1e-13));
  CHECK(pair.acc_at_161 == 50.0);
}

TEST_CASE("the 161 km boundary is inclusive") {
  // Move due north along a meridian by exactly 161 km worth of latitude.
  const double dlat = 161.0 / kEarthRadiusKm * 180.0 / std::numbers::pi;
  const GeoPoint a(0.0, 0.0);
  const GeoPoint b(dlat, 0.0);
  const double d = haversine_km(a, b);
  CHECK(d == doctest::Approx(161.0).epsilon(1e-12));
  const std::vector<GeoPoint> pred{b}, gold{a};
  CHECK(evaluate(pred, gold).acc_at_161 == (d <= 161.0 ? 100.0 : 0.0));
  CHECK(sorted_median(std::vector<double>{1.0, 3.0, 7.0, 100.0}) == 5.0);
}

TEST_CASE("evaluate errors") {
  const std::vector<GeoPoint> one{{0, 0}};
  const std::vector<GeoPoint> two{{0, 0}, {1, 1}};
  CHECK_THROWS_AS(evaluate(one, two), Error);
  CHECK_THROWS_AS(evaluate({}, {}), Error);
}

TEST_CASE("evaluate is invariant under permutation of user pairs") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + uniform_index(rng, 60);
    std::vector<GeoPoint> pred, gold;
    for (std::size_t i = 0; i < n; ++i) {
      gold.push_back(random_point(rng));
      pred.push_back(random_point(rng));
    }
    const auto report = evaluate(pred, gold);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    shuffle(std::span<std::size_t>(order), rng);
    std::vector<GeoPoint> p2, g2;
    for (const auto i : order) {
      p2.push_back(pred[i]);
      g2.push_back(gold[i]);
    }
    const auto permuted = evaluate(p2, g2);
    CHECK(permuted.acc_at_161 == report.acc_at_161);
    CHECK(permuted.mean_km == report.mean_km);
    CHECK(permuted.median_km == report.median_km);
  }
}

TEST_CASE("per-group medians and report formats") {
  const std::vector<GeoPoint> gold{{0, 0}, {0, 0}, {0, 0}};
  const std::vector<GeoPoint> pred{{0, 1}, {0, 3}, {0, 2}};
  const std::vector<std::string> groups{"ny", "ny", "ca"};
  const auto report = evaluate(pred, gold, std::span<const std::string>(groups));
  REQUIRE(report.per_group.size() == 2);
  CHECK(report.per_group.at("ca").count == 1);
  CHECK(report.per_group.at("ca").median_km == doctest::Approx(haversine_km({0, 0}, {0, 2})));
  CHECK(report.per_group.at("ny").median_km ==
        doctest::Approx((haversine_km({0, 0}, {0, 1}) + haversine_km({0, 0}, {0, 3})) / 2.0));
  CHECK(group_tsv(report) == "ca\t222.39\t1\nny\t222.39\t2\n");
  CHECK(report_tsv(report).starts_with("n_users\t3\nacc_at_161\t33.3333\n"));
  CHECK(format_report(report).find("median_km: 222.39") != std::string::npos);
}
