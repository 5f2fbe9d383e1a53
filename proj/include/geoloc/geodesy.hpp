#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace geoloc {

inline constexpr double kEarthRadiusKm = 6371.0;
inline constexpr double kAccuracyRadiusKm = 161.0;

/// Latitude/longitude in degrees, bounds checked on construction.
class GeoPoint {
 public:
  GeoPoint() = default;
  GeoPoint(double lat, double lon);

  double lat() const { return lat_; }
  double lon() const { return lon_; }

  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;

 private:
  double lat_ = 0.0;
  double lon_ = 0.0;
};

/// Great-circle distance on a sphere of radius kEarthRadiusKm.
double haversine_km(const GeoPoint& a, const GeoPoint& b);

struct GroupStat {
  double median_km = 0.0;
  std::size_t count = 0;
};

struct GeoEvalReport {
  double acc_at_161 = 0.0;  // percent of users with error <= 161 km
  double mean_km = 0.0;
  double median_km = 0.0;
  std::size_t n_users = 0;
  std::map<std::string, GroupStat> per_group;
};

/// Median of an ascending-sorted sequence; even counts average the two
/// central values.
double sorted_median(std::span<const double> sorted);

GeoEvalReport evaluate(std::span<const GeoPoint> pred, std::span<const GeoPoint> gold,
                       std::optional<std::span<const std::string>> groups = std::nullopt);

/// Key-value block for humans.
std::string format_report(const GeoEvalReport& report);
/// `metric \t value` lines.
std::string report_tsv(const GeoEvalReport& report);
/// `group \t median_km \t count` lines.
std::string group_tsv(const GeoEvalReport& report);

}  // namespace geoloc
