#include "geoloc/geodesy.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "geoloc/error.hpp"
#include "geoloc/text_io.hpp"

namespace geoloc {

GeoPoint::GeoPoint(double lat, double lon) : lat_(lat), lon_(lon) {
  if (!(lat >= -90.0 && lat <= 90.0) || !(lon >= -180.0 && lon <= 180.0)) {
    throw Error(ErrorCode::data,
                "coordinate out of range: (" + format_g6(lat) + ", " + format_g6(lon) + ")");
  }
}

double haversine_km(const GeoPoint& a, const GeoPoint& b) {
  constexpr double to_rad = std::numbers::pi / 180.0;
  const double phi1 = a.lat() * to_rad;
  const double phi2 = b.lat() * to_rad;
  const double sin_dphi = std::sin((phi2 - phi1) / 2.0);
  const double sin_dlambda = std::sin((b.lon() - a.lon()) * to_rad / 2.0);
  double h = sin_dphi * sin_dphi + std::cos(phi1) * std::cos(phi2) * sin_dlambda * sin_dlambda;
  h = std::clamp(h, 0.0, 1.0);
  return 2.0 * kEarthRadiusKm * std::asin(std::sqrt(h));
}

double sorted_median(std::span<const double> sorted) {
  const std::size_t n = sorted.size();
  if (n == 0) return 0.0;
  if (n % 2 == 1) return sorted[n / 2];
  return (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0;
}

namespace {

// Summing in ascending order makes the mean independent of input order.
double sorted_mean(std::span<const double> sorted) {
  double sum = 0.0;
  for (const double d : sorted) sum += d;
  return sum / static_cast<double>(sorted.size());
}

}  // namespace

GeoEvalReport evaluate(std::span<const GeoPoint> pred, std::span<const GeoPoint> gold,
                       std::optional<std::span<const std::string>> groups) {
  if (pred.size() != gold.size()) {
    throw Error(ErrorCode::dimension, "evaluate: " + std::to_string(pred.size()) +
                                          " predictions vs " + std::to_string(gold.size()) +
                                          " gold points");
  }
  if (pred.empty()) throw Error(ErrorCode::data, "evaluate: no users");
  if (groups && groups->size() != pred.size()) {
    throw Error(ErrorCode::dimension, "evaluate: group list length differs from predictions");
  }

  std::vector<double> distances(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) distances[i] = haversine_km(pred[i], gold[i]);

  GeoEvalReport report;
  report.n_users = distances.size();
  const auto hits = std::count_if(distances.begin(), distances.end(),
                                  [](double d) { return d <= kAccuracyRadiusKm; });
  report.acc_at_161 = 100.0 * static_cast<double>(hits) / static_cast<double>(distances.size());

  if (groups) {
    std::map<std::string, std::vector<double>> by_group;
    for (std::size_t i = 0; i < distances.size(); ++i) by_group[(*groups)[i]].push_back(distances[i]);
    for (auto& [group, values] : by_group) {
      std::sort(values.begin(), values.end());
      report.per_group[group] = GroupStat{sorted_median(values), values.size()};
    }
  }

  std::sort(distances.begin(), distances.end());
  report.mean_km = sorted_mean(distances);
  report.median_km = sorted_median(distances);
  return report;
}

std::string format_report(const GeoEvalReport& report) {
  std::ostringstream out;
  out << "users: " << report.n_users << '\n'
      << "acc@161: " << format_g6(report.acc_at_161) << '\n'
      << "mean_km: " << format_g6(report.mean_km) << '\n'
      << "median_km: " << format_g6(report.median_km) << '\n';
  return out.str();
}

std::string report_tsv(const GeoEvalReport& report) {
  std::ostringstream out;
  out << "n_users\t" << report.n_users << '\n'
      << "acc_at_161\t" << format_g6(report.acc_at_161) << '\n'
      << "mean_km\t" << format_g6(report.mean_km) << '\n'
      << "median_km\t" << format_g6(report.median_km) << '\n';
  return out.str();
}

std::string group_tsv(const GeoEvalReport& report) {
  std::ostringstream out;
  for (const auto& [group, stat] : report.per_group) {
    out << group << '\t' << format_g6(stat.median_km) << '\t' << stat.count << '\n';
  }
  return out.str();
}

}  // namespace geoloc
