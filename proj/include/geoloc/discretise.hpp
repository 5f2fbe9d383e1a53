#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "geoloc/geodesy.hpp"

namespace geoloc {

enum class DiscretiserKind { kdtree, kmeans };

std::string_view discretiser_kind_name(DiscretiserKind kind);
DiscretiserKind parse_discretiser_kind(std::string_view name);

/// Internal nodes split on `dim` (0 = lat, 1 = lon): values <= threshold go
/// left. Leaves carry a class id and no children.
struct KdNode {
  int dim = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  int leaf = -1;

  bool is_leaf() const { return leaf >= 0; }
  friend bool operator==(const KdNode&, const KdNode&) = default;
};

struct KMeansOptions {
  std::uint64_t seed = 1;
  std::size_t max_iter = 100;
  bool haversine_assignment = false;
};

/// A fitted partition of training coordinates into classes 0..C-1, each
/// mapped back to the coordinate-wise median of its members.
class Discretiser {
 public:
  DiscretiserKind kind() const { return kind_; }
  std::size_t requested_k() const { return k_; }
  std::size_t num_classes() const { return representatives_.size(); }

  const std::vector<GeoPoint>& training_points() const { return points_; }
  const std::vector<std::uint32_t>& assignments() const { return assignments_; }
  std::size_t class_size(std::size_t c) const;

  std::uint32_t assign(const GeoPoint& p) const;
  const GeoPoint& representative(std::size_t c) const;

  /// Convex hull of the class members in counter-clockwise (lon, lat) order.
  std::vector<GeoPoint> hull(std::size_t c) const;

  const std::vector<KdNode>& nodes() const { return nodes_; }
  const std::vector<GeoPoint>& centroids() const { return centroids_; }
  /// Inertia after every assignment step of Lloyd's algorithm (k-means only,
  /// not persisted).
  const std::vector<double>& inertia_history() const { return inertia_history_; }
  double inertia() const;

  std::string serialize() const;
  static Discretiser deserialize(std::string_view text);
  std::uint64_t hash() const;

  friend Discretiser fit_kdtree(std::span<const GeoPoint> points, std::size_t k);
  friend Discretiser fit_kmeans(std::span<const GeoPoint> points, std::size_t k,
                                const KMeansOptions& options);

 private:
  void finalise();
  std::uint32_t assign_kmeans(const GeoPoint& p) const;
  std::uint32_t assign_kdtree(const GeoPoint& p) const;

  DiscretiserKind kind_ = DiscretiserKind::kdtree;
  std::size_t k_ = 0;
  bool haversine_assignment_ = false;
  std::vector<GeoPoint> points_;
  std::vector<std::uint32_t> assignments_;
  std::vector<KdNode> nodes_;
  std::vector<GeoPoint> centroids_;
  std::vector<GeoPoint> representatives_;
  std::vector<std::size_t> class_sizes_;
  std::vector<double> inertia_history_;
};

/// Recursive median splits on the wider-spread dimension until each node
/// holds at most ceil(N/k) points. Split ranks follow the leaf budget of the
/// node so that at most k leaves are produced; with a power-of-two budget
/// this is the plain median. Equal values never straddle a split, so heavily
/// duplicated inputs can need a few more than k leaves.
Discretiser fit_kdtree(std::span<const GeoPoint> points, std::size_t k);

/// Lloyd's algorithm on raw (lat, lon) degrees with k-means++ seeding.
/// Clusters left empty are dropped and the ids compacted.
Discretiser fit_kmeans(std::span<const GeoPoint> points, std::size_t k,
                       const KMeansOptions& options = {});

/// Andrew's monotone chain over (lon, lat).
std::vector<GeoPoint> convex_hull(std::vector<GeoPoint> points);

}  // namespace geoloc
