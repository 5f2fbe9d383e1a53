#include "geoloc/discretise.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>

#include "geoloc/error.hpp"
#include "geoloc/random.hpp"
#include "geoloc/text_io.hpp"

namespace geoloc {

std::string_view discretiser_kind_name(DiscretiserKind kind) {
  return kind == DiscretiserKind::kdtree ? "kdtree" : "kmeans";
}

DiscretiserKind parse_discretiser_kind(std::string_view name) {
  if (name == "kdtree") return DiscretiserKind::kdtree;
  if (name == "kmeans") return DiscretiserKind::kmeans;
  throw Error(ErrorCode::config, "unknown discretiser '" + std::string(name) + "'");
}

namespace {

double coord(const GeoPoint& p, int dim) { return dim == 0 ? p.lat() : p.lon(); }

double squared_euclidean(const GeoPoint& a, const GeoPoint& b) {
  const double dlat = a.lat() - b.lat();
  const double dlon = a.lon() - b.lon();
  return dlat * dlat + dlon * dlon;
}

double median_of(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  return sorted_median(values);
}

double cross(const GeoPoint& o, const GeoPoint& a, const GeoPoint& b) {
  return (a.lon() - o.lon()) * (b.lat() - o.lat()) - (a.lat() - o.lat()) * (b.lon() - o.lon());
}

class KdBuilder {
 public:
  KdBuilder(std::span<const GeoPoint> points, std::size_t capacity,
            std::vector<KdNode>& nodes, std::vector<std::uint32_t>& assignments)
      : points_(points), capacity_(capacity), nodes_(nodes), assignments_(assignments) {}

  int build(std::vector<std::size_t> members, std::size_t budget) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    const std::size_t n = members.size();
    if (n <= capacity_) return make_leaf(id, members);

    // Budgets always cover ceil(n / capacity), so budget >= 2 here.
    const std::size_t left_budget = budget / 2;
    const std::size_t right_budget = budget - left_budget;
    const std::size_t target = (n * left_budget + budget - 1) / budget;

    const int wider = spread(members, 0) >= spread(members, 1) ? 0 : 1;
    std::optional<Split> split;
    for (const int dim : {wider, 1 - wider}) {
      split = best_boundary(members, dim, target, left_budget, right_budget, true);
      if (split) break;
    }
    std::size_t lb = left_budget;
    std::size_t rb = right_budget;
    if (!split) {
      // Duplicates rule out every split that fits the budgets. Take the
      // nearest distinct-value boundary and let each side claim the leaves
      // its size needs, which may push the class count past k.
      for (const int dim : {wider, 1 - wider}) {
        split = best_boundary(members, dim, target, left_budget, right_budget, false);
        if (split) break;
      }
      if (!split) return make_leaf(id, members);
      lb = (split->left.size() + capacity_ - 1) / capacity_;
      rb = (split->right.size() + capacity_ - 1) / capacity_;
    }

    nodes_[id].dim = split->dim;
    nodes_[id].threshold = split->threshold;
    const int left = build(std::move(split->left), lb);
    const int right = build(std::move(split->right), rb);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  std::size_t leaves() const { return next_leaf_; }

 private:
  struct Split {
    int dim;
    double threshold;
    std::vector<std::size_t> left, right;
  };

  int make_leaf(int id, const std::vector<std::size_t>& members) {
    nodes_[id].leaf = static_cast<int>(next_leaf_);
    for (const auto i : members) assignments_[i] = static_cast<std::uint32_t>(next_leaf_);
    ++next_leaf_;
    return id;
  }

  double spread(const std::vector<std::size_t>& members, int dim) const {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto i : members) {
      lo = std::min(lo, coord(points_[i], dim));
      hi = std::max(hi, coord(points_[i], dim));
    }
    return hi - lo;
  }

  std::optional<Split> best_boundary(std::vector<std::size_t> members, int dim,
                                     std::size_t target, std::size_t left_budget,
                                     std::size_t right_budget, bool respect_capacity) const {
    std::stable_sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
      return coord(points_[a], dim) < coord(points_[b], dim);
    });
    const std::size_t n = members.size();
    std::optional<std::size_t> best;
    for (std::size_t p = 1; p < n; ++p) {
      if (!(coord(points_[members[p - 1]], dim) < coord(points_[members[p]], dim))) continue;
      if (respect_capacity && (p > left_budget * capacity_ || n - p > right_budget * capacity_)) {
        continue;
      }
      const auto distance = [&](std::size_t q) { return q > target ? q - target : target - q; };
      if (!best || distance(p) < distance(*best)) best = p;
    }
    if (!best) return std::nullopt;
    Split split{dim, coord(points_[members[*best - 1]], dim), {}, {}};
    split.left.assign(members.begin(), members.begin() + static_cast<std::ptrdiff_t>(*best));
    split.right.assign(members.begin() + static_cast<std::ptrdiff_t>(*best), members.end());
    std::sort(split.left.begin(), split.left.end());
    std::sort(split.right.begin(), split.right.end());
    return split;
  }

  std::span<const GeoPoint> points_;
  std::size_t capacity_;
  std::vector<KdNode>& nodes_;
  std::vector<std::uint32_t>& assignments_;
  std::size_t next_leaf_ = 0;
};

}  // namespace

std::vector<GeoPoint> convex_hull(std::vector<GeoPoint> points) {
  std::sort(points.begin(), points.end(), [](const GeoPoint& a, const GeoPoint& b) {
    return a.lon() < b.lon() || (a.lon() == b.lon() && a.lat() < b.lat());
  });
  points.erase(std::unique(points.begin(), points.end()), points.end());
  if (points.size() < 3) return points;

  std::vector<GeoPoint> hull(2 * points.size());
  std::size_t k = 0;
  for (const auto& p : points) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = points.size() - 1, lower = k + 1; i-- > 0;) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], points[i]) <= 0) --k;
    hull[k++] = points[i];
  }
  hull.resize(k - 1);
  return hull;
}

Discretiser fit_kdtree(std::span<const GeoPoint> points, std::size_t k) {
  if (k < 1) throw Error(ErrorCode::config, "k-d tree needs k >= 1");
  if (k > points.size()) {
    throw Error(ErrorCode::data, "k-d tree: k=" + std::to_string(k) + " exceeds " +
                                     std::to_string(points.size()) + " training points");
  }
  Discretiser d;
  d.kind_ = DiscretiserKind::kdtree;
  d.k_ = k;
  d.points_.assign(points.begin(), points.end());
  d.assignments_.assign(points.size(), 0);
  const std::size_t capacity = (points.size() + k - 1) / k;
  KdBuilder builder(points, capacity, d.nodes_, d.assignments_);
  std::vector<std::size_t> all(points.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  builder.build(std::move(all), k);
  d.finalise();
  return d;
}

Discretiser fit_kmeans(std::span<const GeoPoint> points, std::size_t k,
                       const KMeansOptions& options) {
  if (k < 1) throw Error(ErrorCode::config, "k-means needs k >= 1");
  if (points.empty()) throw Error(ErrorCode::data, "k-means: no training points");

  Discretiser d;
  d.kind_ = DiscretiserKind::kmeans;
  d.k_ = k;
  d.haversine_assignment_ = options.haversine_assignment;
  d.points_.assign(points.begin(), points.end());
  const std::size_t n = points.size();

  // k-means++ seeding; stops early when every point coincides with a centre.
  Rng rng(options.seed);
  auto& centroids = d.centroids_;
  centroids.push_back(points[uniform_index(rng, n)]);
  std::vector<double> nearest(n);
  for (std::size_t i = 0; i < n; ++i) nearest[i] = squared_euclidean(points[i], centroids[0]);
  while (centroids.size() < k) {
    double total = 0.0;
    for (const double v : nearest) total += v;
    if (total <= 0.0) break;
    const double target = uniform01(rng) * total;
    double cumulative = 0.0;
    std::size_t chosen = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (nearest[i] <= 0.0) continue;
      cumulative += nearest[i];
      chosen = i;
      if (cumulative > target) break;
    }
    centroids.push_back(points[chosen]);
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], squared_euclidean(points[i], centroids.back()));
    }
  }

  const auto assign_all = [&](std::vector<std::uint32_t>& labels) {
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      labels[i] = d.assign_kmeans(points[i]);
      if (d.haversine_assignment_) {
        const double km = haversine_km(points[i], centroids[labels[i]]);
        inertia += km * km;
      } else {
        inertia += squared_euclidean(points[i], centroids[labels[i]]);
      }
    }
    d.inertia_history_.push_back(inertia);
  };

  // Drops empty clusters, renumbering the survivors in order.
  const auto compact = [&](std::vector<std::uint32_t>& labels) {
    std::vector<std::size_t> counts(centroids.size(), 0);
    for (const auto label : labels) ++counts[label];
    std::vector<std::uint32_t> remap(centroids.size(), 0);
    std::vector<GeoPoint> kept;
    for (std::size_t c = 0; c < centroids.size(); ++c) {
      if (counts[c] == 0) continue;
      remap[c] = static_cast<std::uint32_t>(kept.size());
      kept.push_back(centroids[c]);
    }
    for (auto& label : labels) label = remap[label];
    centroids = std::move(kept);
  };

  std::vector<std::uint32_t> labels(n);
  assign_all(labels);
  for (std::size_t iter = 0; iter < options.max_iter; ++iter) {
    compact(labels);
    std::vector<double> sum_lat(centroids.size(), 0.0), sum_lon(centroids.size(), 0.0);
    std::vector<std::size_t> counts(centroids.size(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      sum_lat[labels[i]] += points[i].lat();
      sum_lon[labels[i]] += points[i].lon();
      ++counts[labels[i]];
    }
    for (std::size_t c = 0; c < centroids.size(); ++c) {
      const auto count = static_cast<double>(counts[c]);
      centroids[c] = GeoPoint(sum_lat[c] / count, sum_lon[c] / count);
    }
    std::vector<std::uint32_t> next(n);
    assign_all(next);
    const bool converged = next == labels;
    labels = std::move(next);
    if (converged) break;
  }
  compact(labels);
  d.assignments_ = std::move(labels);
  d.finalise();
  return d;
}

std::uint32_t Discretiser::assign_kmeans(const GeoPoint& p) const {
  std::uint32_t best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids_.size(); ++c) {
    const double dist = haversine_assignment_ ? haversine_km(p, centroids_[c])
                                              : squared_euclidean(p, centroids_[c]);
    if (dist < best_dist) {
      best_dist = dist;
      best = static_cast<std::uint32_t>(c);
    }
  }
  return best;
}

std::uint32_t Discretiser::assign_kdtree(const GeoPoint& p) const {
  int node = 0;
  while (!nodes_[node].is_leaf()) {
    const auto& split = nodes_[node];
    node = coord(p, split.dim) <= split.threshold ? split.left : split.right;
  }
  return static_cast<std::uint32_t>(nodes_[node].leaf);
}

std::uint32_t Discretiser::assign(const GeoPoint& p) const {
  return kind_ == DiscretiserKind::kmeans ? assign_kmeans(p) : assign_kdtree(p);
}

void Discretiser::finalise() {
  std::size_t classes = 0;
  for (const auto a : assignments_) classes = std::max<std::size_t>(classes, a + 1);
  std::vector<std::vector<double>> lats(classes), lons(classes);
  for (std::size_t i = 0; i < points_.size(); ++i) {
    lats[assignments_[i]].push_back(points_[i].lat());
    lons[assignments_[i]].push_back(points_[i].lon());
  }
  representatives_.clear();
  class_sizes_.clear();
  for (std::size_t c = 0; c < classes; ++c) {
    if (lats[c].empty()) throw Error(ErrorCode::model, "discretiser class " + std::to_string(c) + " is empty");
    class_sizes_.push_back(lats[c].size());
    representatives_.emplace_back(median_of(std::move(lats[c])), median_of(std::move(lons[c])));
  }
}

std::size_t Discretiser::class_size(std::size_t c) const {
  if (c >= class_sizes_.size()) throw Error(ErrorCode::data, "unknown class id " + std::to_string(c));
  return class_sizes_[c];
}

const GeoPoint& Discretiser::representative(std::size_t c) const {
  if (c >= representatives_.size()) {
    throw Error(ErrorCode::data, "unknown class id " + std::to_string(c) + " (have " +
                                     std::to_string(representatives_.size()) + ")");
  }
  return representatives_[c];
}

std::vector<GeoPoint> Discretiser::hull(std::size_t c) const {
  if (c >= num_classes()) throw Error(ErrorCode::data, "unknown class id " + std::to_string(c));
  std::vector<GeoPoint> members;
  for (std::size_t i = 0; i < points_.size(); ++i) {
    if (assignments_[i] == c) members.push_back(points_[i]);
  }
  return convex_hull(std::move(members));
}

double Discretiser::inertia() const {
  double total = 0.0;
  for (std::size_t i = 0; i < points_.size(); ++i) {
    const auto& centre = kind_ == DiscretiserKind::kmeans ? centroids_[assignments_[i]]
                                                          : representatives_[assignments_[i]];
    total += squared_euclidean(points_[i], centre);
  }
  return total;
}

std::string Discretiser::serialize() const {
  std::ostringstream out;
  out << "kind " << discretiser_kind_name(kind_) << '\n'
      << "k " << k_ << '\n'
      << "haversine " << (haversine_assignment_ ? 1 : 0) << '\n'
      << "points " << points_.size() << '\n';
  for (std::size_t i = 0; i < points_.size(); ++i) {
    out << format_exact(points_[i].lat()) << ' ' << format_exact(points_[i].lon()) << ' '
        << assignments_[i] << '\n';
  }
  out << "nodes " << nodes_.size() << '\n';
  for (const auto& node : nodes_) {
    out << node.dim << ' ' << format_exact(node.threshold) << ' ' << node.left << ' '
        << node.right << ' ' << node.leaf << '\n';
  }
  out << "centroids " << centroids_.size() << '\n';
  for (const auto& c : centroids_) out << format_exact(c.lat()) << ' ' << format_exact(c.lon()) << '\n';
  return out.str();
}

Discretiser Discretiser::deserialize(std::string_view text) {
  const auto lines = split_lines(text);
  std::size_t at = 0;
  const auto next = [&]() -> std::vector<std::string_view> {
    if (at >= lines.size()) throw Error(ErrorCode::model, "discretiser listing truncated");
    return split(lines[at++], ' ');
  };
  const auto number = [](std::string_view field) {
    const auto v = parse_double(field);
    if (!v) throw Error(ErrorCode::model, "discretiser listing: bad number '" + std::string(field) + "'");
    return *v;
  };
  const auto header = [&](std::string_view key) {
    const auto fields = next();
    if (fields.size() != 2 || fields[0] != key) {
      throw Error(ErrorCode::model, "discretiser listing: expected '" + std::string(key) + "'");
    }
    return fields[1];
  };
  const auto count = [&](std::string_view key) {
    return static_cast<std::size_t>(number(header(key)));
  };

  Discretiser d;
  try {
    d.kind_ = parse_discretiser_kind(header("kind"));
  } catch (const Error& e) {
    throw Error(ErrorCode::model, e.what());
  }
  d.k_ = count("k");
  d.haversine_assignment_ = count("haversine") != 0;
  const std::size_t n = count("points");
  for (std::size_t i = 0; i < n; ++i) {
    const auto f = next();
    if (f.size() != 3) throw Error(ErrorCode::model, "discretiser listing: bad point line");
    d.points_.emplace_back(number(f[0]), number(f[1]));
    d.assignments_.push_back(static_cast<std::uint32_t>(number(f[2])));
  }
  const std::size_t n_nodes = count("nodes");
  for (std::size_t i = 0; i < n_nodes; ++i) {
    const auto f = next();
    if (f.size() != 5) throw Error(ErrorCode::model, "discretiser listing: bad node line");
    d.nodes_.push_back(KdNode{static_cast<int>(number(f[0])), number(f[1]),
                              static_cast<int>(number(f[2])), static_cast<int>(number(f[3])),
                              static_cast<int>(number(f[4]))});
  }
  const std::size_t n_centroids = count("centroids");
  for (std::size_t i = 0; i < n_centroids; ++i) {
    const auto f = next();
    if (f.size() != 2) throw Error(ErrorCode::model, "discretiser listing: bad centroid line");
    d.centroids_.emplace_back(number(f[0]), number(f[1]));
  }
  d.finalise();
  if (d.kind_ == DiscretiserKind::kmeans && d.centroids_.size() != d.num_classes()) {
    throw Error(ErrorCode::model, "discretiser listing: centroid count disagrees with classes");
  }
  if (d.kind_ == DiscretiserKind::kdtree && d.nodes_.empty()) {
    throw Error(ErrorCode::model, "discretiser listing: k-d tree without nodes");
  }
  return d;
}

std::uint64_t Discretiser::hash() const { return fnv1a(serialize()); }

}  // namespace geoloc
