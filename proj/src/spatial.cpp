#include "stormloss/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

namespace stormloss {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

std::array<double, 3> unit_vector(const GeoPoint& p) {
  double lat = p.lat() * kDegToRad;
  double lon = p.lon() * kDegToRad;
  return {std::cos(lat) * std::cos(lon), std::cos(lat) * std::sin(lon), std::sin(lat)};
}

bool better(double d, const std::string& id, const Neighbor& best) {
  return d < best.distance_km || (d == best.distance_km && id < best.id);
}

constexpr std::size_t kLeafSize = 8;

}  // namespace

double haversine_km(const GeoPoint& a, const GeoPoint& b) {
  double dlat = (b.lat() - a.lat()) * kDegToRad;
  double dlon = (b.lon() - a.lon()) * kDegToRad;
  double s_lat = std::sin(dlat / 2);
  double s_lon = std::sin(dlon / 2);
  double h = s_lat * s_lat + std::cos(a.lat() * kDegToRad) * std::cos(b.lat() * kDegToRad) * s_lon * s_lon;
  h = std::clamp(h, 0.0, 1.0);
  return 2.0 * kEarthRadiusKm * std::asin(std::sqrt(h));
}

Neighbor nearest_by_scan(const std::vector<IndexedPoint>& points, const GeoPoint& query) {
  if (points.empty()) throw Error("nearest_by_scan: no points");
  Neighbor best{0, points[0].id, haversine_km(query, points[0].location)};
  for (std::size_t i = 1; i < points.size(); ++i) {
    double d = haversine_km(query, points[i].location);
    if (better(d, points[i].id, best)) best = {i, points[i].id, d};
  }
  return best;
}

NeighborIndex::NeighborIndex(std::vector<IndexedPoint> points) : points_(std::move(points)) {
  if (points_.empty()) throw Error("neighbor index needs at least one point");
  std::set<std::string> ids;
  for (const auto& p : points_)
    if (!ids.insert(p.id).second) throw Error("duplicate point id '" + p.id + "'");
  unit_.reserve(points_.size());
  for (const auto& p : points_) unit_.push_back(unit_vector(p.location));
  order_.resize(points_.size());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  build(0, order_.size());
}

int NeighborIndex::build(std::size_t begin, std::size_t end) {
  Node node;
  node.begin = begin;
  node.end = end;
  if (end - begin > kLeafSize) {
    std::array<double, 3> lo{1e300, 1e300, 1e300}, hi{-1e300, -1e300, -1e300};
    for (std::size_t i = begin; i < end; ++i)
      for (int a = 0; a < 3; ++a) {
        lo[a] = std::min(lo[a], unit_[order_[i]][a]);
        hi[a] = std::max(hi[a], unit_[order_[i]][a]);
      }
    int axis = 0;
    for (int a = 1; a < 3; ++a)
      if (hi[a] - lo[a] > hi[axis] - lo[axis]) axis = a;
    if (hi[axis] > lo[axis]) {
      std::size_t mid = begin + (end - begin) / 2;
      std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                       order_.begin() + static_cast<std::ptrdiff_t>(mid),
                       order_.begin() + static_cast<std::ptrdiff_t>(end),
                       [&](std::size_t x, std::size_t y) { return unit_[x][axis] < unit_[y][axis]; });
      node.axis = axis;
      node.split = unit_[order_[mid]][axis];
      int self = static_cast<int>(nodes_.size());
      nodes_.push_back(node);
      int left = build(begin, mid);
      int right = build(mid, end);
      nodes_[self].left = left;
      nodes_[self].right = right;
      return self;
    }
  }
  nodes_.push_back(node);
  return static_cast<int>(nodes_.size()) - 1;
}

void NeighborIndex::search(int idx, const std::array<double, 3>& q, const GeoPoint& query, Neighbor& best,
                           bool& found) const {
  const Node& node = nodes_[static_cast<std::size_t>(idx)];
  if (node.axis < 0) {
    for (std::size_t i = node.begin; i < node.end; ++i) {
      std::size_t p = order_[i];
      double d = haversine_km(query, points_[p].location);
      if (!found || better(d, points_[p].id, best)) {
        best = {p, points_[p].id, d};
        found = true;
      }
    }
    return;
  }
  double diff = q[static_cast<std::size_t>(node.axis)] - node.split;
  int near = diff < 0 ? node.left : node.right;
  int far = diff < 0 ? node.right : node.left;
  search(near, q, query, best, found);
  // |diff| lower-bounds the chord to anything on the far side
  double bound_km = 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::abs(diff) / 2.0));
  double slack = 1e-9 * (1.0 + best.distance_km);
  if (!found || bound_km <= best.distance_km + slack) search(far, q, query, best, found);
}

Neighbor NeighborIndex::nearest(const GeoPoint& query) const {
  Neighbor best;
  bool found = false;
  search(0, unit_vector(query), query, best, found);
  return best;
}

NeighborIndex build_index(std::vector<IndexedPoint> points) { return NeighborIndex(std::move(points)); }

std::vector<HurricaneRecord> storm_representatives(const std::vector<HurricaneRecord>& storms) {
  std::map<std::string, const HurricaneRecord*> best;
  for (const auto& s : storms) {
    auto [it, inserted] = best.try_emplace(s.storm_id, &s);
    if (inserted) continue;
    const HurricaneRecord& cur = *it->second;
    if (s.max_wind > cur.max_wind || (s.max_wind == cur.max_wind && s.observed_at < cur.observed_at))
      it->second = &s;
  }
  std::vector<HurricaneRecord> out;
  out.reserve(best.size());
  for (const auto& [id, rec] : best) out.push_back(*rec);
  return out;
}

std::map<std::string, StormFeatures> assign_nearest_storm(const std::vector<ZctaRecord>& zctas,
                                                          const std::vector<HurricaneRecord>& storms) {
  if (storms.empty()) throw Error("no storms available");
  if (zctas.empty()) throw Error("assign_nearest_storm: no ZCTAs");
  auto reps = storm_representatives(storms);
  std::vector<IndexedPoint> pts;
  pts.reserve(reps.size());
  for (const auto& r : reps) pts.push_back({r.storm_id, r.position});
  NeighborIndex index(std::move(pts));

  std::map<std::string, StormFeatures> out;
  for (const auto& z : zctas) {
    Neighbor nb = index.nearest(z.centroid);
    const HurricaneRecord& r = reps[nb.index];
    if (!out.emplace(z.zcta_id, StormFeatures{r.storm_id, r.max_wind, r.category, r.min_pressure, nb.distance_km})
             .second)
      throw Error("duplicate ZCTA '" + z.zcta_id + "'");
  }
  return out;
}

namespace {

template <typename T>
std::map<std::string, T> impute_generic(const std::map<std::string, std::optional<T>>& values,
                                        const std::map<std::string, GeoPoint>& centroids) {
  auto centroid_of = [&](const std::string& id) -> const GeoPoint& {
    auto it = centroids.find(id);
    if (it == centroids.end()) throw Error("no centroid for ZCTA '" + id + "'");
    return it->second;
  };
  std::vector<IndexedPoint> donors;
  std::vector<const T*> donor_values;
  for (const auto& [id, v] : values) {
    if (!v) continue;
    donors.push_back({id, centroid_of(id)});
    donor_values.push_back(&*v);
  }
  if (donors.empty()) throw Error("cannot impute: all values missing");
  std::map<std::string, T> out;
  if (donors.size() == values.size()) {
    for (const auto& [id, v] : values) out.emplace(id, *v);
    return out;
  }
  NeighborIndex index(std::move(donors));
  for (const auto& [id, v] : values) {
    if (v) {
      out.emplace(id, *v);
    } else {
      Neighbor nb = index.nearest(centroid_of(id));
      out.emplace(id, *donor_values[nb.index]);
    }
  }
  return out;
}

}  // namespace

std::map<std::string, double> impute_nearest_zcta(const std::map<std::string, std::optional<double>>& values,
                                                  const std::map<std::string, GeoPoint>& centroids) {
  return impute_generic(values, centroids);
}

std::map<std::string, std::string> impute_nearest_zcta_label(
    const std::map<std::string, std::optional<std::string>>& values,
    const std::map<std::string, GeoPoint>& centroids) {
  return impute_generic(values, centroids);
}

}  // namespace stormloss
