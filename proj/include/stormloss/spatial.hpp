#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stormloss/core.hpp"

namespace stormloss {

/// IUGG mean Earth radius.
inline constexpr double kEarthRadiusKm = 6371.0088;

/// Great-circle distance on a sphere of radius kEarthRadiusKm.
double haversine_km(const GeoPoint& a, const GeoPoint& b);

struct IndexedPoint {
  std::string id;
  GeoPoint location;
};

struct Neighbor {
  std::size_t index = 0;  // position in the points passed to NeighborIndex
  std::string id;
  double distance_km = 0;
};

/// Nearest-neighbour index over points on the sphere.
///
/// A k-d tree over unit vectors prunes by chord distance; every surviving
/// candidate is scored with haversine_km(query, point) and ties resolve to
/// the lexicographically smallest id, so results equal a linear scan.
class NeighborIndex {
 public:
  explicit NeighborIndex(std::vector<IndexedPoint> points);

  Neighbor nearest(const GeoPoint& query) const;
  const std::vector<IndexedPoint>& points() const noexcept { return points_; }
  std::size_t size() const noexcept { return points_.size(); }

 private:
  struct Node {
    int axis = -1;  // -1 for leaf
    double split = 0;
    std::size_t begin = 0, end = 0;  // range into order_ for leaves
    int left = -1, right = -1;
  };

  int build(std::size_t begin, std::size_t end);
  void search(int node, const std::array<double, 3>& q, const GeoPoint& query, Neighbor& best,
              bool& found) const;

  std::vector<IndexedPoint> points_;
  std::vector<std::array<double, 3>> unit_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

/// Exhaustive scan with the same tie rule as NeighborIndex.
Neighbor nearest_by_scan(const std::vector<IndexedPoint>& points, const GeoPoint& query);

NeighborIndex build_index(std::vector<IndexedPoint> points);

struct StormFeatures {
  std::string storm_id;
  double max_wind = 0;
  int category = 0;
  double min_pressure = 0;
  double distance_km = 0;
};

/// One representative fix per storm id: the fix with the highest max_wind,
/// ties broken by earliest observed_at. Output ordered by storm id.
std::vector<HurricaneRecord> storm_representatives(const std::vector<HurricaneRecord>& storms);

std::map<std::string, StormFeatures> assign_nearest_storm(const std::vector<ZctaRecord>& zctas,
                                                          const std::vector<HurricaneRecord>& storms);

/// Replaces missing values with the value of the nearest ZCTA that has one.
/// Every key must have a centroid in `centroids`.
std::map<std::string, double> impute_nearest_zcta(const std::map<std::string, std::optional<double>>& values,
                                                  const std::map<std::string, GeoPoint>& centroids);

/// Label variant of impute_nearest_zcta (same donor rule).
std::map<std::string, std::string> impute_nearest_zcta_label(
    const std::map<std::string, std::optional<std::string>>& values,
    const std::map<std::string, GeoPoint>& centroids);

}  // namespace stormloss
