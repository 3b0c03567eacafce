#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "cellosc/core.hpp"

namespace cellosc
{
inline constexpr double kMeanEarthRadiusKm = 6371.0;

inline double deg_to_rad(double degrees) { return degrees * std::numbers::pi / 180.0; }

/// Great-circle distance in kilometres: 2R asin(sqrt(h)), with h clamped to
/// [0, 1] so rounding near the antipode cannot produce NaN.
inline double haversine_km(const GeoPoint& a, const GeoPoint& b,
                           double earth_radius_km = kMeanEarthRadiusKm)
{
  // abs() of the differences keeps the result bit-identical under argument swap.
  const double dlat = deg_to_rad(std::abs(a.lat() - b.lat()));
  const double dlon = deg_to_rad(std::abs(a.lon() - b.lon()));
  const double sin_lat = std::sin(dlat / 2.0);
  const double sin_lon = std::sin(dlon / 2.0);
  const double cos_prod = std::cos(deg_to_rad(a.lat())) * std::cos(deg_to_rad(b.lat()));
  const double h = std::clamp(sin_lat * sin_lat + cos_prod * sin_lon * sin_lon, 0.0, 1.0);
  return 2.0 * earth_radius_km * std::asin(std::sqrt(h));
}

struct OverlapResult
{
  bool overlapping = false;
  double distance_m = 0.0;
  double radius_sum_m = 0.0;
};

/// Two disks overlap when their centres are strictly closer than the sum of
/// their radii.
inline OverlapResult overlap_test(const TowerRecord& t1, const TowerRecord& t2,
                                  double earth_radius_km = kMeanEarthRadiusKm)
{
  OverlapResult r;
  r.distance_m = haversine_km(t1.position(), t2.position(), earth_radius_km) * 1000.0;
  r.radius_sum_m = t1.radius_m() + t2.radius_m();
  r.overlapping = r.distance_m < r.radius_sum_m;
  return r;
}

/// Dense row-major matrix of distances in kilometres.
class DistanceMatrix
{
public:
  DistanceMatrix(std::size_t rows, std::size_t cols, std::vector<double> entries)
      : rows_(rows), cols_(cols), entries_(std::move(entries))
  {
    if (entries_.size() != rows_ * cols_)
      throw Error(Errc::DimensionMismatch, "entry count does not equal rows * cols");
    for (double e : entries_)
      if (!(e >= 0.0))
        throw Error(Errc::InvalidArgument, "distance entries must be non-negative");
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::span<const double> entries() const noexcept { return entries_; }
  double at(std::size_t i, std::size_t j) const { return entries_.at(i * cols_ + j); }

  friend bool operator==(const DistanceMatrix&, const DistanceMatrix&) = default;

private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<double> entries_;
};

inline DistanceMatrix distance_matrix(std::span<const GeoPoint> xs, std::span<const GeoPoint> ys,
                                      double earth_radius_km = kMeanEarthRadiusKm)
{
  if (xs.empty() || ys.empty())
    throw Error(Errc::EmptyInput, "distance_matrix needs two non-empty point lists");
  std::vector<double> entries;
  entries.reserve(xs.size() * ys.size());
  for (const auto& x : xs)
    for (const auto& y : ys)
      entries.push_back(haversine_km(x, y, earth_radius_km));
  return DistanceMatrix(xs.size(), ys.size(), std::move(entries));
}

/// How close the scatter of (dx, dy) entry pairs is to the identity line.
struct MatrixComparison
{
  double rmse = 0.0;
  double max_abs_diff = 0.0;
  double pearson_r = 0.0;
  /// Least-squares slope of dy regressed on dx.
  double fitted_slope = 0.0;
};

inline MatrixComparison compare_matrices(const DistanceMatrix& dx, const DistanceMatrix& dy)
{
  if (dx.rows() != dy.rows() || dx.cols() != dy.cols())
    throw Error(Errc::DimensionMismatch, "matrices differ in shape");
  const auto x = dx.entries();
  const auto y = dy.entries();
  const auto n = static_cast<double>(x.size());

  double mean_x = 0.0;
  double mean_y = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
  {
    mean_x += x[i];
    mean_y += y[i];
  }
  mean_x /= n;
  mean_y /= n;

  MatrixComparison out;
  double sxx = 0.0;
  double syy = 0.0;
  double sxy = 0.0;
  double sq = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
  {
    const double d = y[i] - x[i];
    sq += d * d;
    out.max_abs_diff = std::max(out.max_abs_diff, std::abs(d));
    const double cx = x[i] - mean_x;
    const double cy = y[i] - mean_y;
    sxx += cx * cx;
    syy += cy * cy;
    sxy += cx * cy;
  }
  if (!(sxx > 0.0))
    throw Error(Errc::DegenerateVariance, "all dx entries are equal");
  out.rmse = std::sqrt(sq / n);
  out.fitted_slope = sxy / sxx;
  out.pearson_r = syy > 0.0 ? std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0) : 0.0;
  return out;
}
}  // namespace cellosc
