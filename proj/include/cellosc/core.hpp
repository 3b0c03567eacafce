#pragma once

#include <algorithm>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cellosc/error.hpp"

namespace cellosc
{
/// Seconds since the Unix epoch.
using Timestamp = std::int64_t;
/// Seconds.
using Duration = std::int64_t;

/// Cell identity. MIT-style logs carry only the partial CGI (LAC + Cell ID),
/// so MCC and MNC are optional and an absent code equals an absent code.
struct CellKey
{
  std::optional<std::int64_t> mcc;
  std::optional<std::int64_t> mnc;
  std::int64_t lac = 0;
  std::int64_t cell_id = 0;

  CellKey() = default;

  CellKey(std::int64_t lac_code, std::int64_t cell)
      : CellKey(std::nullopt, std::nullopt, lac_code, cell)
  {
  }

  CellKey(std::optional<std::int64_t> country, std::optional<std::int64_t> network,
          std::int64_t lac_code, std::int64_t cell)
      : mcc(country), mnc(network), lac(lac_code), cell_id(cell)
  {
    if (lac < 0 || cell_id < 0)
      throw Error(Errc::InvalidArgument, "lac and cell_id must be non-negative");
  }

  friend bool operator==(const CellKey&, const CellKey&) = default;

  /// Orders by (lac, cell_id) first; MCC/MNC only break remaining ties.
  friend std::strong_ordering operator<=>(const CellKey& a, const CellKey& b)
  {
    if (auto c = a.lac <=> b.lac; c != 0)
      return c;
    if (auto c = a.cell_id <=> b.cell_id; c != 0)
      return c;
    if (auto c = a.mcc <=> b.mcc; c != 0)
      return c;
    return a.mnc <=> b.mnc;
  }

  /// "mcc:mnc:lac:cell_id", absent codes left empty.
  std::string to_string() const
  {
    auto opt = [](const std::optional<std::int64_t>& v) {
      return v ? std::to_string(*v) : std::string();
    };
    return opt(mcc) + ":" + opt(mnc) + ":" + std::to_string(lac) + ":" +
           std::to_string(cell_id);
  }
};

struct CellKeyHash
{
  std::size_t operator()(const CellKey& key) const noexcept
  {
    std::size_t h = std::hash<std::int64_t>{}(key.lac);
    auto mix = [&h](std::size_t v) { h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2); };
    mix(std::hash<std::int64_t>{}(key.cell_id));
    mix(key.mcc ? std::hash<std::int64_t>{}(*key.mcc) : 0x51ed27ULL);
    mix(key.mnc ? std::hash<std::int64_t>{}(*key.mnc) : 0x2545f4ULL);
    return h;
  }
};

/// Latitude/longitude in degrees; out-of-range values are rejected.
class GeoPoint
{
public:
  GeoPoint() = default;

  GeoPoint(double latitude, double longitude) : lat_(latitude), lon_(longitude)
  {
    if (!(lat_ >= -90.0 && lat_ <= 90.0))
      throw Error(Errc::InvalidArgument, "latitude out of range [-90, 90]: " + std::to_string(lat_));
    if (!(lon_ >= -180.0 && lon_ <= 180.0))
      throw Error(Errc::InvalidArgument,
                  "longitude out of range [-180, 180]: " + std::to_string(lon_));
  }

  double lat() const noexcept { return lat_; }
  double lon() const noexcept { return lon_; }

  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;

private:
  double lat_ = 0.0;
  double lon_ = 0.0;
};

/// A cell tower modelled as a disk.
class TowerRecord
{
public:
  TowerRecord(CellKey key, GeoPoint position, double radius_m)
      : key_(std::move(key)), position_(position), radius_m_(radius_m)
  {
    if (!(radius_m_ > 0.0))
      throw Error(Errc::InvalidArgument, "tower radius must be positive");
  }

  const CellKey& key() const noexcept { return key_; }
  const GeoPoint& position() const noexcept { return position_; }
  double radius_m() const noexcept { return radius_m_; }

  friend bool operator==(const TowerRecord&, const TowerRecord&) = default;

private:
  CellKey key_;
  GeoPoint position_;
  double radius_m_;
};

/// One serving-cell log entry. leave >= arrive is checked by validate_sequence,
/// not here, so that parsers can report the offending row.
struct Observation
{
  CellKey key;
  Timestamp arrive = 0;
  Timestamp leave = 0;

  friend bool operator==(const Observation&, const Observation&) = default;
};

struct TrajectorySequence
{
  std::string user_id;
  std::vector<Observation> observations;

  friend bool operator==(const TrajectorySequence&, const TrajectorySequence&) = default;
};

inline std::string_view trim(std::string_view text)
{
  constexpr std::string_view ws = " \t\r\n\f\v";
  const auto first = text.find_first_not_of(ws);
  if (first == std::string_view::npos)
    return {};
  const auto last = text.find_last_not_of(ws);
  return text.substr(first, last - first + 1);
}

/// A user-supplied place label attached to the serving cell at tagging time.
/// Labels are stored trimmed and are case-sensitive.
class SemanticTagEvent
{
public:
  SemanticTagEvent(std::string user, CellKey key, std::string_view label, Timestamp at)
      : user_id_(std::move(user)), key_(std::move(key)), label_(trim(label)), at_(at)
  {
    if (label_.empty())
      throw Error(Errc::EmptyLabel, "semantic tag label is empty");
  }

  const std::string& user_id() const noexcept { return user_id_; }
  const CellKey& key() const noexcept { return key_; }
  const std::string& label() const noexcept { return label_; }
  Timestamp at() const noexcept { return at_; }

  friend bool operator==(const SemanticTagEvent&, const SemanticTagEvent&) = default;

private:
  std::string user_id_;
  CellKey key_;
  std::string label_;
  Timestamp at_;
};

enum class MissingTowerPolicy
{
  Error,
  Fallback,
};

struct Config
{
  Duration min_stay_seconds = 660;  // 11 minutes
  double default_radius_m = 1000.0;
  double earth_radius_km = 6371.0;
  int bin_minutes = 5;
  /// Histogram bounds are origin + k * bin_minutes (clipped at 60).
  int bin_origin_minutes = 0;
  std::uint64_t rng_seed = 42;
  MissingTowerPolicy missing_tower_policy = MissingTowerPolicy::Error;

  void validate() const
  {
    if (min_stay_seconds <= 0)
      throw Error(Errc::InvalidArgument, "min_stay_seconds must be positive");
    if (!(default_radius_m > 0.0))
      throw Error(Errc::InvalidArgument, "default_radius_m must be positive");
    if (!(earth_radius_km > 0.0))
      throw Error(Errc::InvalidArgument, "earth_radius_km must be positive");
    if (bin_minutes <= 0)
      throw Error(Errc::InvalidArgument, "bin_minutes must be positive");
    if (bin_origin_minutes < 0 || bin_origin_minutes >= 60)
      throw Error(Errc::InvalidArgument, "bin_origin_minutes must be in [0, 60)");
  }
};

inline Duration dwell_time(const Observation& obs) noexcept { return obs.leave - obs.arrive; }

/// Every ordering/dwell violation in the sequence, empty if it is valid.
inline std::vector<Issue> check_sequence(const TrajectorySequence& seq)
{
  std::vector<Issue> issues;
  const auto& obs = seq.observations;
  for (std::size_t i = 0; i < obs.size(); ++i)
  {
    if (i > 0 && obs[i].arrive < std::max(obs[i - 1].arrive, obs[i - 1].leave))
      issues.push_back({Errc::NonMonotonicTime, i, "arrive precedes end of previous observation"});
    if (obs[i].leave < obs[i].arrive)
      issues.push_back({Errc::NegativeDwell, i, "leave precedes arrive"});
  }
  return issues;
}

/// Returns the sequence unchanged when valid, otherwise throws a
/// SequenceError listing every violating index.
inline const TrajectorySequence& validate_sequence(const TrajectorySequence& seq)
{
  if (auto issues = check_sequence(seq); !issues.empty())
    throw SequenceError(std::move(issues));
  return seq;
}
}  // namespace cellosc
