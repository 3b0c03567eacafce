#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "cellosc/core.hpp"
#include "cellosc/geo.hpp"
#include "cellosc/semantic.hpp"

namespace cellosc
{
using TowerMap = std::map<CellKey, TowerRecord>;

/// Same-LAC cells merged because the user ping-ponged between them.
struct OverlapCluster
{
  std::string id;
  /// Distinct cells in first-seen order.
  std::vector<CellKey> members;
  std::int64_t lac = 0;
  GeoPoint centroid;
  /// Sum of the dwell times of the observations folded into the cluster.
  Duration span = 0;

  friend bool operator==(const OverlapCluster&, const OverlapCluster&) = default;
};

struct SemanticPlace
{
  std::string label;
  friend bool operator==(const SemanticPlace&, const SemanticPlace&) = default;
};

struct ClusterPlace
{
  std::string cluster_id;
  friend bool operator==(const ClusterPlace&, const ClusterPlace&) = default;
};

struct CellPlace
{
  CellKey key;
  friend bool operator==(const CellPlace&, const CellPlace&) = default;
};

using Place = std::variant<SemanticPlace, ClusterPlace, CellPlace>;

struct ResolvedStay
{
  Place place;
  Timestamp arrive = 0;
  Timestamp leave = 0;
  /// Indices of the input observations folded into this stay, ascending.
  std::vector<std::size_t> observations;

  friend bool operator==(const ResolvedStay&, const ResolvedStay&) = default;
};

struct ResolvedTrajectory
{
  std::string user_id;
  std::vector<ResolvedStay> stays;
  /// The untagged overlap clusters, in creation order.
  std::vector<OverlapCluster> clusters;
  /// assignment[i] is the stay index of observation i.
  std::vector<std::size_t> assignment;
  /// Cells resolved through the fallback policy, in first-seen order.
  std::vector<CellKey> fallback_cells;

  friend bool operator==(const ResolvedTrajectory&, const ResolvedTrajectory&) = default;
};

/// Arithmetic mean of member positions. Not valid across the antimeridian.
inline GeoPoint cluster_centroid(std::span<const TowerRecord> members)
{
  if (members.empty())
    throw Error(Errc::EmptyCluster, "centroid of an empty cluster");
  double lat = 0.0;
  double lon = 0.0;
  for (const auto& t : members)
  {
    lat += t.position().lat();
    lon += t.position().lon();
  }
  const auto n = static_cast<double>(members.size());
  return GeoPoint(std::clamp(lat / n, -90.0, 90.0), std::clamp(lon / n, -180.0, 180.0));
}

inline std::string overlap_cluster_id(const std::string& user_id, std::size_t ordinal)
{
  return user_id + "#" + std::to_string(ordinal);
}

namespace detail
{
/// Tower used for each observation: its own record, a fallback record, or
/// none for semantically resolved observations.
inline std::vector<std::optional<TowerRecord>> effective_towers(
    const TrajectorySequence& seq, const TowerMap& towers,
    const std::vector<std::optional<std::string>>& labels, const Config& cfg,
    std::vector<CellKey>& fallback_cells)
{
  const auto& obs = seq.observations;
  const std::size_t n = obs.size();
  std::vector<const TowerRecord*> known(n, nullptr);
  for (std::size_t i = 0; i < n; ++i)
    if (auto it = towers.find(obs[i].key); it != towers.end())
      known[i] = &it->second;

  std::vector<std::optional<TowerRecord>> out(n);
  for (std::size_t i = 0; i < n; ++i)
  {
    if (labels[i])
      continue;
    if (known[i])
    {
      out[i] = *known[i];
      continue;
    }
    if (cfg.missing_tower_policy == MissingTowerPolicy::Error)
      throw Error(Errc::UnknownTower, "no tower record for cell " + obs[i].key.to_string());

    const TowerRecord* anchor = nullptr;
    for (std::size_t j = i; j-- > 0 && !anchor;)
      anchor = known[j];
    for (std::size_t j = i + 1; j < n && !anchor; ++j)
      anchor = known[j];
    if (!anchor)
      throw Error(Errc::UnknownTower, "no tower record for cell " + obs[i].key.to_string() +
                                          " and no known position to fall back on");
    out[i] = TowerRecord(obs[i].key, anchor->position(), cfg.default_radius_m);
    if (std::find(fallback_cells.begin(), fallback_cells.end(), obs[i].key) ==
        fallback_cells.end())
      fallback_cells.push_back(obs[i].key);
  }
  return out;
}
}  // namespace detail

/// Oscillation resolution over one user's trajectory.
///
/// Each observation whose cell carries a semantic tag is assigned to its
/// best-weighted place; consecutive observations at the same place form one
/// stay. Untagged observations are scanned in order and c_{i+1} joins the
/// forming subsequence of c_i when the two cells
///   - are the same cell, or
///   - overlap (distance < radius sum), c_i dwelt less than
///     cfg.min_stay_seconds, and they share a LAC.
/// A subsequence closes as soon as the chain breaks. Closed subsequences with
/// two or more distinct cells become OverlapClusters; single-cell ones stay
/// as plain cell stays.
inline ResolvedTrajectory resolve(const TrajectorySequence& seq, const TowerMap& towers,
                                  const CellWeightIndex& index, const Config& cfg)
{
  cfg.validate();
  validate_sequence(seq);
  const auto& obs = seq.observations;
  const std::size_t n = obs.size();

  ResolvedTrajectory out;
  out.user_id = seq.user_id;
  out.assignment.assign(n, 0);

  std::vector<std::optional<std::string>> labels(n);
  for (std::size_t i = 0; i < n; ++i)
    labels[i] = resolve_cell_to_location(obs[i].key, index);
  const auto tower = detail::effective_towers(seq, towers, labels, cfg, out.fallback_cells);

  // The forming subsequence.
  std::vector<std::size_t> run;
  std::optional<std::string> run_label;
  std::vector<CellKey> run_cells;

  auto close_run = [&] {
    if (run.empty())
      return;
    ResolvedStay stay;
    stay.arrive = obs[run.front()].arrive;
    stay.leave = obs[run.front()].leave;
    for (std::size_t i : run)
      stay.leave = std::max(stay.leave, obs[i].leave);
    stay.observations = run;

    if (run_label)
    {
      stay.place = SemanticPlace{*run_label};
    }
    else if (run_cells.size() >= 2)
    {
      OverlapCluster cluster;
      cluster.id = overlap_cluster_id(seq.user_id, out.clusters.size());
      cluster.members = run_cells;
      cluster.lac = run_cells.front().lac;
      std::vector<TowerRecord> member_towers;
      for (const auto& key : run_cells)
        for (std::size_t i : run)
          if (obs[i].key == key)
          {
            member_towers.push_back(*tower[i]);
            break;
          }
      cluster.centroid = cluster_centroid(member_towers);
      for (std::size_t i : run)
        cluster.span += dwell_time(obs[i]);
      stay.place = ClusterPlace{cluster.id};
      out.clusters.push_back(std::move(cluster));
    }
    else
    {
      stay.place = CellPlace{run_cells.front()};
    }

    for (std::size_t i : run)
      out.assignment[i] = out.stays.size();
    out.stays.push_back(std::move(stay));
    run.clear();
    run_cells.clear();
    run_label.reset();
  };

  for (std::size_t i = 0; i < n; ++i)
  {
    bool extend = false;
    if (!run.empty())
    {
      const std::size_t prev = run.back();
      if (labels[i])
      {
        extend = run_label && *run_label == *labels[i];
      }
      else if (!run_label)
      {
        if (obs[prev].key == obs[i].key)
        {
          extend = true;
        }
        else
        {
          const bool overlapping =
              overlap_test(*tower[prev], *tower[i], cfg.earth_radius_km).overlapping;
          extend = overlapping && dwell_time(obs[prev]) < cfg.min_stay_seconds &&
                   obs[prev].key.lac == obs[i].key.lac;
        }
      }
    }

    if (!extend)
    {
      close_run();
      run_label = labels[i];
    }
    run.push_back(i);
    if (!run_label &&
        std::find(run_cells.begin(), run_cells.end(), obs[i].key) == run_cells.end())
      run_cells.push_back(obs[i].key);
  }
  close_run();
  return out;
}

struct HistogramBin
{
  int upper_minutes = 0;
  std::size_t count = 0;

  friend bool operator==(const HistogramBin&, const HistogramBin&) = default;
};

/// Dwell-time histogram over (0, 60] minutes. Dwells above 60 minutes are
/// counted in `overflow` and in `total`, which is the coverage denominator.
struct StayHistogram
{
  int bin_minutes = 5;
  std::vector<HistogramBin> bins;
  /// coverage[k] = observations in bins 0..k / total.
  std::vector<double> coverage;
  std::size_t overflow = 0;
  std::size_t total = 0;

  friend bool operator==(const StayHistogram&, const StayHistogram&) = default;
};

inline constexpr int kHistogramSpanMinutes = 60;

inline std::vector<int> histogram_bounds(int bin_minutes, int origin_minutes = 0)
{
  if (bin_minutes <= 0)
    throw Error(Errc::InvalidArgument, "bin_minutes must be positive");
  std::vector<int> bounds;
  for (int b = origin_minutes + bin_minutes; b < kHistogramSpanMinutes; b += bin_minutes)
    bounds.push_back(b);
  bounds.push_back(kHistogramSpanMinutes);
  return bounds;
}

/// Assembles a histogram from per-bin counts, filling in the coverage curve.
inline StayHistogram make_histogram(int bin_minutes, std::span<const int> upper_bounds,
                                    std::span<const std::size_t> counts, std::size_t overflow)
{
  if (upper_bounds.size() != counts.size())
    throw Error(Errc::DimensionMismatch, "one count per bin bound required");
  StayHistogram h;
  h.bin_minutes = bin_minutes;
  h.overflow = overflow;
  h.total = overflow;
  for (std::size_t k = 0; k < counts.size(); ++k)
  {
    h.bins.push_back({upper_bounds[k], counts[k]});
    h.total += counts[k];
  }
  std::size_t cumulative = 0;
  for (const auto& bin : h.bins)
  {
    cumulative += bin.count;
    h.coverage.push_back(h.total == 0 ? 0.0
                                      : static_cast<double>(cumulative) /
                                            static_cast<double>(h.total));
  }
  return h;
}

inline StayHistogram stay_histogram(std::span<const TrajectorySequence> seqs, const Config& cfg)
{
  cfg.validate();
  const auto bounds = histogram_bounds(cfg.bin_minutes, cfg.bin_origin_minutes);
  std::vector<std::size_t> counts(bounds.size(), 0);
  std::size_t overflow = 0;
  for (const auto& seq : seqs)
    for (const auto& o : seq.observations)
    {
      const Duration d = dwell_time(o);
      const auto it = std::find_if(bounds.begin(), bounds.end(),
                                   [d](int b) { return d <= Duration{b} * 60; });
      if (it == bounds.end())
        ++overflow;
      else
        ++counts[static_cast<std::size_t>(it - bounds.begin())];
    }
  return make_histogram(cfg.bin_minutes, bounds, counts, overflow);
}

struct ThresholdSelection
{
  Duration seconds = 0;
  std::size_t bin_index = 0;
  /// False when the curve never flattens; `seconds` is then the last bound.
  bool plateau_found = false;

  friend bool operator==(const ThresholdSelection&, const ThresholdSelection&) = default;
};

/// First bin bound after which the coverage gain stays at or below
/// plateau_gain for the next two bins (one, at the end of the curve).
inline ThresholdSelection select_threshold(const StayHistogram& h, double plateau_gain = 0.02)
{
  if (h.total == 0 || h.bins.empty())
    throw Error(Errc::EmptyHistogram, "threshold selection needs a non-empty histogram");
  constexpr double kSlack = 1e-12;
  const auto gain = [&h](std::size_t k) {
    return h.coverage[k] - (k == 0 ? 0.0 : h.coverage[k - 1]);
  };
  const std::size_t n = h.bins.size();
  for (std::size_t k = 0; k + 1 < n; ++k)
  {
    bool flat = gain(k + 1) <= plateau_gain + kSlack;
    if (k + 2 < n)
      flat = flat && gain(k + 2) <= plateau_gain + kSlack;
    if (flat)
      return {Duration{h.bins[k].upper_minutes} * 60, k, true};
  }
  return {Duration{h.bins.back().upper_minutes} * 60, n - 1, false};
}
}  // namespace cellosc
