#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "cellosc/core.hpp"
#include "cellosc/geo.hpp"
#include "cellosc/oscillation.hpp"

namespace cellosc
{
/// Seeded generator with a fixed algorithm identity: std::mt19937_64 plus the
/// integer/real mappings below (the std distributions are implementation
/// defined, so they are not used).
class Rng
{
public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  static std::uint64_t splitmix64(std::uint64_t x)
  {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform in [0, n), by rejection.
  std::uint64_t below(std::uint64_t n)
  {
    if (n == 0)
      throw Error(Errc::InvalidArgument, "Rng::below(0)");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = engine_();
    while (x >= limit)
      x = engine_();
    return x % n;
  }

  /// Uniform integer in [lo, hi].
  std::int64_t between(std::int64_t lo, std::int64_t hi)
  {
    return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo) + 1));
  }

  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::vector<T>& v)
  {
    for (std::size_t i = v.size(); i > 1; --i)
      std::swap(v[i - 1], v[static_cast<std::size_t>(below(i))]);
  }

private:
  std::mt19937_64 engine_;
};

struct BoundingBox
{
  GeoPoint south_west{42.20, -71.30};
  GeoPoint north_east{42.48, -70.90};
};

struct NetworkSpec
{
  int n_lacs = 16;
  int towers_per_lac = 25;
  BoundingBox region;
  double radius_min_m = 300.0;
  double radius_max_m = 1500.0;
  /// Target fraction of within-LAC tower pairs that overlap.
  double overlap_fraction = 0.3;
  std::uint64_t seed = 42;
  double earth_radius_km = kMeanEarthRadiusKm;
  std::int64_t mcc = 310;
  std::int64_t mnc = 26;

  void validate() const
  {
    if (n_lacs <= 0 || towers_per_lac <= 0)
      throw Error(Errc::InvalidArgument, "network counts must be positive");
    if (!(radius_min_m > 0.0) || radius_min_m > radius_max_m)
      throw Error(Errc::InvalidArgument, "radius range must satisfy 0 < min <= max");
    if (!(overlap_fraction >= 0.0 && overlap_fraction <= 1.0))
      throw Error(Errc::InvalidArgument, "overlap_fraction must be in [0, 1]");
    if (!(region.south_west.lat() < region.north_east.lat()) ||
        !(region.south_west.lon() < region.north_east.lon()))
      throw Error(Errc::InvalidArgument, "region must have positive extent");
  }
};

/// Fraction of same-LAC tower pairs passing overlap_test; 1.0 when no LAC
/// holds two towers.
inline double within_lac_overlap_fraction(std::span<const TowerRecord> towers,
                                          double earth_radius_km = kMeanEarthRadiusKm)
{
  std::size_t pairs = 0;
  std::size_t overlapping = 0;
  for (std::size_t i = 0; i < towers.size(); ++i)
    for (std::size_t j = i + 1; j < towers.size(); ++j)
    {
      if (towers[i].key().lac != towers[j].key().lac)
        continue;
      ++pairs;
      if (overlap_test(towers[i], towers[j], earth_radius_km).overlapping)
        ++overlapping;
    }
  return pairs == 0 ? 1.0 : static_cast<double>(overlapping) / static_cast<double>(pairs);
}

/// Towers placed uniformly in a grid of contiguous LAC zones. Radii are
/// per-tower base draws times one global scale, bisected until the
/// within-LAC overlap fraction is closest to the target.
inline std::vector<TowerRecord> generate_network(const NetworkSpec& spec)
{
  spec.validate();
  Rng rng(spec.seed);

  const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(spec.n_lacs))));
  const int rows = (spec.n_lacs + cols - 1) / cols;
  const double lat0 = spec.region.south_west.lat();
  const double lon0 = spec.region.south_west.lon();
  const double dlat = (spec.region.north_east.lat() - lat0) / rows;
  const double dlon = (spec.region.north_east.lon() - lon0) / cols;

  struct Draft
  {
    CellKey key;
    GeoPoint position;
    double base_radius;
  };
  std::vector<Draft> drafts;
  for (int z = 0; z < spec.n_lacs; ++z)
  {
    const int r = z / cols;
    const int c = z % cols;
    const std::int64_t lac = 100 + z;
    for (int t = 0; t < spec.towers_per_lac; ++t)
    {
      const double lat = lat0 + dlat * (r + rng.uniform());
      const double lon = lon0 + dlon * (c + rng.uniform());
      const double base = rng.uniform(spec.radius_min_m, spec.radius_max_m);
      drafts.push_back({CellKey(spec.mcc, spec.mnc, lac, z * spec.towers_per_lac + t + 1),
                        GeoPoint(lat, lon), base});
    }
  }

  auto build = [&](double scale) {
    std::vector<TowerRecord> towers;
    towers.reserve(drafts.size());
    for (const auto& d : drafts)
      towers.emplace_back(d.key, d.position,
                          std::clamp(d.base_radius * scale, spec.radius_min_m, spec.radius_max_m));
    return towers;
  };
  auto fraction = [&](double scale) {
    return within_lac_overlap_fraction(build(scale), spec.earth_radius_km);
  };

  if (spec.towers_per_lac < 2)
    return build(1.0);

  constexpr double kTolerance = 0.1;
  double lo = spec.radius_min_m / spec.radius_max_m;
  double hi = spec.radius_max_m / spec.radius_min_m;
  const double f_lo = fraction(lo);
  const double f_hi = fraction(hi);
  if (f_hi < spec.overlap_fraction - kTolerance)
    throw Error(Errc::InfeasibleOverlap,
                "region too large for the radius range: max overlap " + std::to_string(f_hi));
  if (f_lo > spec.overlap_fraction + kTolerance)
    throw Error(Errc::InfeasibleOverlap,
                "region too small for the radius range: min overlap " + std::to_string(f_lo));

  // Smallest scale reaching the target, then keep whichever side is closer.
  if (f_lo >= spec.overlap_fraction)
    hi = lo;
  for (int iter = 0; iter < 60 && hi - lo > 1e-9; ++iter)
  {
    const double mid = 0.5 * (lo + hi);
    if (fraction(mid) >= spec.overlap_fraction)
      hi = mid;
    else
      lo = mid;
  }
  const double best = std::abs(fraction(hi) - spec.overlap_fraction) <=
                              std::abs(fraction(lo) - spec.overlap_fraction)
                          ? hi
                          : lo;
  if (std::abs(fraction(best) - spec.overlap_fraction) > kTolerance)
    throw Error(Errc::InfeasibleOverlap, "cannot reach overlap target within 0.1");
  return build(best);
}

struct BehaviorSpec
{
  int n_places = 5;
  double mean_stay_minutes = 60.0;
  /// Probability that a stationary dwell step is served by a neighbour cell.
  double oscillation_rate = 0.3;
  double travel_speed_kmh = 30.0;
  double duration_hours = 72.0;
  std::uint64_t seed = 7;
  /// Fraction of places that receive semantic tags.
  double tagged_fraction = 0.4;
  /// Dwell step range while stationary; kept below the 660 s stay threshold.
  Duration step_min_seconds = 60;
  Duration step_max_seconds = 540;
  Duration travel_step_seconds = 120;
  int max_neighbours = 3;
  Timestamp start = 1111000000;
  double earth_radius_km = kMeanEarthRadiusKm;

  void validate() const
  {
    if (n_places <= 0)
      throw Error(Errc::InvalidArgument, "n_places must be positive");
    if (!(mean_stay_minutes > 0.0) || !(travel_speed_kmh > 0.0) || !(duration_hours > 0.0))
      throw Error(Errc::InvalidArgument, "behaviour durations and speed must be positive");
    if (!(oscillation_rate >= 0.0 && oscillation_rate <= 1.0))
      throw Error(Errc::InvalidArgument, "oscillation_rate must be in [0, 1]");
    if (!(tagged_fraction >= 0.0 && tagged_fraction <= 1.0))
      throw Error(Errc::InvalidArgument, "tagged_fraction must be in [0, 1]");
    if (step_min_seconds <= 0 || step_min_seconds > step_max_seconds || travel_step_seconds <= 0)
      throw Error(Errc::InvalidArgument, "step durations must be positive and ordered");
    if (max_neighbours <= 0)
      throw Error(Errc::InvalidArgument, "max_neighbours must be positive");
  }
};

enum class TruthKind
{
  Stationary,
  Oscillation,
  Traveling,
};

struct TruthLabel
{
  TruthKind kind = TruthKind::Traveling;
  /// Set unless traveling.
  std::optional<std::size_t> place_id;

  bool stationary() const noexcept { return kind != TruthKind::Traveling; }
  friend bool operator==(const TruthLabel&, const TruthLabel&) = default;
};

struct GroundTruth
{
  std::vector<TruthLabel> labels;
  /// Consecutive observations (i, i + 1) at the same place within one visit
  /// whose cells differ.
  std::vector<std::pair<std::size_t, std::size_t>> oscillation_pairs;

  std::size_t places_visited() const
  {
    std::set<std::size_t> seen;
    for (const auto& l : labels)
      if (l.place_id)
        seen.insert(*l.place_id);
    return seen.size();
  }

  friend bool operator==(const GroundTruth&, const GroundTruth&) = default;
};

/// A true significant place: an anchor cell plus its ping-pong neighbours.
/// All members share a LAC and overlap pairwise.
struct SyntheticPlace
{
  std::vector<std::size_t> towers;  // indices into the network, anchor first
  std::optional<std::string> label;

  friend bool operator==(const SyntheticPlace&, const SyntheticPlace&) = default;
};

struct SyntheticTrace
{
  TrajectorySequence sequence;
  std::vector<SemanticTagEvent> tags;
  GroundTruth truth;
  std::vector<SyntheticPlace> places;

  friend bool operator==(const SyntheticTrace&, const SyntheticTrace&) = default;
};

namespace detail
{
inline bool mergeable(const TowerRecord& a, const TowerRecord& b, double earth_radius_km)
{
  return a.key().lac == b.key().lac && overlap_test(a, b, earth_radius_km).overlapping;
}

inline std::vector<SyntheticPlace> pick_places(std::span<const TowerRecord> net, int n_places,
                                               int max_neighbours, double earth_radius_km,
                                               Rng& rng)
{
  std::vector<std::size_t> order(net.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);

  std::vector<SyntheticPlace> places;
  std::vector<bool> used(net.size(), false);
  for (std::size_t anchor : order)
  {
    if (static_cast<int>(places.size()) == n_places)
      break;
    if (used[anchor])
      continue;

    std::vector<std::size_t> candidates;
    for (std::size_t j = 0; j < net.size(); ++j)
      if (j != anchor && !used[j] && mergeable(net[anchor], net[j], earth_radius_km))
        candidates.push_back(j);
    std::sort(candidates.begin(), candidates.end(), [&](std::size_t a, std::size_t b) {
      const double da = haversine_km(net[anchor].position(), net[a].position(), earth_radius_km);
      const double db = haversine_km(net[anchor].position(), net[b].position(), earth_radius_km);
      return da != db ? da < db : a < b;
    });

    std::vector<std::size_t> hood{anchor};
    for (std::size_t c : candidates)
    {
      if (static_cast<int>(hood.size()) > max_neighbours)
        break;
      const bool clique = std::all_of(hood.begin(), hood.end(), [&](std::size_t h) {
        return mergeable(net[h], net[c], earth_radius_km);
      });
      if (clique)
        hood.push_back(c);
    }
    if (hood.size() < 2)
      continue;

    // Distinct places must never look like one overlap area.
    const bool isolated = std::all_of(places.begin(), places.end(), [&](const SyntheticPlace& p) {
      for (std::size_t a : p.towers)
        for (std::size_t b : hood)
          if (a == b || mergeable(net[a], net[b], earth_radius_km))
            return false;
      return true;
    });
    if (!isolated)
      continue;

    for (std::size_t h : hood)
      used[h] = true;
    places.push_back({std::move(hood), std::nullopt});
  }
  if (static_cast<int>(places.size()) < n_places)
    throw Error(Errc::NotEnoughTowers, "found only " + std::to_string(places.size()) +
                                           " isolated neighbourhoods for " +
                                           std::to_string(n_places) + " places");
  return places;
}

inline std::string place_label(std::size_t id)
{
  static const char* const kNames[] = {"Home", "Office", "School", "Lab", "Gym", "Library"};
  if (id < std::size(kNames))
    return kNames[id];
  return "Place" + std::to_string(id);
}
}  // namespace detail

/// One user's trace over the network.
///
/// The user alternates visits at randomly chosen places with travel between
/// them. A visit is cut into dwell steps; each step is served by one of the
/// anchor's neighbours with probability oscillation_rate, otherwise by the
/// anchor. A visit without any ping-pong step is logged as one observation.
/// Travel samples the straight path every travel_step_seconds and logs the
/// nearest non-place tower unless it would merge with the previous entry or
/// with the destination; skipped samples leave a time gap.
inline SyntheticTrace generate_trace(std::span<const TowerRecord> net, const BehaviorSpec& behavior,
                                     std::string user_id = "u000")
{
  behavior.validate();
  if (net.empty())
    throw Error(Errc::NotEnoughTowers, "network is empty");
  const double R = behavior.earth_radius_km;
  Rng rng(behavior.seed);

  SyntheticTrace trace;
  trace.sequence.user_id = user_id;
  trace.places = detail::pick_places(net, behavior.n_places, behavior.max_neighbours, R, rng);

  std::vector<bool> in_place(net.size(), false);
  for (const auto& p : trace.places)
    for (std::size_t t : p.towers)
      in_place[t] = true;

  // Tag a subset of places; every cell seen there is tagged, the anchor most.
  const auto n_tagged = static_cast<std::size_t>(
      std::lround(behavior.tagged_fraction * static_cast<double>(trace.places.size())));
  std::vector<std::size_t> place_order(trace.places.size());
  std::iota(place_order.begin(), place_order.end(), std::size_t{0});
  rng.shuffle(place_order);
  for (std::size_t k = 0; k < n_tagged; ++k)
  {
    const std::size_t id = place_order[k];
    auto& place = trace.places[id];
    place.label = detail::place_label(id);
    for (std::size_t m = 0; m < place.towers.size(); ++m)
    {
      const int events = m == 0 ? 3 : 1;
      for (int e = 0; e < events; ++e)
        trace.tags.emplace_back(user_id, net[place.towers[m]].key(), *place.label,
                                behavior.start + static_cast<Timestamp>(trace.tags.size()) * 60);
    }
  }

  auto& obs = trace.sequence.observations;
  auto& truth = trace.truth;
  std::size_t prev_tower = 0;
  auto emit = [&](std::size_t tower, Timestamp a, Timestamp b, TruthLabel label) {
    obs.push_back({net[tower].key(), a, b});
    truth.labels.push_back(label);
    const std::size_t idx = obs.size() - 1;
    if (idx > 0 && label.stationary() && truth.labels[idx - 1].place_id == label.place_id &&
        obs[idx - 1].key != obs[idx].key)
      truth.oscillation_pairs.emplace_back(idx - 1, idx);
    prev_tower = tower;
  };

  const Timestamp end =
      behavior.start + static_cast<Timestamp>(std::llround(behavior.duration_hours * 3600.0));
  Timestamp t = behavior.start;
  std::size_t current = static_cast<std::size_t>(rng.below(trace.places.size()));

  while (t < end)
  {
    const auto& place = trace.places[current];
    const Duration stay = std::max<Duration>(
        1, std::llround(behavior.mean_stay_minutes * 60.0 * rng.uniform(0.5, 1.5)));

    std::vector<std::pair<std::size_t, Duration>> steps;
    bool oscillated = false;
    for (Duration left = stay; left > 0;)
    {
      const Duration step =
          std::min(left, rng.between(behavior.step_min_seconds, behavior.step_max_seconds));
      std::size_t tower = place.towers.front();
      if (rng.bernoulli(behavior.oscillation_rate))
      {
        tower = place.towers[1 + rng.below(place.towers.size() - 1)];
        oscillated = true;
      }
      steps.emplace_back(tower, step);
      left -= step;
    }

    if (!oscillated)
    {
      emit(place.towers.front(), t, t + stay, {TruthKind::Stationary, current});
    }
    else
    {
      Timestamp at = t;
      for (const auto& [tower, step] : steps)
      {
        const auto kind =
            tower == place.towers.front() ? TruthKind::Stationary : TruthKind::Oscillation;
        emit(tower, at, at + step, {kind, current});
        at += step;
      }
    }
    t += stay;

    if (t >= end)
      break;
    if (trace.places.size() == 1)
      continue;

    std::size_t next = static_cast<std::size_t>(rng.below(trace.places.size() - 1));
    if (next >= current)
      ++next;
    const auto& from = net[place.towers.front()].position();
    const auto& to = net[trace.places[next].towers.front()].position();
    const double km = haversine_km(from, to, R);
    const auto travel = std::max<Duration>(
        behavior.travel_step_seconds,
        std::llround(km / behavior.travel_speed_kmh * 3600.0));
    const auto& dest = trace.places[next].towers;

    for (Duration off = 0; off < travel; off += behavior.travel_step_seconds)
    {
      const Duration step = std::min(behavior.travel_step_seconds, travel - off);
      const double f = (static_cast<double>(off) + 0.5 * static_cast<double>(step)) /
                       static_cast<double>(travel);
      const GeoPoint here(from.lat() + f * (to.lat() - from.lat()),
                          from.lon() + f * (to.lon() - from.lon()));
      std::optional<std::size_t> nearest;
      double best = 0.0;
      for (std::size_t k = 0; k < net.size(); ++k)
      {
        if (in_place[k])
          continue;
        const double d = haversine_km(here, net[k].position(), R);
        if (!nearest || d < best)
        {
          nearest = k;
          best = d;
        }
      }
      if (!nearest)
        continue;
      const auto& cand = net[*nearest];
      bool ok = !detail::mergeable(net[prev_tower], cand, R);
      for (std::size_t d : dest)
        ok = ok && !detail::mergeable(net[d], cand, R);
      if (ok)
        emit(*nearest, t + off, t + off + step, {TruthKind::Traveling, std::nullopt});
    }
    t += travel;
    current = next;
  }
  return trace;
}

struct ResolutionScore
{
  double merge_precision = 1.0;
  double merge_recall = 1.0;
  std::int64_t place_count_error = 0;
  std::size_t merged_pairs = 0;
  std::size_t true_pairs = 0;
  std::size_t correct_pairs = 0;
  std::size_t resolved_places = 0;
  std::size_t true_places = 0;
};

/// Number of distinct stationary places in a resolution: semantic stays,
/// overlap-cluster stays and single-cell stays of at least min_stay_seconds,
/// unified whenever they share a cell or a label.
inline std::size_t count_stationary_places(const TrajectorySequence& seq,
                                           const ResolvedTrajectory& resolved,
                                           Duration min_stay_seconds)
{
  std::map<std::string, std::size_t> node_of;
  std::vector<std::size_t> parent;
  auto node = [&](const std::string& name) {
    auto [it, inserted] = node_of.emplace(name, parent.size());
    if (inserted)
      parent.push_back(parent.size());
    return it->second;
  };
  auto find = [&](std::size_t x) {
    while (parent[x] != x)
      x = parent[x] = parent[parent[x]];
    return x;
  };

  std::set<std::size_t> roots_seen;
  std::vector<std::size_t> stationary_nodes;
  for (const auto& stay : resolved.stays)
  {
    std::optional<std::size_t> first;
    const bool stationary = std::visit(
        [&](const auto& p) {
          using P = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<P, SemanticPlace>)
          {
            first = node("label:" + p.label);
            return true;
          }
          else if constexpr (std::is_same_v<P, ClusterPlace>)
            return true;
          else
            return stay.leave - stay.arrive >= min_stay_seconds;
        },
        stay.place);
    if (!stationary)
      continue;
    for (std::size_t i : stay.observations)
    {
      const std::size_t n = node("cell:" + seq.observations.at(i).key.to_string());
      if (!first)
        first = n;
      else
        parent[find(n)] = find(*first);
    }
    if (first)
      stationary_nodes.push_back(*first);
  }
  for (std::size_t n : stationary_nodes)
    roots_seen.insert(find(n));
  return roots_seen.size();
}

/// Pair-level agreement between the resolver's merges and the injected
/// oscillation. A merged pair is a consecutive observation pair with
/// different cells that ended up in the same stay.
inline ResolutionScore score_resolution(const TrajectorySequence& seq,
                                        const ResolvedTrajectory& resolved,
                                        const GroundTruth& truth,
                                        Duration min_stay_seconds = 660)
{
  const std::size_t n = seq.observations.size();
  if (resolved.assignment.size() != truth.labels.size() || n != truth.labels.size())
    throw Error(Errc::IndexMismatch, "resolution covers " +
                                         std::to_string(resolved.assignment.size()) +
                                         " observations, truth " +
                                         std::to_string(truth.labels.size()));
  std::set<std::pair<std::size_t, std::size_t>> true_pairs(truth.oscillation_pairs.begin(),
                                                           truth.oscillation_pairs.end());
  for (const auto& [i, j] : true_pairs)
    if (i >= n || j >= n)
      throw Error(Errc::IndexMismatch, "truth pair index out of range");

  ResolutionScore s;
  s.true_pairs = true_pairs.size();
  for (std::size_t i = 0; i + 1 < n; ++i)
  {
    if (seq.observations[i].key == seq.observations[i + 1].key)
      continue;
    if (resolved.assignment[i] != resolved.assignment[i + 1])
      continue;
    ++s.merged_pairs;
    if (true_pairs.count({i, i + 1}))
      ++s.correct_pairs;
  }
  if (s.merged_pairs > 0)
    s.merge_precision = static_cast<double>(s.correct_pairs) / static_cast<double>(s.merged_pairs);
  if (s.true_pairs > 0)
    s.merge_recall = static_cast<double>(s.correct_pairs) / static_cast<double>(s.true_pairs);
  s.resolved_places = count_stationary_places(seq, resolved, min_stay_seconds);
  s.true_places = truth.places_visited();
  s.place_count_error = std::abs(static_cast<std::int64_t>(s.resolved_places) -
                                 static_cast<std::int64_t>(s.true_places));
  return s;
}

/// Per-user seeds derived from one population seed.
inline std::uint64_t user_seed(std::uint64_t seed, std::size_t user)
{
  return Rng::splitmix64(seed ^ (0xa0761d6478bd642fULL * (user + 1)));
}

inline std::string synthetic_user_id(std::size_t user)
{
  std::string digits = std::to_string(user);
  return "u" + std::string(digits.size() < 3 ? 3 - digits.size() : 0, '0') + digits;
}

inline std::vector<SyntheticTrace> generate_population(std::span<const TowerRecord> net,
                                                       const BehaviorSpec& behavior,
                                                       std::size_t n_users)
{
  std::vector<SyntheticTrace> out;
  out.reserve(n_users);
  for (std::size_t u = 0; u < n_users; ++u)
  {
    BehaviorSpec b = behavior;
    b.seed = user_seed(behavior.seed, u);
    out.push_back(generate_trace(net, b, synthetic_user_id(u)));
  }
  return out;
}
}  // namespace cellosc
