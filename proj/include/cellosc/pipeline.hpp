#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cellosc/core.hpp"
#include "cellosc/geo.hpp"
#include "cellosc/io.hpp"
#include "cellosc/oscillation.hpp"
#include "cellosc/semantic.hpp"

namespace cellosc
{
/// Semantic clusters and weight index for every user that has tags.
struct SemanticModel
{
  std::vector<io::UserClusters> clusters;
  std::map<std::string, CellWeightIndex> index;
};

inline SemanticModel build_semantic_model(std::span<const SemanticTagEvent> tags)
{
  std::map<std::string, std::vector<SemanticTagEvent>> by_user;
  for (const auto& t : tags)
    by_user[t.user_id()].push_back(t);
  SemanticModel model;
  for (auto& [user, events] : by_user)
  {
    auto clusters = cluster_semantic(events);
    model.index.emplace(user, build_weight_index(clusters));
    model.clusters.push_back({user, std::move(clusters)});
  }
  return model;
}

inline std::vector<ResolvedTrajectory> resolve_all(std::span<const TrajectorySequence> seqs,
                                                   const TowerMap& towers,
                                                   const SemanticModel& model, const Config& cfg)
{
  static const CellWeightIndex kEmpty;
  std::vector<ResolvedTrajectory> out;
  out.reserve(seqs.size());
  for (const auto& seq : seqs)
  {
    const auto it = model.index.find(seq.user_id);
    out.push_back(resolve(seq, towers, it == model.index.end() ? kEmpty : it->second, cfg));
  }
  return out;
}

/// Raw vs cluster-substituted coordinates of the distinct untagged cells in
/// a resolution: a cell inside an overlap cluster is replaced by the
/// centroid of the first cluster that contains it. At most max_points cells
/// are kept, sampled with an even stride over the sorted cell list.
struct PointSets
{
  std::vector<CellKey> cells;
  std::vector<GeoPoint> raw;
  std::vector<GeoPoint> clustered;
};

inline PointSets clustered_point_sets(std::span<const TrajectorySequence> seqs,
                                      std::span<const ResolvedTrajectory> resolved,
                                      const TowerMap& towers, std::size_t max_points)
{
  std::map<CellKey, GeoPoint> substitute;
  std::set<CellKey> cells;
  for (std::size_t u = 0; u < resolved.size() && u < seqs.size(); ++u)
  {
    const auto& r = resolved[u];
    for (const auto& c : r.clusters)
      for (const auto& m : c.members)
        substitute.emplace(m, c.centroid);
    for (const auto& stay : r.stays)
    {
      if (std::holds_alternative<SemanticPlace>(stay.place))
        continue;
      for (std::size_t i : stay.observations)
        if (towers.count(seqs[u].observations[i].key))
          cells.insert(seqs[u].observations[i].key);
    }
  }

  std::vector<CellKey> all(cells.begin(), cells.end());
  PointSets ps;
  const std::size_t keep = std::min(all.size(), max_points);
  for (std::size_t k = 0; k < keep; ++k)
  {
    const auto& key = all[k * all.size() / keep];
    const auto& pos = towers.at(key).position();
    ps.cells.push_back(key);
    ps.raw.push_back(pos);
    const auto it = substitute.find(key);
    ps.clustered.push_back(it == substitute.end() ? pos : it->second);
  }
  return ps;
}

struct RunReport
{
  std::size_t observations_in = 0;
  std::size_t stays_out = 0;
  std::size_t clusters_formed = 0;
  std::size_t semantic_assignments = 0;
  std::size_t clustered_observations = 0;
  std::size_t single_observations = 0;
  std::size_t unknown_towers = 0;
  Config config;
  std::optional<double> timing_ms;
  nlohmann::json extra = nlohmann::json::object();

  bool consistent() const
  {
    return stays_out <= observations_in &&
           semantic_assignments + clustered_observations + single_observations ==
               observations_in;
  }
};

inline RunReport summarize(std::span<const ResolvedTrajectory> resolved, const Config& cfg)
{
  RunReport rep;
  rep.config = cfg;
  for (const auto& r : resolved)
  {
    rep.observations_in += r.assignment.size();
    rep.stays_out += r.stays.size();
    rep.clusters_formed += r.clusters.size();
    rep.unknown_towers += r.fallback_cells.size();
    for (const auto& stay : r.stays)
    {
      const std::size_t n = stay.observations.size();
      switch (stay.place.index())
      {
        case 0: rep.semantic_assignments += n; break;
        case 1: rep.clustered_observations += n; break;
        default: rep.single_observations += n; break;
      }
    }
  }
  return rep;
}

inline nlohmann::json config_json(const Config& cfg)
{
  return {
      {"min_stay_seconds", cfg.min_stay_seconds},
      {"default_radius_m", cfg.default_radius_m},
      {"earth_radius_km", cfg.earth_radius_km},
      {"bin_minutes", cfg.bin_minutes},
      {"bin_origin_minutes", cfg.bin_origin_minutes},
      {"rng_seed", cfg.rng_seed},
      {"missing_tower_policy",
       cfg.missing_tower_policy == MissingTowerPolicy::Error ? "error" : "fallback"},
  };
}

inline nlohmann::json comparison_json(const MatrixComparison& c)
{
  return {{"rmse_km", c.rmse},
          {"max_abs_diff_km", c.max_abs_diff},
          {"pearson_r", c.pearson_r},
          {"fitted_slope", c.fitted_slope}};
}

inline std::string format_report(const RunReport& rep)
{
  nlohmann::json j;
  j["counts"] = {
      {"observations_in", rep.observations_in},
      {"stays_out", rep.stays_out},
      {"clusters_formed", rep.clusters_formed},
      {"semantic_assignments", rep.semantic_assignments},
      {"clustered_observations", rep.clustered_observations},
      {"single_observations", rep.single_observations},
      {"unknown_towers", rep.unknown_towers},
  };
  j["config"] = config_json(rep.config);
  for (const auto& [k, v] : rep.extra.items())
    j[k] = v;
  if (rep.timing_ms)
    j["timing_ms"] = *rep.timing_ms;
  return j.dump(2) + "\n";
}

struct ScatterData
{
  DistanceMatrix raw;
  DistanceMatrix clustered;
  MatrixComparison comparison;
};

inline std::optional<ScatterData> scatter_from_points(const PointSets& ps, double earth_radius_km)
{
  if (ps.raw.size() < 2)
    return std::nullopt;
  auto raw = distance_matrix(ps.raw, ps.raw, earth_radius_km);
  auto clustered = distance_matrix(ps.clustered, ps.clustered, earth_radius_km);
  const auto cmp = compare_matrices(raw, clustered);
  return ScatterData{std::move(raw), std::move(clustered), cmp};
}

/// Writes every product of a full run into out_dir and returns the report.
/// Missing histogram or scatter still produce header-only files.
inline RunReport emit_outputs(std::span<const ResolvedTrajectory> resolved,
                              std::span<const io::UserClusters> clusters,
                              const std::optional<StayHistogram>& histogram,
                              const std::optional<ScatterData>& scatter,
                              const std::filesystem::path& out_dir, const Config& cfg,
                              nlohmann::json extra = nlohmann::json::object())
{
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec)
    throw Error(Errc::IoError, "cannot create " + out_dir.string());

  io::write_file_atomic(out_dir / "stays.csv", io::format_stays(resolved));
  io::write_file_atomic(out_dir / "overlap_clusters.csv", io::format_overlap_clusters(resolved));
  io::write_file_atomic(out_dir / "semantic_clusters.csv", io::format_semantic_clusters(clusters));
  io::write_file_atomic(out_dir / "histogram.csv",
                        histogram ? io::format_histogram(*histogram)
                                  : std::string("bin_upper_min,count,coverage\n"));
  io::write_file_atomic(out_dir / "distmatrix_scatter.csv",
                        scatter ? io::format_scatter(scatter->raw, scatter->clustered)
                                : std::string("d_raw_km,d_clustered_km\n"));

  RunReport rep = summarize(resolved, cfg);
  rep.extra = std::move(extra);
  if (scatter)
    rep.extra["distance_matrix"] = comparison_json(scatter->comparison);
  io::write_file_atomic(out_dir / "report.json", format_report(rep));
  return rep;
}
}  // namespace cellosc
