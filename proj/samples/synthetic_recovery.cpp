// Generates a synthetic population, resolves every trace and prints how well
// the injected ping-pong was recovered.
#include <chrono>
#include <cstdio>
#include <cstdlib>

#include "cellosc/cellosc.hpp"

int main(int argc, char** argv)
{
  using namespace cellosc;
  const std::size_t users = argc > 1 ? std::strtoul(argv[1], nullptr, 10) : 100;
  const double rate = argc > 2 ? std::strtod(argv[2], nullptr) : 0.3;

  const auto t0 = std::chrono::steady_clock::now();
  const auto net = generate_network(NetworkSpec{});
  BehaviorSpec behavior;
  behavior.oscillation_rate = rate;
  const auto population = generate_population(net, behavior, users);
  const auto towers = io::tower_map(net);

  Config cfg;
  std::vector<TrajectorySequence> seqs;
  std::vector<ResolvedTrajectory> resolved;
  double precision = 0.0;
  double recall = 0.0;
  double place_error = 0.0;
  std::size_t observations = 0;
  for (const auto& trace : population)
  {
    const auto index = build_weight_index(cluster_semantic(trace.tags));
    auto r = resolve(trace.sequence, towers, index, cfg);
    const auto score = score_resolution(trace.sequence, r, trace.truth, cfg.min_stay_seconds);
    precision += score.merge_precision;
    recall += score.merge_recall;
    place_error += static_cast<double>(score.place_count_error);
    observations += trace.sequence.observations.size();
    seqs.push_back(trace.sequence);
    resolved.push_back(std::move(r));
  }
  const auto n = static_cast<double>(population.size());
  const auto points = clustered_point_sets(seqs, resolved, towers, 400);
  const auto scatter = scatter_from_points(points, cfg.earth_radius_km);
  const auto ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0);

  std::printf("towers %zu, within-LAC overlap %.3f\n", net.size(),
              within_lac_overlap_fraction(net));
  std::printf("users %zu, observations %zu\n", population.size(), observations);
  std::printf("mean precision %.4f, mean recall %.4f, mean |place error| %.3f\n", precision / n,
              recall / n, place_error / n);
  if (scatter)
    std::printf("distance matrix: slope %.4f, r %.4f, rmse %.3f km over %zu points\n",
                scatter->comparison.fitted_slope, scatter->comparison.pearson_r,
                scatter->comparison.rmse, points.raw.size());
  std::printf("elapsed %.1f ms\n", ms.count());
  return 0;
}
