// Command-line front end: semantic-cluster, resolve, threshold, distmatrix,
// simulate, score.
//
// Exit codes: 0 success, 1 input error, 2 internal invariant violation.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cellosc/cellosc.hpp"

namespace fs = std::filesystem;
using namespace cellosc;

namespace
{
struct InvariantViolation : std::logic_error
{
  using std::logic_error::logic_error;
};

struct Options
{
  std::string towers;
  std::string obs;
  std::string tags;
  std::string truth;
  std::string out = "out";
  Config cfg;
  double plateau_gain = 0.02;
  std::string missing_policy = "error";
  bool report_timing = false;
  std::size_t max_points = 400;

  // simulate
  std::size_t users = 100;
  NetworkSpec network;
  BehaviorSpec behavior;
};

void add_common(CLI::App& cmd, Options& o)
{
  cmd.add_option("--out", o.out, "Output directory")->capture_default_str();
  cmd.add_option("--min-stay-seconds", o.cfg.min_stay_seconds, "Minimum stay threshold")
      ->capture_default_str();
  cmd.add_option("--default-radius-m", o.cfg.default_radius_m, "Radius for towers lacking one")
      ->capture_default_str();
  cmd.add_option("--earth-radius-km", o.cfg.earth_radius_km, "Sphere radius for distances")
      ->capture_default_str();
  cmd.add_option("--bin-minutes", o.cfg.bin_minutes, "Stay histogram bin width")
      ->capture_default_str();
  cmd.add_option("--bin-origin-minutes", o.cfg.bin_origin_minutes,
                 "Offset of the first histogram bound")
      ->capture_default_str();
  cmd.add_option("--plateau-gain", o.plateau_gain, "Coverage gain per bin treated as flat")
      ->capture_default_str();
  cmd.add_option("--seed", o.cfg.rng_seed, "Random seed")->capture_default_str();
  cmd.add_option("--missing-tower-policy", o.missing_policy, "error | fallback")
      ->check(CLI::IsMember({"error", "fallback"}))
      ->capture_default_str();
  cmd.add_option("--max-points", o.max_points, "Cells kept for the distance-matrix check")
      ->capture_default_str();
  cmd.add_flag("--report-timing", o.report_timing, "Record wall-clock time in report.json");
}

struct Inputs
{
  std::vector<TowerRecord> towers;
  TowerMap tower_index;
  std::vector<TrajectorySequence> seqs;
  std::vector<SemanticTagEvent> tags;
};

Inputs load(const Options& o, bool need_towers, bool need_obs)
{
  Inputs in;
  if (need_towers)
  {
    if (o.towers.empty())
      throw Error(Errc::InvalidArgument, "--towers is required");
    in.towers = io::parse_towers(o.towers, o.cfg.default_radius_m);
    in.tower_index = io::tower_map(in.towers);
  }
  if (need_obs)
  {
    if (o.obs.empty())
      throw Error(Errc::InvalidArgument, "--obs is required");
    in.seqs = io::parse_observations(o.obs);
  }
  if (!o.tags.empty())
    in.tags = io::parse_tags(o.tags);
  return in;
}

void write(const fs::path& dir, const std::string& name, const std::string& content)
{
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec)
    throw Error(Errc::IoError, "cannot create " + dir.string());
  io::write_file_atomic(dir / name, content);
}

void finish_report(RunReport& rep, const Options& o, double ms)
{
  if (!rep.consistent())
    throw InvariantViolation("run report counts are inconsistent");
  if (o.report_timing)
    rep.timing_ms = ms;
  write(o.out, "report.json", format_report(rep));
}

nlohmann::json threshold_json(const StayHistogram& h, double plateau_gain)
{
  if (h.total == 0)
    return {{"observations", 0}, {"plateau_found", false}};
  const auto sel = select_threshold(h, plateau_gain);
  return {{"observations", h.total},
          {"overflow", h.overflow},
          {"threshold_seconds", sel.seconds},
          {"bin_index", sel.bin_index},
          {"plateau_found", sel.plateau_found},
          {"plateau_gain", plateau_gain}};
}

void run_semantic(const Options& o)
{
  if (o.tags.empty())
    throw Error(Errc::InvalidArgument, "--tags is required");
  const auto tags = io::parse_tags(o.tags);
  const auto model = build_semantic_model(tags);
  write(o.out, "semantic_clusters.csv", io::format_semantic_clusters(model.clusters));

  RunReport rep;
  rep.config = o.cfg;
  std::size_t cells = 0;
  std::size_t labels = 0;
  for (const auto& u : model.clusters)
  {
    labels += u.clusters.size();
    cells += model.index.at(u.user_id).size();
  }
  rep.extra["semantic"] = {{"tag_events", tags.size()},
                           {"users", model.clusters.size()},
                           {"locations", labels},
                           {"tagged_cells", cells}};
  finish_report(rep, o, 0.0);
}

std::vector<ResolvedTrajectory> resolve_inputs(const Inputs& in, const SemanticModel& model,
                                               const Config& cfg)
{
  auto resolved = resolve_all(in.seqs, in.tower_index, model, cfg);
  for (const auto& r : resolved)
    for (const auto& key : r.fallback_cells)
      std::cerr << "warning: user " << r.user_id << ": no tower for cell " << key.to_string()
                << ", using fallback position and default radius\n";
  return resolved;
}

void run_resolve(const Options& o, double& ms)
{
  const auto t0 = std::chrono::steady_clock::now();
  const auto in = load(o, true, true);
  const auto model = build_semantic_model(in.tags);
  const auto resolved = resolve_inputs(in, model, o.cfg);
  const auto hist = stay_histogram(in.seqs, o.cfg);
  const auto points = clustered_point_sets(in.seqs, resolved, in.tower_index, o.max_points);
  const auto scatter = scatter_from_points(points, o.cfg.earth_radius_km);

  nlohmann::json extra;
  extra["threshold"] = threshold_json(hist, o.plateau_gain);
  auto rep = emit_outputs(resolved, model.clusters, hist, scatter, o.out, o.cfg, extra);
  ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  finish_report(rep, o, ms);
}

void run_threshold(const Options& o)
{
  const auto in = load(o, false, true);
  const auto hist = stay_histogram(in.seqs, o.cfg);
  write(o.out, "histogram.csv", io::format_histogram(hist));
  RunReport rep;
  rep.config = o.cfg;
  rep.extra["threshold"] = threshold_json(hist, o.plateau_gain);
  finish_report(rep, o, 0.0);
}

void run_distmatrix(const Options& o)
{
  const auto in = load(o, true, true);
  const auto model = build_semantic_model(in.tags);
  const auto resolved = resolve_inputs(in, model, o.cfg);
  const auto points = clustered_point_sets(in.seqs, resolved, in.tower_index, o.max_points);
  const auto scatter = scatter_from_points(points, o.cfg.earth_radius_km);
  write(o.out, "distmatrix_scatter.csv",
        scatter ? io::format_scatter(scatter->raw, scatter->clustered)
                : std::string("d_raw_km,d_clustered_km\n"));
  RunReport rep = summarize(resolved, o.cfg);
  rep.extra["points"] = points.raw.size();
  if (scatter)
    rep.extra["distance_matrix"] = comparison_json(scatter->comparison);
  finish_report(rep, o, 0.0);
}

void run_simulate(const Options& o)
{
  NetworkSpec net_spec = o.network;
  net_spec.seed = o.cfg.rng_seed;
  net_spec.earth_radius_km = o.cfg.earth_radius_km;
  BehaviorSpec behavior = o.behavior;
  behavior.seed = Rng::splitmix64(o.cfg.rng_seed + 1);
  behavior.earth_radius_km = o.cfg.earth_radius_km;

  const auto net = generate_network(net_spec);
  const auto population = generate_population(net, behavior, o.users);

  std::vector<TrajectorySequence> seqs;
  std::vector<SemanticTagEvent> tags;
  std::string truth_csv = "obs_index,label,place_id,paired_with\n";
  std::size_t base = 0;
  std::size_t pairs = 0;
  for (const auto& trace : population)
  {
    seqs.push_back(trace.sequence);
    tags.insert(tags.end(), trace.tags.begin(), trace.tags.end());
    truth_csv += io::format_ground_truth(trace.truth, base, false);
    base += trace.sequence.observations.size();
    pairs += trace.truth.oscillation_pairs.size();
  }
  write(o.out, "towers.csv", io::format_towers(net));
  write(o.out, "observations.csv", io::format_observations(seqs));
  write(o.out, "tags.csv", io::format_tags(tags));
  write(o.out, "ground_truth.csv", truth_csv);

  RunReport rep;
  rep.config = o.cfg;
  rep.extra["simulation"] = {{"towers", net.size()},
                             {"users", population.size()},
                             {"observations", base},
                             {"tag_events", tags.size()},
                             {"oscillation_pairs", pairs},
                             {"within_lac_overlap", within_lac_overlap_fraction(net)}};
  finish_report(rep, o, 0.0);
}

void run_score(const Options& o)
{
  if (o.truth.empty())
    throw Error(Errc::InvalidArgument, "--truth is required");
  const auto in = load(o, true, true);
  const auto truth = io::parse_ground_truth(o.truth);
  const auto model = build_semantic_model(in.tags);
  const auto resolved = resolve_inputs(in, model, o.cfg);

  std::size_t total = 0;
  for (const auto& s : in.seqs)
    total += s.observations.size();
  if (total != truth.labels.size())
    throw Error(Errc::IndexMismatch, "truth has " + std::to_string(truth.labels.size()) +
                                         " rows for " + std::to_string(total) + " observations");

  std::string csv = "user_id,merge_precision,merge_recall,place_count_error\n";
  double precision = 0.0;
  double recall = 0.0;
  double place_error = 0.0;
  std::size_t base = 0;
  for (std::size_t u = 0; u < in.seqs.size(); ++u)
  {
    const std::size_t n = in.seqs[u].observations.size();
    GroundTruth slice;
    slice.labels.assign(truth.labels.begin() + static_cast<std::ptrdiff_t>(base),
                        truth.labels.begin() + static_cast<std::ptrdiff_t>(base + n));
    for (const auto& [i, j] : truth.oscillation_pairs)
      if (i >= base && j < base + n)
        slice.oscillation_pairs.emplace_back(i - base, j - base);
    const auto s = score_resolution(in.seqs[u], resolved[u], slice, o.cfg.min_stay_seconds);
    precision += s.merge_precision;
    recall += s.merge_recall;
    place_error += static_cast<double>(s.place_count_error);
    csv += io::csv_escape(in.seqs[u].user_id) + "," + io::format_double(s.merge_precision) + "," +
           io::format_double(s.merge_recall) + "," + std::to_string(s.place_count_error) + "\n";
    base += n;
  }
  write(o.out, "scores.csv", csv);

  RunReport rep = summarize(resolved, o.cfg);
  const double users = in.seqs.empty() ? 1.0 : static_cast<double>(in.seqs.size());
  rep.extra["score"] = {{"users", in.seqs.size()},
                        {"mean_merge_precision", precision / users},
                        {"mean_merge_recall", recall / users},
                        {"mean_abs_place_count_error", place_error / users}};
  finish_report(rep, o, 0.0);
}
}  // namespace

int main(int argc, char** argv)
{
  CLI::App app{"GSM cell-oscillation resolution and significant-place extraction"};
  app.require_subcommand(1);
  Options o;

  auto* semantic = app.add_subcommand("semantic-cluster", "Cluster cells by semantic tags");
  semantic->add_option("--tags", o.tags, "tags.csv")->required();
  add_common(*semantic, o);

  auto* resolve_cmd = app.add_subcommand("resolve", "Resolve cell oscillation in traces");
  resolve_cmd->add_option("--towers", o.towers, "towers.csv")->required();
  resolve_cmd->add_option("--obs", o.obs, "observations.csv")->required();
  resolve_cmd->add_option("--tags", o.tags, "tags.csv");
  add_common(*resolve_cmd, o);

  auto* threshold = app.add_subcommand("threshold", "Stay-time histogram and threshold knee");
  threshold->add_option("--obs", o.obs, "observations.csv")->required();
  add_common(*threshold, o);

  auto* distmatrix =
      app.add_subcommand("distmatrix", "Compare raw vs cluster-substituted distance matrices");
  distmatrix->add_option("--towers", o.towers, "towers.csv")->required();
  distmatrix->add_option("--obs", o.obs, "observations.csv")->required();
  distmatrix->add_option("--tags", o.tags, "tags.csv");
  add_common(*distmatrix, o);

  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic network and traces");
  add_common(*simulate, o);
  simulate->add_option("--users", o.users, "Number of users")->capture_default_str();
  simulate->add_option("--oscillation-rate", o.behavior.oscillation_rate)->capture_default_str();
  simulate->add_option("--n-places", o.behavior.n_places)->capture_default_str();
  simulate->add_option("--duration-hours", o.behavior.duration_hours)->capture_default_str();
  simulate->add_option("--mean-stay-minutes", o.behavior.mean_stay_minutes)->capture_default_str();
  simulate->add_option("--tagged-fraction", o.behavior.tagged_fraction)->capture_default_str();
  simulate->add_option("--n-lacs", o.network.n_lacs)->capture_default_str();
  simulate->add_option("--towers-per-lac", o.network.towers_per_lac)->capture_default_str();
  simulate->add_option("--overlap-fraction", o.network.overlap_fraction)->capture_default_str();

  auto* score = app.add_subcommand("score", "Score a resolution against ground truth");
  score->add_option("--towers", o.towers, "towers.csv")->required();
  score->add_option("--obs", o.obs, "observations.csv")->required();
  score->add_option("--tags", o.tags, "tags.csv");
  score->add_option("--truth", o.truth, "ground_truth.csv")->required();
  add_common(*score, o);

  try
  {
    app.parse(argc, argv);
  }
  catch (const CLI::ParseError& e)
  {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  const auto t0 = std::chrono::steady_clock::now();
  try
  {
    o.cfg.missing_tower_policy =
        o.missing_policy == "fallback" ? MissingTowerPolicy::Fallback : MissingTowerPolicy::Error;
    o.cfg.validate();
    double ms = 0.0;
    if (semantic->parsed())
      run_semantic(o);
    else if (resolve_cmd->parsed())
      run_resolve(o, ms);
    else if (threshold->parsed())
      run_threshold(o);
    else if (distmatrix->parsed())
      run_distmatrix(o);
    else if (simulate->parsed())
      run_simulate(o);
    else if (score->parsed())
      run_score(o);
  }
  catch (const Error& e)
  {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  catch (const std::exception& e)
  {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
  const auto ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0);
  std::cerr << "elapsed " << ms.count() << " ms\n";
  return 0;
}
