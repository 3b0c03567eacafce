#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace cellosc;
namespace fs = std::filesystem;

namespace
{
class TempDir
{
public:
  TempDir()
  {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("cellosc_io_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir()
  {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }

private:
  fs::path path_;
};

void write(const fs::path& p, std::string_view text)
{
  std::ofstream(p, std::ios::binary) << text;
}

template <typename F>
std::vector<Issue> parse_issues(F&& f)
{
  try
  {
    f();
  }
  catch (const ParseError& e)
  {
    return e.issues();
  }
  return {};
}
}  // namespace

TEST(ParseTowers, HeaderOnly)
{
  EXPECT_TRUE(io::parse_towers_text("mcc,mnc,lac,cell_id,lat,lon,radius_m\n").empty());
}

TEST(ParseTowers, FullRow)
{
  const auto towers =
      io::parse_towers_text("mcc,mnc,lac,cell_id,lat,lon,radius_m\n310,26,5120,9001,42.3601,-71.0589,800\n");
  ASSERT_EQ(towers.size(), 1u);
  EXPECT_EQ(towers[0].key(), CellKey(310, 26, 5120, 9001));
  EXPECT_EQ(towers[0].position(), GeoPoint(42.3601, -71.0589));
  EXPECT_EQ(towers[0].radius_m(), 800.0);
}

TEST(ParseTowers, RadiusDefaults)
{
  const auto no_column = io::parse_towers_text("lac,cell_id,lat,lon\n1,2,3,4\n", 1000.0);
  ASSERT_EQ(no_column.size(), 1u);
  EXPECT_EQ(no_column[0].radius_m(), 1000.0);
  EXPECT_EQ(no_column[0].key(), CellKey(1, 2));
  const auto blank = io::parse_towers_text("mcc,mnc,lac,cell_id,lat,lon,radius_m\n,,1,2,3,4,\n", 750.0);
  EXPECT_EQ(blank[0].radius_m(), 750.0);
}

TEST(ParseTowers, LatitudeOutOfRange)
{
  const auto issues = parse_issues([] {
    io::parse_towers_text("mcc,mnc,lac,cell_id,lat,lon,radius_m\n310,26,5120,9001,95.0,-71.0589,800\n");
  });
  ASSERT_EQ(issues.size(), 1u);
  EXPECT_EQ(issues[0].code, Errc::MalformedRow);
  EXPECT_EQ(issues[0].position, 2u);
  EXPECT_NE(issues[0].message.find("range"), std::string::npos);
}

TEST(ParseTowers, CollectsEveryBadRow)
{
  const auto issues = parse_issues([] {
    io::parse_towers_text(
        "mcc,mnc,lac,cell_id,lat,lon,radius_m\n"
        "310,26,1,1,1,1,100\n"
        "310,26,x,1,1,1,100\n"
        "310,26,1,2,1,1,-5\n"
        "310,26,1,1,2,2,100\n"
        "310,26,1,3,1\n");
  });
  ASSERT_EQ(issues.size(), 4u);
  EXPECT_EQ(issues[0].code, Errc::MalformedRow);
  EXPECT_EQ(issues[0].position, 3u);
  EXPECT_EQ(issues[1].position, 4u);
  EXPECT_EQ(issues[2].code, Errc::DuplicateCellKey);
  EXPECT_EQ(issues[2].position, 5u);
  EXPECT_EQ(issues[3].position, 6u);
}

TEST(ParseTowers, MissingColumnsAndFile)
{
  EXPECT_THROW(io::parse_towers_text("lac,cell_id,lat\n1,2,3\n"), ParseError);
  EXPECT_THROW(io::parse_towers_text(""), ParseError);
  try
  {
    io::parse_towers("/nonexistent/towers.csv");
    FAIL();
  }
  catch (const Error& e)
  {
    EXPECT_EQ(e.code(), Errc::FileNotFound);
  }
}

TEST(ParseTowers, QuotedFieldsAndCrlf)
{
  const auto towers = io::parse_towers_text("lac,cell_id,lat,lon\r\n\"1\",2,\"3.5\",4\r\n\r\n");
  ASSERT_EQ(towers.size(), 1u);
  EXPECT_EQ(towers[0].position().lat(), 3.5);
}

TEST(ParseObservations, InterleavedUsers)
{
  const auto seqs = io::parse_observations_text(
      "user_id,mcc,mnc,lac,cell_id,arrive,leave\n"
      "u2,,,1,1,300,400\n"
      "u1,,,1,2,100,200\n"
      "u2,,,1,3,0,100\n"
      "u1,310,26,1,4,200,250\n");
  ASSERT_EQ(seqs.size(), 2u);
  EXPECT_EQ(seqs[0].user_id, "u1");
  EXPECT_EQ(seqs[0].observations,
            (std::vector<Observation>{{CellKey(1, 2), 100, 200}, {CellKey(310, 26, 1, 4), 200, 250}}));
  EXPECT_EQ(seqs[1].user_id, "u2");
  EXPECT_EQ(seqs[1].observations,
            (std::vector<Observation>{{CellKey(1, 3), 0, 100}, {CellKey(1, 1), 300, 400}}));
}

TEST(ParseObservations, SingleRow)
{
  const auto seqs = io::parse_observations_text("user_id,mcc,mnc,lac,cell_id,arrive,leave\nu1,,,5120,9001,0,60\n");
  ASSERT_EQ(seqs.size(), 1u);
  EXPECT_EQ(seqs[0].observations.size(), 1u);
}

TEST(ParseObservations, NegativeDwellCarriesLine)
{
  const auto issues = parse_issues([] {
    io::parse_observations_text(
        "user_id,mcc,mnc,lac,cell_id,arrive,leave\nu1,,,1,1,0,60\nu1,,,1,1,500,400\n");
  });
  ASSERT_EQ(issues.size(), 1u);
  EXPECT_EQ(issues[0].code, Errc::NegativeDwell);
  EXPECT_EQ(issues[0].position, 3u);
}

TEST(ParseObservations, OverlappingIntervalsReportSourceLine)
{
  const auto issues = parse_issues([] {
    io::parse_observations_text(
        "user_id,mcc,mnc,lac,cell_id,arrive,leave\nu1,,,1,2,150,160\nu1,,,1,1,100,200\n");
  });
  ASSERT_EQ(issues.size(), 1u);
  EXPECT_EQ(issues[0].code, Errc::NonMonotonicTime);
  EXPECT_EQ(issues[0].position, 2u);
}

TEST(ParseTags, Row)
{
  const auto tags = io::parse_tags_text("user_id,lac,cell_id,label,at\nu1,5120,9001,Home,1111000000\n");
  ASSERT_EQ(tags.size(), 1u);
  EXPECT_EQ(tags[0], SemanticTagEvent("u1", CellKey(5120, 9001), "Home", 1111000000));
  const auto full =
      io::parse_tags_text("user_id,mcc,mnc,lac,cell_id,label,at\nu1,,,5120,9001,Home,1111000000\n");
  EXPECT_EQ(full, tags);
}

TEST(ParseTags, BlankLabel)
{
  const auto issues = parse_issues([] {
    io::parse_tags_text("user_id,mcc,mnc,lac,cell_id,label,at\nu1,,,5120,9001,  ,1111000000\n");
  });
  ASSERT_EQ(issues.size(), 1u);
  EXPECT_EQ(issues[0].code, Errc::EmptyLabel);
  EXPECT_EQ(issues[0].position, 2u);
}

TEST(ParseTags, EmptyFile)
{
  EXPECT_TRUE(io::parse_tags_text("").empty());
  EXPECT_TRUE(io::parse_tags_text("user_id,mcc,mnc,lac,cell_id,label,at\n").empty());
  TempDir dir;
  write(dir.path() / "tags.csv", "");
  EXPECT_TRUE(io::parse_tags(dir.path() / "tags.csv").empty());
}

TEST(RoundTrip, Towers)
{
  const auto net = generate_network(NetworkSpec{});
  EXPECT_EQ(io::parse_towers_text(io::format_towers(net)), net);
  const std::vector<TowerRecord> partial = {
      TowerRecord(CellKey(1, 2), GeoPoint(-33.123456789012345, 151.2), 0.1),
      TowerRecord(CellKey(310, std::nullopt, 1, 3), GeoPoint(0, 0), 1e6)};
  EXPECT_EQ(io::parse_towers_text(io::format_towers(partial)), partial);
}

TEST(RoundTrip, ObservationsAndTags)
{
  const auto population = generate_population(generate_network(NetworkSpec{}), BehaviorSpec{}, 4);
  std::vector<TrajectorySequence> seqs;
  std::vector<SemanticTagEvent> tags;
  for (const auto& t : population)
  {
    seqs.push_back(t.sequence);
    tags.insert(tags.end(), t.tags.begin(), t.tags.end());
  }
  EXPECT_EQ(io::parse_observations_text(io::format_observations(seqs)), seqs);
  EXPECT_EQ(io::parse_tags_text(io::format_tags(tags)), tags);

  const std::vector<SemanticTagEvent> odd = {
      SemanticTagEvent("user, \"quoted\"", CellKey(1, 1), "Caf\xc3\xa9, \"The\" Place", 5)};
  EXPECT_EQ(io::parse_tags_text(io::format_tags(odd)), odd);
}

TEST(RoundTrip, GroundTruth)
{
  const auto trace = generate_trace(generate_network(NetworkSpec{}), BehaviorSpec{});
  EXPECT_EQ(io::parse_ground_truth_text(io::format_ground_truth(trace.truth)), trace.truth);
}

TEST(RoundTrip, RandomSmallCases)
{
  std::mt19937_64 rng(401);
  for (int trial = 0; trial < 200; ++trial)
  {
    const auto c = oracle::random_small_case(rng);
    EXPECT_EQ(io::parse_towers_text(io::format_towers(c.towers)), c.towers);
    EXPECT_EQ(io::parse_tags_text(io::format_tags(c.tags)), c.tags);
    const std::vector seqs = {c.seq};
    const auto back = io::parse_observations_text(io::format_observations(seqs));
    if (c.seq.observations.empty())
      EXPECT_TRUE(back.empty());
    else
      EXPECT_EQ(back, seqs);
  }
}

TEST(ParserFuzz, ArbitraryBytesFailStructurally)
{
  std::mt19937_64 rng(402);
  const std::string alphabet = "0123456789,.-\"\n\r abcu:;\t\x01\xff";
  const std::vector<std::string> headers = {
      "", "mcc,mnc,lac,cell_id,lat,lon,radius_m\n", "user_id,mcc,mnc,lac,cell_id,arrive,leave\n",
      "user_id,mcc,mnc,lac,cell_id,label,at\n", "obs_index,label,place_id,paired_with\n"};
  std::uniform_int_distribution<std::size_t> len(0, 200);
  std::uniform_int_distribution<std::size_t> ch(0, alphabet.size() - 1);
  std::uniform_int_distribution<int> byte(0, 255);
  std::uniform_int_distribution<std::size_t> hdr(0, headers.size() - 1);
  for (int trial = 0; trial < 3000; ++trial)
  {
    std::string text = headers[hdr(rng)];
    const std::size_t n = len(rng);
    for (std::size_t i = 0; i < n; ++i)
      text.push_back(trial % 3 == 0 ? static_cast<char>(byte(rng)) : alphabet[ch(rng)]);
    auto check = [&](auto&& parse) {
      try
      {
        parse();
      }
      catch (const ParseError& e)
      {
        ASSERT_FALSE(e.issues().empty());
        for (const auto& issue : e.issues())
          EXPECT_GE(issue.position, 1u);
      }
      catch (const std::exception& e)
      {
        ADD_FAILURE() << "unstructured failure: " << e.what() << "\ninput: " << text;
      }
    };
    check([&] { io::parse_towers_text(text); });
    check([&] { io::parse_observations_text(text); });
    check([&] { io::parse_tags_text(text); });
    check([&] { io::parse_ground_truth_text(text); });
  }
}

namespace
{
std::string slurp(const fs::path& p)
{
  return io::read_file(p);
}

const char* const kOutputs[] = {"stays.csv", "overlap_clusters.csv", "semantic_clusters.csv",
                                "histogram.csv", "distmatrix_scatter.csv", "report.json"};
}  // namespace

TEST(EmitOutputs, EmptyResolution)
{
  TempDir dir;
  const auto rep = emit_outputs({}, {}, std::nullopt, std::nullopt, dir.path(), Config{});
  EXPECT_EQ(rep.observations_in, 0u);
  EXPECT_EQ(rep.stays_out, 0u);
  EXPECT_TRUE(rep.consistent());
  for (const char* name : kOutputs)
    ASSERT_TRUE(fs::exists(dir.path() / name)) << name;
  EXPECT_EQ(slurp(dir.path() / "stays.csv"),
            "user_id,stay_index,place_kind,place,arrive,leave,observations\n");
  EXPECT_EQ(slurp(dir.path() / "overlap_clusters.csv"),
            "user_id,cluster_id,lac,members,centroid_lat,centroid_lon,span_s\n");
  EXPECT_EQ(slurp(dir.path() / "semantic_clusters.csv"),
            "user_id,label,cell_count,mcc,mnc,lac,cell_id,frequency\n");
  EXPECT_EQ(slurp(dir.path() / "histogram.csv"), "bin_upper_min,count,coverage\n");
  EXPECT_EQ(slurp(dir.path() / "distmatrix_scatter.csv"), "d_raw_km,d_clustered_km\n");
  const auto report = nlohmann::json::parse(slurp(dir.path() / "report.json"));
  EXPECT_EQ(report["counts"]["observations_in"], 0);
  EXPECT_EQ(report["counts"]["stays_out"], 0);
  EXPECT_EQ(report["config"]["min_stay_seconds"], 660);
  EXPECT_FALSE(report.contains("timing_ms"));
}

namespace
{
struct Fixture
{
  std::vector<TrajectorySequence> seqs;
  std::vector<ResolvedTrajectory> resolved;
  SemanticModel model;
  TowerMap towers;
};

// three stays: a ping-pong cluster {A,B}, a distant cell C, a tagged cell H
Fixture three_stays()
{
  Fixture f;
  const CellKey A(5120, 1);
  const CellKey B(5120, 2);
  const CellKey C(5120, 3);
  const CellKey H(5120, 4);
  f.towers.emplace(A, TowerRecord(A, GeoPoint(42.3600, -71.0600), 800));
  f.towers.emplace(B, TowerRecord(B, GeoPoint(42.3650, -71.0600), 800));
  f.towers.emplace(C, TowerRecord(C, GeoPoint(42.3600, -70.9386), 800));
  f.towers.emplace(H, TowerRecord(H, GeoPoint(42.4000, -71.2000), 800));
  f.seqs = {{"u1", {{A, 0, 120}, {B, 120, 240}, {A, 240, 360}, {C, 400, 4000}, {H, 4000, 9000}}}};
  const std::vector<SemanticTagEvent> tags = {SemanticTagEvent("u1", H, "Home", 1)};
  f.model = build_semantic_model(tags);
  f.resolved = resolve_all(f.seqs, f.towers, f.model, Config{});
  return f;
}
}  // namespace

TEST(EmitOutputs, ThreeStayFixture)
{
  const auto f = three_stays();
  ASSERT_EQ(f.resolved[0].stays.size(), 3u);
  const auto points = clustered_point_sets(f.seqs, f.resolved, f.towers, 400);
  EXPECT_EQ(points.raw.size(), 3u);  // A, B, C; H is tagged
  const auto scatter = scatter_from_points(points, 6371.0);
  ASSERT_TRUE(scatter);
  const auto hist = stay_histogram(f.seqs, Config{});

  TempDir dir;
  const auto rep = emit_outputs(f.resolved, f.model.clusters, hist, scatter, dir.path(), Config{});
  EXPECT_TRUE(rep.consistent());
  EXPECT_EQ(rep.observations_in, 5u);
  EXPECT_EQ(rep.stays_out, 3u);
  EXPECT_EQ(rep.clusters_formed, 1u);
  EXPECT_EQ(rep.semantic_assignments, 1u);
  EXPECT_EQ(rep.clustered_observations, 3u);
  EXPECT_EQ(rep.single_observations, 1u);

  const auto scatter_csv = slurp(dir.path() / "distmatrix_scatter.csv");
  const auto rows = static_cast<std::size_t>(std::count(scatter_csv.begin(), scatter_csv.end(), '\n')) - 1;
  EXPECT_EQ(rows, scatter->raw.entries().size());
  EXPECT_EQ(rows, 9u);

  const auto stays = slurp(dir.path() / "stays.csv");
  EXPECT_NE(stays.find("u1,0,overlap_cluster,u1#0,0,360,3\n"), std::string::npos);
  EXPECT_NE(stays.find("u1,1,cell,::5120:3,400,4000,1\n"), std::string::npos);
  EXPECT_NE(stays.find("u1,2,semantic,Home,4000,9000,1\n"), std::string::npos);
  EXPECT_NE(slurp(dir.path() / "semantic_clusters.csv").find("u1,Home,1,,,5120,4,1\n"),
            std::string::npos);

  const auto report = nlohmann::json::parse(slurp(dir.path() / "report.json"));
  EXPECT_EQ(report["counts"]["clusters_formed"], 1);
  EXPECT_TRUE(report.contains("distance_matrix"));
}

TEST(EmitOutputs, RerunIsByteIdentical)
{
  const auto f = three_stays();
  const auto scatter = scatter_from_points(clustered_point_sets(f.seqs, f.resolved, f.towers, 400), 6371.0);
  const auto hist = stay_histogram(f.seqs, Config{});
  TempDir a;
  TempDir b;
  emit_outputs(f.resolved, f.model.clusters, hist, scatter, a.path(), Config{});
  const auto again = three_stays();
  emit_outputs(again.resolved, again.model.clusters, hist, scatter, b.path(), Config{});
  for (const char* name : kOutputs)
    EXPECT_EQ(slurp(a.path() / name), slurp(b.path() / name)) << name;
}

TEST(EmitOutputs, UnwritableDirectory)
{
  TempDir dir;
  write(dir.path() / "file", "x");
  try
  {
    emit_outputs({}, {}, std::nullopt, std::nullopt, dir.path() / "file" / "sub", Config{});
    FAIL();
  }
  catch (const Error& e)
  {
    EXPECT_EQ(e.code(), Errc::IoError);
    EXPECT_NE(std::string(e.what()).find("sub"), std::string::npos);
  }
}
