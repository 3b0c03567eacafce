#include <algorithm>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace cellosc;

namespace
{
const CellKey A(5120, 1);
const CellKey B(5120, 2);
const CellKey C(5121, 1);
const CellKey X(7, 7);

SemanticTagEvent tag(const std::string& label, const CellKey& key)
{
  return SemanticTagEvent("u1", key, label, 1111000000);
}
}  // namespace

TEST(BuildMappings, Empty)
{
  const auto m = build_mappings(std::vector<SemanticTagEvent>{});
  EXPECT_TRUE(m.phi.empty());
  EXPECT_TRUE(m.psi.empty());
}

TEST(BuildMappings, Singleton)
{
  const auto m = build_mappings(std::vector{tag("Home", A)});
  EXPECT_EQ(m.phi, (std::map<std::string, std::set<CellKey>>{{"Home", {A}}}));
  EXPECT_EQ(m.psi, (std::map<CellKey, std::set<std::string>>{{A, {"Home"}}}));
}

TEST(BuildMappings, HandEnumeration)
{
  const auto m = build_mappings(std::vector{tag("Home", A), tag("Home", B), tag("Office", A)});
  EXPECT_EQ(m.phi, (std::map<std::string, std::set<CellKey>>{{"Home", {A, B}}, {"Office", {A}}}));
  EXPECT_EQ(m.psi,
            (std::map<CellKey, std::set<std::string>>{{A, {"Home", "Office"}}, {B, {"Home"}}}));
}

TEST(BuildMappings, TransposeProperty)
{
  std::mt19937_64 rng(201);
  for (int trial = 0; trial < 500; ++trial)
  {
    const auto tags = oracle::random_tags(rng);
    const auto m = build_mappings(tags);
    for (const auto& [label, cells] : m.phi)
      for (const auto& key : cells)
        EXPECT_TRUE(m.psi.at(key).count(label));
    for (const auto& [key, labels] : m.psi)
      for (const auto& label : labels)
        EXPECT_TRUE(m.phi.at(label).count(key));
    for (const auto& t : tags)
      EXPECT_TRUE(m.phi.at(t.label()).count(t.key()));
  }
}

TEST(ClusterSemantic, HomeExample)
{
  const auto clusters =
      cluster_semantic(std::vector{tag("Home", A), tag("Home", A), tag("Home", B), tag("Home", C)});
  ASSERT_EQ(clusters.size(), 1u);
  EXPECT_EQ(clusters[0].label, "Home");
  EXPECT_EQ(clusters[0].members, (std::vector<CellFrequency>{{A, 2}, {B, 1}, {C, 1}}));
  EXPECT_EQ(clusters[0].cell_count, 3u);
}

TEST(ClusterSemantic, SingleLab)
{
  const auto clusters = cluster_semantic(std::vector{tag("Lab", X)});
  ASSERT_EQ(clusters.size(), 1u);
  EXPECT_EQ(clusters[0].label, "Lab");
  EXPECT_EQ(clusters[0].members, (std::vector<CellFrequency>{{X, 1}}));
  EXPECT_EQ(clusters[0].cell_count, 1u);
}

TEST(ClusterSemantic, LabelsAreCaseSensitiveAndSorted)
{
  const auto clusters = cluster_semantic(std::vector{tag("home", A), tag("Office", B), tag("Home", A)});
  ASSERT_EQ(clusters.size(), 3u);
  EXPECT_EQ(clusters[0].label, "Home");
  EXPECT_EQ(clusters[1].label, "Office");
  EXPECT_EQ(clusters[2].label, "home");
}

TEST(ClusterSemantic, MatchesOracleOnRandomFixtures)
{
  std::mt19937_64 rng(202);
  for (int trial = 0; trial < 500; ++trial)
  {
    const auto tags = oracle::random_tags(rng);
    ASSERT_EQ(cluster_semantic(tags), oracle::group_and_count(tags)) << "fixture " << trial;
  }
}

TEST(ClusterSemantic, Invariants)
{
  std::mt19937_64 rng(203);
  for (int trial = 0; trial < 500; ++trial)
  {
    const auto tags = oracle::random_tags(rng);
    const auto clusters = cluster_semantic(tags);
    for (std::size_t i = 1; i < clusters.size(); ++i)
      EXPECT_LT(clusters[i - 1].label, clusters[i].label);
    for (const auto& c : clusters)
    {
      EXPECT_EQ(c.cell_count, c.members.size());
      std::size_t sum = 0;
      for (const auto& m : c.members)
        sum += m.frequency;
      const auto events = std::count_if(tags.begin(), tags.end(),
                                        [&](const auto& t) { return t.label() == c.label; });
      EXPECT_EQ(sum, static_cast<std::size_t>(events));
      for (std::size_t i = 1; i < c.members.size(); ++i)
      {
        const auto& a = c.members[i - 1];
        const auto& b = c.members[i];
        EXPECT_TRUE(a.frequency > b.frequency || (a.frequency == b.frequency && a.key < b.key));
      }
    }
  }
}

TEST(ClusterSemantic, PermutationInvariant)
{
  std::mt19937_64 rng(204);
  for (int trial = 0; trial < 200; ++trial)
  {
    auto tags = oracle::random_tags(rng);
    const auto expected = cluster_semantic(tags);
    std::shuffle(tags.begin(), tags.end(), rng);
    EXPECT_EQ(cluster_semantic(tags), expected);
  }
}

TEST(WeightIndex, MultiMembership)
{
  const std::vector<LocationCluster> clusters = {{"Home", {{A, 2}}, 1}, {"Office", {{A, 1}}, 1}};
  const auto index = build_weight_index(clusters);
  ASSERT_EQ(index.size(), 1u);
  EXPECT_EQ(index.at(A), (std::vector<LabelWeight>{{"Home", 2}, {"Office", 1}}));
}

TEST(WeightIndex, SingleCell)
{
  const std::vector<LocationCluster> clusters = {{"Lab", {{X, 4}}, 1}};
  const auto index = build_weight_index(clusters);
  EXPECT_EQ(index.at(X), (std::vector<LabelWeight>{{"Lab", 4}}));
  EXPECT_FALSE(index.count(A));
}

TEST(WeightIndex, ListsSortedAndPositive)
{
  std::mt19937_64 rng(205);
  for (int trial = 0; trial < 300; ++trial)
  {
    const auto tags = oracle::random_tags(rng);
    const auto index = build_weight_index(cluster_semantic(tags));
    const auto m = build_mappings(tags);
    EXPECT_EQ(index.size(), m.psi.size());
    for (const auto& [key, weights] : index)
    {
      EXPECT_EQ(weights.size(), m.psi.at(key).size());
      for (std::size_t i = 0; i < weights.size(); ++i)
      {
        EXPECT_GT(weights[i].weight, 0u);
        if (i > 0)
        {
          EXPECT_TRUE(weights[i - 1].weight > weights[i].weight ||
                      (weights[i - 1].weight == weights[i].weight &&
                       weights[i - 1].label < weights[i].label));
        }
      }
    }
  }
}

TEST(ResolveCell, MaxWeight)
{
  const CellWeightIndex index = {{A, {{"Home", 2}, {"Office", 1}}}};
  EXPECT_EQ(resolve_cell_to_location(A, index), "Home");
}

TEST(ResolveCell, TieIsLexicographic)
{
  const std::vector<LocationCluster> clusters = {{"Office", {{A, 1}}, 1}, {"Home", {{A, 1}}, 1}};
  EXPECT_EQ(resolve_cell_to_location(A, build_weight_index(clusters)), "Home");
}

TEST(ResolveCell, UnknownCell)
{
  const CellWeightIndex index = {{A, {{"Home", 2}}}};
  EXPECT_EQ(resolve_cell_to_location(B, index), std::nullopt);
  EXPECT_EQ(resolve_cell_to_location(CellKey(310, 26, 5120, 1), index), std::nullopt);
}

TEST(ResolveCell, ResultIsInPsi)
{
  std::mt19937_64 rng(206);
  for (int trial = 0; trial < 300; ++trial)
  {
    const auto tags = oracle::random_tags(rng);
    const auto m = build_mappings(tags);
    const auto index = build_weight_index(cluster_semantic(tags));
    for (int lac = 1; lac <= 3; ++lac)
      for (int cell = 1; cell <= 8; ++cell)
        for (const CellKey key : {CellKey(lac, cell), CellKey(310, 26, lac, cell)})
        {
          const auto label = resolve_cell_to_location(key, index);
          if (label)
            EXPECT_TRUE(m.psi.at(key).count(*label));
          else
            EXPECT_FALSE(m.psi.count(key));
        }
  }
}
