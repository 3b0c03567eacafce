#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "cellosc/core.hpp"

namespace cellosc
{
/// The label -> cells (phi) and cell -> labels (psi) relations; each is the
/// transpose of the other.
struct TagMappings
{
  std::map<std::string, std::set<CellKey>> phi;
  std::map<CellKey, std::set<std::string>> psi;

  friend bool operator==(const TagMappings&, const TagMappings&) = default;
};

inline TagMappings build_mappings(std::span<const SemanticTagEvent> tags)
{
  TagMappings m;
  for (const auto& tag : tags)
  {
    m.phi[tag.label()].insert(tag.key());
    m.psi[tag.key()].insert(tag.label());
  }
  return m;
}

struct CellFrequency
{
  CellKey key;
  std::size_t frequency = 0;

  friend bool operator==(const CellFrequency&, const CellFrequency&) = default;
};

/// One semantically tagged place. Members are ordered by frequency
/// descending, ties by ascending key.
struct LocationCluster
{
  std::string label;
  std::vector<CellFrequency> members;
  std::size_t cell_count = 0;

  friend bool operator==(const LocationCluster&, const LocationCluster&) = default;
};

/// One cluster per distinct label, sorted by label. Frequency counts tag
/// events, not distinct visits.
inline std::vector<LocationCluster> cluster_semantic(std::span<const SemanticTagEvent> tags)
{
  std::map<std::string, std::map<CellKey, std::size_t>> counts;
  for (const auto& tag : tags)
    ++counts[tag.label()][tag.key()];

  std::vector<LocationCluster> clusters;
  clusters.reserve(counts.size());
  for (auto& [label, cells] : counts)
  {
    LocationCluster c;
    c.label = label;
    for (const auto& [key, freq] : cells)
      c.members.push_back({key, freq});
    std::stable_sort(c.members.begin(), c.members.end(),
                     [](const CellFrequency& a, const CellFrequency& b) {
                       return a.frequency > b.frequency;
                     });
    c.cell_count = c.members.size();
    clusters.push_back(std::move(c));
  }
  return clusters;
}

struct LabelWeight
{
  std::string label;
  std::size_t weight = 0;

  friend bool operator==(const LabelWeight&, const LabelWeight&) = default;
};

/// For each tagged cell, every place it was tagged at with its frequency
/// there. The list length is |psi(cell)|.
using CellWeightIndex = std::map<CellKey, std::vector<LabelWeight>>;

inline CellWeightIndex build_weight_index(std::span<const LocationCluster> clusters)
{
  CellWeightIndex index;
  for (const auto& cluster : clusters)
    for (const auto& member : cluster.members)
      if (member.frequency > 0)
        index[member.key].push_back({cluster.label, member.frequency});
  for (auto& [key, weights] : index)
    std::sort(weights.begin(), weights.end(), [](const LabelWeight& a, const LabelWeight& b) {
      if (a.weight != b.weight)
        return a.weight > b.weight;
      return a.label < b.label;
    });
  return index;
}

/// Highest-weight label for the cell (ties: smallest label), none if untagged.
inline std::optional<std::string> resolve_cell_to_location(const CellKey& key,
                                                           const CellWeightIndex& index)
{
  const auto it = index.find(key);
  if (it == index.end() || it->second.empty())
    return std::nullopt;
  return it->second.front().label;
}
}  // namespace cellosc
