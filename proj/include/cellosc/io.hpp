#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "cellosc/core.hpp"
#include "cellosc/oscillation.hpp"
#include "cellosc/semantic.hpp"
#include "cellosc/synth.hpp"

namespace cellosc::io
{
// ---------------------------------------------------------------------------
// CSV primitives
// ---------------------------------------------------------------------------

struct CsvRecord
{
  std::size_t line = 0;  // 1-based line the record starts on
  std::vector<std::string> fields;
};

/// RFC 4180-style reader: comma separated, optional double quotes with ""
/// escapes, \n or \r\n endings. Blank lines are skipped. Malformed quoting
/// is reported in `issues` and the record dropped.
inline std::vector<CsvRecord> read_csv(std::string_view text, std::vector<Issue>& issues)
{
  std::vector<CsvRecord> records;
  std::size_t line = 1;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n)
  {
    CsvRecord rec;
    rec.line = line;
    std::string field;
    bool bad = false;
    bool done = false;
    while (!done)
    {
      if (i < n && text[i] == '"')
      {
        ++i;
        bool closed = false;
        while (i < n)
        {
          const char c = text[i++];
          if (c == '"')
          {
            if (i < n && text[i] == '"')
            {
              field.push_back('"');
              ++i;
            }
            else
            {
              closed = true;
              break;
            }
          }
          else
          {
            if (c == '\n')
              ++line;
            field.push_back(c);
          }
        }
        if (!closed)
        {
          bad = true;
          issues.push_back({Errc::MalformedRow, rec.line, "unterminated quoted field"});
        }
        else if (i < n && text[i] != ',' && text[i] != '\n' && text[i] != '\r')
        {
          bad = true;
          issues.push_back({Errc::MalformedRow, rec.line, "text after closing quote"});
        }
      }
      while (i < n && text[i] != ',' && text[i] != '\n')
      {
        if (text[i] != '\r' || (i + 1 < n && text[i + 1] != '\n'))
          field.push_back(text[i]);
        ++i;
      }
      rec.fields.push_back(std::move(field));
      field.clear();
      if (i < n && text[i] == ',')
      {
        ++i;
      }
      else
      {
        if (i < n)
        {
          ++i;  // '\n'
          ++line;
        }
        done = true;
      }
    }
    if (bad)
    {
      // Resynchronise at the next line.
      while (i < n && text[i - 1] != '\n')
        ++i;
      continue;
    }
    if (rec.fields.size() == 1 && trim(rec.fields.front()).empty())
      continue;
    records.push_back(std::move(rec));
  }
  return records;
}

inline std::string csv_escape(std::string_view field)
{
  if (field.find_first_of(",\"\n\r") == std::string_view::npos)
    return std::string(field);
  std::string out = "\"";
  for (char c : field)
  {
    if (c == '"')
      out += "\"\"";
    else
      out.push_back(c);
  }
  out += '"';
  return out;
}

/// Shortest representation that parses back to the same double.
inline std::string format_double(double v)
{
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::optional<std::int64_t> parse_int(std::string_view s)
{
  s = trim(s);
  if (s.empty())
    return std::nullopt;
  if (s.front() == '+')
    s.remove_prefix(1);
  std::int64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    return std::nullopt;
  return v;
}

inline std::optional<double> parse_double(std::string_view s)
{
  s = trim(s);
  if (s.empty())
    return std::nullopt;
  if (s.front() == '+')
    s.remove_prefix(1);
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v))
    return std::nullopt;
  return v;
}

inline std::string read_file(const std::filesystem::path& path)
{
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec))
    throw Error(Errc::FileNotFound, path.string());
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error(Errc::FileNotFound, path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes via a sibling temp file and rename, so readers never observe a
/// partially written file.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view content)
{
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out)
      throw Error(Errc::IoError, "cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out)
      throw Error(Errc::IoError, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec)
  {
    std::filesystem::remove(tmp, ec);
    throw Error(Errc::IoError, "cannot rename into " + path.string());
  }
}

namespace detail
{
/// Column positions by header name.
class Header
{
public:
  Header(const CsvRecord& rec, std::vector<Issue>& issues,
         std::initializer_list<std::string_view> required)
      : width_(rec.fields.size())
  {
    for (std::size_t i = 0; i < rec.fields.size(); ++i)
      columns_.emplace(std::string(trim(rec.fields[i])), i);
    for (auto name : required)
      if (!columns_.count(std::string(name)))
        issues.push_back({Errc::MalformedRow, rec.line,
                          "missing required column '" + std::string(name) + "'"});
  }

  std::optional<std::size_t> find(std::string_view name) const
  {
    const auto it = columns_.find(std::string(name));
    if (it == columns_.end())
      return std::nullopt;
    return it->second;
  }

  std::size_t width() const noexcept { return width_; }

private:
  std::map<std::string, std::size_t> columns_;
  std::size_t width_;
};

/// Field accessor for one row; records the first problem it meets.
class Row
{
public:
  Row(const CsvRecord& rec, const Header& header) : rec_(rec), header_(header) {}

  std::string_view raw(std::string_view column) const
  {
    const auto idx = header_.find(column);
    if (!idx || *idx >= rec_.fields.size())
      return {};
    return rec_.fields[*idx];
  }

  std::optional<std::int64_t> optional_int(std::string_view column)
  {
    const auto text = trim(raw(column));
    if (text.empty())
      return std::nullopt;
    auto v = parse_int(text);
    if (!v)
      fail("column '" + std::string(column) + "' is not an integer");
    return v;
  }

  std::int64_t required_int(std::string_view column, bool non_negative = false)
  {
    auto v = parse_int(raw(column));
    if (!v)
    {
      fail("column '" + std::string(column) + "' is not an integer");
      return 0;
    }
    if (non_negative && *v < 0)
      fail("column '" + std::string(column) + "' must be non-negative");
    return *v;
  }

  double required_double(std::string_view column)
  {
    auto v = parse_double(raw(column));
    if (!v)
    {
      fail("column '" + std::string(column) + "' is not a finite number");
      return 0.0;
    }
    return *v;
  }

  void fail(std::string message)
  {
    if (!error_)
      error_ = std::move(message);
  }

  const std::optional<std::string>& error() const noexcept { return error_; }

private:
  const CsvRecord& rec_;
  const Header& header_;
  std::optional<std::string> error_;
};

template <typename F>
void for_each_row(std::string_view text, const std::string& source,
                  std::initializer_list<std::string_view> required, std::vector<Issue>& issues,
                  F&& handle)
{
  auto records = read_csv(text, issues);
  if (records.empty())
  {
    if (issues.empty())
      issues.push_back({Errc::MalformedRow, 1, "missing header row"});
    return;
  }
  const Header header(records.front(), issues, required);
  if (!issues.empty())
    return;
  for (std::size_t r = 1; r < records.size(); ++r)
  {
    const auto& rec = records[r];
    if (rec.fields.size() != header.width())
    {
      issues.push_back({Errc::MalformedRow, rec.line,
                        "expected " + std::to_string(header.width()) + " fields, got " +
                            std::to_string(rec.fields.size())});
      continue;
    }
    Row row(rec, header);
    handle(rec, row);
  }
  (void)source;
}

inline CellKey read_key(Row& row)
{
  const auto mcc = row.optional_int("mcc");
  const auto mnc = row.optional_int("mnc");
  const auto lac = row.required_int("lac", true);
  const auto cell = row.required_int("cell_id", true);
  if (row.error())
    return {};
  return CellKey(mcc, mnc, lac, cell);
}

inline std::string opt_int(const std::optional<std::int64_t>& v)
{
  return v ? std::to_string(*v) : std::string();
}

inline std::string key_columns(const CellKey& key)
{
  return opt_int(key.mcc) + "," + opt_int(key.mnc) + "," + std::to_string(key.lac) + "," +
         std::to_string(key.cell_id);
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Input schemas
// ---------------------------------------------------------------------------

/// towers.csv: mcc,mnc,lac,cell_id,lat,lon,radius_m. The radius column (or
/// field) may be absent, in which case default_radius_m applies.
inline std::vector<TowerRecord> parse_towers_text(std::string_view text,
                                                  double default_radius_m = 1000.0,
                                                  const std::string& source = "towers.csv")
{
  std::vector<Issue> issues;
  std::vector<TowerRecord> towers;
  std::map<CellKey, std::size_t> seen;
  detail::for_each_row(
      text, source, {"lac", "cell_id", "lat", "lon"}, issues,
      [&](const CsvRecord& rec, detail::Row& row) {
        const CellKey key = detail::read_key(row);
        const double lat = row.required_double("lat");
        const double lon = row.required_double("lon");
        double radius = default_radius_m;
        if (!trim(row.raw("radius_m")).empty())
          radius = row.required_double("radius_m");
        if (!row.error())
        {
          if (!(lat >= -90.0 && lat <= 90.0))
            row.fail("range violation: lat " + format_double(lat));
          else if (!(lon >= -180.0 && lon <= 180.0))
            row.fail("range violation: lon " + format_double(lon));
          else if (!(radius > 0.0))
            row.fail("range violation: radius_m must be positive");
        }
        if (row.error())
        {
          issues.push_back({Errc::MalformedRow, rec.line, *row.error()});
          return;
        }
        if (auto [it, inserted] = seen.emplace(key, rec.line); !inserted)
        {
          issues.push_back({Errc::DuplicateCellKey, rec.line,
                            key.to_string() + " first defined on line " +
                                std::to_string(it->second)});
          return;
        }
        towers.emplace_back(key, GeoPoint(lat, lon), radius);
      });
  if (!issues.empty())
    throw ParseError(source, std::move(issues));
  return towers;
}

inline std::vector<TowerRecord> parse_towers(const std::filesystem::path& path,
                                             double default_radius_m = 1000.0)
{
  return parse_towers_text(read_file(path), default_radius_m, path.string());
}

inline TowerMap tower_map(std::span<const TowerRecord> towers)
{
  TowerMap m;
  for (const auto& t : towers)
    m.emplace(t.key(), t);
  return m;
}

/// observations.csv: user_id,mcc,mnc,lac,cell_id,arrive,leave. Returns one
/// sequence per user (ascending user_id), each stably sorted by arrive.
inline std::vector<TrajectorySequence> parse_observations_text(
    std::string_view text, const std::string& source = "observations.csv")
{
  std::vector<Issue> issues;
  struct Pending
  {
    TrajectorySequence seq;
    std::vector<std::size_t> lines;
  };
  std::map<std::string, Pending> users;
  detail::for_each_row(
      text, source, {"user_id", "lac", "cell_id", "arrive", "leave"}, issues,
      [&](const CsvRecord& rec, detail::Row& row) {
        const std::string user(trim(row.raw("user_id")));
        if (user.empty())
          row.fail("empty user_id");
        const CellKey key = detail::read_key(row);
        const auto arrive = row.required_int("arrive");
        const auto leave = row.required_int("leave");
        if (row.error())
        {
          issues.push_back({Errc::MalformedRow, rec.line, *row.error()});
          return;
        }
        if (leave < arrive)
        {
          issues.push_back({Errc::NegativeDwell, rec.line, "leave precedes arrive"});
          return;
        }
        auto& p = users[user];
        p.seq.user_id = user;
        p.seq.observations.push_back({key, arrive, leave});
        p.lines.push_back(rec.line);
      });

  std::vector<TrajectorySequence> out;
  out.reserve(users.size());
  for (auto& [user, p] : users)
  {
    std::vector<std::size_t> order(p.lines.size());
    for (std::size_t i = 0; i < order.size(); ++i)
      order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return p.seq.observations[a].arrive < p.seq.observations[b].arrive;
    });
    TrajectorySequence sorted{user, {}};
    for (std::size_t i : order)
      sorted.observations.push_back(p.seq.observations[i]);
    for (auto issue : check_sequence(sorted))
    {
      issue.position = p.lines[order[issue.position]];
      issue.message += " (user " + user + ")";
      issues.push_back(std::move(issue));
    }
    out.push_back(std::move(sorted));
  }
  if (!issues.empty())
  {
    std::stable_sort(issues.begin(), issues.end(),
                     [](const Issue& a, const Issue& b) { return a.position < b.position; });
    throw ParseError(source, std::move(issues));
  }
  return out;
}

inline std::vector<TrajectorySequence> parse_observations(const std::filesystem::path& path)
{
  return parse_observations_text(read_file(path), path.string());
}

/// tags.csv: user_id,mcc,mnc,lac,cell_id,label,at.
inline std::vector<SemanticTagEvent> parse_tags_text(std::string_view text,
                                                     const std::string& source = "tags.csv")
{
  std::vector<Issue> issues;
  std::vector<SemanticTagEvent> tags;
  if (trim(text).empty())
    return tags;
  detail::for_each_row(
      text, source, {"user_id", "lac", "cell_id", "label", "at"}, issues,
      [&](const CsvRecord& rec, detail::Row& row) {
        const std::string user(trim(row.raw("user_id")));
        if (user.empty())
          row.fail("empty user_id");
        const CellKey key = detail::read_key(row);
        const auto at = row.required_int("at");
        if (row.error())
        {
          issues.push_back({Errc::MalformedRow, rec.line, *row.error()});
          return;
        }
        const auto label = trim(row.raw("label"));
        if (label.empty())
        {
          issues.push_back({Errc::EmptyLabel, rec.line, "blank label"});
          return;
        }
        tags.emplace_back(user, key, label, at);
      });
  if (!issues.empty())
    throw ParseError(source, std::move(issues));
  return tags;
}

inline std::vector<SemanticTagEvent> parse_tags(const std::filesystem::path& path)
{
  return parse_tags_text(read_file(path), path.string());
}

// ---------------------------------------------------------------------------
// Writers for the input schemas (used by the generator and round trips)
// ---------------------------------------------------------------------------

inline std::string format_towers(std::span<const TowerRecord> towers)
{
  std::string out = "mcc,mnc,lac,cell_id,lat,lon,radius_m\n";
  for (const auto& t : towers)
    out += detail::key_columns(t.key()) + "," + format_double(t.position().lat()) + "," +
           format_double(t.position().lon()) + "," + format_double(t.radius_m()) + "\n";
  return out;
}

inline std::string format_observations(std::span<const TrajectorySequence> seqs)
{
  std::string out = "user_id,mcc,mnc,lac,cell_id,arrive,leave\n";
  for (const auto& seq : seqs)
    for (const auto& o : seq.observations)
      out += csv_escape(seq.user_id) + "," + detail::key_columns(o.key) + "," +
             std::to_string(o.arrive) + "," + std::to_string(o.leave) + "\n";
  return out;
}

inline std::string format_tags(std::span<const SemanticTagEvent> tags)
{
  std::string out = "user_id,mcc,mnc,lac,cell_id,label,at\n";
  for (const auto& t : tags)
    out += csv_escape(t.user_id()) + "," + detail::key_columns(t.key()) + "," +
           csv_escape(t.label()) + "," + std::to_string(t.at()) + "\n";
  return out;
}

inline std::string_view to_string(TruthKind kind)
{
  switch (kind)
  {
    case TruthKind::Stationary: return "stationary";
    case TruthKind::Oscillation: return "oscillation";
    case TruthKind::Traveling: return "traveling";
  }
  return "traveling";
}

/// ground_truth.csv: obs_index,label,place_id,paired_with. Indices are
/// offset by `base` so several users can share one file.
inline std::string format_ground_truth(const GroundTruth& truth, std::size_t base = 0,
                                       bool header = true)
{
  std::string out = header ? "obs_index,label,place_id,paired_with\n" : "";
  std::map<std::size_t, std::size_t> partner;
  for (const auto& [i, j] : truth.oscillation_pairs)
    partner[j] = i;
  for (std::size_t i = 0; i < truth.labels.size(); ++i)
  {
    const auto& l = truth.labels[i];
    out += std::to_string(base + i) + "," + std::string(to_string(l.kind)) + "," +
           (l.place_id ? std::to_string(*l.place_id) : std::string()) + "," +
           (partner.count(i) ? std::to_string(base + partner[i]) : std::string()) + "\n";
  }
  return out;
}

/// Inverse of format_ground_truth over a whole file.
inline GroundTruth parse_ground_truth_text(std::string_view text,
                                           const std::string& source = "ground_truth.csv")
{
  std::vector<Issue> issues;
  GroundTruth truth;
  std::vector<std::optional<std::int64_t>> partners;
  detail::for_each_row(
      text, source, {"obs_index", "label", "place_id", "paired_with"}, issues,
      [&](const CsvRecord& rec, detail::Row& row) {
        const auto idx = row.required_int("obs_index", true);
        const auto place = row.optional_int("place_id");
        const auto paired = row.optional_int("paired_with");
        const auto label = trim(row.raw("label"));
        TruthLabel tl;
        if (label == "stationary")
          tl.kind = TruthKind::Stationary;
        else if (label == "oscillation")
          tl.kind = TruthKind::Oscillation;
        else if (label == "traveling")
          tl.kind = TruthKind::Traveling;
        else
          row.fail("unknown label '" + std::string(label) + "'");
        if (!row.error() && static_cast<std::size_t>(idx) != truth.labels.size())
          row.fail("obs_index out of sequence");
        if (!row.error() && tl.stationary() != place.has_value())
          row.fail("place_id must be set exactly for stationary rows");
        if (!row.error() && place && *place < 0)
          row.fail("place_id must be non-negative");
        if (!row.error() && paired && (*paired < 0 || *paired >= idx))
          row.fail("paired_with must reference an earlier row");
        if (row.error())
        {
          issues.push_back({Errc::MalformedRow, rec.line, *row.error()});
          return;
        }
        if (place)
          tl.place_id = static_cast<std::size_t>(*place);
        truth.labels.push_back(tl);
        partners.push_back(paired);
      });
  if (!issues.empty())
    throw ParseError(source, std::move(issues));
  for (std::size_t j = 0; j < partners.size(); ++j)
    if (partners[j])
      truth.oscillation_pairs.emplace_back(static_cast<std::size_t>(*partners[j]), j);
  return truth;
}

inline GroundTruth parse_ground_truth(const std::filesystem::path& path)
{
  return parse_ground_truth_text(read_file(path), path.string());
}

// ---------------------------------------------------------------------------
// Output files
// ---------------------------------------------------------------------------

struct UserClusters
{
  std::string user_id;
  std::vector<LocationCluster> clusters;
};

inline std::string place_kind(const Place& place)
{
  switch (place.index())
  {
    case 0: return "semantic";
    case 1: return "overlap_cluster";
    default: return "cell";
  }
}

inline std::string place_name(const Place& place)
{
  if (const auto* s = std::get_if<SemanticPlace>(&place))
    return s->label;
  if (const auto* c = std::get_if<ClusterPlace>(&place))
    return c->cluster_id;
  return std::get<CellPlace>(place).key.to_string();
}

inline std::string format_stays(std::span<const ResolvedTrajectory> resolved)
{
  std::string out = "user_id,stay_index,place_kind,place,arrive,leave,observations\n";
  for (const auto& r : resolved)
    for (std::size_t s = 0; s < r.stays.size(); ++s)
    {
      const auto& stay = r.stays[s];
      out += csv_escape(r.user_id) + "," + std::to_string(s) + "," + place_kind(stay.place) +
             "," + csv_escape(place_name(stay.place)) + "," + std::to_string(stay.arrive) + "," +
             std::to_string(stay.leave) + "," + std::to_string(stay.observations.size()) + "\n";
    }
  return out;
}

inline std::string format_overlap_clusters(std::span<const ResolvedTrajectory> resolved)
{
  std::string out = "user_id,cluster_id,lac,members,centroid_lat,centroid_lon,span_s\n";
  for (const auto& r : resolved)
    for (const auto& c : r.clusters)
    {
      std::string members;
      for (const auto& m : c.members)
        members += (members.empty() ? "" : ";") + m.to_string();
      out += csv_escape(r.user_id) + "," + csv_escape(c.id) + "," + std::to_string(c.lac) + "," +
             members + "," + format_double(c.centroid.lat()) + "," +
             format_double(c.centroid.lon()) + "," + std::to_string(c.span) + "\n";
    }
  return out;
}

inline std::string format_semantic_clusters(std::span<const UserClusters> users)
{
  std::string out = "user_id,label,cell_count,mcc,mnc,lac,cell_id,frequency\n";
  for (const auto& u : users)
    for (const auto& c : u.clusters)
      for (const auto& m : c.members)
        out += csv_escape(u.user_id) + "," + csv_escape(c.label) + "," +
               std::to_string(c.cell_count) + "," + detail::key_columns(m.key) + "," +
               std::to_string(m.frequency) + "\n";
  return out;
}

inline std::string format_histogram(const StayHistogram& h)
{
  std::string out = "bin_upper_min,count,coverage\n";
  for (std::size_t k = 0; k < h.bins.size(); ++k)
    out += std::to_string(h.bins[k].upper_minutes) + "," + std::to_string(h.bins[k].count) + "," +
           format_double(h.coverage[k]) + "\n";
  return out;
}

inline std::string format_scatter(const DistanceMatrix& raw, const DistanceMatrix& clustered)
{
  std::string out = "d_raw_km,d_clustered_km\n";
  const auto a = raw.entries();
  const auto b = clustered.entries();
  for (std::size_t i = 0; i < a.size() && i < b.size(); ++i)
    out += format_double(a[i]) + "," + format_double(b[i]) + "\n";
  return out;
}
}  // namespace cellosc::io
