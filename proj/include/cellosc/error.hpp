#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace cellosc
{
enum class Errc
{
  InvalidArgument,
  NonMonotonicTime,
  NegativeDwell,
  EmptyInput,
  DimensionMismatch,
  DegenerateVariance,
  UnknownTower,
  EmptyHistogram,
  EmptyCluster,
  InfeasibleOverlap,
  NotEnoughTowers,
  IndexMismatch,
  FileNotFound,
  MalformedRow,
  DuplicateCellKey,
  EmptyLabel,
  IoError,
};

inline std::string_view to_string(Errc code)
{
  switch (code)
  {
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::NonMonotonicTime: return "NonMonotonicTime";
    case Errc::NegativeDwell: return "NegativeDwell";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::DegenerateVariance: return "DegenerateVariance";
    case Errc::UnknownTower: return "UnknownTower";
    case Errc::EmptyHistogram: return "EmptyHistogram";
    case Errc::EmptyCluster: return "EmptyCluster";
    case Errc::InfeasibleOverlap: return "InfeasibleOverlap";
    case Errc::NotEnoughTowers: return "NotEnoughTowers";
    case Errc::IndexMismatch: return "IndexMismatch";
    case Errc::FileNotFound: return "FileNotFound";
    case Errc::MalformedRow: return "MalformedRow";
    case Errc::DuplicateCellKey: return "DuplicateCellKey";
    case Errc::EmptyLabel: return "EmptyLabel";
    case Errc::IoError: return "IoError";
  }
  return "Unknown";
}

/// Base of every error raised by the library. Input problems all derive from
/// this; anything else escaping (std::logic_error etc.) is a bug.
class Error : public std::runtime_error
{
public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code)
  {
  }

  Errc code() const noexcept { return code_; }

private:
  Errc code_;
};

/// One offending position. For sequences `position` is the observation index,
/// for parsers it is the 1-based line number.
struct Issue
{
  Errc code;
  std::size_t position;
  std::string message;

  friend bool operator==(const Issue&, const Issue&) = default;
};

namespace detail
{
inline std::string join_issues(std::string_view unit, const std::vector<Issue>& issues)
{
  std::string out;
  for (const auto& issue : issues)
  {
    if (!out.empty())
      out += "; ";
    out += std::string(to_string(issue.code)) + "(" + std::string(unit) + " " +
           std::to_string(issue.position) + ")";
    if (!issue.message.empty())
      out += " " + issue.message;
  }
  return out;
}
}  // namespace detail

/// Validation failure over an observation sequence; lists every violation.
class SequenceError : public Error
{
public:
  explicit SequenceError(std::vector<Issue> issues)
      : Error(issues.empty() ? Errc::InvalidArgument : issues.front().code,
              detail::join_issues("index", issues)),
        issues_(std::move(issues))
  {
  }

  const std::vector<Issue>& issues() const noexcept { return issues_; }

private:
  std::vector<Issue> issues_;
};

/// File or text parse failure; every issue carries a line number.
class ParseError : public Error
{
public:
  ParseError(std::string source, std::vector<Issue> issues)
      : Error(issues.empty() ? Errc::MalformedRow : issues.front().code,
              source + ": " + detail::join_issues("line", issues)),
        source_(std::move(source)),
        issues_(std::move(issues))
  {
  }

  const std::string& source() const noexcept { return source_; }
  const std::vector<Issue>& issues() const noexcept { return issues_; }

private:
  std::string source_;
  std::vector<Issue> issues_;
};
}  // namespace cellosc
