#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace redqueen {

/// Abstract seconds. All rates are events per unit of this clock.
using Time = double;

inline constexpr Time kInfinity = std::numeric_limits<Time>::infinity();

/// Identifier of a user (broadcaster or follower) or of an event source.
enum class SourceId : std::uint32_t {};

constexpr std::uint32_t to_underlying(SourceId id) noexcept {
  return static_cast<std::uint32_t>(id);
}

/// Position of a broadcaster's latest story in one follower feed; 0 is the top.
using Rank = std::uint64_t;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An event or query arrived earlier than the state it is applied to.
class OrderingError : public Error {
 public:
  using Error::Error;
};

/// Invalid parameters or configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file. `line()` is 1-based, 0 when not line-oriented.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Half-open observation window (start, end].
struct Horizon {
  Time start = 0.0;
  Time end = 0.0;

  Time length() const noexcept { return end - start; }
  bool contains(Time t) const noexcept { return t > start && t <= end; }

  friend bool operator==(const Horizon&, const Horizon&) = default;
};

inline Horizon make_horizon(Time start, Time end) {
  if (!std::isfinite(start) || !std::isfinite(end) || !(end > start)) {
    throw ConfigError("horizon requires finite start < end");
  }
  return Horizon{start, end};
}

/// Non-fatal findings collected while loading or sampling.
struct Diagnostics {
  std::vector<std::string> warnings;

  void warn(std::string message) { warnings.push_back(std::move(message)); }
  bool empty() const noexcept { return warnings.empty(); }
};

inline void warn(Diagnostics* sink, std::string message) {
  if (sink != nullptr) sink->warn(std::move(message));
}

/// Shortest text that parses back to the same double.
inline std::string format_double(double value) {
  char buffer[64];
  const auto result = std::to_chars(buffer, buffer + sizeof buffer, value);
  return std::string(buffer, result.ptr);
}

/// Strict full-string parse; throws ConfigError on trailing text or overflow.
inline double parse_double(std::string_view text) {
  double value = 0.0;
  const auto result = std::from_chars(text.data(), text.data() + text.size(), value);
  if (result.ec != std::errc{} || result.ptr != text.data() + text.size()) {
    throw ConfigError("not a number: '" + std::string(text) + "'");
  }
  return value;
}

}  // namespace redqueen
