#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace gpufail {

// Collection tick: one telemetry entry every 10 minutes.
inline constexpr std::int64_t kTickMinutes = 10;
inline constexpr std::int64_t kMinutesPerDay = 24 * 60;
inline constexpr std::int64_t kTicksPerDay = kMinutesPerDay / kTickMinutes;

/// Half-open interval of epoch minutes.
struct TimeRange {
  std::int64_t begin = 0;
  std::int64_t end = 0;

  bool contains(std::int64_t t) const { return t >= begin && t < end; }
  bool empty() const { return end <= begin; }
  bool overlaps(const TimeRange& other) const {
    return begin < other.end && other.begin < end;
  }
};

// Raised for invalid user input (bad config values, schema violations).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised when a file cannot be parsed; carries the 1-based line number.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view s);

/// Stable sub-seed for a named consumer of a root seed.
std::uint64_t derive_seed(std::uint64_t root, std::string_view name);

/// Epoch day (days since 1970-01-01) to "YYYY-MM-DD" and back.
std::string format_date(std::int32_t epoch_day);
std::int32_t parse_date(std::string_view text);

inline std::int64_t day_of(std::int64_t epoch_minutes) {
  return epoch_minutes >= 0 ? epoch_minutes / kMinutesPerDay
                            : (epoch_minutes - kMinutesPerDay + 1) / kMinutesPerDay;
}

/// Runs fn(i) for i in [0, n). Work is spread over hardware threads; callers
/// write results by index so output never depends on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

/// Lower-case hex SHA-256 of a byte string / of a file's content.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::string& path);

}  // namespace gpufail
