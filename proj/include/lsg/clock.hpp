#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>

namespace lsg {

// All timestamps are UTC milliseconds since the Unix epoch.
using TimestampMs = std::int64_t;

constexpr std::int64_t kMsPerSecond = 1000;
constexpr std::int64_t kMsPerMinute = 60 * kMsPerSecond;
constexpr std::int64_t kMsPerHour   = 60 * kMsPerMinute;
constexpr std::int64_t kMsPerDay    = 24 * kMsPerHour;

// Clock-skew tolerance window shared by ingestion and the ledger fold.
constexpr std::int64_t kSkewWindowMs = 300 * kMsPerSecond;

inline TimestampMs wall_clock_now() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

// "YYYY-MM-DDTHH:MM:SS.mmmZ". Fixed format so log bytes are stable.
inline std::string format_iso8601(TimestampMs ms) {
  using namespace std::chrono;
  std::int64_t days = ms / kMsPerDay;
  std::int64_t rem = ms % kMsPerDay;
  if (rem < 0) {
    rem += kMsPerDay;
    days -= 1;
  }
  year_month_day ymd{sys_days{std::chrono::days{days}}};
  int hh = static_cast<int>(rem / kMsPerHour);
  int mm = static_cast<int>((rem / kMsPerMinute) % 60);
  int ss = static_cast<int>((rem / kMsPerSecond) % 60);
  int mmm = static_cast<int>(rem % 1000);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ",
                static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()), hh, mm, ss, mmm);
  return buf;
}

// Accepts "YYYY-MM-DDTHH:MM:SS[.fff]Z" (UTC only).
inline std::optional<TimestampMs> parse_iso8601(const std::string& s) {
  using namespace std::chrono;
  int y = 0, mo = 0, d = 0, hh = 0, mi = 0, ss = 0;
  int frac = 0, frac_digits = 0;
  std::size_t i = 0;
  auto digits = [&](int n, int& out) {
    out = 0;
    for (int k = 0; k < n; ++k) {
      if (i >= s.size() || s[i] < '0' || s[i] > '9') return false;
      out = out * 10 + (s[i++] - '0');
    }
    return true;
  };
  auto expect = [&](char c) { return i < s.size() && s[i++] == c; };
  if (!digits(4, y) || !expect('-') || !digits(2, mo) || !expect('-') || !digits(2, d))
    return std::nullopt;
  if (!expect('T') || !digits(2, hh) || !expect(':') || !digits(2, mi) || !expect(':') ||
      !digits(2, ss))
    return std::nullopt;
  if (i < s.size() && s[i] == '.') {
    ++i;
    while (i < s.size() && s[i] >= '0' && s[i] <= '9' && frac_digits < 9) {
      if (frac_digits < 3) frac = frac * 10 + (s[i] - '0');
      ++frac_digits;
      ++i;
    }
    if (frac_digits == 0) return std::nullopt;
    while (frac_digits < 3 && frac_digits > 0) {
      frac *= 10;
      ++frac_digits;
    }
  }
  if (!expect('Z') || i != s.size()) return std::nullopt;
  year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) return std::nullopt;
  if (hh > 23 || mi > 59 || ss > 60) return std::nullopt;
  std::int64_t days = sys_days{ymd}.time_since_epoch().count();
  return days * kMsPerDay + hh * kMsPerHour + mi * kMsPerMinute + ss * kMsPerSecond + frac;
}

// UTC calendar day ("YYYY-MM-DD") of a timestamp; the daily-cap bucket key.
inline std::string utc_date(TimestampMs ms) {
  using namespace std::chrono;
  std::int64_t days = ms / kMsPerDay;
  if (ms % kMsPerDay < 0) days -= 1;
  year_month_day ymd{sys_days{std::chrono::days{days}}};
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

}  // namespace lsg
