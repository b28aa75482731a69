#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "lsg/clock.hpp"
#include "lsg/error.hpp"

namespace lsg::ingest {

// ---------------------------------------------------------------------------
// Sensor types
// ---------------------------------------------------------------------------

enum class SensorOrigin { PhysicalDevice, Virtual, InGame };

inline const char* sensor_origin_name(SensorOrigin o) {
  switch (o) {
    case SensorOrigin::PhysicalDevice: return "PHYSICAL_DEVICE";
    case SensorOrigin::Virtual:        return "VIRTUAL";
    case SensorOrigin::InGame:         return "IN_GAME";
  }
  return "?";
}

inline std::optional<SensorOrigin> parse_sensor_origin(const std::string& s) {
  if (s == "PHYSICAL_DEVICE") return SensorOrigin::PhysicalDevice;
  if (s == "VIRTUAL") return SensorOrigin::Virtual;
  if (s == "IN_GAME") return SensorOrigin::InGame;
  return std::nullopt;
}

struct SensorDescriptor {
  std::string sensor_id;   // server-assigned, 26 chars
  std::string account_id;
  std::string kind;        // key into the conversion-rule catalog
  SensorOrigin origin = SensorOrigin::PhysicalDevice;
  std::string api_key;     // bearer secret scoped to this sensor
  TimestampMs created_at = 0;
};

// ---------------------------------------------------------------------------
// Readings
// ---------------------------------------------------------------------------

struct SensorReading {
  std::string reading_id;          // client-supplied dedup key, unique per sensor
  std::string sensor_id;           // may be empty when implied by the api key
  double quantity = 0.0;           // sensor units, non-negative finite
  TimestampMs observed_at = 0;
  std::map<std::string, std::string> metadata;
};

// Syntactic validation only; semantic caps live in the composition layer and
// staleness is judged against the account's fold cursor.
inline Status validate_reading(const SensorReading& r, TimestampMs now) {
  if (r.reading_id.empty() || r.reading_id.size() > 64)
    return make_error(ErrorCode::ValidationFailed, "reading_id must be 1-64 chars");
  if (!std::isfinite(r.quantity))
    return make_error(ErrorCode::ValidationFailed, "non-finite quantity");
  if (r.quantity < 0)
    return make_error(ErrorCode::ValidationFailed, "negative quantity");
  if (r.observed_at > now + kSkewWindowMs)
    return make_error(ErrorCode::ValidationFailed, "future timestamp");
  return Ok{};
}

enum class SubmitStatus { Accepted, Duplicate, ValidationFailed, StaleReading };

inline const char* submit_status_name(SubmitStatus s) {
  switch (s) {
    case SubmitStatus::Accepted:         return "ACCEPTED";
    case SubmitStatus::Duplicate:        return "DUPLICATE";
    case SubmitStatus::ValidationFailed: return "VALIDATION_FAILED";
    case SubmitStatus::StaleReading:     return "STALE_READING";
  }
  return "?";
}

struct SubmitResult {
  SubmitStatus status = SubmitStatus::Accepted;
  std::int64_t credited_mpt = 0;
  std::string dimension;  // empty on validation failures
  std::string reason;     // set on VALIDATION_FAILED / STALE_READING
};

// ---------------------------------------------------------------------------
// Adapter traces
// ---------------------------------------------------------------------------

// Replayable stand-in for live virtual-sensor polling. JSON Lines, one row
// per reading, rows sorted by observed_at.
struct AdapterTrace {
  std::string source;
  std::vector<SensorReading> rows;

  static Result<AdapterTrace> from_jsonl(const std::string& text, std::string source_name) {
    AdapterTrace trace;
    trace.source = std::move(source_name);
    TimestampMs prev = std::numeric_limits<TimestampMs>::min();
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
      std::size_t end = text.find('\n', pos);
      if (end == std::string::npos) end = text.size();
      std::string line = text.substr(pos, end - pos);
      pos = end + 1;
      ++line_no;
      if (line.empty()) continue;
      nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.is_object())
        return make_error(ErrorCode::BadJson,
                          "trace line " + std::to_string(line_no) + ": not a JSON object");
      SensorReading r;
      if (!j.contains("reading_id") || !j["reading_id"].is_string())
        return make_error(ErrorCode::ValidationFailed,
                          "trace line " + std::to_string(line_no) + ": missing reading_id");
      r.reading_id = j["reading_id"].get<std::string>();
      if (!j.contains("observed_at") || !j["observed_at"].is_string())
        return make_error(ErrorCode::ValidationFailed,
                          "trace line " + std::to_string(line_no) + ": missing observed_at");
      auto ts = parse_iso8601(j["observed_at"].get<std::string>());
      if (!ts)
        return make_error(ErrorCode::ValidationFailed,
                          "trace line " + std::to_string(line_no) + ": bad observed_at");
      r.observed_at = *ts;
      if (!j.contains("quantity") || !j["quantity"].is_number())
        return make_error(ErrorCode::ValidationFailed,
                          "trace line " + std::to_string(line_no) + ": missing quantity");
      r.quantity = j["quantity"].get<double>();
      if (j.contains("metadata")) {
        if (!j["metadata"].is_object())
          return make_error(ErrorCode::ValidationFailed,
                            "trace line " + std::to_string(line_no) + ": metadata must be object");
        for (auto it = j["metadata"].begin(); it != j["metadata"].end(); ++it) {
          if (!it.value().is_string())
            return make_error(ErrorCode::ValidationFailed,
                              "trace line " + std::to_string(line_no) +
                                  ": metadata values must be strings");
          r.metadata[it.key()] = it.value().get<std::string>();
        }
      }
      if (r.observed_at < prev)
        return make_error(ErrorCode::ValidationFailed,
                          "trace line " + std::to_string(line_no) +
                              ": rows must be sorted by observed_at");
      prev = r.observed_at;
      trace.rows.push_back(std::move(r));
    }
    return trace;
  }

  static Result<AdapterTrace> from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return make_error(ErrorCode::IoError, "cannot open trace: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_jsonl(text, path);
  }
};

// ---------------------------------------------------------------------------
// Replay adapter
// ---------------------------------------------------------------------------

constexpr double kAsFastAsPossible = 0.0;

struct ReplayRow {
  std::string reading_id;
  SubmitResult result;
};

struct ReplayReport {
  std::vector<ReplayRow> rows;
  bool aborted = false;
  std::string abort_reason;

  std::size_t accepted() const {
    std::size_t n = 0;
    for (const auto& r : rows)
      if (r.result.status == SubmitStatus::Accepted) ++n;
    return n;
  }
};

// Submits each trace row in order through `submit`. `speed` scales trace
// time to wall time; kAsFastAsPossible skips pacing entirely. Aborts on
// AUTH_FAILED, records validation failures and continues.
template <typename SubmitFn>
ReplayReport run_replay_adapter(const AdapterTrace& trace, SubmitFn&& submit,
                                double speed = kAsFastAsPossible) {
  ReplayReport report;
  TimestampMs prev = trace.rows.empty() ? 0 : trace.rows.front().observed_at;
  for (const auto& row : trace.rows) {
    if (speed > 0.0 && row.observed_at > prev) {
      auto wait_ms = static_cast<std::int64_t>((row.observed_at - prev) / speed);
      if (wait_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(wait_ms));
    }
    prev = row.observed_at;
    Result<SubmitResult> r = submit(row);
    if (!r) {
      report.aborted = true;
      report.abort_reason = r.error().message;
      break;
    }
    report.rows.push_back({row.reading_id, r.value()});
  }
  return report;
}

}  // namespace lsg::ingest
