#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <json.hpp>

#include "lsg/clock.hpp"
#include "lsg/error.hpp"

namespace lsg::ledger {

enum class EventKind {
  AccountCreated,
  SensorRegistered,
  ReadingCredited,
  PointsRedeemed,
  MechanicRegistered,
  GameRegistered,
};

inline const char* event_kind_name(EventKind k) {
  switch (k) {
    case EventKind::AccountCreated:     return "ACCOUNT_CREATED";
    case EventKind::SensorRegistered:   return "SENSOR_REGISTERED";
    case EventKind::ReadingCredited:    return "READING_CREDITED";
    case EventKind::PointsRedeemed:     return "POINTS_REDEEMED";
    case EventKind::MechanicRegistered: return "MECHANIC_REGISTERED";
    case EventKind::GameRegistered:     return "GAME_REGISTERED";
  }
  return "?";
}

inline std::optional<EventKind> parse_event_kind(const std::string& s) {
  if (s == "ACCOUNT_CREATED") return EventKind::AccountCreated;
  if (s == "SENSOR_REGISTERED") return EventKind::SensorRegistered;
  if (s == "READING_CREDITED") return EventKind::ReadingCredited;
  if (s == "POINTS_REDEEMED") return EventKind::PointsRedeemed;
  if (s == "MECHANIC_REGISTERED") return EventKind::MechanicRegistered;
  if (s == "GAME_REGISTERED") return EventKind::GameRegistered;
  return std::nullopt;
}

// One log line. The on-disk shape {kind, occurred_at, payload, seq} with
// sorted keys is a stable contract; rebuild depends on it bit for bit.
struct LedgerEvent {
  std::int64_t seq = 0;
  TimestampMs occurred_at = 0;
  EventKind kind = EventKind::AccountCreated;
  nlohmann::json payload;

  std::string to_line() const {
    nlohmann::json j;
    j["seq"] = seq;
    j["occurred_at"] = format_iso8601(occurred_at);
    j["kind"] = event_kind_name(kind);
    j["payload"] = payload;
    return j.dump();
  }

  static Result<LedgerEvent> from_line(const std::string& line) {
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object())
      return make_error(ErrorCode::CorruptLog, "event line is not a JSON object");
    LedgerEvent e;
    if (!j.contains("seq") || !j["seq"].is_number_integer())
      return make_error(ErrorCode::CorruptLog, "event missing seq");
    e.seq = j["seq"].get<std::int64_t>();
    if (!j.contains("occurred_at") || !j["occurred_at"].is_string())
      return make_error(ErrorCode::CorruptLog, "event missing occurred_at");
    auto ts = parse_iso8601(j["occurred_at"].get<std::string>());
    if (!ts) return make_error(ErrorCode::CorruptLog, "event has bad occurred_at");
    e.occurred_at = *ts;
    if (!j.contains("kind") || !j["kind"].is_string())
      return make_error(ErrorCode::CorruptLog, "event missing kind");
    auto k = parse_event_kind(j["kind"].get<std::string>());
    if (!k) return make_error(ErrorCode::CorruptLog, "event has unknown kind");
    e.kind = *k;
    if (!j.contains("payload") || !j["payload"].is_object())
      return make_error(ErrorCode::CorruptLog, "event missing payload");
    e.payload = j["payload"];
    return e;
  }
};

}  // namespace lsg::ledger
