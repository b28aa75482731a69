#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lsg/clock.hpp"
#include "lsg/composition.hpp"
#include "lsg/error.hpp"
#include "lsg/ingestion.hpp"
#include "lsg/ledger.hpp"

namespace lsg::ingest {

// Intake orchestration: auth, validation, dedup, conversion, caps, and the
// ledger append, row by row. One instance per service.
class Gateway {
 public:
  Gateway(ledger::Store& store, compose::RuleCatalog catalog, compose::GameplayBudget budget)
      : store_(store), catalog_(std::move(catalog)), budget_(budget) {}

  const compose::RuleCatalog& catalog() const { return catalog_; }
  const compose::GameplayBudget& budget() const { return budget_; }

  Result<SensorDescriptor> register_sensor(const std::string& account_id, const std::string& kind,
                                           SensorOrigin origin, TimestampMs now) {
    if (!catalog_.find(kind))
      return make_error(ErrorCode::UnknownKind, "unknown sensor kind: " + kind);
    if (!store_.account_exists(account_id))
      return make_error(ErrorCode::UnknownAccount, "unknown account: " + account_id);
    return store_.register_sensor(account_id, kind, origin, now);
  }

  // Submits one batch for the sensor authenticated by `api_key`. Row failures
  // are inline statuses; only auth problems fail the whole call.
  Result<std::vector<SubmitResult>> submit_batch(const std::string& api_key,
                                                 const std::vector<SensorReading>& rows,
                                                 TimestampMs now) {
    auto principal = store_.resolve_token(api_key);
    if (!principal || principal->role != ledger::Role::Sensor)
      return Error{make_error(ErrorCode::AuthFailed, "api key does not identify a sensor")};
    const std::string& sensor_id = principal->id;
    const std::string& account_id = principal->account_id;
    for (const auto& r : rows) {
      if (!r.sensor_id.empty() && r.sensor_id != sensor_id)
        return Error{make_error(ErrorCode::AuthFailed,
                                "reading sensor_id does not match the authenticated sensor")};
    }

    return store_.with_account(
        account_id, [&](ledger::AccountContext& ctx) -> Result<std::vector<SubmitResult>> {
          ledger::AccountState scratch = ctx.scratch();
          std::vector<std::string> lines;
          std::vector<SubmitResult> results;
          results.reserve(rows.size());
          for (const auto& reading : rows)
            results.push_back(decide_row(scratch, lines, sensor_id, reading, now));
          if (auto st = ctx.commit(std::move(scratch), std::move(lines)); !st)
            return st.error();
          return results;
        });
  }

  Result<SubmitResult> submit_reading(const std::string& api_key, const SensorReading& reading,
                                      TimestampMs now) {
    auto batch = submit_batch(api_key, {reading}, now);
    if (!batch) return batch.error();
    return batch.value().front();
  }

 private:
  // Decides one row against the scratch fold and, when accepted, appends the
  // READING_CREDITED event to it. All floors and caps happen here so the
  // event carries the final credited amount.
  SubmitResult decide_row(ledger::AccountState& scratch, std::vector<std::string>& lines,
                          const std::string& sensor_id, const SensorReading& reading,
                          TimestampMs now) {
    if (auto st = validate_reading(reading, now); !st)
      return {SubmitStatus::ValidationFailed, 0, "", st.error().message};

    auto sensor_it = scratch.sensors.find(sensor_id);
    if (sensor_it == scratch.sensors.end())
      return {SubmitStatus::ValidationFailed, 0, "", "sensor not registered"};
    const SensorDescriptor& sensor = sensor_it->second;

    std::string dk = ledger::AccountState::dedup_key(sensor_id, reading.reading_id);
    if (auto dup = scratch.dedup.find(dk); dup != scratch.dedup.end())
      return {SubmitStatus::Duplicate, dup->second.credited_mpt,
              twin::dimension_name(dup->second.dimension), ""};

    if (reading.observed_at < scratch.cursor - kSkewWindowMs)
      return {SubmitStatus::StaleReading, 0, "",
              "observed_at precedes the account fold by more than the skew window"};
    TimestampMs occurred_at =
        reading.observed_at < scratch.cursor ? scratch.cursor : reading.observed_at;

    const compose::ConversionRule* rule = catalog_.find(sensor.kind);
    if (!rule)
      return {SubmitStatus::ValidationFailed, 0, "", "no conversion rule for kind " + sensor.kind};

    std::string day = utc_date(reading.observed_at);
    std::int64_t delta;
    if (sensor.kind == ledger::kGameplaySessionKind) {
      double played = 0.0;
      if (auto it = scratch.day_play_minutes.find(day); it != scratch.day_play_minutes.end())
        played = it->second;
      delta = compose::gameplay_session_credit(reading.quantity, played, budget_);
    } else {
      delta = compose::convert_reading(reading.quantity, *rule).delta_mpt_uncapped;
    }

    compose::DailyCapCounter counter{sensor_id, day, 0};
    if (auto it = scratch.day_credit_mpt.find(ledger::AccountState::day_key(sensor_id, day));
        it != scratch.day_credit_mpt.end())
      counter.credited_so_far_mpt = it->second;
    auto capped = compose::apply_daily_cap(counter, delta, *rule);

    ledger::LedgerEvent ev;
    ev.seq = scratch.last_seq + 1;
    ev.occurred_at = occurred_at;
    ev.kind = ledger::EventKind::ReadingCredited;
    ev.payload = {{"sensor_id", sensor_id},
                  {"reading_id", reading.reading_id},
                  {"kind", sensor.kind},
                  {"dimension", twin::dimension_name(rule->dimension)},
                  {"credited_mpt", capped.credited_mpt},
                  {"quantity", reading.quantity},
                  {"observed_at", format_iso8601(reading.observed_at)}};
    if (auto st = ledger::apply_account_event(scratch, ev, store_.twin_config()); !st) {
      // balance ceiling is the one decision-time failure left to the fold
      return {SubmitStatus::ValidationFailed, 0, "", st.error().message};
    }
    lines.push_back(ev.to_line());
    return {SubmitStatus::Accepted, capped.credited_mpt, twin::dimension_name(rule->dimension),
            ""};
  }

  ledger::Store& store_;
  compose::RuleCatalog catalog_;
  compose::GameplayBudget budget_;
};

// In-process submit callback for run_replay_adapter.
inline auto make_gateway_submitter(Gateway& gw, std::string api_key, std::string sensor_id,
                                   TimestampMs now) {
  return [&gw, api_key = std::move(api_key), sensor_id = std::move(sensor_id),
          now](const SensorReading& row) -> Result<SubmitResult> {
    SensorReading r = row;
    r.sensor_id = sensor_id;
    TimestampMs at = now > row.observed_at ? now : row.observed_at;
    return gw.submit_reading(api_key, r, at);
  };
}

}  // namespace lsg::ingest
