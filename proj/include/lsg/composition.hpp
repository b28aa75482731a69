#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include <json.hpp>

#include "lsg/clock.hpp"
#include "lsg/error.hpp"
#include "lsg/twin.hpp"

namespace lsg::compose {

using twin::Dimension;
using twin::Millipoints;

// ---------------------------------------------------------------------------
// Conversion rules
// ---------------------------------------------------------------------------

// One rule per sensor kind. rate may be negative (penalty kinds such as
// screen time); it is never zero. The cap bounds positive accrual per
// (sensor, UTC day).
struct ConversionRule {
  std::string kind;
  Dimension dimension = Dimension::Physical;
  std::int64_t rate_mpt_per_unit = 0;
  Millipoints daily_cap_mpt = 0;
  std::string unit_name;
};

inline Status validate_rule(const ConversionRule& r) {
  if (r.kind.empty())
    return make_error(ErrorCode::ValidationFailed, "rule kind must be non-empty");
  if (r.rate_mpt_per_unit == 0)
    return make_error(ErrorCode::ValidationFailed, "rule '" + r.kind + "': rate must be non-zero");
  if (r.daily_cap_mpt <= 0)
    return make_error(ErrorCode::ValidationFailed, "rule '" + r.kind + "': daily cap must be > 0");
  return Ok{};
}

class RuleCatalog {
 public:
  RuleCatalog() = default;

  Status add(ConversionRule rule) {
    if (auto st = validate_rule(rule); !st) return st.error();
    if (rules_.count(rule.kind))
      return make_error(ErrorCode::ValidationFailed, "duplicate rule kind '" + rule.kind + "'");
    rules_.emplace(rule.kind, std::move(rule));
    return Ok{};
  }

  const ConversionRule* find(const std::string& kind) const {
    auto it = rules_.find(kind);
    return it == rules_.end() ? nullptr : &it->second;
  }

  bool empty() const { return rules_.empty(); }
  std::size_t size() const { return rules_.size(); }
  const std::map<std::string, ConversionRule>& rules() const { return rules_; }

  // Catalog file: JSON object kind -> {dimension, rate_mpt_per_unit,
  // daily_cap_mpt, unit_name}. Any invalid rule fails the whole load.
  static Result<RuleCatalog> from_json(const nlohmann::json& j) {
    if (!j.is_object())
      return make_error(ErrorCode::ValidationFailed, "rule catalog must be a JSON object");
    RuleCatalog cat;
    for (auto it = j.begin(); it != j.end(); ++it) {
      const auto& v = it.value();
      if (!v.is_object())
        return make_error(ErrorCode::ValidationFailed,
                          "rule '" + it.key() + "' must be an object");
      ConversionRule r;
      r.kind = it.key();
      if (!v.contains("dimension") || !v["dimension"].is_string())
        return make_error(ErrorCode::ValidationFailed,
                          "rule '" + it.key() + "': missing dimension");
      auto dim = twin::parse_dimension(v["dimension"].get<std::string>());
      if (!dim)
        return make_error(ErrorCode::ValidationFailed,
                          "rule '" + it.key() + "': unknown dimension");
      r.dimension = *dim;
      if (!v.contains("rate_mpt_per_unit") || !v["rate_mpt_per_unit"].is_number_integer())
        return make_error(ErrorCode::ValidationFailed,
                          "rule '" + it.key() + "': missing integer rate_mpt_per_unit");
      r.rate_mpt_per_unit = v["rate_mpt_per_unit"].get<std::int64_t>();
      if (!v.contains("daily_cap_mpt") || !v["daily_cap_mpt"].is_number_integer())
        return make_error(ErrorCode::ValidationFailed,
                          "rule '" + it.key() + "': missing integer daily_cap_mpt");
      r.daily_cap_mpt = v["daily_cap_mpt"].get<std::int64_t>();
      r.unit_name = v.value("unit_name", std::string{});
      if (auto st = cat.add(std::move(r)); !st) return st.error();
    }
    return cat;
  }

  static Result<RuleCatalog> from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
      return make_error(ErrorCode::IoError, "cannot open rule catalog: " + path);
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded())
      return make_error(ErrorCode::BadJson, "rule catalog is not valid JSON: " + path);
    return from_json(j);
  }

  // The shipped defaults. Rates are config, not constants the code relies on.
  static RuleCatalog built_in_defaults() {
    RuleCatalog cat;
    cat.add({"pedometer", Dimension::Physical, 10, 100000, "steps"});
    cat.add({"focus_eeg", Dimension::Cognitive, 100, 50000, "minutes"});
    cat.add({"social_activity", Dimension::Social, 500, 25000, "interactions"});
    cat.add({"screen_time", Dimension::Lifestyle, -20, 100000, "minutes_over_threshold"});
    cat.add({"gameplay_session", Dimension::Lifestyle, 50, 6000, "minutes"});
    return cat;
  }

 private:
  std::map<std::string, ConversionRule> rules_;
};

// ---------------------------------------------------------------------------
// Conversion
// ---------------------------------------------------------------------------

struct ConvertedReading {
  Dimension dimension;
  std::int64_t delta_mpt_uncapped;
};

// delta = floor(quantity * rate). quantity is validated non-negative and
// finite upstream, so the only sign source is the rule's rate.
inline ConvertedReading convert_reading(double quantity, const ConversionRule& rule) {
  long double d = static_cast<long double>(quantity) *
                  static_cast<long double>(rule.rate_mpt_per_unit);
  if (d > static_cast<long double>(twin::kMaxMillipoints))
    d = static_cast<long double>(twin::kMaxMillipoints);
  if (d < -static_cast<long double>(twin::kMaxMillipoints))
    d = -static_cast<long double>(twin::kMaxMillipoints);
  return {rule.dimension, static_cast<std::int64_t>(std::floor(d))};
}

// ---------------------------------------------------------------------------
// Daily caps
// ---------------------------------------------------------------------------

// Per-(sensor, UTC day) accrual counter. Negative credits lower the counter,
// restoring headroom; the counter never exceeds the cap.
struct DailyCapCounter {
  std::string sensor_id;
  std::string utc_date;
  std::int64_t credited_so_far_mpt = 0;
};

struct CapApplication {
  std::int64_t credited_mpt;
  DailyCapCounter counter;
};

inline CapApplication apply_daily_cap(const DailyCapCounter& counter,
                                      std::int64_t delta_mpt_uncapped,
                                      const ConversionRule& rule) {
  std::int64_t headroom = rule.daily_cap_mpt - counter.credited_so_far_mpt;
  std::int64_t credited = delta_mpt_uncapped < headroom ? delta_mpt_uncapped : headroom;
  DailyCapCounter next = counter;
  next.credited_so_far_mpt += credited;
  return {credited, next};
}

// ---------------------------------------------------------------------------
// Gameplay budget
// ---------------------------------------------------------------------------

// One budget per account across all games. Minutes beyond the budget earn
// zero by default; punitive mode charges them at the credit rate instead.
struct GameplayBudget {
  double daily_budget_minutes = 120.0;
  std::int64_t credit_rate_mpt_per_minute = 50;
  bool punitive_over_budget = false;
};

inline std::int64_t gameplay_session_credit(double session_minutes,
                                            double minutes_already_today,
                                            const GameplayBudget& budget) {
  if (!(session_minutes >= 0)) session_minutes = 0;
  if (!(minutes_already_today >= 0)) minutes_already_today = 0;
  double headroom = budget.daily_budget_minutes - minutes_already_today;
  if (headroom < 0) headroom = 0;
  double creditable = session_minutes < headroom ? session_minutes : headroom;
  auto credit = static_cast<std::int64_t>(
      std::floor(static_cast<long double>(creditable) *
                 static_cast<long double>(budget.credit_rate_mpt_per_minute)));
  if (budget.punitive_over_budget) {
    double over = session_minutes - creditable;
    credit -= static_cast<std::int64_t>(
        std::floor(static_cast<long double>(over) *
                   static_cast<long double>(budget.credit_rate_mpt_per_minute)));
  }
  return credit;
}

}  // namespace lsg::compose
