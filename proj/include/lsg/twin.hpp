#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>

#include "lsg/clock.hpp"
#include "lsg/error.hpp"

namespace lsg::twin {

// ---------------------------------------------------------------------------
// Dimensions
// ---------------------------------------------------------------------------

enum class Dimension : int {
  Physical = 0,
  Cognitive = 1,
  Affective = 2,
  Social = 3,
  Lifestyle = 4,
};

constexpr int kDimensionCount = 5;

constexpr std::array<Dimension, kDimensionCount> kAllDimensions = {
    Dimension::Physical, Dimension::Cognitive, Dimension::Affective,
    Dimension::Social, Dimension::Lifestyle};

inline const char* dimension_name(Dimension d) {
  switch (d) {
    case Dimension::Physical:  return "PHYSICAL";
    case Dimension::Cognitive: return "COGNITIVE";
    case Dimension::Affective: return "AFFECTIVE";
    case Dimension::Social:    return "SOCIAL";
    case Dimension::Lifestyle: return "LIFESTYLE";
  }
  return "?";
}

inline std::optional<Dimension> parse_dimension(const std::string& s) {
  for (Dimension d : kAllDimensions)
    if (s == dimension_name(d)) return d;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Millipoints
// ---------------------------------------------------------------------------

// 1/1000 of a display point. All ledger arithmetic is integer millipoints;
// floats appear only inside the decay exponent and are floored immediately.
using Millipoints = std::int64_t;

// Balances above this are rejected as OVERFLOW.
constexpr Millipoints kMaxMillipoints = std::int64_t{1} << 62;

// ---------------------------------------------------------------------------
// Decay
// ---------------------------------------------------------------------------

// Half-life configs are quantized to whole milliseconds so the decay exponent
// dt/half_life is an exact rational and every runtime reproduces the same
// integers.
inline std::int64_t half_life_ms_from_hours(double hours) {
  std::int64_t ms = static_cast<std::int64_t>(std::llround(hours * 3600000.0));
  return ms < 1 ? 1 : ms;
}

// floor(base * 2^(-dt/half_life)), evaluated as fixed-point:
//   k  = dt / hl  (whole half-lives)
//   f  = (dt % hl) / hl
//   factor = floor(2^-f * 2^63)      -- extended-precision exp2, then floored
//   result = (base * factor) >> (63 + k)
// One flooring step total, so the result is within 1 mpt of the exact real
// value and lands exactly on base/2 whole-half-life boundaries.
inline Millipoints decay(Millipoints base, std::int64_t dt_ms, std::int64_t half_life_ms) {
  if (base <= 0 || dt_ms <= 0) return base < 0 ? 0 : base;
  std::int64_t k = dt_ms / half_life_ms;
  std::int64_t rem = dt_ms % half_life_ms;
  if (k + 63 >= 126) return 0;  // base < 2^63 shifted out entirely
  long double f = static_cast<long double>(rem) / static_cast<long double>(half_life_ms);
  auto factor = static_cast<std::uint64_t>(
      std::floor(std::exp2(-f) * 9223372036854775808.0L));  // 2^63
  unsigned __int128 product = static_cast<unsigned __int128>(base) * factor;
  return static_cast<Millipoints>(product >> (63 + k));
}

// ---------------------------------------------------------------------------
// DimensionBalance
// ---------------------------------------------------------------------------

// A decaying point store represented as (amount, timestamp). Immutable value;
// every mutation returns a fresh balance with base_time advanced.
struct DimensionBalance {
  Millipoints base_mpt = 0;
  TimestampMs base_time = 0;
  double half_life_hours = 72.0;

  std::int64_t half_life_ms() const { return half_life_ms_from_hours(half_life_hours); }
};

// Reads up to 300 s behind base_time are clamped (sensor clock drift);
// anything older is TIME_BEFORE_BASE.
inline Result<TimestampMs> clamp_to_base(const DimensionBalance& b, TimestampMs at) {
  if (at >= b.base_time) return at;
  if (b.base_time - at <= kSkewWindowMs) return b.base_time;
  return make_error(ErrorCode::TimeBeforeBase,
                    "timestamp precedes balance base_time by more than the skew window");
}

inline Result<Millipoints> effective_balance(const DimensionBalance& b, TimestampMs at) {
  auto t = clamp_to_base(b, at);
  if (!t) return t.error();
  return decay(b.base_mpt, t.value() - b.base_time, b.half_life_ms());
}

// Applies a signed delta at `at`. The prior value decays first; the result
// floors at zero (no debt) and rejects balances beyond 2^62.
inline Result<DimensionBalance> credit(const DimensionBalance& b, std::int64_t delta_mpt,
                                       TimestampMs at) {
  auto t = clamp_to_base(b, at);
  if (!t) return t.error();
  Millipoints eff = decay(b.base_mpt, t.value() - b.base_time, b.half_life_ms());
  __int128 next = static_cast<__int128>(eff) + delta_mpt;
  if (next < 0) next = 0;
  if (next > kMaxMillipoints)
    return make_error(ErrorCode::Overflow, "credit would exceed the balance ceiling");
  return DimensionBalance{static_cast<Millipoints>(next), t.value(), b.half_life_hours};
}

inline Result<DimensionBalance> debit(const DimensionBalance& b, Millipoints amount_mpt,
                                      TimestampMs at) {
  if (amount_mpt <= 0)
    return make_error(ErrorCode::ValidationFailed, "debit amount must be positive");
  auto t = clamp_to_base(b, at);
  if (!t) return t.error();
  Millipoints eff = decay(b.base_mpt, t.value() - b.base_time, b.half_life_ms());
  if (eff < amount_mpt)
    return make_error(ErrorCode::InsufficientPoints, "insufficient points", eff);
  return DimensionBalance{eff - amount_mpt, t.value(), b.half_life_hours};
}

// ---------------------------------------------------------------------------
// Attribute scores
// ---------------------------------------------------------------------------

constexpr Millipoints kDefaultSoftCapMpt = 100000;

// Rational saturation e/(e+cap): strictly monotone, 0 at empty, < 1 always.
inline double attribute_score(Millipoints effective_mpt, Millipoints soft_cap_mpt) {
  if (effective_mpt <= 0) return 0.0;
  long double e = static_cast<long double>(effective_mpt);
  long double s = e / (e + static_cast<long double>(soft_cap_mpt));
  double out = static_cast<double>(s);
  double ceiling = std::nextafter(1.0, 0.0);
  return out > ceiling ? ceiling : out;
}

// ---------------------------------------------------------------------------
// Mechanic bindings
// ---------------------------------------------------------------------------

enum class MechanicMode { Passive, OnDemand };

inline const char* mechanic_mode_name(MechanicMode m) {
  return m == MechanicMode::Passive ? "PASSIVE" : "ON_DEMAND";
}

inline std::optional<MechanicMode> parse_mechanic_mode(const std::string& s) {
  if (s == "PASSIVE") return MechanicMode::Passive;
  if (s == "ON_DEMAND") return MechanicMode::OnDemand;
  return std::nullopt;
}

struct MechanicBinding {
  std::string mechanic_id;
  std::string game_id;
  Dimension dimension = Dimension::Physical;
  MechanicMode mode = MechanicMode::Passive;
  Millipoints cost_mpt = 0;      // ON_DEMAND only, > 0
  double modifier_lo = 0.0;      // PASSIVE only, lo <= hi
  double modifier_hi = 0.0;
};

inline Status validate_binding(const MechanicBinding& b) {
  if (b.mechanic_id.empty() || b.mechanic_id.size() > 64)
    return make_error(ErrorCode::ValidationFailed, "mechanic_id must be 1-64 chars");
  if (b.mode == MechanicMode::OnDemand) {
    if (b.cost_mpt <= 0)
      return make_error(ErrorCode::ValidationFailed, "ON_DEMAND binding requires cost_mpt > 0");
    if (b.modifier_lo != 0.0 || b.modifier_hi != 0.0)
      return make_error(ErrorCode::ValidationFailed, "ON_DEMAND binding has no modifier range");
  } else {
    if (b.cost_mpt != 0)
      return make_error(ErrorCode::ValidationFailed, "PASSIVE binding has no cost");
    if (!std::isfinite(b.modifier_lo) || !std::isfinite(b.modifier_hi) ||
        b.modifier_lo > b.modifier_hi)
      return make_error(ErrorCode::ValidationFailed, "modifier range requires lo <= hi");
  }
  return Ok{};
}

// Linear map of a score onto [lo, hi). Scores live in [0, 1).
inline Result<double> mechanic_modifier(double score, const MechanicBinding& binding) {
  if (binding.mode != MechanicMode::Passive)
    return make_error(ErrorCode::NotPassive, "mechanic_modifier requires a PASSIVE binding");
  return binding.modifier_lo + (binding.modifier_hi - binding.modifier_lo) * score;
}

}  // namespace lsg::twin
