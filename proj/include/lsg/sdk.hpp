#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include <httplib.h>
#include <json.hpp>

#include "lsg/clock.hpp"
#include "lsg/error.hpp"
#include "lsg/ids.hpp"
#include "lsg/twin.hpp"

namespace lsg::sdk {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct SdkConfig {
  std::string server_base_url;  // e.g. "http://127.0.0.1:8080"
  std::string game_token;
  std::string game_id;             // the game's own id; keys session dedup hashes
  std::string account_id;          // empty: play unlinked
  std::string session_sensor_key;  // sensor token for gameplay telemetry, optional
  std::int64_t request_timeout_ms = 100;
  std::int64_t snapshot_ttl_ms = 5000;
  double offline_default_score = 0.5;
  httplib::Headers extra_headers;  // applied to every request (e.g. test clock)
};

enum class Freshness { Live, Cached, OfflineDefault };

inline const char* freshness_name(Freshness f) {
  switch (f) {
    case Freshness::Live:           return "LIVE";
    case Freshness::Cached:         return "CACHED";
    case Freshness::OfflineDefault: return "OFFLINE_DEFAULT";
  }
  return "?";
}

struct SdkSnapshot {
  std::array<double, twin::kDimensionCount> scores{};
  Freshness freshness = Freshness::OfflineDefault;
  TimestampMs fetched_at = 0;

  double score(twin::Dimension d) const { return scores[static_cast<int>(d)]; }
};

enum class SpendStatus { Granted, Insufficient, DeclinedOffline, Failed };

struct SpendOutcome {
  SpendStatus status = SpendStatus::DeclinedOffline;
  std::string grant_token;  // present iff Granted
  std::string error_code;   // present iff Failed (e.g. UNKNOWN_MECHANIC)
};

enum class ReportStatus { Submitted, Duplicate, Dropped, Invalid };

// ---------------------------------------------------------------------------
// Session
// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// Game-side connector internals. Degraded modes are values: an unlinked or
// unreachable server yields neutral defaults and declined spends, never
// exceptions, and no call holds the caller past the request timeout budget.
class SessionImpl {
 public:
  explicit SessionImpl(SdkConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.request_timeout_ms <= 0) cfg_.request_timeout_ms = 100;
    if (cfg_.snapshot_ttl_ms < 0) cfg_.snapshot_ttl_ms = 0;
    if (!(cfg_.offline_default_score >= 0.0) || !(cfg_.offline_default_score < 1.0))
      cfg_.offline_default_score = 0.5;
  }

  bool linked() const { return linked_; }
  const SdkConfig& config() const { return cfg_; }

  // Probes the server within the timeout budget. Absent account or
  // unreachable server leaves the session UNLINKED; play continues offline.
  void connect() {
    if (cfg_.account_id.empty()) {
      linked_ = false;
      return;
    }
    auto deadline = steady_now() + cfg_.request_timeout_ms;
    auto client = make_client(deadline);
    auto res = client->Get("/v1/healthz", cfg_.extra_headers);
    linked_ = res && res->status == 200;
  }

  SdkSnapshot current_snapshot() {
    if (!linked_) return offline_snapshot();

    {
      std::lock_guard lock(cache_mu_);
      if (cache_ && steady_now() - cache_age_anchor_ < cfg_.snapshot_ttl_ms) return *cache_;
    }

    auto fetched = fetch_snapshot();
    if (fetched) {
      std::lock_guard lock(cache_mu_);
      cache_ = std::make_shared<SdkSnapshot>(*fetched);
      cache_age_anchor_ = steady_now();
      return *cache_;
    }

    std::lock_guard lock(cache_mu_);
    if (cache_) {
      SdkSnapshot stale = *cache_;
      stale.freshness = Freshness::Cached;
      return stale;
    }
    return offline_snapshot();
  }

  // Passive mapping: the current score for the binding's dimension pushed
  // through the linear modifier. Offline this is the range midpoint when the
  // default score is 0.5, which keeps unlinked play at baseline.
  Result<double> passive_modifier(const twin::MechanicBinding& binding) {
    if (binding.mode != twin::MechanicMode::Passive)
      return make_error(ErrorCode::NotPassive, "passive_modifier requires a PASSIVE binding");
    SdkSnapshot snap = current_snapshot();
    return twin::mechanic_modifier(snap.score(binding.dimension), binding);
  }

  // One logical spend: a fresh idempotency key, retried transparently on
  // transport failure. The ledger-side key makes the retries safe; the
  // deadline keeps the whole call inside one timeout budget.
  SpendOutcome spend(const std::string& mechanic_id) {
    if (!linked_) return {SpendStatus::DeclinedOffline, "", ""};
    std::string key = ids_.id('k');
    nlohmann::json body = {{"account_id", cfg_.account_id},
                           {"mechanic_id", mechanic_id},
                           {"idempotency_key", key}};
    std::string payload = body.dump();

    auto deadline = steady_now() + cfg_.request_timeout_ms;
    for (int attempt = 0; attempt < 3 && steady_now() < deadline; ++attempt) {
      auto client = make_client(deadline);
      httplib::Headers h = cfg_.extra_headers;
      h.emplace("Authorization", "Bearer " + cfg_.game_token);
      auto res = client->Post("/v1/redemptions", h, payload, "application/json");
      if (!res) continue;                   // transport failure: same key, try again
      if (res->status >= 500) continue;     // server hiccup: same key, try again
      if (res->status == 200) {
        auto j = nlohmann::json::parse(res->body, nullptr, false);
        if (j.is_discarded()) continue;
        if (j.value("result", "") == "GRANTED")
          return {SpendStatus::Granted, j.value("grant_token", ""), ""};
        return {SpendStatus::Insufficient, "", ""};
      }
      auto j = nlohmann::json::parse(res->body, nullptr, false);
      std::string code = j.is_discarded() ? "HTTP_" + std::to_string(res->status)
                                          : j.value("code", "UNKNOWN");
      return {SpendStatus::Failed, "", code};
    }
    return {SpendStatus::DeclinedOffline, "", ""};
  }

  // Gameplay-duration telemetry. Deduplicated by a deterministic reading id,
  // so crash resubmits of the same session credit once. Telemetry must never
  // harm gameplay: failures degrade to a silent drop.
  ReportStatus report_session(TimestampMs started_at, TimestampMs ended_at) {
    if (ended_at < started_at) return ReportStatus::Invalid;
    if (!linked_ || cfg_.session_sensor_key.empty()) return ReportStatus::Dropped;

    double minutes = static_cast<double>(ended_at - started_at) / kMsPerMinute;
    char rid[17];
    std::snprintf(rid, sizeof(rid), "%016llx",
                  static_cast<unsigned long long>(
                      fnv1a64(cfg_.game_id + ":" + std::to_string(started_at))));
    nlohmann::json body = {{"readings",
                            {{{"reading_id", std::string(rid)},
                              {"quantity", minutes},
                              {"observed_at", format_iso8601(ended_at)}}}}};
    std::string payload = body.dump();

    auto deadline = steady_now() + cfg_.request_timeout_ms;
    for (int attempt = 0; attempt < 3 && steady_now() < deadline; ++attempt) {
      auto client = make_client(deadline);
      httplib::Headers h = cfg_.extra_headers;
      h.emplace("Authorization", "Bearer " + cfg_.session_sensor_key);
      auto res = client->Post("/v1/readings", h, payload, "application/json");
      if (!res) continue;
      if (res->status != 200) return ReportStatus::Dropped;
      auto j = nlohmann::json::parse(res->body, nullptr, false);
      if (j.is_discarded() || j["results"].empty()) return ReportStatus::Dropped;
      std::string status = j["results"][0].value("status", "");
      if (status == "ACCEPTED") return ReportStatus::Submitted;
      if (status == "DUPLICATE") return ReportStatus::Duplicate;
      return ReportStatus::Dropped;
    }
    return ReportStatus::Dropped;
  }

 private:
  static std::int64_t steady_now() {
    using namespace std::chrono;
    return duration_cast<milliseconds>(steady_clock::now().time_since_epoch()).count();
  }

  SdkSnapshot offline_snapshot() const {
    SdkSnapshot s;
    s.scores.fill(cfg_.offline_default_score);
    s.freshness = Freshness::OfflineDefault;
    s.fetched_at = wall_clock_now();
    return s;
  }

  std::unique_ptr<httplib::Client> make_client(std::int64_t deadline_steady_ms) const {
    auto client = std::make_unique<httplib::Client>(cfg_.server_base_url);
    std::int64_t remaining = deadline_steady_ms - steady_now();
    if (remaining < 1) remaining = 1;
    auto budget = std::chrono::milliseconds(remaining);
    client->set_connection_timeout(budget);
    client->set_read_timeout(budget);
    client->set_write_timeout(budget);
    return client;
  }

  std::optional<SdkSnapshot> fetch_snapshot() {
    auto deadline = steady_now() + cfg_.request_timeout_ms;
    auto client = make_client(deadline);
    httplib::Headers h = cfg_.extra_headers;
    h.emplace("Authorization", "Bearer " + cfg_.game_token);
    auto res = client->Get("/v1/profiles/" + cfg_.account_id + "/snapshot", h);
    if (!res || res->status != 200) return std::nullopt;
    auto j = nlohmann::json::parse(res->body, nullptr, false);
    if (j.is_discarded() || !j.contains("dimensions")) return std::nullopt;
    SdkSnapshot snap;
    snap.freshness = Freshness::Live;
    snap.fetched_at = wall_clock_now();
    for (twin::Dimension d : twin::kAllDimensions) {
      const char* name = twin::dimension_name(d);
      if (!j["dimensions"].contains(name)) return std::nullopt;
      snap.scores[static_cast<int>(d)] = j["dimensions"][name].value("score", 0.0);
    }
    return snap;
  }

  SdkConfig cfg_;
  bool linked_ = false;
  IdGenerator ids_;

  std::mutex cache_mu_;
  std::shared_ptr<SdkSnapshot> cache_;
  std::int64_t cache_age_anchor_ = 0;
};

// Shared handle: cheap to copy and safe to call from the main loop and
// worker threads at once.
class Session {
 public:
  explicit Session(SdkConfig cfg) : impl_(std::make_shared<SessionImpl>(std::move(cfg))) {}

  bool linked() const { return impl_->linked(); }
  const SdkConfig& config() const { return impl_->config(); }
  void connect() { impl_->connect(); }
  SdkSnapshot current_snapshot() { return impl_->current_snapshot(); }
  Result<double> passive_modifier(const twin::MechanicBinding& b) {
    return impl_->passive_modifier(b);
  }
  SpendOutcome spend(const std::string& mechanic_id) { return impl_->spend(mechanic_id); }
  ReportStatus report_session(TimestampMs started_at, TimestampMs ended_at) {
    return impl_->report_session(started_at, ended_at);
  }

 private:
  std::shared_ptr<SessionImpl> impl_;
};

inline Session connect(SdkConfig cfg) {
  Session s(std::move(cfg));
  s.connect();
  return s;
}

}  // namespace lsg::sdk
