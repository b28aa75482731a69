#pragma once

#include <fcntl.h>
#include <unistd.h>

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lsg/clock.hpp"
#include "lsg/composition.hpp"
#include "lsg/error.hpp"
#include "lsg/events.hpp"
#include "lsg/ids.hpp"
#include "lsg/ingestion.hpp"
#include "lsg/twin.hpp"

namespace lsg::ledger {

using twin::Dimension;
using twin::Millipoints;

// Sensor kind whose readings draw on the per-account gameplay budget.
inline constexpr const char* kGameplaySessionKind = "gameplay_session";

// ---------------------------------------------------------------------------
// Twin configuration
// ---------------------------------------------------------------------------

struct TwinConfig {
  std::array<double, twin::kDimensionCount> half_life_hours{72.0, 72.0, 72.0, 72.0, 72.0};
  std::array<Millipoints, twin::kDimensionCount> soft_cap_mpt{100000, 100000, 100000,
                                                              100000, 100000};

  double half_life(Dimension d) const { return half_life_hours[static_cast<int>(d)]; }
  Millipoints soft_cap(Dimension d) const { return soft_cap_mpt[static_cast<int>(d)]; }
};

// ---------------------------------------------------------------------------
// Fold state
// ---------------------------------------------------------------------------

struct DedupEntry {
  std::int64_t credited_mpt = 0;
  Dimension dimension = Dimension::Physical;
};

struct AccountState {
  std::string account_id;
  std::string owner_token;
  std::array<twin::DimensionBalance, twin::kDimensionCount> balances;
  std::map<std::string, ingest::SensorDescriptor> sensors;  // sensor_id ->
  std::map<std::string, DedupEntry> dedup;                  // sensor_id \n reading_id ->
  std::map<std::string, std::int64_t> day_credit_mpt;       // sensor_id \n utc_date ->
  std::map<std::string, double> day_play_minutes;           // utc_date ->
  std::int64_t last_seq = 0;
  TimestampMs cursor = 0;  // occurred_at of the last folded event

  static std::string dedup_key(const std::string& sensor_id, const std::string& reading_id) {
    return sensor_id + '\n' + reading_id;
  }
  static std::string day_key(const std::string& sensor_id, const std::string& date) {
    return sensor_id + '\n' + date;
  }
};

enum class RedemptionResult { Granted, Insufficient };

inline const char* redemption_result_name(RedemptionResult r) {
  return r == RedemptionResult::Granted ? "GRANTED" : "INSUFFICIENT";
}

struct RedemptionRecord {
  std::string idempotency_key;
  std::string game_id;
  std::string account_id;
  std::string mechanic_id;
  Millipoints amount_mpt = 0;
  RedemptionResult result = RedemptionResult::Insufficient;
  std::string grant_token;  // present iff GRANTED
  TimestampMs decided_at = 0;
  Millipoints effective_mpt = 0;  // balance at decision time, for shortfall UX

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["idempotency_key"] = idempotency_key;
    j["game_id"] = game_id;
    j["account_id"] = account_id;
    j["mechanic_id"] = mechanic_id;
    j["amount_mpt"] = amount_mpt;
    j["result"] = redemption_result_name(result);
    if (result == RedemptionResult::Granted) j["grant_token"] = grant_token;
    j["decided_at"] = format_iso8601(decided_at);
    j["effective_mpt"] = effective_mpt;
    return j;
  }
};

struct GameState {
  std::string game_id;
  std::string game_token;
  std::map<std::string, twin::MechanicBinding> mechanics;     // mechanic_id ->
  std::map<std::string, RedemptionRecord> redemptions;        // idempotency_key ->
  std::int64_t last_seq = 0;
  TimestampMs cursor = 0;
};

// ---------------------------------------------------------------------------
// Fold
// ---------------------------------------------------------------------------
// The single state-update definition: the live path and rebuild both run
// these. All checks happen before any mutation, so a failed apply leaves the
// state untouched.

inline Status apply_account_event(AccountState& s, const LedgerEvent& e, const TwinConfig& cfg) {
  if (e.seq != s.last_seq + 1)
    return make_error(ErrorCode::SequenceConflict,
                      "expected seq " + std::to_string(s.last_seq + 1) + ", got " +
                          std::to_string(e.seq),
                      s.last_seq + 1);
  if (s.last_seq > 0 && e.occurred_at < s.cursor)
    return make_error(ErrorCode::InvalidTransition, "occurred_at regressed at seq " +
                                                        std::to_string(e.seq));
  const auto& p = e.payload;
  auto str = [&](const char* key) -> std::optional<std::string> {
    if (!p.contains(key) || !p[key].is_string()) return std::nullopt;
    return p[key].get<std::string>();
  };

  switch (e.kind) {
    case EventKind::AccountCreated: {
      if (s.last_seq != 0)
        return make_error(ErrorCode::InvalidTransition, "ACCOUNT_CREATED must be the first event");
      auto id = str("account_id");
      auto tok = str("owner_token");
      if (!id || !tok)
        return make_error(ErrorCode::InvalidTransition, "ACCOUNT_CREATED payload incomplete");
      s.account_id = *id;
      s.owner_token = *tok;
      for (Dimension dim : twin::kAllDimensions)
        s.balances[static_cast<int>(dim)].half_life_hours = cfg.half_life(dim);
      break;
    }
    case EventKind::SensorRegistered: {
      if (s.last_seq == 0)
        return make_error(ErrorCode::InvalidTransition, "account does not exist yet");
      auto sid = str("sensor_id");
      auto kind = str("kind");
      auto origin_s = str("origin");
      auto key = str("api_key");
      if (!sid || !kind || !origin_s || !key)
        return make_error(ErrorCode::InvalidTransition, "SENSOR_REGISTERED payload incomplete");
      auto origin = ingest::parse_sensor_origin(*origin_s);
      if (!origin)
        return make_error(ErrorCode::InvalidTransition, "SENSOR_REGISTERED bad origin");
      if (s.sensors.count(*sid))
        return make_error(ErrorCode::InvalidTransition, "sensor already registered: " + *sid);
      ingest::SensorDescriptor d;
      d.sensor_id = *sid;
      d.account_id = s.account_id;
      d.kind = *kind;
      d.origin = *origin;
      d.api_key = *key;
      d.created_at = e.occurred_at;
      s.sensors.emplace(*sid, std::move(d));
      break;
    }
    case EventKind::ReadingCredited: {
      if (s.last_seq == 0)
        return make_error(ErrorCode::InvalidTransition, "account does not exist yet");
      auto sid = str("sensor_id");
      auto rid = str("reading_id");
      auto kind = str("kind");
      auto dim_s = str("dimension");
      auto observed_s = str("observed_at");
      if (!sid || !rid || !kind || !dim_s || !observed_s ||
          !p.contains("credited_mpt") || !p["credited_mpt"].is_number_integer() ||
          !p.contains("quantity") || !p["quantity"].is_number())
        return make_error(ErrorCode::InvalidTransition, "READING_CREDITED payload incomplete");
      if (!s.sensors.count(*sid))
        return make_error(ErrorCode::InvalidTransition, "reading for unregistered sensor: " + *sid);
      auto dim = twin::parse_dimension(*dim_s);
      if (!dim) return make_error(ErrorCode::InvalidTransition, "READING_CREDITED bad dimension");
      auto observed = parse_iso8601(*observed_s);
      if (!observed)
        return make_error(ErrorCode::InvalidTransition, "READING_CREDITED bad observed_at");
      std::string dk = AccountState::dedup_key(*sid, *rid);
      if (s.dedup.count(dk))
        return make_error(ErrorCode::InvalidTransition, "duplicate reading event: " + *rid);
      std::int64_t credited = p["credited_mpt"].get<std::int64_t>();
      double quantity = p["quantity"].get<double>();
      auto& bal = s.balances[static_cast<int>(*dim)];
      auto folded = twin::credit(bal, credited, e.occurred_at);
      if (!folded) return folded.error();
      // checks done; commit
      bal = folded.value();
      s.dedup.emplace(dk, DedupEntry{credited, *dim});
      s.day_credit_mpt[AccountState::day_key(*sid, utc_date(*observed))] += credited;
      if (*kind == kGameplaySessionKind) s.day_play_minutes[utc_date(*observed)] += quantity;
      break;
    }
    case EventKind::PointsRedeemed: {
      if (s.last_seq == 0)
        return make_error(ErrorCode::InvalidTransition, "account does not exist yet");
      auto dim_s = str("dimension");
      if (!dim_s || !str("game_id") || !str("idempotency_key") || !str("mechanic_id") ||
          !str("grant_token") || !p.contains("amount_mpt") ||
          !p["amount_mpt"].is_number_integer())
        return make_error(ErrorCode::InvalidTransition, "POINTS_REDEEMED payload incomplete");
      auto dim = twin::parse_dimension(*dim_s);
      if (!dim) return make_error(ErrorCode::InvalidTransition, "POINTS_REDEEMED bad dimension");
      Millipoints amount = p["amount_mpt"].get<std::int64_t>();
      auto& bal = s.balances[static_cast<int>(*dim)];
      auto folded = twin::debit(bal, amount, e.occurred_at);
      if (!folded) return folded.error();
      bal = folded.value();
      break;
    }
    default:
      return make_error(ErrorCode::InvalidTransition,
                        std::string("event kind not valid for an account log: ") +
                            event_kind_name(e.kind));
  }
  s.last_seq = e.seq;
  s.cursor = e.occurred_at;
  return Ok{};
}

inline Status apply_game_event(GameState& s, const LedgerEvent& e) {
  if (e.seq != s.last_seq + 1)
    return make_error(ErrorCode::SequenceConflict,
                      "expected seq " + std::to_string(s.last_seq + 1) + ", got " +
                          std::to_string(e.seq),
                      s.last_seq + 1);
  if (s.last_seq > 0 && e.occurred_at < s.cursor)
    return make_error(ErrorCode::InvalidTransition, "occurred_at regressed at seq " +
                                                        std::to_string(e.seq));
  const auto& p = e.payload;
  switch (e.kind) {
    case EventKind::GameRegistered: {
      if (s.last_seq != 0)
        return make_error(ErrorCode::InvalidTransition, "GAME_REGISTERED must be the first event");
      if (!p.contains("game_id") || !p.contains("game_token"))
        return make_error(ErrorCode::InvalidTransition, "GAME_REGISTERED payload incomplete");
      s.game_id = p["game_id"].get<std::string>();
      s.game_token = p["game_token"].get<std::string>();
      break;
    }
    case EventKind::MechanicRegistered: {
      if (s.last_seq == 0)
        return make_error(ErrorCode::InvalidTransition, "game does not exist yet");
      twin::MechanicBinding b;
      if (!p.contains("mechanic_id") || !p.contains("dimension") || !p.contains("mode"))
        return make_error(ErrorCode::InvalidTransition, "MECHANIC_REGISTERED payload incomplete");
      b.mechanic_id = p["mechanic_id"].get<std::string>();
      b.game_id = s.game_id;
      auto dim = twin::parse_dimension(p["dimension"].get<std::string>());
      auto mode = twin::parse_mechanic_mode(p["mode"].get<std::string>());
      if (!dim || !mode)
        return make_error(ErrorCode::InvalidTransition, "MECHANIC_REGISTERED bad enum");
      b.dimension = *dim;
      b.mode = *mode;
      b.cost_mpt = p.value("cost_mpt", std::int64_t{0});
      b.modifier_lo = p.value("modifier_lo", 0.0);
      b.modifier_hi = p.value("modifier_hi", 0.0);
      if (auto st = twin::validate_binding(b); !st)
        return make_error(ErrorCode::InvalidTransition, st.error().message);
      if (s.mechanics.count(b.mechanic_id))
        return make_error(ErrorCode::InvalidTransition,
                          "duplicate mechanic: " + b.mechanic_id);
      s.mechanics.emplace(b.mechanic_id, std::move(b));
      break;
    }
    default:
      return make_error(ErrorCode::InvalidTransition,
                        std::string("event kind not valid for a game log: ") +
                            event_kind_name(e.kind));
  }
  s.last_seq = e.seq;
  s.cursor = e.occurred_at;
  return Ok{};
}

// ---------------------------------------------------------------------------
// Snapshots
// ---------------------------------------------------------------------------

struct DimensionSnapshot {
  Millipoints effective_mpt = 0;
  double score = 0.0;
};

struct ProfileSnapshot {
  std::string account_id;
  TimestampMs as_of = 0;
  std::int64_t last_seq = 0;
  std::array<DimensionSnapshot, twin::kDimensionCount> dims;

  nlohmann::json to_json() const {
    nlohmann::json d;
    for (Dimension dim : twin::kAllDimensions) {
      const auto& ds = dims[static_cast<int>(dim)];
      d[twin::dimension_name(dim)] = {{"effective_mpt", ds.effective_mpt},
                                      {"score", ds.score}};
    }
    return nlohmann::json{{"account_id", account_id},
                          {"as_of", format_iso8601(as_of)},
                          {"last_seq", last_seq},
                          {"dimensions", d}};
  }
};

inline ProfileSnapshot snapshot_of(const AccountState& s, TimestampMs as_of,
                                   const TwinConfig& cfg) {
  ProfileSnapshot out;
  out.account_id = s.account_id;
  out.as_of = as_of;
  out.last_seq = s.last_seq;
  for (Dimension dim : twin::kAllDimensions) {
    const auto& bal = s.balances[static_cast<int>(dim)];
    auto eff = twin::effective_balance(bal, as_of);
    Millipoints e = eff ? eff.value() : 0;
    out.dims[static_cast<int>(dim)] = {e, twin::attribute_score(e, cfg.soft_cap(dim))};
  }
  return out;
}

// ---------------------------------------------------------------------------
// Store
// ---------------------------------------------------------------------------

struct StoreOptions {
  std::string data_dir;
  TwinConfig twin;
  bool fsync_on_append = true;
  std::int64_t idempotency_retention_hours = 24;
};

namespace detail {

// Appends lines to a log segment, flushing to disk before returning.
inline Status append_durable(const std::string& path, const std::vector<std::string>& lines,
                             bool do_fsync) {
  int fd = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT, 0644);
  if (fd < 0) return make_error(ErrorCode::IoError, "cannot open log segment: " + path);
  std::string buf;
  for (const auto& l : lines) {
    buf += l;
    buf += '\n';
  }
  std::size_t off = 0;
  while (off < buf.size()) {
    ssize_t n = ::write(fd, buf.data() + off, buf.size() - off);
    if (n < 0) {
      ::close(fd);
      return make_error(ErrorCode::IoError, "write failed: " + path);
    }
    off += static_cast<std::size_t>(n);
  }
  if (do_fsync && ::fdatasync(fd) != 0) {
    ::close(fd);
    return make_error(ErrorCode::IoError, "fsync failed: " + path);
  }
  ::close(fd);
  return Ok{};
}

struct LoadedLog {
  std::vector<std::string> lines;     // complete, parseable lines
  std::uintmax_t keep_bytes = 0;      // offset of crash garbage, if any
  bool truncated_garbage = false;
};

// Reads a segment. A torn final line (crash mid-write) is dropped; interior
// damage is CORRUPT_LOG.
inline Result<LoadedLog> read_log(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return make_error(ErrorCode::IoError, "cannot open log segment: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  LoadedLog out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) {
      // no trailing newline: incomplete write
      out.truncated_garbage = true;
      out.keep_bytes = pos;
      return out;
    }
    std::string line = text.substr(pos, nl - pos);
    if (!line.empty()) out.lines.push_back(std::move(line));
    pos = nl + 1;
  }
  out.keep_bytes = text.size();
  return out;
}

}  // namespace detail

class Store;

// Locked view of one account: read state, append decided events. Handed out
// by Store::with_account while the per-account writer lock is held.
class AccountContext {
 public:
  const AccountState& state() const { return state_; }
  Result<std::int64_t> append(EventKind kind, TimestampMs occurred_at, nlohmann::json payload);

  // Batch protocol: decide against a scratch copy, then commit the whole
  // batch behind one durable write. Memory only moves after the disk does.
  AccountState scratch() const { return state_; }
  Status commit(AccountState&& next, std::vector<std::string> new_lines);

 private:
  friend class Store;
  AccountContext(Store& store, AccountState& state, std::vector<std::string>& lines,
                 std::string path)
      : store_(store), state_(state), lines_(lines), path_(std::move(path)) {}
  Store& store_;
  AccountState& state_;
  std::vector<std::string>& lines_;
  std::string path_;
};

enum class Role { AccountOwner, Sensor, Game };

struct Principal {
  Role role;
  std::string id;          // account_id / sensor_id / game_id
  std::string account_id;  // owning account for sensors
};

struct EventPage {
  std::vector<std::string> lines;
  std::int64_t next_seq = 0;
};

// Event-sourced data layer. One JSONL segment per account or game; state is
// a deterministic fold of the segment. Writers serialize per entity; reads
// never cross a half-applied event.
//
// Lock order: an entity mutex may be taken while no registry lock is held;
// the registry lock is only ever taken either alone or after an entity
// mutex, never the other way around.
class Store {
 public:
  static Result<std::unique_ptr<Store>> open(StoreOptions opts) {
    auto store = std::unique_ptr<Store>(new Store(std::move(opts)));
    if (auto st = store->load_all(); !st) return st.error();
    return store;
  }

  const StoreOptions& options() const { return opts_; }
  const TwinConfig& twin_config() const { return opts_.twin; }

  // -- registration ---------------------------------------------------------

  struct AccountHandle {
    std::string account_id;
    std::string owner_token;
  };

  Result<AccountHandle> create_account(TimestampMs now) {
    auto entry = std::make_unique<AccountEntry>();
    std::string account_id = ids_.id('a');
    std::string owner_token = ids_.token();
    entry->path = log_path(account_id);
    LedgerEvent ev;
    ev.seq = 1;
    ev.occurred_at = now;
    ev.kind = EventKind::AccountCreated;
    ev.payload = {{"account_id", account_id}, {"owner_token", owner_token}};
    std::string line = ev.to_line();
    if (auto st = detail::append_durable(entry->path, {line}, opts_.fsync_on_append); !st)
      return st.error();
    if (auto st = apply_account_event(entry->state, ev, opts_.twin); !st) return st.error();
    entry->lines.push_back(std::move(line));
    {
      std::unique_lock reg(registry_mu_);
      tokens_[owner_token] = Principal{Role::AccountOwner, account_id, account_id};
      accounts_.emplace(account_id, std::move(entry));
    }
    return AccountHandle{account_id, owner_token};
  }

  struct GameHandle {
    std::string game_id;
    std::string game_token;
  };

  Result<GameHandle> create_game(TimestampMs now) {
    auto entry = std::make_unique<GameEntry>();
    std::string game_id = ids_.id('g');
    std::string game_token = ids_.token();
    entry->path = log_path(game_id);
    LedgerEvent ev;
    ev.seq = 1;
    ev.occurred_at = now;
    ev.kind = EventKind::GameRegistered;
    ev.payload = {{"game_id", game_id}, {"game_token", game_token}};
    std::string line = ev.to_line();
    if (auto st = detail::append_durable(entry->path, {line}, opts_.fsync_on_append); !st)
      return st.error();
    if (auto st = apply_game_event(entry->state, ev); !st) return st.error();
    entry->lines.push_back(std::move(line));
    {
      std::unique_lock reg(registry_mu_);
      tokens_[game_token] = Principal{Role::Game, game_id, {}};
      games_.emplace(game_id, std::move(entry));
    }
    return GameHandle{game_id, game_token};
  }

  Result<ingest::SensorDescriptor> register_sensor(const std::string& account_id,
                                                   const std::string& kind,
                                                   ingest::SensorOrigin origin, TimestampMs now) {
    AccountEntry* e = find_account(account_id);
    if (!e) return make_error(ErrorCode::UnknownAccount, "unknown account: " + account_id);
    std::string sensor_id = ids_.id('s');
    std::string api_key = ids_.token();
    std::lock_guard lock(e->mu);
    TimestampMs at = now < e->state.cursor ? e->state.cursor : now;
    LedgerEvent ev;
    ev.seq = e->state.last_seq + 1;
    ev.occurred_at = at;
    ev.kind = EventKind::SensorRegistered;
    ev.payload = {{"sensor_id", sensor_id},
                  {"kind", kind},
                  {"origin", ingest::sensor_origin_name(origin)},
                  {"api_key", api_key}};
    std::string line = ev.to_line();
    if (auto st = detail::append_durable(e->path, {line}, opts_.fsync_on_append); !st)
      return st.error();
    if (auto st = apply_account_event(e->state, ev, opts_.twin); !st) return st.error();
    e->lines.push_back(std::move(line));
    {
      std::unique_lock reg(registry_mu_);
      api_keys_[api_key] = {account_id, sensor_id};
      tokens_[api_key] = Principal{Role::Sensor, sensor_id, account_id};
    }
    return e->state.sensors.at(sensor_id);
  }

  // -- auth -----------------------------------------------------------------

  std::optional<Principal> resolve_token(const std::string& token) const {
    std::shared_lock reg(registry_mu_);
    auto it = tokens_.find(token);
    if (it == tokens_.end()) return std::nullopt;
    return it->second;
  }

  // -- locked account access ------------------------------------------------

  template <typename Fn>
  auto with_account(const std::string& account_id, Fn&& fn)
      -> decltype(fn(std::declval<AccountContext&>())) {
    AccountEntry* e = find_account(account_id);
    if (!e) return make_error(ErrorCode::UnknownAccount, "unknown account: " + account_id);
    std::lock_guard lock(e->mu);
    AccountContext ctx(*this, e->state, e->lines, e->path);
    return fn(ctx);
  }

  bool account_exists(const std::string& account_id) { return find_account(account_id) != nullptr; }
  bool game_exists(const std::string& game_id) { return find_game(game_id) != nullptr; }

  // -- queries --------------------------------------------------------------

  Result<ProfileSnapshot> get_snapshot(const std::string& account_id, TimestampMs as_of) {
    AccountEntry* e = find_account(account_id);
    if (!e) return make_error(ErrorCode::UnknownAccount, "unknown account: " + account_id);
    std::lock_guard lock(e->mu);
    if (as_of < e->state.cursor)
      return make_error(ErrorCode::AsOfBeforeLastEvent,
                        "as_of precedes the last folded event; historical snapshots are not kept");
    return snapshot_of(e->state, as_of, opts_.twin);
  }

  Result<EventPage> list_events(const std::string& account_id, std::int64_t since_seq,
                                std::int64_t limit = 1000) {
    if (limit > 1000) limit = 1000;
    if (limit < 1) limit = 1;
    AccountEntry* e = find_account(account_id);
    if (!e) return make_error(ErrorCode::UnknownAccount, "unknown account: " + account_id);
    std::lock_guard lock(e->mu);
    EventPage page;
    page.next_seq = since_seq;
    if (since_seq < 0) since_seq = 0;
    for (std::int64_t seq = since_seq + 1;
         seq <= e->state.last_seq && std::int64_t(page.lines.size()) < limit; ++seq) {
      page.lines.push_back(e->lines[static_cast<std::size_t>(seq - 1)]);
      page.next_seq = seq;
    }
    return page;
  }

  Result<twin::MechanicBinding> find_mechanic(const std::string& game_id,
                                              const std::string& mechanic_id) {
    GameEntry* g = find_game(game_id);
    if (!g) return make_error(ErrorCode::UnknownGame, "unknown game: " + game_id);
    std::lock_guard lock(g->mu);
    auto it = g->state.mechanics.find(mechanic_id);
    if (it == g->state.mechanics.end())
      return make_error(ErrorCode::UnknownMechanic, "unknown mechanic: " + mechanic_id);
    return it->second;
  }

  // -- mechanics ------------------------------------------------------------

  Status register_mechanic(const std::string& game_id, const twin::MechanicBinding& binding,
                           TimestampMs now) {
    if (auto st = twin::validate_binding(binding); !st) return st.error();
    GameEntry* g = find_game(game_id);
    if (!g) return make_error(ErrorCode::UnknownGame, "unknown game: " + game_id);
    std::lock_guard lock(g->mu);
    if (g->state.mechanics.count(binding.mechanic_id))
      return make_error(ErrorCode::DuplicateMechanic,
                        "mechanic already registered: " + binding.mechanic_id);
    TimestampMs at = now < g->state.cursor ? g->state.cursor : now;
    LedgerEvent ev;
    ev.seq = g->state.last_seq + 1;
    ev.occurred_at = at;
    ev.kind = EventKind::MechanicRegistered;
    ev.payload = {{"mechanic_id", binding.mechanic_id},
                  {"dimension", twin::dimension_name(binding.dimension)},
                  {"mode", twin::mechanic_mode_name(binding.mode)}};
    if (binding.mode == twin::MechanicMode::OnDemand) {
      ev.payload["cost_mpt"] = binding.cost_mpt;
    } else {
      ev.payload["modifier_lo"] = binding.modifier_lo;
      ev.payload["modifier_hi"] = binding.modifier_hi;
    }
    std::string line = ev.to_line();
    if (auto st = detail::append_durable(g->path, {line}, opts_.fsync_on_append); !st)
      return st.error();
    if (auto st = apply_game_event(g->state, ev); !st) return st.error();
    g->lines.push_back(std::move(line));
    return Ok{};
  }

  // -- redemption -----------------------------------------------------------
  // Decides once per (game_id, idempotency_key); replays return the stored
  // record verbatim and never touch the account again.

  Result<RedemptionRecord> redeem(const std::string& game_id, const std::string& idempotency_key,
                                  const std::string& account_id, const std::string& mechanic_id,
                                  std::optional<Millipoints> amount_mpt, TimestampMs now) {
    if (idempotency_key.empty() || idempotency_key.size() > 64)
      return make_error(ErrorCode::ValidationFailed, "idempotency_key must be 1-64 chars");
    GameEntry* g = find_game(game_id);
    if (!g) return make_error(ErrorCode::UnknownGame, "unknown game: " + game_id);
    std::lock_guard game_lock(g->mu);

    auto found = g->state.redemptions.find(idempotency_key);
    if (found != g->state.redemptions.end()) {
      const RedemptionRecord& r = found->second;
      if (now - r.decided_at > opts_.idempotency_retention_hours * kMsPerHour) {
        g->state.redemptions.erase(found);  // expired; treat as fresh
      } else {
        if (r.account_id != account_id || r.mechanic_id != mechanic_id ||
            (amount_mpt && *amount_mpt != r.amount_mpt))
          return make_error(ErrorCode::KeyPayloadMismatch,
                            "idempotency key replayed with different parameters");
        return r;
      }
    }

    auto it = g->state.mechanics.find(mechanic_id);
    if (it == g->state.mechanics.end())
      return make_error(ErrorCode::UnknownMechanic, "unknown mechanic: " + mechanic_id);
    const twin::MechanicBinding& binding = it->second;
    if (binding.mode != twin::MechanicMode::OnDemand)
      return make_error(ErrorCode::NotOnDemand, "mechanic is not ON_DEMAND: " + mechanic_id);
    if (amount_mpt && *amount_mpt != binding.cost_mpt)
      return make_error(ErrorCode::ValidationFailed,
                        "amount is server-priced; it must equal the mechanic cost");
    Millipoints cost = binding.cost_mpt;

    AccountEntry* a = find_account(account_id);
    if (!a) return make_error(ErrorCode::UnknownAccount, "unknown account: " + account_id);
    std::lock_guard account_lock(a->mu);

    TimestampMs at = now;
    if (at < a->state.cursor) {
      if (a->state.cursor - at > kSkewWindowMs)
        return make_error(ErrorCode::TimeBeforeBase, "redemption time behind the account fold");
      at = a->state.cursor;
    }
    const auto& bal = a->state.balances[static_cast<int>(binding.dimension)];
    auto eff = twin::effective_balance(bal, at);
    if (!eff) return eff.error();

    RedemptionRecord record;
    record.idempotency_key = idempotency_key;
    record.game_id = game_id;
    record.account_id = account_id;
    record.mechanic_id = mechanic_id;
    record.amount_mpt = cost;
    record.decided_at = at;
    record.effective_mpt = eff.value();

    if (eff.value() >= cost) {
      record.result = RedemptionResult::Granted;
      record.grant_token = ids_.id('r');
      LedgerEvent ev;
      ev.seq = a->state.last_seq + 1;
      ev.occurred_at = at;
      ev.kind = EventKind::PointsRedeemed;
      ev.payload = {{"game_id", game_id},
                    {"idempotency_key", idempotency_key},
                    {"mechanic_id", mechanic_id},
                    {"amount_mpt", cost},
                    {"dimension", twin::dimension_name(binding.dimension)},
                    {"grant_token", record.grant_token}};
      std::string line = ev.to_line();
      if (auto st = detail::append_durable(a->path, {line}, opts_.fsync_on_append); !st)
        return st.error();
      if (auto st = apply_account_event(a->state, ev, opts_.twin); !st) return st.error();
      a->lines.push_back(std::move(line));
      record.effective_mpt = eff.value() - cost;
    } else {
      record.result = RedemptionResult::Insufficient;
    }
    g->state.redemptions.emplace(idempotency_key, record);
    return record;
  }

  // -- recovery -------------------------------------------------------------

  // Discards the in-memory fold and replays the segment from seq 1.
  Result<ProfileSnapshot> rebuild(const std::string& account_id, TimestampMs as_of) {
    AccountEntry* e = find_account(account_id);
    if (!e) return make_error(ErrorCode::UnknownAccount, "unknown account: " + account_id);
    std::lock_guard lock(e->mu);
    auto loaded = detail::read_log(e->path);
    if (!loaded) return loaded.error();
    AccountState fresh;
    std::int64_t seq = 0;
    for (const auto& line : loaded.value().lines) {
      ++seq;
      auto ev = LedgerEvent::from_line(line);
      if (!ev) return make_error(ErrorCode::CorruptLog, ev.error().message, seq);
      if (auto st = apply_account_event(fresh, ev.value(), opts_.twin); !st)
        return make_error(ErrorCode::CorruptLog, st.error().message,
                          st.error().detail ? *st.error().detail : ev.value().seq);
    }
    e->state = std::move(fresh);
    e->lines = std::move(loaded.value().lines);
    return snapshot_of(e->state, as_of < e->state.cursor ? e->state.cursor : as_of, opts_.twin);
  }

  std::vector<std::string> account_ids() const {
    std::shared_lock reg(registry_mu_);
    std::vector<std::string> out;
    out.reserve(accounts_.size());
    for (const auto& [id, _] : accounts_) out.push_back(id);
    return out;
  }

  std::vector<std::string> game_ids() const {
    std::shared_lock reg(registry_mu_);
    std::vector<std::string> out;
    out.reserve(games_.size());
    for (const auto& [id, _] : games_) out.push_back(id);
    return out;
  }

 private:
  friend class AccountContext;

  struct AccountEntry {
    std::mutex mu;
    AccountState state;
    std::vector<std::string> lines;
    std::string path;
  };
  struct GameEntry {
    std::mutex mu;
    GameState state;
    std::vector<std::string> lines;
    std::string path;
  };

  explicit Store(StoreOptions opts) : opts_(std::move(opts)) {}

  std::string log_path(const std::string& entity_id) const {
    return (std::filesystem::path(opts_.data_dir) / (entity_id + ".log")).string();
  }

  AccountEntry* find_account(const std::string& id) {
    std::shared_lock reg(registry_mu_);
    auto it = accounts_.find(id);
    return it == accounts_.end() ? nullptr : it->second.get();
  }
  GameEntry* find_game(const std::string& id) {
    std::shared_lock reg(registry_mu_);
    auto it = games_.find(id);
    return it == games_.end() ? nullptr : it->second.get();
  }

  Status load_all() {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(opts_.data_dir, ec);
    if (ec) return make_error(ErrorCode::IoError, "cannot create data dir: " + opts_.data_dir);

    struct PendingLog {
      std::string path;
      detail::LoadedLog loaded;
      EventKind first_kind;
    };
    std::vector<PendingLog> games, accounts;
    for (const auto& de : fs::directory_iterator(opts_.data_dir)) {
      if (!de.is_regular_file() || de.path().extension() != ".log") continue;
      auto loaded = detail::read_log(de.path().string());
      if (!loaded)
        return make_error(ErrorCode::CorruptLog,
                          de.path().string() + ": " + loaded.error().message);
      if (loaded.value().truncated_garbage) {
        std::error_code tec;
        fs::resize_file(de.path(), loaded.value().keep_bytes, tec);
        if (tec)
          return make_error(ErrorCode::IoError, "cannot trim torn tail: " + de.path().string());
      }
      if (loaded.value().lines.empty()) continue;
      auto first = LedgerEvent::from_line(loaded.value().lines.front());
      if (!first)
        return make_error(ErrorCode::CorruptLog, de.path().string() + ": " +
                                                     first.error().message, 1);
      PendingLog p{de.path().string(), std::move(loaded.value()), first.value().kind};
      if (p.first_kind == EventKind::GameRegistered)
        games.push_back(std::move(p));
      else
        accounts.push_back(std::move(p));
    }

    // games first: account redemption events reference game records
    for (auto& p : games) {
      auto entry = std::make_unique<GameEntry>();
      entry->path = p.path;
      std::int64_t seq = 0;
      for (const auto& line : p.loaded.lines) {
        ++seq;
        auto ev = LedgerEvent::from_line(line);
        if (!ev) return make_error(ErrorCode::CorruptLog, p.path + ": " + ev.error().message, seq);
        if (auto st = apply_game_event(entry->state, ev.value()); !st)
          return make_error(ErrorCode::CorruptLog, p.path + ": " + st.error().message,
                            st.error().detail ? *st.error().detail : ev.value().seq);
      }
      entry->lines = std::move(p.loaded.lines);
      std::unique_lock reg(registry_mu_);
      tokens_[entry->state.game_token] = Principal{Role::Game, entry->state.game_id, {}};
      games_.emplace(entry->state.game_id, std::move(entry));
    }

    for (auto& p : accounts) {
      auto entry = std::make_unique<AccountEntry>();
      entry->path = p.path;
      std::int64_t seq = 0;
      for (const auto& line : p.loaded.lines) {
        ++seq;
        auto ev = LedgerEvent::from_line(line);
        if (!ev) return make_error(ErrorCode::CorruptLog, p.path + ": " + ev.error().message, seq);
        if (auto st = apply_account_event(entry->state, ev.value(), opts_.twin); !st)
          return make_error(ErrorCode::CorruptLog, p.path + ": " + st.error().message,
                            st.error().detail ? *st.error().detail : ev.value().seq);
        // GRANTED redemptions re-enter the per-game idempotency store
        if (ev.value().kind == EventKind::PointsRedeemed) {
          const auto& pl = ev.value().payload;
          RedemptionRecord r;
          r.idempotency_key = pl["idempotency_key"].get<std::string>();
          r.game_id = pl["game_id"].get<std::string>();
          r.account_id = entry->state.account_id;
          r.mechanic_id = pl["mechanic_id"].get<std::string>();
          r.amount_mpt = pl["amount_mpt"].get<std::int64_t>();
          r.result = RedemptionResult::Granted;
          r.grant_token = pl["grant_token"].get<std::string>();
          r.decided_at = ev.value().occurred_at;
          auto dim = twin::parse_dimension(pl["dimension"].get<std::string>());
          if (dim) {
            auto eff = twin::effective_balance(
                entry->state.balances[static_cast<int>(*dim)], ev.value().occurred_at);
            r.effective_mpt = eff ? eff.value() : 0;
          }
          if (auto* ge = find_game(r.game_id)) {
            std::lock_guard glock(ge->mu);
            ge->state.redemptions[r.idempotency_key] = r;
          }
        }
      }
      entry->lines = std::move(p.loaded.lines);
      std::unique_lock reg(registry_mu_);
      tokens_[entry->state.owner_token] =
          Principal{Role::AccountOwner, entry->state.account_id, entry->state.account_id};
      for (const auto& [sid, sensor] : entry->state.sensors) {
        api_keys_[sensor.api_key] = {entry->state.account_id, sid};
        tokens_[sensor.api_key] = Principal{Role::Sensor, sid, entry->state.account_id};
      }
      accounts_.emplace(entry->state.account_id, std::move(entry));
    }
    return Ok{};
  }

  StoreOptions opts_;
  IdGenerator ids_;

  mutable std::shared_mutex registry_mu_;
  std::unordered_map<std::string, std::unique_ptr<AccountEntry>> accounts_;
  std::unordered_map<std::string, std::unique_ptr<GameEntry>> games_;
  std::unordered_map<std::string, Principal> tokens_;
  std::unordered_map<std::string, std::pair<std::string, std::string>> api_keys_;
};

inline Result<std::int64_t> AccountContext::append(EventKind kind, TimestampMs occurred_at,
                                                   nlohmann::json payload) {
  LedgerEvent ev;
  ev.seq = state_.last_seq + 1;
  ev.occurred_at = occurred_at;
  ev.kind = kind;
  ev.payload = std::move(payload);
  std::string line = ev.to_line();
  if (auto st = detail::append_durable(path_, {line}, store_.opts_.fsync_on_append); !st)
    return st.error();
  if (auto st = apply_account_event(state_, ev, store_.opts_.twin); !st) return st.error();
  lines_.push_back(std::move(line));
  return ev.seq;
}

inline Status AccountContext::commit(AccountState&& next, std::vector<std::string> new_lines) {
  if (!new_lines.empty()) {
    if (auto st = detail::append_durable(path_, new_lines, store_.opts_.fsync_on_append); !st)
      return st.error();
  }
  state_ = std::move(next);
  for (auto& l : new_lines) lines_.push_back(std::move(l));
  return Ok{};
}

}  // namespace lsg::ledger
