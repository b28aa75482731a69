#pragma once

#include <atomic>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "lsg/clock.hpp"
#include "lsg/config.hpp"
#include "lsg/error.hpp"
#include "lsg/gateway.hpp"
#include "lsg/ledger.hpp"

namespace lsg::api {

inline int http_status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::AuthFailed:
      return 401;
    case ErrorCode::UnknownAccount:
    case ErrorCode::UnknownGame:
    case ErrorCode::UnknownSensor:
    case ErrorCode::UnknownMechanic:
      return 404;
    case ErrorCode::DuplicateMechanic:
    case ErrorCode::KeyPayloadMismatch:
    case ErrorCode::SequenceConflict:
      return 409;
    case ErrorCode::BadJson:
    case ErrorCode::BadRequest:
      return 400;
    case ErrorCode::CorruptLog:
    case ErrorCode::IoError:
    case ErrorCode::HarnessAbort:
      return 500;
    default:
      return 422;
  }
}

inline nlohmann::json error_body(const Error& e) {
  return {{"code", e.code_name()}, {"message", e.message}, {"retryable", e.retryable()}};
}

// HTTP/JSON facade. Stateless handlers: every route is a re-encoding of a
// gateway/store call; the only service-owned state is the token registry
// inside the store.
class Service {
 public:
  static Result<std::unique_ptr<Service>> create(ServiceConfig cfg) {
    auto rules = cfg.load_rules();
    if (!rules) return rules.error();
    ledger::StoreOptions opts;
    opts.data_dir = cfg.data_dir;
    opts.twin = cfg.twin;
    opts.fsync_on_append = cfg.fsync_on_append;
    opts.idempotency_retention_hours = cfg.idempotency_retention_hours;
    auto store = ledger::Store::open(std::move(opts));
    if (!store) return store.error();
    return std::unique_ptr<Service>(
        new Service(std::move(cfg), std::move(store.value()), std::move(rules.value())));
  }

  ledger::Store& store() { return *store_; }
  ingest::Gateway& gateway() { return gateway_; }
  const ServiceConfig& config() const { return cfg_; }

  // Binds the configured address and serves until stop(). Returns false on
  // bind failure.
  bool listen() {
    auto [host, port] = split_addr(cfg_.listen_addr);
    return server_.listen(host, port);
  }

  // Test/tooling entry: binds an ephemeral port and serves on a background
  // thread. Returns the bound port.
  int start_background(const std::string& host = "127.0.0.1") {
    int port = server_.bind_to_any_port(host);
    if (port <= 0) return -1;
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port;
  }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  ~Service() { stop(); }

 private:
  Service(ServiceConfig cfg, std::unique_ptr<ledger::Store> store, compose::RuleCatalog rules)
      : cfg_(std::move(cfg)),
        store_(std::move(store)),
        gateway_(*store_, std::move(rules), cfg_.budget) {
    wire_routes();
  }

  static std::pair<std::string, int> split_addr(const std::string& addr) {
    auto colon = addr.rfind(':');
    if (colon == std::string::npos) return {addr, 8080};
    return {addr.substr(0, colon), std::atoi(addr.c_str() + colon + 1)};
  }

  // -- request plumbing -----------------------------------------------------

  static void send_error(httplib::Response& res, const Error& e) {
    res.status = http_status_for(e.code);
    res.set_content(error_body(e).dump(), "application/json");
  }

  static void send_json(httplib::Response& res, const nlohmann::json& j, int status = 200) {
    res.status = status;
    res.set_content(j.dump(), "application/json");
  }

  // Strict body parse: JSON object, no unknown fields, all required present.
  static Result<nlohmann::json> parse_body(const httplib::Request& req,
                                           std::initializer_list<const char*> allowed,
                                           std::initializer_list<const char*> required) {
    nlohmann::json j;
    if (req.body.empty()) {
      j = nlohmann::json::object();
    } else {
      j = nlohmann::json::parse(req.body, nullptr, false);
      if (j.is_discarded())
        return make_error(ErrorCode::BadJson, "request body is not valid JSON");
      if (!j.is_object())
        return make_error(ErrorCode::BadJson, "request body must be a JSON object");
    }
    for (auto it = j.begin(); it != j.end(); ++it) {
      bool known = false;
      for (const char* k : allowed)
        if (it.key() == k) known = true;
      if (!known)
        return make_error(ErrorCode::BadRequest, "unknown field: " + it.key());
    }
    for (const char* k : required) {
      if (!j.contains(k))
        return make_error(ErrorCode::BadRequest, std::string("missing field: ") + k);
    }
    return j;
  }

  static std::string bearer_token(const httplib::Request& req) {
    auto header = req.get_header_value("Authorization");
    constexpr const char* kPrefix = "Bearer ";
    if (header.rfind(kPrefix, 0) != 0) return {};
    return header.substr(7);
  }

  Result<ledger::Principal> authenticate(const httplib::Request& req, ledger::Role role) {
    std::string token = bearer_token(req);
    if (token.empty())
      return make_error(ErrorCode::AuthFailed, "missing bearer token");
    auto p = store_->resolve_token(token);
    if (!p || p->role != role)
      return make_error(ErrorCode::AuthFailed, "token does not grant this role");
    return *p;
  }

  // Server time, or the caller-pinned virtual clock when enabled.
  Result<TimestampMs> now_for(const httplib::Request& req) {
    if (cfg_.test_clock_enabled && req.has_header("X-LSG-Test-Clock")) {
      auto t = parse_iso8601(req.get_header_value("X-LSG-Test-Clock"));
      if (!t) return make_error(ErrorCode::BadRequest, "bad X-LSG-Test-Clock header");
      return *t;
    }
    return wall_clock_now();
  }

  // -- routes ---------------------------------------------------------------

  void wire_routes() {
    server_.Get("/v1/healthz", [](const httplib::Request&, httplib::Response& res) {
      res.set_content("ok", "text/plain");
    });

    server_.Post("/v1/accounts", [this](const httplib::Request& req, httplib::Response& res) {
      auto body = parse_body(req, {}, {});
      if (!body) return send_error(res, body.error());
      auto now = now_for(req);
      if (!now) return send_error(res, now.error());
      auto acct = store_->create_account(now.value());
      if (!acct) return send_error(res, acct.error());
      send_json(res,
                {{"account_id", acct.value().account_id},
                 {"owner_token", acct.value().owner_token}},
                201);
    });

    server_.Post("/v1/accounts/:id/sensors",
                 [this](const httplib::Request& req, httplib::Response& res) {
                   auto principal = authenticate(req, ledger::Role::AccountOwner);
                   if (!principal) return send_error(res, principal.error());
                   const std::string& account_id = req.path_params.at("id");
                   if (principal.value().account_id != account_id)
                     return send_error(res, make_error(ErrorCode::AuthFailed,
                                                       "token does not own this account"));
                   auto body = parse_body(req, {"kind", "origin"}, {"kind", "origin"});
                   if (!body) return send_error(res, body.error());
                   const auto& j = body.value();
                   if (!j["kind"].is_string() || !j["origin"].is_string())
                     return send_error(res,
                                       make_error(ErrorCode::BadRequest, "kind and origin must be strings"));
                   auto origin = ingest::parse_sensor_origin(j["origin"].get<std::string>());
                   if (!origin)
                     return send_error(res, make_error(ErrorCode::BadRequest, "bad origin"));
                   auto now = now_for(req);
                   if (!now) return send_error(res, now.error());
                   auto sensor = gateway_.register_sensor(
                       account_id, j["kind"].get<std::string>(), *origin, now.value());
                   if (!sensor) return send_error(res, sensor.error());
                   const auto& d = sensor.value();
                   send_json(res,
                             {{"sensor_id", d.sensor_id},
                              {"account_id", d.account_id},
                              {"kind", d.kind},
                              {"origin", ingest::sensor_origin_name(d.origin)},
                              {"api_key", d.api_key},
                              {"created_at", format_iso8601(d.created_at)}},
                             201);
                 });

    server_.Post("/v1/readings", [this](const httplib::Request& req, httplib::Response& res) {
      auto principal = authenticate(req, ledger::Role::Sensor);
      if (!principal) return send_error(res, principal.error());
      auto body = parse_body(req, {"readings"}, {"readings"});
      if (!body) return send_error(res, body.error());
      if (!body.value()["readings"].is_array())
        return send_error(res, make_error(ErrorCode::BadRequest, "readings must be an array"));
      std::vector<ingest::SensorReading> rows;
      for (const auto& r : body.value()["readings"]) {
        auto parsed = parse_reading_row(r);
        if (!parsed) return send_error(res, parsed.error());
        rows.push_back(std::move(parsed.value()));
      }
      auto now = now_for(req);
      if (!now) return send_error(res, now.error());
      auto results = gateway_.submit_batch(bearer_token(req), rows, now.value());
      if (!results) return send_error(res, results.error());
      nlohmann::json out = nlohmann::json::array();
      for (std::size_t i = 0; i < results.value().size(); ++i) {
        const auto& r = results.value()[i];
        nlohmann::json row = {{"reading_id", rows[i].reading_id},
                              {"status", ingest::submit_status_name(r.status)},
                              {"credited_mpt", r.credited_mpt},
                              {"dimension", r.dimension}};
        if (!r.reason.empty()) row["reason"] = r.reason;
        out.push_back(std::move(row));
      }
      send_json(res, {{"results", out}});
    });

    server_.Get("/v1/profiles/:id/snapshot",
                [this](const httplib::Request& req, httplib::Response& res) {
                  std::string token = bearer_token(req);
                  auto p = store_->resolve_token(token);
                  if (!p || (p->role != ledger::Role::AccountOwner && p->role != ledger::Role::Game))
                    return send_error(res, make_error(ErrorCode::AuthFailed,
                                                      "snapshot requires an owner or game token"));
                  const std::string& account_id = req.path_params.at("id");
                  if (p->role == ledger::Role::AccountOwner && p->account_id != account_id)
                    return send_error(res, make_error(ErrorCode::AuthFailed,
                                                      "token does not own this account"));
                  auto now = now_for(req);
                  if (!now) return send_error(res, now.error());
                  auto snap = store_->get_snapshot(account_id, now.value());
                  if (!snap) return send_error(res, snap.error());
                  send_json(res, snap.value().to_json());
                });

    server_.Post("/v1/games", [this](const httplib::Request& req, httplib::Response& res) {
      auto body = parse_body(req, {}, {});
      if (!body) return send_error(res, body.error());
      auto now = now_for(req);
      if (!now) return send_error(res, now.error());
      auto game = store_->create_game(now.value());
      if (!game) return send_error(res, game.error());
      send_json(res, {{"game_id", game.value().game_id}, {"game_token", game.value().game_token}},
                201);
    });

    server_.Post("/v1/games/:id/mechanics",
                 [this](const httplib::Request& req, httplib::Response& res) {
                   auto principal = authenticate(req, ledger::Role::Game);
                   if (!principal) return send_error(res, principal.error());
                   const std::string& game_id = req.path_params.at("id");
                   if (principal.value().id != game_id)
                     return send_error(res, make_error(ErrorCode::AuthFailed,
                                                       "token does not own this game"));
                   auto body = parse_body(
                       req, {"mechanic_id", "dimension", "mode", "cost_mpt", "modifier_lo",
                             "modifier_hi"},
                       {"mechanic_id", "dimension", "mode"});
                   if (!body) return send_error(res, body.error());
                   auto binding = parse_binding(body.value(), game_id);
                   if (!binding) return send_error(res, binding.error());
                   auto now = now_for(req);
                   if (!now) return send_error(res, now.error());
                   auto st = store_->register_mechanic(game_id, binding.value(), now.value());
                   if (!st) return send_error(res, st.error());
                   send_json(res, body.value(), 201);
                 });

    server_.Post("/v1/redemptions", [this](const httplib::Request& req, httplib::Response& res) {
      auto principal = authenticate(req, ledger::Role::Game);
      if (!principal) return send_error(res, principal.error());
      auto body = parse_body(req, {"account_id", "mechanic_id", "idempotency_key", "amount_mpt"},
                             {"account_id", "mechanic_id", "idempotency_key"});
      if (!body) return send_error(res, body.error());
      const auto& j = body.value();
      if (!j["account_id"].is_string() || !j["mechanic_id"].is_string() ||
          !j["idempotency_key"].is_string())
        return send_error(res, make_error(ErrorCode::BadRequest, "fields must be strings"));
      std::optional<ledger::Millipoints> amount;
      if (j.contains("amount_mpt")) {
        if (!j["amount_mpt"].is_number_integer())
          return send_error(res, make_error(ErrorCode::BadRequest, "amount_mpt must be integer"));
        amount = j["amount_mpt"].get<std::int64_t>();
      }
      auto now = now_for(req);
      if (!now) return send_error(res, now.error());
      auto record = store_->redeem(principal.value().id, j["idempotency_key"].get<std::string>(),
                                   j["account_id"].get<std::string>(),
                                   j["mechanic_id"].get<std::string>(), amount, now.value());
      if (!record) return send_error(res, record.error());
      send_json(res, record.value().to_json());
    });

    server_.Get("/v1/profiles/:id/events",
                [this](const httplib::Request& req, httplib::Response& res) {
                  auto principal = authenticate(req, ledger::Role::AccountOwner);
                  if (!principal) return send_error(res, principal.error());
                  const std::string& account_id = req.path_params.at("id");
                  if (principal.value().account_id != account_id)
                    return send_error(res, make_error(ErrorCode::AuthFailed,
                                                      "token does not own this account"));
                  std::int64_t since_seq = 0;
                  if (req.has_param("since_seq")) {
                    try {
                      since_seq = std::stoll(req.get_param_value("since_seq"));
                    } catch (...) {
                      return send_error(res,
                                        make_error(ErrorCode::BadRequest, "bad since_seq"));
                    }
                  }
                  auto page = store_->list_events(account_id, since_seq);
                  if (!page) return send_error(res, page.error());
                  nlohmann::json events = nlohmann::json::array();
                  for (const auto& line : page.value().lines)
                    events.push_back(nlohmann::json::parse(line));
                  send_json(res, {{"events", events}, {"next_seq", page.value().next_seq}});
                });

    server_.set_exception_handler(
        [](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
          std::string what = "internal error";
          try {
            if (ep) std::rethrow_exception(ep);
          } catch (const std::exception& e) {
            what = e.what();
          } catch (...) {
          }
          res.status = 500;
          res.set_content(error_body(make_error(ErrorCode::IoError, what)).dump(),
                          "application/json");
        });
  }

  static Result<ingest::SensorReading> parse_reading_row(const nlohmann::json& r) {
    if (!r.is_object())
      return make_error(ErrorCode::BadRequest, "reading rows must be objects");
    for (auto it = r.begin(); it != r.end(); ++it) {
      if (it.key() != "reading_id" && it.key() != "sensor_id" && it.key() != "quantity" &&
          it.key() != "observed_at" && it.key() != "metadata")
        return make_error(ErrorCode::BadRequest, "unknown field in reading: " + it.key());
    }
    if (!r.contains("reading_id") || !r["reading_id"].is_string())
      return make_error(ErrorCode::BadRequest, "reading_id must be a string");
    if (!r.contains("quantity") || !r["quantity"].is_number())
      return make_error(ErrorCode::BadRequest, "quantity must be a number");
    if (!r.contains("observed_at") || !r["observed_at"].is_string())
      return make_error(ErrorCode::BadRequest, "observed_at must be an ISO-8601 string");
    ingest::SensorReading out;
    out.reading_id = r["reading_id"].get<std::string>();
    out.quantity = r["quantity"].get<double>();
    auto ts = parse_iso8601(r["observed_at"].get<std::string>());
    if (!ts) return make_error(ErrorCode::BadRequest, "bad observed_at");
    out.observed_at = *ts;
    if (r.contains("sensor_id")) {
      if (!r["sensor_id"].is_string())
        return make_error(ErrorCode::BadRequest, "sensor_id must be a string");
      out.sensor_id = r["sensor_id"].get<std::string>();
    }
    if (r.contains("metadata")) {
      if (!r["metadata"].is_object())
        return make_error(ErrorCode::BadRequest, "metadata must be an object");
      for (auto it = r["metadata"].begin(); it != r["metadata"].end(); ++it) {
        if (!it.value().is_string())
          return make_error(ErrorCode::BadRequest, "metadata values must be strings");
        out.metadata[it.key()] = it.value().get<std::string>();
      }
    }
    return out;
  }

  static Result<twin::MechanicBinding> parse_binding(const nlohmann::json& j,
                                                     const std::string& game_id) {
    twin::MechanicBinding b;
    if (!j["mechanic_id"].is_string() || !j["dimension"].is_string() || !j["mode"].is_string())
      return make_error(ErrorCode::BadRequest, "mechanic fields must be strings");
    b.mechanic_id = j["mechanic_id"].get<std::string>();
    b.game_id = game_id;
    auto dim = twin::parse_dimension(j["dimension"].get<std::string>());
    if (!dim) return make_error(ErrorCode::BadRequest, "unknown dimension");
    b.dimension = *dim;
    auto mode = twin::parse_mechanic_mode(j["mode"].get<std::string>());
    if (!mode) return make_error(ErrorCode::BadRequest, "unknown mode");
    b.mode = *mode;
    if (j.contains("cost_mpt")) {
      if (!j["cost_mpt"].is_number_integer())
        return make_error(ErrorCode::BadRequest, "cost_mpt must be integer");
      b.cost_mpt = j["cost_mpt"].get<std::int64_t>();
    }
    if (j.contains("modifier_lo")) {
      if (!j["modifier_lo"].is_number())
        return make_error(ErrorCode::BadRequest, "modifier_lo must be a number");
      b.modifier_lo = j["modifier_lo"].get<double>();
    }
    if (j.contains("modifier_hi")) {
      if (!j["modifier_hi"].is_number())
        return make_error(ErrorCode::BadRequest, "modifier_hi must be a number");
      b.modifier_hi = j["modifier_hi"].get<double>();
    }
    if (auto st = twin::validate_binding(b); !st) return st.error();
    return b;
  }

  ServiceConfig cfg_;
  std::unique_ptr<ledger::Store> store_;
  ingest::Gateway gateway_;
  httplib::Server server_;
  std::thread thread_;
};

}  // namespace lsg::api
