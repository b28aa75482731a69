#pragma once

#include <cstdlib>
#include <fstream>
#include <string>

#include <json.hpp>

#include "lsg/composition.hpp"
#include "lsg/error.hpp"
#include "lsg/ledger.hpp"

namespace lsg {

// Service configuration. Precedence: built-in defaults < config file
// (LSG_CONFIG) < environment variables.
struct ServiceConfig {
  std::string listen_addr = "127.0.0.1:8080";
  std::string data_dir = "./lsg-data";
  std::string rules_path;  // empty: ship the built-in catalog
  ledger::TwinConfig twin;
  compose::GameplayBudget budget;
  std::int64_t idempotency_retention_hours = 24;
  bool fsync_on_append = true;
  bool test_clock_enabled = false;

  static Result<ServiceConfig> from_json(const nlohmann::json& j) {
    if (!j.is_object())
      return make_error(ErrorCode::ValidationFailed, "config must be a JSON object");
    ServiceConfig c;
    c.listen_addr = j.value("listen_addr", c.listen_addr);
    c.data_dir = j.value("data_dir", c.data_dir);
    c.rules_path = j.value("rules_path", c.rules_path);
    if (j.contains("half_life_hours")) {
      for (auto it = j["half_life_hours"].begin(); it != j["half_life_hours"].end(); ++it) {
        auto dim = twin::parse_dimension(it.key());
        if (!dim)
          return make_error(ErrorCode::ValidationFailed,
                            "half_life_hours: unknown dimension " + it.key());
        double v = it.value().get<double>();
        if (!(v > 0))
          return make_error(ErrorCode::ValidationFailed, "half_life_hours must be > 0");
        c.twin.half_life_hours[static_cast<int>(*dim)] = v;
      }
    }
    if (j.contains("soft_cap_mpt")) {
      for (auto it = j["soft_cap_mpt"].begin(); it != j["soft_cap_mpt"].end(); ++it) {
        auto dim = twin::parse_dimension(it.key());
        if (!dim)
          return make_error(ErrorCode::ValidationFailed,
                            "soft_cap_mpt: unknown dimension " + it.key());
        std::int64_t v = it.value().get<std::int64_t>();
        if (v <= 0) return make_error(ErrorCode::ValidationFailed, "soft_cap_mpt must be > 0");
        c.twin.soft_cap_mpt[static_cast<int>(*dim)] = v;
      }
    }
    if (j.contains("gameplay_budget")) {
      const auto& b = j["gameplay_budget"];
      c.budget.daily_budget_minutes = b.value("daily_budget_minutes", c.budget.daily_budget_minutes);
      c.budget.credit_rate_mpt_per_minute =
          b.value("credit_rate_mpt_per_minute", c.budget.credit_rate_mpt_per_minute);
      c.budget.punitive_over_budget = b.value("punitive_over_budget", c.budget.punitive_over_budget);
      if (!(c.budget.daily_budget_minutes > 0))
        return make_error(ErrorCode::ValidationFailed, "daily_budget_minutes must be > 0");
    }
    c.idempotency_retention_hours =
        j.value("idempotency_retention_hours", c.idempotency_retention_hours);
    c.fsync_on_append = j.value("fsync_on_append", c.fsync_on_append);
    return c;
  }

  static Result<ServiceConfig> from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) return make_error(ErrorCode::IoError, "cannot open config: " + path);
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded())
      return make_error(ErrorCode::BadJson, "config is not valid JSON: " + path);
    return from_json(j);
  }

  // LSG_CONFIG, then LSG_LISTEN_ADDR / LSG_DATA_DIR / LSG_RULES_PATH /
  // LSG_TEST_CLOCK on top.
  static Result<ServiceConfig> from_environment() {
    ServiceConfig c;
    if (const char* path = std::getenv("LSG_CONFIG")) {
      auto file = from_file(path);
      if (!file) return file.error();
      c = file.value();
    }
    c.apply_env_overrides();
    return c;
  }

  void apply_env_overrides() {
    if (const char* v = std::getenv("LSG_LISTEN_ADDR")) listen_addr = v;
    if (const char* v = std::getenv("LSG_DATA_DIR")) data_dir = v;
    if (const char* v = std::getenv("LSG_RULES_PATH")) rules_path = v;
    if (const char* v = std::getenv("LSG_TEST_CLOCK")) test_clock_enabled = std::string(v) == "1";
  }

  Result<compose::RuleCatalog> load_rules() const {
    if (rules_path.empty()) return compose::RuleCatalog::built_in_defaults();
    return compose::RuleCatalog::from_file(rules_path);
  }
};

}  // namespace lsg
