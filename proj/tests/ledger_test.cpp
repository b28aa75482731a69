#include "lsg/ledger.hpp"

#include <gtest/gtest.h>

#include <atomic>
#include <fstream>
#include <set>
#include <thread>
#include <vector>

#include "lsg/gateway.hpp"
#include "test_util.hpp"

namespace {

using namespace lsg;
using namespace lsg::ledger;

constexpr TimestampMs kT0 = 1767225600000;  // 2026-01-01T00:00:00Z
constexpr std::int64_t kHour = kMsPerHour;

struct Fixture {
  test::TempDir dir;
  std::unique_ptr<Store> store;
  ingest::Gateway gateway;

  Fixture()
      : store(open_store(dir.path())),
        gateway(*store, compose::RuleCatalog::built_in_defaults(), compose::GameplayBudget{}) {}

  static std::unique_ptr<Store> open_store(const std::string& path) {
    StoreOptions opts;
    opts.data_dir = path;
    auto r = Store::open(std::move(opts));
    if (!r.ok()) std::abort();
    return std::move(r.value());
  }

  Store::AccountHandle account(TimestampMs at = kT0) {
    auto r = store->create_account(at);
    EXPECT_TRUE(r.ok());
    return r.value();
  }

  ingest::SensorDescriptor sensor(const std::string& account_id, const std::string& kind,
                                  TimestampMs at = kT0) {
    auto r = gateway.register_sensor(account_id, kind, ingest::SensorOrigin::PhysicalDevice, at);
    EXPECT_TRUE(r.ok());
    return r.value();
  }

  ingest::SubmitResult submit(const std::string& api_key, const std::string& reading_id,
                              double quantity, TimestampMs observed, TimestampMs now = 0) {
    ingest::SensorReading reading;
    reading.reading_id = reading_id;
    reading.quantity = quantity;
    reading.observed_at = observed;
    auto r = gateway.submit_reading(api_key, reading, now ? now : observed);
    EXPECT_TRUE(r.ok());
    return r.value();
  }
};

// ---------------------------------------------------------------------------
// accounts and sensors
// ---------------------------------------------------------------------------

TEST(StoreAccounts, FreshAccountIsZeroed) {
  Fixture fx;
  auto acct = fx.account();
  auto snap = fx.store->get_snapshot(acct.account_id, kT0);
  ASSERT_TRUE(snap.ok());
  for (const auto& d : snap.value().dims) {
    EXPECT_EQ(d.effective_mpt, 0);
    EXPECT_DOUBLE_EQ(d.score, 0.0);
  }
  EXPECT_EQ(snap.value().last_seq, 1);
}

TEST(StoreAccounts, DistinctIdsAndTokens) {
  Fixture fx;
  auto a = fx.account();
  auto b = fx.account();
  EXPECT_NE(a.account_id, b.account_id);
  EXPECT_NE(a.owner_token, b.owner_token);
  auto p = fx.store->resolve_token(a.owner_token);
  ASSERT_TRUE(p.has_value());
  EXPECT_EQ(p->role, Role::AccountOwner);
  EXPECT_EQ(p->id, a.account_id);
}

TEST(StoreAccounts, SnapshotIsPure) {
  Fixture fx;
  auto acct = fx.account();
  auto s1 = fx.store->get_snapshot(acct.account_id, kT0 + kHour);
  auto s2 = fx.store->get_snapshot(acct.account_id, kT0 + kHour);
  ASSERT_TRUE(s1.ok() && s2.ok());
  EXPECT_EQ(s1.value().to_json().dump(), s2.value().to_json().dump());
}

TEST(StoreAccounts, SnapshotBeforeCursorRejected) {
  Fixture fx;
  auto acct = fx.account(kT0 + kHour);
  auto snap = fx.store->get_snapshot(acct.account_id, kT0);
  ASSERT_FALSE(snap.ok());
  EXPECT_EQ(snap.error().code, ErrorCode::AsOfBeforeLastEvent);
}

TEST(StoreAccounts, UnknownAccount) {
  Fixture fx;
  EXPECT_EQ(fx.store->get_snapshot("aMISSING", kT0).error().code, ErrorCode::UnknownAccount);
}

TEST(Sensors, RegistrationEchoesInputs) {
  Fixture fx;
  auto acct = fx.account();
  auto s = fx.sensor(acct.account_id, "pedometer");
  EXPECT_EQ(s.kind, "pedometer");
  EXPECT_EQ(s.account_id, acct.account_id);
  EXPECT_EQ(s.sensor_id.size(), 26u);
}

TEST(Sensors, UnknownKindRejected) {
  Fixture fx;
  auto acct = fx.account();
  auto r = fx.gateway.register_sensor(acct.account_id, "typo_kind",
                                      ingest::SensorOrigin::Virtual, kT0);
  ASSERT_FALSE(r.ok());
  EXPECT_EQ(r.error().code, ErrorCode::UnknownKind);
}

TEST(Sensors, MultiplePedometersAllowed) {
  Fixture fx;
  auto acct = fx.account();
  auto s1 = fx.sensor(acct.account_id, "pedometer");
  auto s2 = fx.sensor(acct.account_id, "pedometer");
  EXPECT_NE(s1.sensor_id, s2.sensor_id);
}

// ---------------------------------------------------------------------------
// readings
// ---------------------------------------------------------------------------

TEST(Readings, HappyPathCreditsPerRule) {
  Fixture fx;
  auto acct = fx.account();
  auto s = fx.sensor(acct.account_id, "pedometer");
  auto r = fx.submit(s.api_key, "r1", 1000.0, kT0 + kHour);
  EXPECT_EQ(r.status, ingest::SubmitStatus::Accepted);
  EXPECT_EQ(r.credited_mpt, 10000);
  EXPECT_EQ(r.dimension, "PHYSICAL");
}

TEST(Readings, DuplicatesCreditOnce) {
  Fixture fx;
  auto acct = fx.account();
  auto s = fx.sensor(acct.account_id, "pedometer");
  auto first = fx.submit(s.api_key, "r1", 1000.0, kT0 + kHour);
  EXPECT_EQ(first.status, ingest::SubmitStatus::Accepted);
  for (int i = 0; i < 4; ++i) {
    auto dup = fx.submit(s.api_key, "r1", 1000.0, kT0 + kHour);
    EXPECT_EQ(dup.status, ingest::SubmitStatus::Duplicate);
    EXPECT_EQ(dup.credited_mpt, 10000);
  }
  auto snap = fx.store->get_snapshot(acct.account_id, kT0 + kHour);
  ASSERT_TRUE(snap.ok());
  EXPECT_EQ(snap.value().dims[int(twin::Dimension::Physical)].effective_mpt, 10000);
}

TEST(Readings, NegativeQuantityFailsValidation) {
  Fixture fx;
  auto acct = fx.account();
  auto s = fx.sensor(acct.account_id, "pedometer");
  auto r = fx.submit(s.api_key, "bad", -5.0, kT0 + kHour);
  EXPECT_EQ(r.status, ingest::SubmitStatus::ValidationFailed);
  EXPECT_EQ(r.reason, "negative quantity");
}

TEST(Readings, FutureTimestampBeyondWindowFails) {
  Fixture fx;
  auto acct = fx.account();
  auto s = fx.sensor(acct.account_id, "pedometer");
  auto r = fx.submit(s.api_key, "fut", 10.0, kT0 + 10 * kMsPerMinute, kT0);
  EXPECT_EQ(r.status, ingest::SubmitStatus::ValidationFailed);
  EXPECT_EQ(r.reason, "future timestamp");
}

TEST(Readings, StaleReadingRejected) {
  Fixture fx;
  auto acct = fx.account();
  auto s = fx.sensor(acct.account_id, "pedometer");
  EXPECT_EQ(fx.submit(s.api_key, "now", 10.0, kT0 + kHour).status,
            ingest::SubmitStatus::Accepted);
  auto stale = fx.submit(s.api_key, "old", 10.0, kT0 + kHour - kSkewWindowMs - 1000,
                         kT0 + kHour);
  EXPECT_EQ(stale.status, ingest::SubmitStatus::StaleReading);
}

TEST(Readings, WithinSkewWindowClampsToCursor) {
  Fixture fx;
  auto acct = fx.account();
  auto s = fx.sensor(acct.account_id, "pedometer");
  fx.submit(s.api_key, "a", 10.0, kT0 + kHour);
  auto r = fx.submit(s.api_key, "b", 10.0, kT0 + kHour - kSkewWindowMs, kT0 + kHour);
  EXPECT_EQ(r.status, ingest::SubmitStatus::Accepted);
}

TEST(Readings, CrossSensorSubmissionIsAuthFailure) {
  Fixture fx;
  auto acct = fx.account();
  auto s1 = fx.sensor(acct.account_id, "pedometer");
  auto s2 = fx.sensor(acct.account_id, "pedometer");
  ingest::SensorReading reading;
  reading.reading_id = "r1";
  reading.sensor_id = s2.sensor_id;  // wrong sensor for this key
  reading.quantity = 10.0;
  reading.observed_at = kT0 + kHour;
  auto r = fx.gateway.submit_reading(s1.api_key, reading, kT0 + kHour);
  ASSERT_FALSE(r.ok());
  EXPECT_EQ(r.error().code, ErrorCode::AuthFailed);
}

TEST(Readings, BadApiKeyIsAuthFailure) {
  Fixture fx;
  ingest::SensorReading reading;
  reading.reading_id = "r1";
  reading.quantity = 1.0;
  reading.observed_at = kT0;
  auto r = fx.gateway.submit_reading("not-a-key", reading, kT0);
  ASSERT_FALSE(r.ok());
  EXPECT_EQ(r.error().code, ErrorCode::AuthFailed);
}

TEST(Readings, DailyCapClipsAcrossBatch) {
  Fixture fx;
  auto acct = fx.account();
  auto s = fx.sensor(acct.account_id, "pedometer");
  // cap 100000 mpt = 10000 steps/day at 10 mpt/step
  auto r1 = fx.submit(s.api_key, "r1", 9000.0, kT0 + kHour);
  EXPECT_EQ(r1.credited_mpt, 90000);
  auto r2 = fx.submit(s.api_key, "r2", 9000.0, kT0 + 2 * kHour);
  EXPECT_EQ(r2.credited_mpt, 10000);  // clipped
  auto r3 = fx.submit(s.api_key, "r3", 9000.0, kT0 + 3 * kHour);
  EXPECT_EQ(r3.credited_mpt, 0);  // saturated
  // next UTC day resets the bucket
  auto r4 = fx.submit(s.api_key, "r4", 9000.0, kT0 + 25 * kHour);
  EXPECT_EQ(r4.credited_mpt, 90000);
}

TEST(Readings, GameplaySessionsDrawOnBudget) {
  Fixture fx;
  auto acct = fx.account();
  auto s = fx.sensor(acct.account_id, "gameplay_session", kT0);
  auto r1 = fx.submit(s.api_key, "sess1", 60.0, kT0 + kHour);
  EXPECT_EQ(r1.credited_mpt, 3000);
  EXPECT_EQ(r1.dimension, "LIFESTYLE");
  auto r2 = fx.submit(s.api_key, "sess2", 90.0, kT0 + 3 * kHour);
  EXPECT_EQ(r2.credited_mpt, 3000);  // only 60 of 90 creditable
  auto r3 = fx.submit(s.api_key, "sess3", 30.0, kT0 + 5 * kHour);
  EXPECT_EQ(r3.credited_mpt, 0);  // budget exhausted
}

TEST(Readings, ScreenTimePenaltyFloorsAtZero) {
  Fixture fx;
  auto acct = fx.account();
  auto life = fx.sensor(acct.account_id, "screen_time");
  auto r = fx.submit(life.api_key, "st1", 30.0, kT0 + kHour);
  EXPECT_EQ(r.status, ingest::SubmitStatus::Accepted);
  EXPECT_EQ(r.credited_mpt, -600);
  auto snap = fx.store->get_snapshot(acct.account_id, kT0 + kHour);
  EXPECT_EQ(snap.value().dims[int(twin::Dimension::Lifestyle)].effective_mpt, 0);
}

TEST(Readings, BatchKeepsOrderAndPartialSemantics) {
  Fixture fx;
  auto acct = fx.account();
  auto s = fx.sensor(acct.account_id, "pedometer");
  std::vector<ingest::SensorReading> rows(3);
  rows[0] = {"b1", "", 100.0, kT0 + kHour, {}};
  rows[1] = {"b2", "", -1.0, kT0 + kHour, {}};
  rows[2] = {"b3", "", 200.0, kT0 + kHour, {}};
  auto r = fx.gateway.submit_batch(s.api_key, rows, kT0 + kHour);
  ASSERT_TRUE(r.ok());
  ASSERT_EQ(r.value().size(), 3u);
  EXPECT_EQ(r.value()[0].status, ingest::SubmitStatus::Accepted);
  EXPECT_EQ(r.value()[1].status, ingest::SubmitStatus::ValidationFailed);
  EXPECT_EQ(r.value()[2].status, ingest::SubmitStatus::Accepted);
}

// ---------------------------------------------------------------------------
// fold examples
// ---------------------------------------------------------------------------

TEST(FoldExamples, SingleCreditScoreAtDefaultCap) {
  Fixture fx;
  auto acct = fx.account();
  auto s = fx.sensor(acct.account_id, "pedometer");
  fx.submit(s.api_key, "r1", 10000.0, kT0 + kHour);  // 100000 mpt
  auto snap = fx.store->get_snapshot(acct.account_id, kT0 + kHour);
  ASSERT_TRUE(snap.ok());
  EXPECT_EQ(snap.value().dims[int(twin::Dimension::Physical)].effective_mpt, 100000);
  EXPECT_DOUBLE_EQ(snap.value().dims[int(twin::Dimension::Physical)].score, 0.5);
}

// ---------------------------------------------------------------------------
// mechanics and redemption
// ---------------------------------------------------------------------------

struct GameFixture : Fixture {
  Store::GameHandle game;
  Store::AccountHandle acct;
  ingest::SensorDescriptor ped;

  GameFixture() {
    auto g = store->create_game(kT0);
    EXPECT_TRUE(g.ok());
    game = g.value();
    acct = account();
    ped = sensor(acct.account_id, "pedometer");
  }

  twin::MechanicBinding on_demand(const std::string& id, Millipoints cost) {
    twin::MechanicBinding b;
    b.mechanic_id = id;
    b.game_id = game.game_id;
    b.dimension = twin::Dimension::Physical;
    b.mode = twin::MechanicMode::OnDemand;
    b.cost_mpt = cost;
    return b;
  }
};

TEST(Mechanics, RegisterAndDuplicate) {
  GameFixture fx;
  EXPECT_TRUE(fx.store->register_mechanic(fx.game.game_id, fx.on_demand("dash", 30000), kT0).ok());
  auto dup = fx.store->register_mechanic(fx.game.game_id, fx.on_demand("dash", 30000), kT0);
  ASSERT_FALSE(dup.ok());
  EXPECT_EQ(dup.error().code, ErrorCode::DuplicateMechanic);
}

TEST(Mechanics, InvalidBindingsRejected) {
  GameFixture fx;
  auto bad = fx.on_demand("x", 0);
  EXPECT_FALSE(fx.store->register_mechanic(fx.game.game_id, bad, kT0).ok());
  twin::MechanicBinding p;
  p.mechanic_id = "speed";
  p.mode = twin::MechanicMode::Passive;
  p.modifier_lo = 0.8;
  p.modifier_hi = 1.2;
  p.cost_mpt = 5;  // PASSIVE with cost
  EXPECT_FALSE(fx.store->register_mechanic(fx.game.game_id, p, kT0).ok());
}

TEST(Redemption, GrantAndReplay) {
  GameFixture fx;
  fx.store->register_mechanic(fx.game.game_id, fx.on_demand("dash", 30000), kT0);
  fx.submit(fx.ped.api_key, "r1", 10000.0, kT0 + kHour);  // 100000 mpt

  auto first = fx.store->redeem(fx.game.game_id, "key-1", fx.acct.account_id, "dash",
                                std::nullopt, kT0 + kHour);
  ASSERT_TRUE(first.ok());
  EXPECT_EQ(first.value().result, RedemptionResult::Granted);
  EXPECT_FALSE(first.value().grant_token.empty());

  auto snap = fx.store->get_snapshot(fx.acct.account_id, kT0 + kHour);
  EXPECT_EQ(snap.value().dims[int(twin::Dimension::Physical)].effective_mpt, 70000);

  std::string body = first.value().to_json().dump();
  for (int i = 0; i < 100; ++i) {
    auto replay = fx.store->redeem(fx.game.game_id, "key-1", fx.acct.account_id, "dash",
                                   std::nullopt, kT0 + kHour);
    ASSERT_TRUE(replay.ok());
    EXPECT_EQ(replay.value().to_json().dump(), body);
  }
  snap = fx.store->get_snapshot(fx.acct.account_id, kT0 + kHour);
  EXPECT_EQ(snap.value().dims[int(twin::Dimension::Physical)].effective_mpt, 70000);
}

TEST(Redemption, InsufficientLeavesBalance) {
  GameFixture fx;
  fx.store->register_mechanic(fx.game.game_id, fx.on_demand("dash", 30000), kT0);
  fx.submit(fx.ped.api_key, "r1", 1000.0, kT0 + kHour);  // 10000 mpt

  auto r = fx.store->redeem(fx.game.game_id, "key-1", fx.acct.account_id, "dash", std::nullopt,
                            kT0 + kHour);
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(r.value().result, RedemptionResult::Insufficient);
  EXPECT_EQ(r.value().effective_mpt, 10000);
  auto snap = fx.store->get_snapshot(fx.acct.account_id, kT0 + kHour);
  EXPECT_EQ(snap.value().dims[int(twin::Dimension::Physical)].effective_mpt, 10000);
}

TEST(Redemption, DecayedFullDrain) {
  // credit 100000 at t0, redeem 50000 one half-life later: effective 0
  GameFixture fx;
  fx.store->register_mechanic(fx.game.game_id, fx.on_demand("big", 50000), kT0);
  fx.submit(fx.ped.api_key, "r1", 10000.0, kT0 + kHour);
  auto r = fx.store->redeem(fx.game.game_id, "k", fx.acct.account_id, "big", std::nullopt,
                            kT0 + kHour + 72 * kHour);
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(r.value().result, RedemptionResult::Granted);
  auto snap = fx.store->get_snapshot(fx.acct.account_id, kT0 + kHour + 72 * kHour);
  EXPECT_EQ(snap.value().dims[int(twin::Dimension::Physical)].effective_mpt, 0);
}

TEST(Redemption, KeyPayloadMismatch) {
  GameFixture fx;
  fx.store->register_mechanic(fx.game.game_id, fx.on_demand("dash", 30000), kT0);
  fx.store->register_mechanic(fx.game.game_id, fx.on_demand("jump", 10000), kT0);
  fx.submit(fx.ped.api_key, "r1", 10000.0, kT0 + kHour);
  ASSERT_TRUE(fx.store
                  ->redeem(fx.game.game_id, "key-1", fx.acct.account_id, "dash", std::nullopt,
                           kT0 + kHour)
                  .ok());
  auto mismatch = fx.store->redeem(fx.game.game_id, "key-1", fx.acct.account_id, "jump",
                                   std::nullopt, kT0 + kHour);
  ASSERT_FALSE(mismatch.ok());
  EXPECT_EQ(mismatch.error().code, ErrorCode::KeyPayloadMismatch);
}

TEST(Redemption, ErrorsForBadMechanics) {
  GameFixture fx;
  auto unknown = fx.store->redeem(fx.game.game_id, "k1", fx.acct.account_id, "nope",
                                  std::nullopt, kT0);
  EXPECT_EQ(unknown.error().code, ErrorCode::UnknownMechanic);

  twin::MechanicBinding p;
  p.mechanic_id = "speed";
  p.mode = twin::MechanicMode::Passive;
  p.modifier_lo = 0.8;
  p.modifier_hi = 1.2;
  fx.store->register_mechanic(fx.game.game_id, p, kT0);
  auto not_od = fx.store->redeem(fx.game.game_id, "k2", fx.acct.account_id, "speed",
                                 std::nullopt, kT0);
  EXPECT_EQ(not_od.error().code, ErrorCode::NotOnDemand);
}

TEST(Redemption, ServerPricedAmount) {
  GameFixture fx;
  fx.store->register_mechanic(fx.game.game_id, fx.on_demand("dash", 30000), kT0);
  fx.submit(fx.ped.api_key, "r1", 10000.0, kT0 + kHour);
  auto wrong = fx.store->redeem(fx.game.game_id, "k1", fx.acct.account_id, "dash",
                                Millipoints{1}, kT0 + kHour);
  ASSERT_FALSE(wrong.ok());
  EXPECT_EQ(wrong.error().code, ErrorCode::ValidationFailed);
  auto right = fx.store->redeem(fx.game.game_id, "k1", fx.acct.account_id, "dash",
                                Millipoints{30000}, kT0 + kHour);
  EXPECT_TRUE(right.ok());
}

TEST(Redemption, ConcurrentReplaysDebitOnce) {
  GameFixture fx;
  fx.store->register_mechanic(fx.game.game_id, fx.on_demand("dash", 30000), kT0);
  fx.submit(fx.ped.api_key, "r1", 10000.0, kT0 + kHour);

  constexpr int kThreads = 32;
  std::vector<std::thread> threads;
  std::vector<std::string> bodies(kThreads);
  for (int i = 0; i < kThreads; ++i) {
    threads.emplace_back([&, i] {
      auto r = fx.store->redeem(fx.game.game_id, "storm", fx.acct.account_id, "dash",
                                std::nullopt, kT0 + kHour);
      ASSERT_TRUE(r.ok());
      bodies[i] = r.value().to_json().dump();
    });
  }
  for (auto& t : threads) t.join();
  for (int i = 1; i < kThreads; ++i) EXPECT_EQ(bodies[i], bodies[0]);
  auto snap = fx.store->get_snapshot(fx.acct.account_id, kT0 + kHour);
  EXPECT_EQ(snap.value().dims[int(twin::Dimension::Physical)].effective_mpt, 70000);
}

// ---------------------------------------------------------------------------
// event log
// ---------------------------------------------------------------------------

TEST(EventLog, PaginationWalksDenseSequence) {
  Fixture fx;
  auto acct = fx.account();
  auto s = fx.sensor(acct.account_id, "pedometer");
  for (int i = 0; i < 30; ++i)
    fx.submit(s.api_key, "r" + std::to_string(i), 1.0, kT0 + kHour + i * 1000);

  auto p1 = fx.store->list_events(acct.account_id, 0, 10);
  ASSERT_TRUE(p1.ok());
  EXPECT_EQ(p1.value().lines.size(), 10u);
  EXPECT_EQ(p1.value().next_seq, 10);
  auto p2 = fx.store->list_events(acct.account_id, p1.value().next_seq, 10);
  EXPECT_EQ(p2.value().lines.size(), 10u);

  std::int64_t expected = 1;
  auto page = fx.store->list_events(acct.account_id, 0, 1000);
  for (const auto& line : page.value().lines) {
    auto ev = LedgerEvent::from_line(line);
    ASSERT_TRUE(ev.ok());
    EXPECT_EQ(ev.value().seq, expected++);
  }

  auto beyond = fx.store->list_events(acct.account_id, 9999, 10);
  EXPECT_TRUE(beyond.value().lines.empty());
  EXPECT_EQ(beyond.value().next_seq, 9999);
}

TEST(EventLog, ConcurrentAppendsStayDense) {
  Fixture fx;
  auto acct = fx.account();
  auto s1 = fx.sensor(acct.account_id, "pedometer");
  auto s2 = fx.sensor(acct.account_id, "pedometer");
  std::thread t1([&] {
    for (int i = 0; i < 50; ++i) fx.submit(s1.api_key, "a" + std::to_string(i), 1.0, kT0 + kHour);
  });
  std::thread t2([&] {
    for (int i = 0; i < 50; ++i) fx.submit(s2.api_key, "b" + std::to_string(i), 1.0, kT0 + kHour);
  });
  t1.join();
  t2.join();
  auto page = fx.store->list_events(acct.account_id, 0, 1000);
  std::set<std::int64_t> seqs;
  for (const auto& line : page.value().lines) {
    auto ev = LedgerEvent::from_line(line);
    ASSERT_TRUE(ev.ok());
    seqs.insert(ev.value().seq);
  }
  EXPECT_EQ(seqs.size(), 103u);  // create + 2 sensors + 100 readings
  EXPECT_EQ(*seqs.begin(), 1);
  EXPECT_EQ(*seqs.rbegin(), 103);
}

// ---------------------------------------------------------------------------
// rebuild and reload
// ---------------------------------------------------------------------------

TEST(Rebuild, MatchesLiveState) {
  GameFixture fx;
  fx.store->register_mechanic(fx.game.game_id, fx.on_demand("dash", 30000), kT0);
  fx.submit(fx.ped.api_key, "r1", 10000.0, kT0 + kHour);
  fx.submit(fx.ped.api_key, "r2", 2500.0, kT0 + 30 * kHour);
  fx.store->redeem(fx.game.game_id, "k1", fx.acct.account_id, "dash", std::nullopt,
                   kT0 + 31 * kHour);

  auto live = fx.store->get_snapshot(fx.acct.account_id, kT0 + 40 * kHour);
  ASSERT_TRUE(live.ok());
  auto rebuilt = fx.store->rebuild(fx.acct.account_id, kT0 + 40 * kHour);
  ASSERT_TRUE(rebuilt.ok());
  EXPECT_EQ(live.value().to_json().dump(), rebuilt.value().to_json().dump());
}

TEST(Rebuild, FreshStoreReloadsEverything) {
  test::TempDir dir;
  std::string account_id, owner_token, api_key, game_id;
  {
    auto store = Fixture::open_store(dir.path());
    ingest::Gateway gw(*store, compose::RuleCatalog::built_in_defaults(), {});
    auto acct = store->create_account(kT0);
    account_id = acct.value().account_id;
    owner_token = acct.value().owner_token;
    auto game = store->create_game(kT0);
    game_id = game.value().game_id;
    auto s = gw.register_sensor(account_id, "pedometer", ingest::SensorOrigin::PhysicalDevice, kT0);
    api_key = s.value().api_key;
    ingest::SensorReading reading{"r1", "", 1000.0, kT0 + kHour, {}};
    gw.submit_reading(api_key, reading, kT0 + kHour);
  }
  auto store = Fixture::open_store(dir.path());
  auto p = store->resolve_token(owner_token);
  ASSERT_TRUE(p.has_value());
  EXPECT_EQ(p->id, account_id);
  EXPECT_TRUE(store->game_exists(game_id));
  auto snap = store->get_snapshot(account_id, kT0 + kHour);
  ASSERT_TRUE(snap.ok());
  EXPECT_EQ(snap.value().dims[int(twin::Dimension::Physical)].effective_mpt, 10000);
  // dedup survives reload
  ingest::Gateway gw(*store, compose::RuleCatalog::built_in_defaults(), {});
  ingest::SensorReading reading{"r1", "", 1000.0, kT0 + kHour, {}};
  auto dup = gw.submit_reading(api_key, reading, kT0 + kHour);
  ASSERT_TRUE(dup.ok());
  EXPECT_EQ(dup.value().status, ingest::SubmitStatus::Duplicate);
}

TEST(Rebuild, GapInSequenceIsCorrupt) {
  test::TempDir dir;
  std::string account_id;
  std::string path;
  {
    auto store = Fixture::open_store(dir.path());
    ingest::Gateway gw(*store, compose::RuleCatalog::built_in_defaults(), {});
    auto acct = store->create_account(kT0);
    account_id = acct.value().account_id;
    auto s = gw.register_sensor(account_id, "pedometer", ingest::SensorOrigin::PhysicalDevice, kT0);
    ingest::SensorReading reading{"r1", "", 100.0, kT0 + kHour, {}};
    gw.submit_reading(s.value().api_key, reading, kT0 + kHour);
    path = dir.path() + "/" + account_id + ".log";
  }
  // drop the middle line: seq gap at 2
  std::ifstream in(path);
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  in.close();
  ASSERT_EQ(lines.size(), 3u);
  std::ofstream out(path, std::ios::trunc);
  out << lines[0] << "\n" << lines[2] << "\n";
  out.close();

  StoreOptions opts;
  opts.data_dir = dir.path();
  auto reopened = Store::open(std::move(opts));
  ASSERT_FALSE(reopened.ok());
  EXPECT_EQ(reopened.error().code, ErrorCode::CorruptLog);
  ASSERT_TRUE(reopened.error().detail.has_value());
  EXPECT_EQ(*reopened.error().detail, 2);
}

TEST(Rebuild, TornFinalLineIsDropped) {
  test::TempDir dir;
  std::string account_id;
  std::string path;
  {
    auto store = Fixture::open_store(dir.path());
    auto acct = store->create_account(kT0);
    account_id = acct.value().account_id;
    path = dir.path() + "/" + account_id + ".log";
  }
  {
    std::ofstream out(path, std::ios::app);
    out << R"({"kind":"SENSOR_REG)";  // crash mid-write, no newline
  }
  auto store = Fixture::open_store(dir.path());
  auto snap = store->get_snapshot(account_id, kT0);
  ASSERT_TRUE(snap.ok());
  EXPECT_EQ(snap.value().last_seq, 1);
}

TEST(Rebuild, InteriorGarbageIsCorrupt) {
  test::TempDir dir;
  std::string account_id, path;
  {
    auto store = Fixture::open_store(dir.path());
    auto acct = store->create_account(kT0);
    account_id = acct.value().account_id;
    path = dir.path() + "/" + account_id + ".log";
    ingest::Gateway gw(*store, compose::RuleCatalog::built_in_defaults(), {});
    gw.register_sensor(account_id, "pedometer", ingest::SensorOrigin::PhysicalDevice, kT0);
  }
  std::ifstream in(path);
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  in.close();
  std::ofstream out(path, std::ios::trunc);
  out << lines[0] << "\n" << "garbage not json\n" << lines[1] << "\n";
  out.close();

  StoreOptions opts;
  opts.data_dir = dir.path();
  EXPECT_FALSE(Store::open(std::move(opts)).ok());
}

}  // namespace
