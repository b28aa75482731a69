#pragma once

#include <cstdint>
#include <mutex>
#include <random>
#include <string>

namespace lsg {

// Generates opaque identifiers and bearer tokens. Thread-safe.
//
// Identifiers are 26 chars: one role prefix ('a' account, 'g' game,
// 's' sensor, 'k' idempotency key, 'r' grant) + 25 random base32 chars.
// Tokens are 43 chars of URL-safe base64 alphabet (~256 bits).
class IdGenerator {
 public:
  IdGenerator() : rng_(std::random_device{}()) {}
  explicit IdGenerator(std::uint64_t seed) : rng_(seed) {}

  std::string id(char prefix) {
    std::string out;
    out.reserve(26);
    out.push_back(prefix);
    append_base32(out, 25);
    return out;
  }

  std::string token() {
    static constexpr char kAlphabet[] =
        "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789-_";
    std::string out;
    out.reserve(43);
    std::lock_guard<std::mutex> lock(mu_);
    for (int i = 0; i < 43; ++i) out.push_back(kAlphabet[rng_() & 63]);
    return out;
  }

 private:
  void append_base32(std::string& out, int n) {
    static constexpr char kAlphabet[] = "0123456789abcdefghjkmnpqrstvwxyz";
    std::lock_guard<std::mutex> lock(mu_);
    for (int i = 0; i < n; ++i) out.push_back(kAlphabet[rng_() & 31]);
  }

  std::mutex mu_;
  std::mt19937_64 rng_;
};

}  // namespace lsg
