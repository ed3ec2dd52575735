#pragma once

//
// common.hpp — error reporting and deterministic randomness shared by all
// modules.
//

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace sst {

// ─── Status / errors ─────────────────────────────────────────────────────────

// Status values double as CLI exit codes and C-API return codes.
enum class Status : int {
    ok = 0,
    runtime = 1,        // I/O failure, model failure, divergence, ...
    validation = 2,     // bad input data or configuration
    strict_drop = 3,    // strict mode refused a sample with dropped tokens
    not_applicable = 4, // sample cannot be built; caller should resample
};

// The one exception type the library throws. Carries a Status so the C API
// and the CLI can map failures onto exit codes without string matching.
class Error : public std::runtime_error {
  public:
    Error(Status status, const std::string &msg)
        : std::runtime_error(msg), status_(status) {}

    Status status() const { return status_; }

  private:
    Status status_;
};

[[noreturn]] inline void fail_validation(const std::string &msg) {
    throw Error(Status::validation, msg);
}

[[noreturn]] inline void fail_runtime(const std::string &msg) {
    throw Error(Status::runtime, msg);
}

// ─── Deterministic RNG ───────────────────────────────────────────────────────

// mt19937_64 output is pinned bit-for-bit by the standard, but the standard
// *distributions* are not; identical seeds must give identical corpora on any
// toolchain, so the draw algorithms live here instead.
class Rng {
  public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1) with 53 random bits (every double in range reachable).
    double real() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    // Uniform real in [lo, hi).
    double uniform(double lo, double hi) { return lo + real() * (hi - lo); }

    // Uniform integer in [lo, hi], inclusive, by rejection (no modulo bias).
    int64_t uniform_int(int64_t lo, int64_t hi) {
        if (lo > hi)
            fail_validation("uniform_int: empty range");
        uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        if (span == 0) // full 64-bit range
            return static_cast<int64_t>(gen_());
        uint64_t limit = UINT64_MAX - UINT64_MAX % span;
        uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return lo + static_cast<int64_t>(x % span);
    }

    bool bernoulli(double p) { return real() < p; }

    // Standard normal via Box–Muller; the paired draw is cached.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1, u2;
        do {
            u1 = real();
        } while (u1 <= 0.0);
        u2 = real();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

  private:
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace sst
