#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace reqrag {

using Duration = std::chrono::milliseconds;
using TimePoint = std::chrono::time_point<std::chrono::steady_clock, Duration>;

// Time source injected into everything that waits, so tests run instantly.
class Clock {
public:
    virtual ~Clock() = default;
    virtual TimePoint now() const = 0;
    virtual void sleep_for(Duration d) = 0;
    // Milliseconds since the Unix epoch for timestamps that leave the process.
    virtual std::int64_t epoch_ms() const = 0;
};

class SystemClock final : public Clock {
public:
    TimePoint now() const override;
    void sleep_for(Duration d) override;
    std::int64_t epoch_ms() const override;
};

// Simulated clock: sleep_for advances time and records the request.
class ManualClock final : public Clock {
public:
    TimePoint now() const override;
    void sleep_for(Duration d) override;
    std::int64_t epoch_ms() const override;
    void advance(Duration d);
    std::vector<Duration> sleeps() const;

private:
    mutable std::mutex mutex_;
    TimePoint now_{};
    std::vector<Duration> sleeps_;
};

struct RetryPolicy {
    Duration initial_delay{1000};
    double multiplier = 2.0;
    Duration max_delay{30000};
    std::size_t max_attempts = 4;

    void validate() const;
    // Delay after the n-th failed attempt (n >= 1): initial * multiplier^(n-1), clipped to max_delay.
    Duration delay_after(std::size_t failed_attempts) const;
};

enum class BreakerState { closed, open, half_open };

const char* to_string(BreakerState s) noexcept;

struct BreakerParams {
    std::size_t failure_threshold = 5;
    Duration open_cooldown{60000};

    void validate() const;
};

// Closed -> open after `failure_threshold` consecutive failures. Open -> half-open
// once the cooldown has elapsed; half-open admits exactly one probe, whose
// success closes the breaker and whose failure re-opens it with a fresh cooldown.
// All methods are thread-safe.
class CircuitBreaker {
public:
    explicit CircuitBreaker(BreakerParams params = {});

    // Whether a call may proceed now. Claims the single probe slot in half-open.
    bool allow_request(TimePoint now);
    void record_success();
    void record_failure(TimePoint now);

    struct Snapshot {
        BreakerState state = BreakerState::closed;
        std::size_t consecutive_failures = 0;
        TimePoint opened_at{};
        bool probe_in_flight = false;
    };
    Snapshot snapshot() const;
    // Current state without claiming a probe; reports half_open once cooldown elapsed.
    BreakerState state(TimePoint now) const;

private:
    BreakerParams params_;
    mutable std::mutex mutex_;
    Snapshot s_;
};

// Per-provider breakers, created on first use.
class BreakerRegistry {
public:
    explicit BreakerRegistry(BreakerParams params = {}) : params_(params) {}
    CircuitBreaker& get(const std::string& provider_id);
    std::map<std::string, BreakerState> states(TimePoint now) const;

private:
    BreakerParams params_;
    mutable std::mutex mutex_;
    std::map<std::string, std::unique_ptr<CircuitBreaker>> breakers_;
};

}  // namespace reqrag
