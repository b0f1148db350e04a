#include "reqrag/resilience.hpp"

#include "reqrag/error.hpp"

#include <cmath>
#include <thread>

namespace reqrag {

TimePoint SystemClock::now() const {
    return std::chrono::time_point_cast<Duration>(std::chrono::steady_clock::now());
}

void SystemClock::sleep_for(Duration d) { std::this_thread::sleep_for(d); }

std::int64_t SystemClock::epoch_ms() const {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

TimePoint ManualClock::now() const {
    std::lock_guard lock(mutex_);
    return now_;
}

void ManualClock::sleep_for(Duration d) {
    std::lock_guard lock(mutex_);
    sleeps_.push_back(d);
    now_ += d;
}

std::int64_t ManualClock::epoch_ms() const {
    std::lock_guard lock(mutex_);
    return now_.time_since_epoch().count();
}

void ManualClock::advance(Duration d) {
    std::lock_guard lock(mutex_);
    now_ += d;
}

std::vector<Duration> ManualClock::sleeps() const {
    std::lock_guard lock(mutex_);
    return sleeps_;
}

void RetryPolicy::validate() const {
    if (initial_delay.count() < 0) throw ConfigError("retry: initial_delay must be >= 0");
    if (initial_delay > max_delay) throw ConfigError("retry: initial_delay must not exceed max_delay");
    if (!(multiplier > 1.0)) throw ConfigError("retry: multiplier must be > 1");
    if (max_attempts == 0) throw ConfigError("retry: max_attempts must be >= 1");
}

Duration RetryPolicy::delay_after(std::size_t failed_attempts) const {
    if (failed_attempts == 0) return Duration{0};
    const double scaled = static_cast<double>(initial_delay.count()) *
                          std::pow(multiplier, static_cast<double>(failed_attempts - 1));
    if (!(scaled < static_cast<double>(max_delay.count()))) return max_delay;
    return Duration{static_cast<Duration::rep>(std::llround(scaled))};
}

const char* to_string(BreakerState s) noexcept {
    switch (s) {
        case BreakerState::closed: return "closed";
        case BreakerState::open: return "open";
        case BreakerState::half_open: return "half_open";
    }
    return "closed";
}

void BreakerParams::validate() const {
    if (failure_threshold == 0) throw ConfigError("breaker: failure_threshold must be >= 1");
    if (open_cooldown.count() < 0) throw ConfigError("breaker: open_cooldown must be >= 0");
}

CircuitBreaker::CircuitBreaker(BreakerParams params) : params_(params) { params_.validate(); }

bool CircuitBreaker::allow_request(TimePoint now) {
    std::lock_guard lock(mutex_);
    switch (s_.state) {
        case BreakerState::closed:
            return true;
        case BreakerState::open:
            if (now - s_.opened_at < params_.open_cooldown) return false;
            s_.state = BreakerState::half_open;
            s_.probe_in_flight = true;
            return true;
        case BreakerState::half_open:
            if (s_.probe_in_flight) return false;
            s_.probe_in_flight = true;
            return true;
    }
    return false;
}

void CircuitBreaker::record_success() {
    std::lock_guard lock(mutex_);
    s_.state = BreakerState::closed;
    s_.consecutive_failures = 0;
    s_.probe_in_flight = false;
}

void CircuitBreaker::record_failure(TimePoint now) {
    std::lock_guard lock(mutex_);
    ++s_.consecutive_failures;
    if (s_.state == BreakerState::half_open) {
        s_.state = BreakerState::open;
        s_.opened_at = now;
        s_.probe_in_flight = false;
        return;
    }
    if (s_.state == BreakerState::closed && s_.consecutive_failures >= params_.failure_threshold) {
        s_.state = BreakerState::open;
        s_.opened_at = now;
    }
}

CircuitBreaker::Snapshot CircuitBreaker::snapshot() const {
    std::lock_guard lock(mutex_);
    return s_;
}

BreakerState CircuitBreaker::state(TimePoint now) const {
    std::lock_guard lock(mutex_);
    if (s_.state == BreakerState::open && now - s_.opened_at >= params_.open_cooldown) {
        return BreakerState::half_open;
    }
    return s_.state;
}

CircuitBreaker& BreakerRegistry::get(const std::string& provider_id) {
    std::lock_guard lock(mutex_);
    auto& slot = breakers_[provider_id];
    if (!slot) slot = std::make_unique<CircuitBreaker>(params_);
    return *slot;
}

std::map<std::string, BreakerState> BreakerRegistry::states(TimePoint now) const {
    std::lock_guard lock(mutex_);
    std::map<std::string, BreakerState> out;
    for (const auto& [id, b] : breakers_) out.emplace(id, b->state(now));
    return out;
}

}  // namespace reqrag
