#pragma once

#include "reqrag/error.hpp"
#include "reqrag/fusion.hpp"
#include "reqrag/resilience.hpp"
#include "reqrag/tokenizer.hpp"

#include <atomic>
#include <cstdint>
#include <deque>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace reqrag {

// ---------------------------------------------------------------------------
// Complexity scoring

struct ComplexityFeatures {
    std::size_t query_token_count = 0;
    std::size_t entity_count = 0;
    std::size_t cross_reference_count = 0;
    double expected_verbosity = 0.0;  // [0, 1]
    std::size_t context_chunk_count = 0;

    bool operator==(const ComplexityFeatures&) const = default;
};

// Extraction rules: tokens come from the lexical tokenizer; entities are
// tokens that are dictionary entries; cross references are regex matches;
// verbosity is the highest weight among intent keywords present (0 if none).
class FeatureExtractor {
public:
    FeatureExtractor();  // default reference patterns and intent keywords

    void set_reference_patterns(const std::vector<std::string>& patterns);
    void set_intent_keywords(std::map<std::string, double> keywords);

    ComplexityFeatures extract(std::string_view query, std::size_t context_chunks,
                               const DomainDictionary& dict) const;

    static std::vector<std::string> default_reference_patterns();
    static std::map<std::string, double> default_intent_keywords();

private:
    std::vector<std::regex> patterns_;
    std::map<std::string, double> keywords_;
};

ComplexityFeatures extract_features(std::string_view query, const std::vector<RetrievalCandidate>& context,
                                    const DomainDictionary& dict);

class ComplexityClassifier {
public:
    virtual ~ComplexityClassifier() = default;
    // Result lies in [0, 1].
    virtual double score(const ComplexityFeatures& f) const = 0;
};

// Clipped weighted sum of saturating feature terms. All weights are
// non-negative, so the score is monotone in every feature.
//
//   feature             saturation   weight
//   query tokens        40           0.20
//   entities            5            0.25
//   cross references    3            0.25
//   verbosity           1            0.20
//   context chunks      20           0.10
class WeightedRuleClassifier final : public ComplexityClassifier {
public:
    struct Term {
        double weight;
        double saturation;
    };
    struct Weights {
        Term tokens{0.20, 40.0};
        Term entities{0.25, 5.0};
        Term cross_references{0.25, 3.0};
        Term verbosity{0.20, 1.0};
        Term context{0.10, 20.0};
    };

    WeightedRuleClassifier();
    explicit WeightedRuleClassifier(Weights w);
    double score(const ComplexityFeatures& f) const override;

private:
    Weights w_;
};

// ---------------------------------------------------------------------------
// Routing

// Money in nano-dollars so ledger arithmetic is exact.
struct Money {
    std::int64_t nanos = 0;

    static Money from_dollars(double dollars);
    double dollars() const noexcept { return static_cast<double>(nanos) / 1e9; }
    std::string to_string() const;  // "$0.0098"

    Money& operator+=(Money o) noexcept {
        nanos += o.nanos;
        return *this;
    }
    friend Money operator+(Money a, Money b) noexcept { return a += b; }
    auto operator<=>(const Money&) const = default;
};

struct ProviderTier {
    int tier_id = 1;
    std::string provider_id;
    std::string model_id;
    Money rate_per_1k_tokens;
    std::vector<std::string> fallback_chain;
};

struct RoutingPolicy {
    double t_low = 0.4;
    double t_high = 0.7;
    std::vector<ProviderTier> tiers;  // exactly three, ascending rate

    void validate() const;
    static RoutingPolicy defaults();
};

struct RoutingDecision {
    int tier_id = 1;
    std::string provider_id;
    std::string model_id;
    Money rate_per_1k_tokens;
    std::vector<std::string> fallback_chain;
    double complexity = 0.0;
};

// score < t_low -> tier 1, t_low <= score < t_high -> tier 2, score >= t_high -> tier 3.
RoutingDecision route(double score, const RoutingPolicy& policy);

// ---------------------------------------------------------------------------
// Providers

struct GenerationRequest {
    std::string model_id;
    std::string prompt;
    std::vector<std::string> context;
};

struct ProviderResponse {
    std::string text;
    std::size_t tokens_in = 0;
    std::size_t tokens_out = 0;
    std::optional<double> self_confidence;
};

class LlmProvider {
public:
    virtual ~LlmProvider() = default;
    virtual const std::string& provider_id() const = 0;
    virtual const std::string& default_model() const = 0;
    // Whether repeated calls with the same request return the same text.
    virtual bool deterministic() const { return false; }
    // Throws ProviderError on failure.
    virtual ProviderResponse generate(const GenerationRequest& request) = 0;
};

// Scriptable provider for tests and offline runs. Each call consumes the next
// scripted outcome; delay steps sleep on the injected clock and then continue
// to the following step. With an exhausted script it answers by echoing the first
// sentence of the leading context, which makes it deterministic.
class MockProvider final : public LlmProvider {
public:
    struct Succeed {
        std::string text;
        std::size_t tokens_in = 0;
        std::size_t tokens_out = 0;
    };
    struct Fail {
        std::string kind = "unavailable";
    };
    struct Delay {
        Duration duration{0};
    };
    using Step = std::variant<Succeed, Fail, Delay>;

    MockProvider(std::string provider_id, std::string model_id, Clock* clock = nullptr);

    void script(std::vector<Step> steps);
    void push(Step step);

    const std::string& provider_id() const override { return id_; }
    const std::string& default_model() const override { return model_; }
    bool deterministic() const override { return true; }
    ProviderResponse generate(const GenerationRequest& request) override;

    std::size_t calls() const noexcept { return calls_.load(); }

private:
    std::string id_;
    std::string model_;
    Clock* clock_;
    std::mutex mutex_;
    std::deque<Step> steps_;
    std::atomic<std::size_t> calls_{0};
};

// POST {path} {"model_id", "prompt", "context": [...]} -> {"text", "tokens_in", "tokens_out"}
class HttpLlmProvider final : public LlmProvider {
public:
    HttpLlmProvider(std::string provider_id, std::string model_id, std::string base_url,
                    std::string path = "/generate", std::string api_key = {}, int timeout_seconds = 60);

    const std::string& provider_id() const override { return id_; }
    const std::string& default_model() const override { return model_; }
    ProviderResponse generate(const GenerationRequest& request) override;

private:
    std::string id_;
    std::string model_;
    std::string base_url_;
    std::string path_;
    std::string api_key_;
    int timeout_seconds_;
};

// ---------------------------------------------------------------------------
// Execution

struct AttemptRecord {
    std::string provider_id;
    enum class Outcome { success, failure, skipped_open_breaker } outcome = Outcome::success;
    std::string detail;
    Duration delay_before{0};
};

struct GenerationResult {
    std::string text;
    std::string provider_id;
    std::string model_id;
    std::size_t tokens_in = 0;
    std::size_t tokens_out = 0;
    std::size_t attempts = 0;  // provider invocations across the whole chain
    std::int64_t started_at_ms = 0;
    std::int64_t finished_at_ms = 0;
    std::optional<double> self_confidence;
    std::vector<AttemptRecord> trace;

    bool operator==(const GenerationResult& o) const {
        return text == o.text && provider_id == o.provider_id && model_id == o.model_id &&
               tokens_in == o.tokens_in && tokens_out == o.tokens_out && attempts == o.attempts &&
               started_at_ms == o.started_at_ms && finished_at_ms == o.finished_at_ms &&
               self_confidence == o.self_confidence;
    }
};

class AllProvidersFailedError : public Error {
public:
    struct Cause {
        std::string provider_id;
        std::string reason;
    };
    explicit AllProvidersFailedError(std::vector<Cause> causes);
    const std::vector<Cause>& causes() const noexcept { return causes_; }

private:
    std::vector<Cause> causes_;
};

using ProviderRegistry = std::map<std::string, std::shared_ptr<LlmProvider>>;

// Tries the decision's provider, then each fallback, with exponential backoff
// between attempts on the same provider. Providers whose breaker is open are
// skipped without being called. Throws AllProvidersFailedError when the chain
// is exhausted.
GenerationResult execute_with_fallback(const GenerationRequest& request, const RoutingDecision& decision,
                                       const RetryPolicy& retry, BreakerRegistry& breakers,
                                       const ProviderRegistry& providers, Clock& clock);

// ---------------------------------------------------------------------------
// Cost accounting

struct LedgerEntry {
    std::string query_id;
    int tier_id = 1;
    std::string provider_id;
    std::size_t tokens_in = 0;
    std::size_t tokens_out = 0;
    Money unit_rate;
    Money cost;
};

// (tokens / 1000) * rate, rounded half-up to the nano-dollar.
Money token_cost(std::size_t tokens, Money rate_per_1k);

// Thread-safe append-only cost ledger.
class CostLedger {
public:
    LedgerEntry record(const std::string& query_id, const GenerationResult& result,
                       const RoutingDecision& decision);
    std::vector<LedgerEntry> entries() const;
    Money total() const;
    std::map<int, Money> totals_by_tier() const;
    std::map<int, std::size_t> count_by_tier() const;
    std::size_t size() const;

    // Tab-separated: query_id tier provider tokens_in tokens_out rate cost.
    void export_lines(std::ostream& out) const;

private:
    mutable std::mutex mutex_;
    std::vector<LedgerEntry> entries_;
    std::map<int, Money> totals_;
    std::map<int, std::size_t> counts_;
};

// One export line without the trailing newline, and its inverse.
std::string ledger_line(const LedgerEntry& entry);
LedgerEntry parse_ledger_line(std::string_view line, std::size_t lineno = 0);

// Free-function form used by tests and the CLI.
LedgerEntry record_cost(const std::string& query_id, const GenerationResult& result,
                        const RoutingDecision& decision, CostLedger& ledger);

// ---------------------------------------------------------------------------
// Facade

std::string build_prompt(std::string_view query, const std::vector<std::string>& context);

struct OrchestratedAnswer {
    ComplexityFeatures features;
    RoutingDecision decision;
    GenerationResult generation;
    std::string prompt;
    LedgerEntry cost;
};

// Shared across concurrent queries; the breaker registry and ledger are the
// only mutable state.
class Orchestrator {
public:
    Orchestrator(RoutingPolicy policy, RetryPolicy retry, BreakerParams breaker, ProviderRegistry providers,
                 std::shared_ptr<Clock> clock, std::shared_ptr<const ComplexityClassifier> classifier = nullptr,
                 FeatureExtractor extractor = {});

    OrchestratedAnswer answer(const std::string& query_id, std::string_view query,
                              const std::vector<std::string>& context, const DomainDictionary& dict);

    const RoutingPolicy& policy() const noexcept { return policy_; }
    const CostLedger& ledger() const noexcept { return ledger_; }
    CostLedger& ledger() noexcept { return ledger_; }
    const BreakerRegistry& breakers() const noexcept { return breakers_; }
    const ProviderRegistry& providers() const noexcept { return providers_; }
    Clock& clock() noexcept { return *clock_; }

private:
    RoutingPolicy policy_;
    RetryPolicy retry_;
    BreakerRegistry breakers_;
    ProviderRegistry providers_;
    std::shared_ptr<Clock> clock_;
    std::shared_ptr<const ComplexityClassifier> classifier_;
    FeatureExtractor extractor_;
    CostLedger ledger_;
};

}  // namespace reqrag
