#include "reqrag/orchestrator.hpp"

#include <httplib.h>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <set>
#include <sstream>

namespace reqrag {

namespace {

double saturate(double value, double at) { return at > 0.0 ? std::min(value / at, 1.0) : 0.0; }

std::size_t word_count(std::string_view text) {
    std::size_t n = 0;
    bool in_word = false;
    for (unsigned char c : text) {
        const bool space = std::isspace(c) != 0;
        if (!space && !in_word) ++n;
        in_word = !space;
    }
    return n;
}

// First sentence of the first line that has one; heading lines are skipped.
std::string first_sentence(std::string_view text, std::size_t max_chars) {
    std::string_view pick = text.substr(0, text.find('\n'));
    for (std::size_t pos = 0; pos < text.size();) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        const std::string_view line = text.substr(pos, nl - pos);
        if (line.find_first_of(".!?") != std::string_view::npos) {
            pick = line;
            break;
        }
        pos = nl + 1;
    }
    std::size_t end = pick.find_first_of(".!?");
    end = end == std::string_view::npos ? pick.size() : end + 1;
    return std::string(pick.substr(0, std::min(end, max_chars)));
}

}  // namespace

// ---------------------------------------------------------------------------
// Features

FeatureExtractor::FeatureExtractor() {
    set_reference_patterns(default_reference_patterns());
    keywords_ = default_intent_keywords();
}

std::vector<std::string> FeatureExtractor::default_reference_patterns() {
    return {
        R"((\xC2\xA7|\bsection|\bclause|\bchapter)\s*\d+(\.\d+)*)",
        R"(\b(MBN|BQF|ISO|IEC|DIN|VDA|EN)\s?\d{3,6}(-\d+)*)",
    };
}

std::map<std::string, double> FeatureExtractor::default_intent_keywords() {
    return {{"list", 0.1},      {"extract", 0.1},   {"find", 0.1},     {"show", 0.1},
            {"identify", 0.2},  {"which", 0.2},     {"summarize", 0.5}, {"summarise", 0.5},
            {"describe", 0.5},  {"outline", 0.5},   {"explain", 0.7},  {"why", 0.7},
            {"assess", 0.8},    {"impact", 0.8},    {"compare", 0.9},  {"analyze", 0.9},
            {"analyse", 0.9},   {"evaluate", 0.9},  {"justify", 0.9},  {"implications", 0.9}};
}

void FeatureExtractor::set_reference_patterns(const std::vector<std::string>& patterns) {
    std::vector<std::regex> compiled;
    for (const auto& p : patterns) {
        try {
            compiled.emplace_back(p, std::regex::ECMAScript | std::regex::icase);
        } catch (const std::regex_error& e) {
            throw ConfigError("invalid cross-reference pattern '" + p + "': " + e.what());
        }
    }
    patterns_ = std::move(compiled);
}

void FeatureExtractor::set_intent_keywords(std::map<std::string, double> keywords) {
    for (const auto& [k, w] : keywords) {
        if (!(w >= 0.0 && w <= 1.0)) throw ConfigError("intent keyword '" + k + "' weight outside [0, 1]");
    }
    keywords_ = std::move(keywords);
}

ComplexityFeatures FeatureExtractor::extract(std::string_view query, std::size_t context_chunks,
                                             const DomainDictionary& dict) const {
    ComplexityFeatures f;
    const auto tokens = tokenize(query, dict);
    f.query_token_count = tokens.size();
    for (const auto& t : tokens) {
        if (dict.is_entry_token(t)) ++f.entity_count;
        if (auto it = keywords_.find(t); it != keywords_.end()) {
            f.expected_verbosity = std::max(f.expected_verbosity, it->second);
        }
    }
    const std::string q(query);
    for (const auto& re : patterns_) {
        f.cross_reference_count += static_cast<std::size_t>(
            std::distance(std::sregex_iterator(q.begin(), q.end(), re), std::sregex_iterator()));
    }
    f.context_chunk_count = context_chunks;
    return f;
}

ComplexityFeatures extract_features(std::string_view query, const std::vector<RetrievalCandidate>& context,
                                    const DomainDictionary& dict) {
    static const FeatureExtractor extractor;
    return extractor.extract(query, context.size(), dict);
}

WeightedRuleClassifier::WeightedRuleClassifier() : WeightedRuleClassifier(Weights{}) {}

WeightedRuleClassifier::WeightedRuleClassifier(Weights w) : w_(w) {
    for (const Term* t : {&w_.tokens, &w_.entities, &w_.cross_references, &w_.verbosity, &w_.context}) {
        if (!(t->weight >= 0.0) || !(t->saturation > 0.0)) {
            throw ConfigError("classifier weights must be >= 0 and saturation points > 0");
        }
    }
}

double WeightedRuleClassifier::score(const ComplexityFeatures& f) const {
    const double s = w_.tokens.weight * saturate(static_cast<double>(f.query_token_count), w_.tokens.saturation) +
                     w_.entities.weight * saturate(static_cast<double>(f.entity_count), w_.entities.saturation) +
                     w_.cross_references.weight *
                         saturate(static_cast<double>(f.cross_reference_count), w_.cross_references.saturation) +
                     w_.verbosity.weight * saturate(f.expected_verbosity, w_.verbosity.saturation) +
                     w_.context.weight * saturate(static_cast<double>(f.context_chunk_count), w_.context.saturation);
    return std::clamp(s, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Routing

Money Money::from_dollars(double dollars) { return Money{std::llround(dollars * 1e9)}; }

std::string Money::to_string() const {
    const bool neg = nanos < 0;
    const std::int64_t abs = neg ? -nanos : nanos;
    char buf[48];
    std::snprintf(buf, sizeof buf, "%lld.%09lld", static_cast<long long>(abs / 1000000000),
                  static_cast<long long>(abs % 1000000000));
    std::string s = buf;
    const std::size_t dot = s.find('.');
    while (s.size() > dot + 3 && s.back() == '0') s.pop_back();
    return (neg ? "-$" : "$") + s;
}

void RoutingPolicy::validate() const {
    if (!(t_low > 0.0 && t_low < t_high && t_high < 1.0)) {
        throw ConfigError("routing: thresholds must satisfy 0 < t_low < t_high < 1");
    }
    if (tiers.size() != 3) throw ConfigError("routing: exactly three tiers are required");
    for (std::size_t i = 0; i < tiers.size(); ++i) {
        const auto& t = tiers[i];
        if (t.tier_id != static_cast<int>(i) + 1) throw ConfigError("routing: tiers must be listed as 1, 2, 3");
        if (t.provider_id.empty()) throw ConfigError("routing: tier provider_id must not be empty");
        if (t.rate_per_1k_tokens.nanos <= 0) throw ConfigError("routing: tier rate must be > 0");
        if (t.fallback_chain.empty()) throw ConfigError("routing: tier fallback_chain must not be empty");
        if (i > 0 && t.rate_per_1k_tokens < tiers[i - 1].rate_per_1k_tokens) {
            throw ConfigError("routing: tiers must be ordered by ascending rate");
        }
    }
}

RoutingPolicy RoutingPolicy::defaults() {
    RoutingPolicy p;
    p.tiers = {
        {1, "mock-basic", "gpt-3.5-turbo", Money::from_dollars(0.002), {"mock-standard"}},
        {2, "mock-standard", "gpt-4-turbo", Money::from_dollars(0.01), {"mock-premium"}},
        {3, "mock-premium", "gpt-4", Money::from_dollars(0.03), {"mock-standard"}},
    };
    return p;
}

RoutingDecision route(double score, const RoutingPolicy& policy) {
    if (!(score >= 0.0 && score <= 1.0)) throw InputError("complexity score outside [0, 1]");
    if (policy.tiers.size() != 3) throw ConfigError("routing: exactly three tiers are required");
    const std::size_t idx = score < policy.t_low ? 0 : (score < policy.t_high ? 1 : 2);
    const ProviderTier& t = policy.tiers[idx];
    return RoutingDecision{t.tier_id, t.provider_id, t.model_id, t.rate_per_1k_tokens, t.fallback_chain, score};
}

// ---------------------------------------------------------------------------
// Providers

MockProvider::MockProvider(std::string provider_id, std::string model_id, Clock* clock)
    : id_(std::move(provider_id)), model_(std::move(model_id)), clock_(clock) {}

void MockProvider::script(std::vector<Step> steps) {
    std::lock_guard lock(mutex_);
    steps_.assign(steps.begin(), steps.end());
}

void MockProvider::push(Step step) {
    std::lock_guard lock(mutex_);
    steps_.push_back(std::move(step));
}

ProviderResponse MockProvider::generate(const GenerationRequest& request) {
    ++calls_;
    for (;;) {
        std::optional<Step> step;
        {
            std::lock_guard lock(mutex_);
            if (!steps_.empty()) {
                step = std::move(steps_.front());
                steps_.pop_front();
            }
        }
        if (!step) break;
        if (auto* d = std::get_if<Delay>(&*step)) {
            if (clock_) clock_->sleep_for(d->duration);
            continue;
        }
        if (auto* f = std::get_if<Fail>(&*step)) throw ProviderError(id_, "scripted failure: " + f->kind);
        const auto& s = std::get<Succeed>(*step);
        return ProviderResponse{s.text, s.tokens_in, s.tokens_out, std::nullopt};
    }
    ProviderResponse r;
    if (request.context.empty()) {
        r.text = "No supporting sources were retrieved for this question.";
    } else {
        r.text = "According to the retrieved sources: " + first_sentence(request.context.front(), 400);
    }
    std::size_t in = word_count(request.prompt);
    for (const auto& c : request.context) in += word_count(c);
    r.tokens_in = in;
    r.tokens_out = word_count(r.text);
    return r;
}

HttpLlmProvider::HttpLlmProvider(std::string provider_id, std::string model_id, std::string base_url,
                                 std::string path, std::string api_key, int timeout_seconds)
    : id_(std::move(provider_id)),
      model_(std::move(model_id)),
      base_url_(std::move(base_url)),
      path_(std::move(path)),
      api_key_(std::move(api_key)),
      timeout_seconds_(timeout_seconds) {}

ProviderResponse HttpLlmProvider::generate(const GenerationRequest& request) {
    nlohmann::json body{{"model_id", request.model_id}, {"prompt", request.prompt}, {"context", request.context}};
    httplib::Client client(base_url_);
    client.set_connection_timeout(timeout_seconds_);
    client.set_read_timeout(timeout_seconds_);
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
    auto res = client.Post(path_, headers, body.dump(), "application/json");
    if (!res) throw ProviderError(id_, "transport failure: " + httplib::to_string(res.error()));
    if (res->status != 200) throw ProviderError(id_, "HTTP status " + std::to_string(res->status));
    try {
        const auto j = nlohmann::json::parse(res->body);
        ProviderResponse r;
        r.text = j.at("text").get<std::string>();
        r.tokens_in = j.at("tokens_in").get<std::size_t>();
        r.tokens_out = j.at("tokens_out").get<std::size_t>();
        if (auto it = j.find("confidence"); it != j.end() && it->is_number()) {
            r.self_confidence = std::clamp(it->get<double>(), 0.0, 1.0);
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ProviderError(id_, std::string("malformed response: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Execution

AllProvidersFailedError::AllProvidersFailedError(std::vector<Cause> causes)
    : Error([&] {
          std::string msg = "all providers failed:";
          for (const auto& c : causes) msg += " [" + c.provider_id + ": " + c.reason + "]";
          return msg;
      }()),
      causes_(std::move(causes)) {}

GenerationResult execute_with_fallback(const GenerationRequest& request, const RoutingDecision& decision,
                                       const RetryPolicy& retry, BreakerRegistry& breakers,
                                       const ProviderRegistry& providers, Clock& clock) {
    retry.validate();
    std::vector<std::string> chain{decision.provider_id};
    for (const auto& p : decision.fallback_chain) {
        if (std::find(chain.begin(), chain.end(), p) == chain.end()) chain.push_back(p);
    }

    GenerationResult result;
    result.started_at_ms = clock.epoch_ms();
    std::vector<AllProvidersFailedError::Cause> causes;

    for (const auto& pid : chain) {
        auto it = providers.find(pid);
        if (it == providers.end() || !it->second) {
            causes.push_back({pid, "provider not configured"});
            continue;
        }
        LlmProvider& provider = *it->second;
        CircuitBreaker& breaker = breakers.get(pid);
        GenerationRequest req = request;
        req.model_id = pid == decision.provider_id && !decision.model_id.empty() ? decision.model_id
                                                                                 : provider.default_model();
        std::string last_error;
        Duration pending_delay{0};
        for (std::size_t attempt = 1; attempt <= retry.max_attempts; ++attempt) {
            if (pending_delay.count() > 0) clock.sleep_for(pending_delay);
            if (!breaker.allow_request(clock.now())) {
                result.trace.push_back({pid, AttemptRecord::Outcome::skipped_open_breaker, "circuit open", pending_delay});
                last_error = last_error.empty() ? "circuit open" : last_error + "; circuit open";
                break;
            }
            ++result.attempts;
            try {
                ProviderResponse r = provider.generate(req);
                breaker.record_success();
                result.trace.push_back({pid, AttemptRecord::Outcome::success, {}, pending_delay});
                result.text = std::move(r.text);
                result.provider_id = pid;
                result.model_id = req.model_id;
                result.tokens_in = r.tokens_in;
                result.tokens_out = r.tokens_out;
                result.self_confidence = r.self_confidence;
                result.finished_at_ms = clock.epoch_ms();
                return result;
            } catch (const Error& e) {
                breaker.record_failure(clock.now());
                last_error = e.what();
                result.trace.push_back({pid, AttemptRecord::Outcome::failure, e.what(), pending_delay});
            }
            if (breaker.snapshot().state == BreakerState::open) {
                last_error += "; circuit opened";
                break;
            }
            pending_delay = retry.delay_after(attempt);
        }
        causes.push_back({pid, last_error});
    }
    throw AllProvidersFailedError(std::move(causes));
}

// ---------------------------------------------------------------------------
// Cost accounting

Money token_cost(std::size_t tokens, Money rate_per_1k) {
    const auto t = static_cast<std::int64_t>(tokens);
    return Money{(t * rate_per_1k.nanos + 500) / 1000};
}

LedgerEntry CostLedger::record(const std::string& query_id, const GenerationResult& result,
                               const RoutingDecision& decision) {
    LedgerEntry e{query_id,
                  decision.tier_id,
                  result.provider_id,
                  result.tokens_in,
                  result.tokens_out,
                  decision.rate_per_1k_tokens,
                  token_cost(result.tokens_in + result.tokens_out, decision.rate_per_1k_tokens)};
    std::lock_guard lock(mutex_);
    entries_.push_back(e);
    totals_[e.tier_id] += e.cost;
    ++counts_[e.tier_id];
    return e;
}

std::vector<LedgerEntry> CostLedger::entries() const {
    std::lock_guard lock(mutex_);
    return entries_;
}

Money CostLedger::total() const {
    std::lock_guard lock(mutex_);
    Money sum;
    for (const auto& [tier, m] : totals_) sum += m;
    return sum;
}

std::map<int, Money> CostLedger::totals_by_tier() const {
    std::lock_guard lock(mutex_);
    return totals_;
}

std::map<int, std::size_t> CostLedger::count_by_tier() const {
    std::lock_guard lock(mutex_);
    return counts_;
}

std::size_t CostLedger::size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
}

void CostLedger::export_lines(std::ostream& out) const {
    for (const auto& e : entries()) out << ledger_line(e) << '\n';
}

std::string ledger_line(const LedgerEntry& e) {
    std::ostringstream out;
    out << e.query_id << '\t' << e.tier_id << '\t' << e.provider_id << '\t' << e.tokens_in << '\t'
        << e.tokens_out << '\t' << e.unit_rate.to_string() << '\t' << e.cost.to_string();
    return out.str();
}

namespace {

bool parse_money(std::string_view s, Money& out) {
    bool neg = false;
    if (!s.empty() && s.front() == '-') {
        neg = true;
        s.remove_prefix(1);
    }
    if (s.empty() || s.front() != '$') return false;
    s.remove_prefix(1);
    const std::size_t dot = s.find('.');
    const std::string_view whole = s.substr(0, dot);
    std::string_view frac = dot == std::string_view::npos ? std::string_view{} : s.substr(dot + 1);
    if (whole.empty() || frac.size() > 9) return false;
    std::int64_t w = 0, f = 0;
    if (std::from_chars(whole.data(), whole.data() + whole.size(), w).ptr != whole.data() + whole.size()) return false;
    std::string padded(frac);
    padded.resize(9, '0');
    if (std::from_chars(padded.data(), padded.data() + 9, f).ptr != padded.data() + 9) return false;
    out.nanos = (w * 1000000000 + f) * (neg ? -1 : 1);
    return true;
}

}  // namespace

LedgerEntry parse_ledger_line(std::string_view line, std::size_t lineno) {
    std::vector<std::string_view> f;
    std::size_t start = 0;
    for (;;) {
        const std::size_t tab = line.find('\t', start);
        f.push_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
        if (tab == std::string_view::npos) break;
        start = tab + 1;
    }
    if (f.size() != 7) throw ParseError(lineno, "ledger line needs 7 tab-separated fields");
    LedgerEntry e;
    e.query_id = std::string(f[0]);
    e.provider_id = std::string(f[2]);
    auto num = [&](std::string_view s, auto& out) {
        if (std::from_chars(s.data(), s.data() + s.size(), out).ptr != s.data() + s.size() || s.empty()) {
            throw ParseError(lineno, "'" + std::string(s) + "' is not a number");
        }
    };
    num(f[1], e.tier_id);
    num(f[3], e.tokens_in);
    num(f[4], e.tokens_out);
    if (!parse_money(f[5], e.unit_rate) || !parse_money(f[6], e.cost)) {
        throw ParseError(lineno, "malformed money amount");
    }
    return e;
}

LedgerEntry record_cost(const std::string& query_id, const GenerationResult& result,
                        const RoutingDecision& decision, CostLedger& ledger) {
    return ledger.record(query_id, result, decision);
}

// ---------------------------------------------------------------------------
// Facade

std::string build_prompt(std::string_view query, const std::vector<std::string>& context) {
    std::ostringstream out;
    out << "Answer the requirements question using only the numbered sources. Cite sources by number.\n\n";
    for (std::size_t i = 0; i < context.size(); ++i) out << "[" << (i + 1) << "] " << context[i] << "\n\n";
    out << "Question: " << query << "\n";
    return out.str();
}

Orchestrator::Orchestrator(RoutingPolicy policy, RetryPolicy retry, BreakerParams breaker,
                           ProviderRegistry providers, std::shared_ptr<Clock> clock,
                           std::shared_ptr<const ComplexityClassifier> classifier, FeatureExtractor extractor)
    : policy_(std::move(policy)),
      retry_(retry),
      breakers_(breaker),
      providers_(std::move(providers)),
      clock_(clock ? std::move(clock) : std::make_shared<SystemClock>()),
      classifier_(classifier ? std::move(classifier) : std::make_shared<WeightedRuleClassifier>()),
      extractor_(std::move(extractor)) {
    policy_.validate();
    retry_.validate();
    breaker.validate();
}

OrchestratedAnswer Orchestrator::answer(const std::string& query_id, std::string_view query,
                                        const std::vector<std::string>& context, const DomainDictionary& dict) {
    OrchestratedAnswer a;
    a.features = extractor_.extract(query, context.size(), dict);
    a.decision = route(classifier_->score(a.features), policy_);
    a.prompt = build_prompt(query, context);
    GenerationRequest request{a.decision.model_id, a.prompt, context};
    a.generation = execute_with_fallback(request, a.decision, retry_, breakers_, providers_, *clock_);
    a.cost = ledger_.record(query_id, a.generation, a.decision);
    return a;
}

}  // namespace reqrag
