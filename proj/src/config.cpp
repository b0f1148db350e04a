#include "reqrag/config.hpp"

#include "reqrag/error.hpp"

#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>

namespace reqrag {

namespace {

using nlohmann::json;

// Object reader that rejects keys it was not told about.
class Section {
public:
    Section(const json& node, std::string path, std::initializer_list<const char*> allowed)
        : node_(node), path_(std::move(path)) {
        if (!node_.is_object()) throw ConfigError(where() + " must be an object");
        std::set<std::string> ok(allowed.begin(), allowed.end());
        for (const auto& [key, value] : node_.items()) {
            if (!ok.count(key)) throw ConfigError("unknown key '" + child(key) + "'");
        }
    }

    bool has(const char* key) const { return node_.contains(key); }
    const json& raw(const char* key) const { return node_.at(key); }
    std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    template <typename T>
    void read(const char* key, T& out) const {
        if (!has(key)) return;
        const json& v = node_.at(key);
        try {
            if constexpr (std::is_same_v<T, bool>) {
                if (!v.is_boolean()) throw ConfigError("");
            } else if constexpr (std::is_unsigned_v<T>) {
                if (!v.is_number_unsigned()) throw ConfigError("");
            } else if constexpr (std::is_integral_v<T>) {
                if (!v.is_number_integer()) throw ConfigError("");
            } else if constexpr (std::is_floating_point_v<T>) {
                if (!v.is_number()) throw ConfigError("");
            } else if constexpr (std::is_same_v<T, std::string>) {
                if (!v.is_string()) throw ConfigError("");
            }
            out = v.get<T>();
        } catch (const std::exception&) {
            throw ConfigError("key '" + child(key) + "' has the wrong type");
        }
    }

    void read_path(const char* key, std::filesystem::path& out, const std::filesystem::path& base) const {
        std::string s;
        read(key, s);
        if (!has(key)) return;
        if (s.empty()) throw ConfigError("key '" + child(key) + "' must not be empty");
        std::filesystem::path p(s);
        out = p.is_absolute() || base.empty() ? p : base / p;
    }

    void read_ms(const char* key, Duration& out) const {
        std::int64_t ms = out.count();
        read(key, ms);
        out = Duration(ms);
    }

    void read_strings(const char* key, std::vector<std::string>& out) const {
        if (!has(key)) return;
        const json& v = node_.at(key);
        if (!v.is_array()) throw ConfigError("key '" + child(key) + "' must be an array of strings");
        out.clear();
        for (const auto& e : v) {
            if (!e.is_string()) throw ConfigError("key '" + child(key) + "' must be an array of strings");
            out.push_back(e.get<std::string>());
        }
    }

    std::string where() const { return path_.empty() ? "configuration" : "'" + path_ + "'"; }

private:
    const json& node_;
    std::string path_;
};

std::string resolve_secret(const Section& s, const char* literal_key, const char* env_key) {
    std::string value;
    s.read(literal_key, value);
    std::string env;
    s.read(env_key, env);
    if (!env.empty()) {
        const char* v = std::getenv(env.c_str());
        if (v == nullptr) throw ConfigError("environment variable '" + env + "' named by '" + s.child(env_key) + "' is unset");
        value = v;
    }
    return value;
}

void read_provider(const Section& s, ProviderConfig& p) {
    s.read("kind", p.kind);
    s.read("model_id", p.model_id);
    s.read("base_url", p.base_url);
    s.read("path", p.path);
    s.read("timeout_seconds", p.timeout_seconds);
    p.api_key = resolve_secret(s, "api_key", "api_key_env");
}

}  // namespace

DomainDictionary DictionaryConfig::build() const {
    DomainDictionary d;
    for (const auto& t : multiword_terms) d.add_multiword_term(t);
    for (const auto& l : preserved_literals) d.add_preserved_literal(l);
    return d;
}

SystemConfig SystemConfig::defaults() {
    SystemConfig c;
    for (const auto& tier : c.routing.tiers) {
        ProviderConfig p;
        p.model_id = tier.model_id;
        c.providers.emplace(tier.provider_id, p);
    }
    return c;
}

void SystemConfig::validate() const {
    try {
        chunking.validate();
        bm25.validate();
        hnsw.validate();
        fusion.validate();
        routing.validate();
        retry.validate();
        breaker.validate();
        (void)dictionary.build();
    } catch (const ValidationError& e) {
        throw ConfigError(e.field() + ": " + e.what());
    }
    if (embedding.kind != "hashing" && embedding.kind != "http") {
        throw ConfigError("embedding.kind must be \"hashing\" or \"http\"");
    }
    if (embedding.kind == "http" && embedding.base_url.empty()) {
        throw ConfigError("embedding.base_url is required for an http embedding provider");
    }
    if (!(provenance.coverage_threshold >= 0.0 && provenance.coverage_threshold < 1.0)) {
        throw ConfigError("provenance.coverage_threshold must lie in [0, 1)");
    }
    for (const auto& [id, p] : providers) {
        if (p.kind != "mock" && p.kind != "http") throw ConfigError("providers." + id + ".kind must be \"mock\" or \"http\"");
        if (p.kind == "http" && p.base_url.empty()) throw ConfigError("providers." + id + ".base_url is required");
        if (p.model_id.empty()) throw ConfigError("providers." + id + ".model_id must not be empty");
    }
    for (const auto& tier : routing.tiers) {
        if (!providers.count(tier.provider_id)) {
            throw ConfigError("routing tier " + std::to_string(tier.tier_id) + " names unknown provider '" +
                              tier.provider_id + "'");
        }
        for (const auto& fb : tier.fallback_chain) {
            if (!providers.count(fb)) throw ConfigError("fallback provider '" + fb + "' is not configured");
        }
    }
    if (service.port < 0 || service.port > 65535) throw ConfigError("service.port must lie in 0..65535");
    if (service.threads < 1) throw ConfigError("service.threads must be >= 1");
}

SystemConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("configuration is not valid JSON: ") + e.what());
    }
    SystemConfig c = SystemConfig::defaults();
    const Section top(root, "",
                      {"paths", "chunking", "dictionary", "bm25", "hnsw", "embedding", "fusion", "routing",
                       "providers", "retry", "breaker", "provenance", "service"});

    if (!base_dir.empty()) {
        // Defaults are relative to the config file as well.
        for (auto* p : {&c.paths.chunks, &c.paths.index_dir, &c.paths.provenance, &c.paths.ledger, &c.paths.pending}) {
            if (p->is_relative()) *p = base_dir / *p;
        }
    }
    if (top.has("paths")) {
        const Section s(top.raw("paths"), "paths",
                        {"corpus", "chunks", "index_dir", "provenance", "ledger", "pending"});
        s.read_path("corpus", c.paths.corpus, base_dir);
        s.read_path("chunks", c.paths.chunks, base_dir);
        s.read_path("index_dir", c.paths.index_dir, base_dir);
        s.read_path("provenance", c.paths.provenance, base_dir);
        s.read_path("ledger", c.paths.ledger, base_dir);
        s.read_path("pending", c.paths.pending, base_dir);
    }
    if (top.has("chunking")) {
        const Section s(top.raw("chunking"), "chunking", {"target_tokens", "min_tokens", "max_tokens"});
        s.read("target_tokens", c.chunking.target_tokens);
        s.read("min_tokens", c.chunking.min_tokens);
        s.read("max_tokens", c.chunking.max_tokens);
    }
    if (top.has("dictionary")) {
        const Section s(top.raw("dictionary"), "dictionary",
                        {"multiword_terms", "preserved_literals", "remove_stopwords", "stem"});
        s.read_strings("multiword_terms", c.dictionary.multiword_terms);
        s.read_strings("preserved_literals", c.dictionary.preserved_literals);
        s.read("remove_stopwords", c.dictionary.tokenizer.remove_stopwords);
        s.read("stem", c.dictionary.tokenizer.stem);
    }
    if (top.has("bm25")) {
        const Section s(top.raw("bm25"), "bm25", {"k1", "b"});
        s.read("k1", c.bm25.k1);
        s.read("b", c.bm25.b);
    }
    if (top.has("hnsw")) {
        const Section s(top.raw("hnsw"), "hnsw", {"M", "ef_construction", "ef_search", "max_level_scale", "seed"});
        s.read("M", c.hnsw.M);
        s.read("ef_construction", c.hnsw.ef_construction);
        s.read("ef_search", c.hnsw.ef_search);
        s.read("max_level_scale", c.hnsw.max_level_scale);
        s.read("seed", c.hnsw.seed);
    }
    if (top.has("embedding")) {
        const Section s(top.raw("embedding"), "embedding",
                        {"kind", "provider_id", "model_id", "base_url", "path", "api_key", "api_key_env",
                         "timeout_seconds", "synonyms"});
        s.read("kind", c.embedding.kind);
        s.read("provider_id", c.embedding.provider_id);
        s.read("model_id", c.embedding.model_id);
        s.read("base_url", c.embedding.base_url);
        s.read("path", c.embedding.path);
        s.read("timeout_seconds", c.embedding.timeout_seconds);
        c.embedding.api_key = resolve_secret(s, "api_key", "api_key_env");
        if (s.has("synonyms")) {
            const json& syn = s.raw("synonyms");
            if (!syn.is_object()) throw ConfigError("embedding.synonyms must map strings to strings");
            for (const auto& [from, to] : syn.items()) {
                if (!to.is_string()) throw ConfigError("embedding.synonyms." + from + " must be a string");
                c.embedding.synonyms[to_lower(from)] = to_lower(to.get<std::string>());
            }
        }
    }
    if (top.has("fusion")) {
        const Section s(top.raw("fusion"), "fusion",
                        {"alpha_dense", "alpha_sparse", "k_rrf", "candidate_pool", "final_k", "rerank_enabled",
                         "dense_enabled", "sparse_enabled", "rerank_fallback_to_rrf"});
        s.read("alpha_dense", c.fusion.alpha_dense);
        s.read("alpha_sparse", c.fusion.alpha_sparse);
        s.read("k_rrf", c.fusion.k_rrf);
        s.read("candidate_pool", c.fusion.candidate_pool);
        s.read("final_k", c.fusion.final_k);
        s.read("rerank_enabled", c.fusion.rerank_enabled);
        s.read("dense_enabled", c.fusion.dense_enabled);
        s.read("sparse_enabled", c.fusion.sparse_enabled);
        s.read("rerank_fallback_to_rrf", c.fusion.rerank_fallback_to_rrf);
    }
    if (top.has("providers")) {
        const json& node = top.raw("providers");
        if (!node.is_object()) throw ConfigError("'providers' must be an object keyed by provider id");
        c.providers.clear();
        for (const auto& [id, body] : node.items()) {
            const Section s(body, "providers." + id,
                            {"kind", "model_id", "base_url", "path", "api_key", "api_key_env", "timeout_seconds"});
            ProviderConfig p;
            read_provider(s, p);
            c.providers[id] = p;
        }
    }
    if (top.has("routing")) {
        const Section s(top.raw("routing"), "routing", {"t_low", "t_high", "tiers"});
        s.read("t_low", c.routing.t_low);
        s.read("t_high", c.routing.t_high);
        if (s.has("tiers")) {
            const json& tiers = s.raw("tiers");
            if (!tiers.is_array()) throw ConfigError("routing.tiers must be an array");
            c.routing.tiers.clear();
            for (std::size_t i = 0; i < tiers.size(); ++i) {
                const Section t(tiers[i], "routing.tiers[" + std::to_string(i) + "]",
                                {"tier_id", "provider_id", "model_id", "rate_per_1k_tokens", "fallback_chain"});
                ProviderTier tier;
                t.read("tier_id", tier.tier_id);
                t.read("provider_id", tier.provider_id);
                t.read("model_id", tier.model_id);
                double rate = 0.0;
                t.read("rate_per_1k_tokens", rate);
                tier.rate_per_1k_tokens = Money::from_dollars(rate);
                t.read_strings("fallback_chain", tier.fallback_chain);
                c.routing.tiers.push_back(std::move(tier));
            }
        }
    }
    if (top.has("retry")) {
        const Section s(top.raw("retry"), "retry", {"initial_delay_ms", "multiplier", "max_delay_ms", "max_attempts"});
        s.read_ms("initial_delay_ms", c.retry.initial_delay);
        s.read("multiplier", c.retry.multiplier);
        s.read_ms("max_delay_ms", c.retry.max_delay);
        s.read("max_attempts", c.retry.max_attempts);
    }
    if (top.has("breaker")) {
        const Section s(top.raw("breaker"), "breaker", {"failure_threshold", "open_cooldown_ms"});
        s.read("failure_threshold", c.breaker.failure_threshold);
        s.read_ms("open_cooldown_ms", c.breaker.open_cooldown);
    }
    if (top.has("provenance")) {
        const Section s(top.raw("provenance"), "provenance", {"coverage_threshold", "store_prompt_text"});
        s.read("coverage_threshold", c.provenance.coverage_threshold);
        s.read("store_prompt_text", c.provenance.store_prompt_text);
    }
    if (top.has("service")) {
        const Section s(top.raw("service"), "service", {"host", "port", "threads"});
        s.read("host", c.service.host);
        s.read("port", c.service.port);
        s.read("threads", c.service.threads);
    }
    c.validate();
    return c;
}

SystemConfig load_config(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot read configuration file '" + file.string() + "'");
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config(text.str(), file.parent_path().empty() ? std::filesystem::path(".") : file.parent_path());
}

}  // namespace reqrag
