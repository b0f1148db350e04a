#include "reqrag/config.hpp"
#include "reqrag/error.hpp"

#include <catch_amalgamated.hpp>

#include <cstdlib>

using namespace reqrag;

namespace {

std::string config_error(const std::string& text) {
    try {
        parse_config(text);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("sample configuration loads") {
    const std::filesystem::path file = std::filesystem::path(REQRAG_TEST_DATA) / "config.json";
    const auto c = load_config(file);
    CHECK(c.chunking.target_tokens == 48);
    CHECK(c.hnsw.seed == 7);
    CHECK(c.hnsw.M == 16);
    CHECK(c.paths.chunks == file.parent_path() / "work/chunks.jsonl");
    CHECK(c.dictionary.preserved_literals.size() == 6);
    CHECK(c.providers.size() == 3);
    CHECK(c.fusion.alpha_dense == 0.7);
}

TEST_CASE("empty object gives the defaults") {
    const auto c = parse_config("{}");
    CHECK(c.fusion.k_rrf == 60);
    CHECK(c.fusion.candidate_pool == 20);
    CHECK(c.fusion.final_k == 5);
    CHECK(c.bm25.k1 == 1.5);
    CHECK(c.bm25.b == 0.75);
    CHECK(c.hnsw.ef_search == 100);
    CHECK(c.retry.max_attempts == 4);
    CHECK(c.breaker.failure_threshold == 5);
    CHECK(c.breaker.open_cooldown == Duration{60000});
    CHECK(c.routing.tiers.size() == 3);
    CHECK(c.embedding.kind == "hashing");
    CHECK(c.paths.index_dir == "index");
}

TEST_CASE("errors name the key path") {
    CHECK(config_error(R"({"fusion": {"alpha": 1}})").find("fusion.alpha") != std::string::npos);
    CHECK(config_error(R"({"color": 1})").find("color") != std::string::npos);
    CHECK(config_error(R"({"hnsw": {"M": "sixteen"}})").find("hnsw.M") != std::string::npos);
    CHECK(config_error(R"({"hnsw": {"M": -3}})").find("hnsw.M") != std::string::npos);
    CHECK(config_error(R"({"routing": {"tiers": [{"tier": 1}]}})").find("routing.tiers[0].tier") !=
          std::string::npos);
    CHECK(config_error(R"({"providers": {"p": {"kind": 2}}})").find("providers.p.kind") != std::string::npos);
    CHECK_FALSE(config_error("{not json").empty());
    CHECK_FALSE(config_error("[]").empty());
}

TEST_CASE("relative paths follow the base directory") {
    const auto c = parse_config(R"({"paths": {"corpus": "in/c.jsonl", "ledger": "/abs/l.tsv"}})", "/base");
    CHECK(c.paths.corpus == "/base/in/c.jsonl");
    CHECK(c.paths.ledger == "/abs/l.tsv");
    CHECK(c.paths.provenance == "/base/provenance.jsonl");
    CHECK_THROWS_AS(parse_config(R"({"paths": {"chunks": ""}})"), ConfigError);
}

TEST_CASE("api keys come from the environment") {
    ::setenv("REQRAG_TEST_KEY", "secret-1", 1);
    const auto c = parse_config(R"({"embedding": {"kind": "http", "base_url": "http://x", "api_key_env": "REQRAG_TEST_KEY"}})");
    CHECK(c.embedding.api_key == "secret-1");
    ::unsetenv("REQRAG_TEST_KEY");
    CHECK(config_error(R"({"embedding": {"api_key_env": "REQRAG_TEST_KEY"}})").find("REQRAG_TEST_KEY") !=
          std::string::npos);
}

TEST_CASE("routing tiers are written in dollars") {
    const auto c = parse_config(R"({
        "providers": {"a": {"model_id": "ma"}, "b": {"model_id": "mb"}},
        "routing": {"t_low": 0.5, "t_high": 0.8, "tiers": [
            {"tier_id": 1, "provider_id": "a", "model_id": "ma", "rate_per_1k_tokens": 0.0025, "fallback_chain": ["b"]},
            {"tier_id": 2, "provider_id": "b", "model_id": "mb", "rate_per_1k_tokens": 0.02, "fallback_chain": ["a"]},
            {"tier_id": 3, "provider_id": "b", "model_id": "mb", "rate_per_1k_tokens": 0.05, "fallback_chain": ["a"]}]}})");
    CHECK(c.routing.tiers[0].rate_per_1k_tokens.nanos == 2'500'000);
    CHECK(c.routing.tiers[1].fallback_chain == std::vector<std::string>{"a"});
    CHECK(route(0.49, c.routing).tier_id == 1);
    CHECK(route(0.5, c.routing).tier_id == 2);
}

TEST_CASE("cross-field validation") {
    CHECK(config_error(R"({"providers": {"x": {"model_id": "m"}}})").find("unknown provider") != std::string::npos);
    CHECK_THROWS_AS(parse_config(R"({"chunking": {"min_tokens": 500, "max_tokens": 100}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"fusion": {"final_k": 50}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"routing": {"t_low": 0.8, "t_high": 0.4}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"embedding": {"kind": "http"}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"service": {"port": 70000}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"provenance": {"coverage_threshold": 1.0}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"retry": {"max_attempts": 0}})"), ConfigError);
    CHECK_NOTHROW(SystemConfig::defaults().validate());
}

TEST_CASE("dictionary and synonyms") {
    const auto c = parse_config(R"({"dictionary": {"multiword_terms": ["Emergency Stop"], "stem": true},
                                    "embedding": {"synonyms": {"Rust": "Corrosion"}}})");
    CHECK(c.dictionary.tokenizer.stem);
    CHECK(c.embedding.synonyms.at("rust") == "corrosion");
    const auto d = c.dictionary.build();
    CHECK(tokenize("EMERGENCY STOP", d)[0] == "emergency stop");
    CHECK_THROWS_AS(parse_config(R"({"dictionary": {"multiword_terms": [1]}})"), ConfigError);
}
