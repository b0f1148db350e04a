#pragma once

#include "reqrag/corpus.hpp"
#include "reqrag/fusion.hpp"
#include "reqrag/hnsw.hpp"
#include "reqrag/lexical_index.hpp"
#include "reqrag/orchestrator.hpp"
#include "reqrag/provenance.hpp"
#include "reqrag/resilience.hpp"
#include "reqrag/tokenizer.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace reqrag {

struct PathsConfig {
    std::filesystem::path corpus;
    std::filesystem::path chunks = "chunks.jsonl";
    std::filesystem::path index_dir = "index";
    std::filesystem::path provenance = "provenance.jsonl";
    std::filesystem::path ledger = "ledger.tsv";
    std::filesystem::path pending = "pending.jsonl";
};

struct DictionaryConfig {
    std::vector<std::string> multiword_terms;
    std::vector<std::string> preserved_literals;
    TokenizerOptions tokenizer;

    DomainDictionary build() const;
};

// "hashing" is the offline default; "http" talks to a remote service.
struct EmbeddingConfig {
    std::string kind = "hashing";
    std::string provider_id = "builtin";
    std::string model_id = "hashing-bow-512";
    std::string base_url;
    std::string path = "/embed";
    std::string api_key;
    int timeout_seconds = 30;
    std::map<std::string, std::string> synonyms;
};

// Generation provider; "mock" unless configured otherwise.
struct ProviderConfig {
    std::string kind = "mock";
    std::string model_id;
    std::string base_url;
    std::string path = "/generate";
    std::string api_key;
    int timeout_seconds = 60;
};

struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8080;
    int threads = 8;
};

struct SystemConfig {
    PathsConfig paths;
    ChunkingConfig chunking;
    DictionaryConfig dictionary;
    Bm25Params bm25;
    HnswParams hnsw;
    EmbeddingConfig embedding;
    FusionConfig fusion;
    RoutingPolicy routing = RoutingPolicy::defaults();
    std::map<std::string, ProviderConfig> providers;
    RetryPolicy retry;
    BreakerParams breaker;
    ProvenanceOptions provenance;
    ServiceConfig service;

    // Every component validate(), plus provider references resolving.
    void validate() const;
    // Defaults with the three mock providers the default routing table uses.
    static SystemConfig defaults();
};

// Parses a JSON configuration. Unknown keys and type mismatches throw
// ConfigError naming the key path. Relative paths are resolved against
// `base_dir`.
SystemConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir = {});
SystemConfig load_config(const std::filesystem::path& file);

}  // namespace reqrag
