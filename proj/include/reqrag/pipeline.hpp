#pragma once

#include "reqrag/config.hpp"
#include "reqrag/corpus.hpp"
#include "reqrag/embedding.hpp"
#include "reqrag/fusion.hpp"
#include "reqrag/hnsw.hpp"
#include "reqrag/lexical_index.hpp"
#include "reqrag/orchestrator.hpp"
#include "reqrag/provenance.hpp"

#include <atomic>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace reqrag {

// Per-query ablation switches; they override the configured FusionConfig.
struct QueryFlags {
    bool no_rerank = false;
    bool sparse_only = false;
    bool dense_only = false;
    bool dry_run = false;
};

// Throws InputError when both sparse_only and dense_only are set.
FusionConfig apply_flags(FusionConfig cfg, const QueryFlags& flags);

std::unique_ptr<EmbeddingProvider> make_embedding_provider(const SystemConfig& cfg);
ProviderRegistry make_providers(const SystemConfig& cfg, Clock* clock);

// ---------------------------------------------------------------------------
// Ingestion and indexing

struct TokenStats {
    std::size_t min = 0;
    std::size_t max = 0;
    double mean = 0.0;
    double stddev = 0.0;
};

struct IngestStats {
    std::size_t documents = 0;
    std::size_t chunks = 0;
    std::vector<IngestFailure> failures;
    TokenStats tokens;
};

TokenStats token_stats(const std::vector<Chunk>& chunks);

// Chunks every document with the configured dictionary and chunking window.
std::vector<Chunk> chunk_documents(const std::vector<Document>& docs, const SystemConfig& cfg);

// Reads the corpus file, chunks it, and writes the chunk store. Throws
// IoError when the file cannot be read.
IngestStats ingest_corpus(const std::filesystem::path& corpus, const SystemConfig& cfg);

// Written next to the snapshots so queries know what was built.
struct IndexManifest {
    std::size_t chunk_count = 0;
    bool lexical = true;
    bool dense = true;
    std::string embedding_provider;
    std::string embedding_model;
};

inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kLexicalFile = "lexical.rqlx";
inline constexpr const char* kVectorFile = "vectors.rqhn";

void write_manifest(const std::filesystem::path& file, const IndexManifest& m);
IndexManifest read_manifest(const std::filesystem::path& file);

// Builds both snapshots from the chunk store (lexical skipped when
// dense_only). Throws InputError on an empty store.
IndexManifest build_indexes(const SystemConfig& cfg, bool dense_only = false);

// Moves chunks staged by the service into the chunk store, replacing every
// chunk of a re-ingested document. Returns the number of chunks applied.
std::size_t apply_pending(const SystemConfig& cfg);

// ---------------------------------------------------------------------------
// Query pipeline shared by the CLI and the HTTP service

struct PipelineAnswer {
    std::string query_id;
    HybridResult retrieval;
    std::optional<OrchestratedAnswer> orchestrated;  // absent for dry runs
    std::optional<ProvenanceRecord> record;           // persisted before return
};

struct PipelineCounters {
    std::size_t queries_served = 0;  // answers generated
    std::size_t dry_runs = 0;
    std::size_t failures = 0;
};

class RagPipeline {
public:
    // Loads the chunk store and snapshots. Throws IoError telling the caller
    // to run the index command when snapshots are missing. `providers`
    // replaces the configured generation providers when non-empty.
    static std::unique_ptr<RagPipeline> open(const SystemConfig& cfg, std::shared_ptr<Clock> clock = nullptr,
                                             ProviderRegistry providers = {});

    // Retrieval only; thread-safe.
    HybridResult retrieve(std::string_view query, const QueryFlags& flags) const;

    // Retrieval, then (unless dry_run) generation, cost recording and
    // provenance persistence. Thread-safe.
    PipelineAnswer answer(std::string_view query, const QueryFlags& flags, std::string query_id = {});

    const SystemConfig& config() const noexcept { return cfg_; }
    const IndexManifest& manifest() const noexcept { return manifest_; }
    const ChunkCatalog& catalog() const noexcept { return catalog_; }
    const DomainDictionary& dictionary() const noexcept { return dict_; }
    ProvenanceStore& provenance() noexcept { return *store_; }
    Orchestrator& orchestrator() noexcept { return *orchestrator_; }
    PipelineCounters counters() const;

    // "<epoch ms>-<sequence>", unique within the process.
    std::string next_query_id();

private:
    RagPipeline() = default;

    SystemConfig cfg_;
    IndexManifest manifest_;
    DomainDictionary dict_;
    ChunkCatalog catalog_;
    std::optional<InvertedIndex> lexical_;
    std::optional<HnswIndex> vectors_;
    std::unique_ptr<EmbeddingProvider> embedder_;
    std::unique_ptr<TokenOverlapScorer> scorer_;
    std::unique_ptr<HybridRetriever> retriever_;
    std::shared_ptr<Clock> clock_;
    std::unique_ptr<Orchestrator> orchestrator_;
    std::unique_ptr<ProvenanceStore> store_;
    std::mutex ledger_mutex_;
    std::atomic<std::size_t> served_{0}, dry_runs_{0}, failures_{0}, sequence_{0};
};

}  // namespace reqrag
