#pragma once

#include "reqrag/corpus.hpp"
#include "reqrag/fusion.hpp"
#include "reqrag/orchestrator.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

namespace reqrag {

struct SourceAttribution {
    std::string doc_id;
    std::string version_timestamp;
    std::vector<std::string> section_path;
    std::string chunk_id;
    BlockRange block_range;  // stands in for page numbers

    bool operator==(const SourceAttribution&) const = default;
};

struct AttributionScores {
    std::optional<double> dense_score;
    std::optional<double> sparse_score;
    std::optional<double> rrf_score;
    std::optional<double> rerank_score;

    bool operator==(const AttributionScores&) const = default;
};

struct ConfidenceMetrics {
    std::optional<double> self_assessed_confidence;
    double retrieval_coverage = 0.0;
    std::optional<double> multi_attempt_consistency;

    bool operator==(const ConfidenceMetrics&) const = default;
};

struct GenerationProvenance {
    std::string provider_id;
    std::string model_id;
    std::size_t tokens_in = 0;
    std::size_t tokens_out = 0;
    std::size_t attempts = 0;
    std::int64_t started_at_ms = 0;
    std::int64_t finished_at_ms = 0;
    int tier_id = 0;
    std::string prompt_digest;  // sha256 hex
    std::optional<std::string> prompt_text;

    bool operator==(const GenerationProvenance&) const = default;
};

struct ProvenanceRecord {
    std::string record_id;  // assigned by the store
    std::string query;
    std::string answer;
    std::vector<SourceAttribution> attributions;
    std::vector<AttributionScores> retrieval_scores;  // aligned with attributions
    GenerationProvenance generation;
    ConfidenceMetrics confidence;
    bool grounded = false;
    std::int64_t created_at_ms = 0;

    bool operator==(const ProvenanceRecord&) const = default;
};

struct ProvenanceOptions {
    double coverage_threshold = 0.3;
    bool store_prompt_text = false;
};

std::string sha256_hex(std::string_view data);

// Fraction of answer sentences whose best token overlap with any source
// (shared distinct tokens / distinct sentence tokens) exceeds `threshold`.
double retrieval_coverage(std::string_view answer, const std::vector<std::string>& sources, double threshold,
                          const DomainDictionary& dict = {});

// Mean pairwise Jaccard similarity of token sets; std::nullopt for fewer than two texts.
std::optional<double> multi_attempt_consistency(const std::vector<std::string>& generations,
                                                const DomainDictionary& dict = {});

// One attribution per candidate, in order, with scores copied verbatim.
// Candidates missing from the catalog still get an attribution carrying only
// the chunk id, which verification then reports as missing.
ProvenanceRecord assemble_provenance(std::string_view query, const std::vector<RetrievalCandidate>& candidates,
                                     const GenerationResult& generation, std::string_view prompt,
                                     const ChunkCatalog& catalog, const ProvenanceOptions& opts = {},
                                     int tier_id = 0, const std::vector<std::string>& regenerations = {});

struct VerificationReport {
    enum class Status { verified, missing_chunk, section_mismatch };
    struct Item {
        std::size_t index = 0;
        std::string chunk_id;
        Status status = Status::verified;
        std::vector<std::string> recorded_path;
        std::vector<std::string> current_path;
    };
    std::vector<Item> items;

    bool all_verified() const;
    std::vector<Item> failures() const;
};

const char* to_string(VerificationReport::Status s) noexcept;

VerificationReport verify_record(const ProvenanceRecord& record, const ChunkCatalog& corpus);

std::string record_to_json(const ProvenanceRecord& record);
ProvenanceRecord record_from_json(std::string_view text);

// Append-only provenance store, one JSON record per line. Ids are
// "prov-<8 digits>" and never reused. With an empty path the store is
// memory-only. Appends are serialized; reads run concurrently.
class ProvenanceStore {
public:
    explicit ProvenanceStore(std::filesystem::path path = {});

    // Assigns record_id (and created_at when unset) and persists the record.
    std::string append(ProvenanceRecord record);
    std::optional<ProvenanceRecord> get(const std::string& record_id) const;
    std::size_t size() const;

private:
    std::filesystem::path path_;
    mutable std::shared_mutex mutex_;
    std::map<std::string, ProvenanceRecord> records_;
    std::uint64_t next_ = 1;
};

}  // namespace reqrag
