#pragma once

#include "reqrag/embedding.hpp"
#include "reqrag/error.hpp"
#include "reqrag/hnsw.hpp"
#include "reqrag/lexical_index.hpp"
#include "reqrag/tokenizer.hpp"

#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace reqrag {

struct FusionConfig {
    double alpha_dense = 0.7;
    double alpha_sparse = 0.3;
    double k_rrf = 60.0;
    std::size_t candidate_pool = 20;
    std::size_t final_k = 5;
    bool rerank_enabled = true;
    bool dense_enabled = true;
    bool sparse_enabled = true;
    // On scorer failure, keep RRF order instead of failing the query.
    bool rerank_fallback_to_rrf = true;

    bool hybrid_enabled() const noexcept { return dense_enabled && sparse_enabled; }
    void validate() const;
};

struct RetrievalCandidate {
    std::string chunk_id;
    std::optional<std::size_t> dense_rank;
    std::optional<std::size_t> sparse_rank;
    std::optional<double> dense_score;
    std::optional<double> sparse_score;
    double rrf_score = 0.0;
    std::optional<double> rerank_score;

    bool operator==(const RetrievalCandidate&) const = default;
};

struct StageTimings {
    double dense_ms = 0.0;
    double sparse_ms = 0.0;
    double fuse_ms = 0.0;
    double rerank_ms = 0.0;
    double total_ms = 0.0;
};

// Weighted reciprocal rank fusion over 1-based ranks:
//   score(d) = alpha_dense / (k_rrf + rank_dense(d)) + alpha_sparse / (k_rrf + rank_sparse(d))
// An absent rank contributes 0. Output is sorted by descending score, ties by
// ascending chunk_id, and truncated to candidate_pool.
// Throws ValidationError when an input list repeats an id.
std::vector<RetrievalCandidate> rrf_fuse(const std::vector<ScoredId>& dense,
                                         const std::vector<ScoredId>& sparse, const FusionConfig& cfg);

// Relevance scorer for (query, chunk text) pairs; cross-encoders plug in here.
class RerankScorer {
public:
    virtual ~RerankScorer() = default;
    virtual double score(std::string_view query, std::string_view chunk_text) const = 0;
};

// Counts distinct query tokens present in the chunk. With a synonym map both
// sides are canonicalized first, so paraphrases overlap.
class TokenOverlapScorer final : public RerankScorer {
public:
    explicit TokenOverlapScorer(DomainDictionary dict = {}, std::map<std::string, std::string> synonyms = {});
    double score(std::string_view query, std::string_view chunk_text) const override;

private:
    std::vector<std::string> canonical_tokens(std::string_view text) const;

    DomainDictionary dict_;
    std::map<std::string, std::string> synonyms_;
};

class RerankError : public Error {
public:
    RerankError(std::string chunk_id, const std::string& message);
    const std::string& chunk_id() const noexcept { return chunk_id_; }

private:
    std::string chunk_id_;
};

using ChunkTextLookup = std::function<std::string_view(const std::string& chunk_id)>;

// Scores every candidate and orders by descending rerank_score; ties keep the
// incoming (RRF) order. Throws RerankError naming the chunk whose scoring failed.
std::vector<RetrievalCandidate> rerank(std::vector<RetrievalCandidate> candidates, std::string_view query,
                                       const RerankScorer& scorer, const ChunkTextLookup& text_of);

struct HybridResult {
    std::vector<RetrievalCandidate> candidates;
    StageTimings timings;
    bool rerank_fell_back = false;
};

// Dense + sparse retrieval, fusion, optional rerank. Holds references only;
// all referenced objects must outlive the retriever. Safe for concurrent
// queries once the indexes are built.
class HybridRetriever {
public:
    HybridRetriever(const InvertedIndex* lexical, const HnswIndex* vectors, const EmbeddingProvider* provider,
                    const DomainDictionary& dict, Bm25Params bm25, const RerankScorer* scorer,
                    ChunkTextLookup text_of);

    // Throws InputError on a query without word characters, ConfigError when the configuration
    // disables both retrievers or needs an index that was not supplied.
    HybridResult search(std::string_view query, const FusionConfig& cfg) const;

private:
    const InvertedIndex* lexical_;
    const HnswIndex* vectors_;
    const EmbeddingProvider* provider_;
    const DomainDictionary& dict_;
    Bm25Params bm25_;
    const RerankScorer* scorer_;
    ChunkTextLookup text_of_;
};

// Run-file lines: query_id, chunk_id, rank, score, then dense, sparse, rrf and
// rerank scores ("-" when absent), tab separated. `score` is the rerank score
// when present, else the RRF score.
void write_run_lines(std::ostream& out, const std::string& query_id,
                     const std::vector<RetrievalCandidate>& ranked);

}  // namespace reqrag
