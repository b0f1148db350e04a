#include "reqrag/fusion.hpp"

#include "reqrag/error.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <map>
#include <ostream>
#include <set>
#include <unordered_set>

namespace reqrag {

namespace {

using Clock = std::chrono::steady_clock;

double ms_between(Clock::time_point a, Clock::time_point b) {
    return std::chrono::duration<double, std::milli>(b - a).count();
}

void require_unique(const std::vector<ScoredId>& list, const char* which) {
    std::unordered_set<std::string_view> seen;
    for (const auto& s : list) {
        if (!seen.insert(s.id).second) {
            throw ValidationError(which, "duplicate id '" + s.id + "' in ranked list");
        }
    }
}

std::string fmt_optional(const std::optional<double>& v) {
    if (!v) return "-";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", *v);
    return buf;
}

}  // namespace

void FusionConfig::validate() const {
    if (!(alpha_dense >= 0.0) || !(alpha_sparse >= 0.0)) {
        throw ConfigError("fusion: alpha_dense and alpha_sparse must be >= 0");
    }
    if (alpha_dense == 0.0 && alpha_sparse == 0.0) throw ConfigError("fusion: alphas must not both be 0");
    if (!(k_rrf > 0.0)) throw ConfigError("fusion: k_rrf must be > 0");
    if (candidate_pool == 0 || final_k == 0) throw ConfigError("fusion: candidate_pool and final_k must be >= 1");
    if (final_k > candidate_pool) throw ConfigError("fusion: final_k must not exceed candidate_pool");
    if (!dense_enabled && !sparse_enabled) throw ConfigError("fusion: both dense and sparse retrieval are disabled");
}

std::vector<RetrievalCandidate> rrf_fuse(const std::vector<ScoredId>& dense,
                                         const std::vector<ScoredId>& sparse, const FusionConfig& cfg) {
    require_unique(dense, "dense");
    require_unique(sparse, "sparse");
    std::map<std::string, RetrievalCandidate> pool;
    for (std::size_t i = 0; i < dense.size(); ++i) {
        auto& c = pool[dense[i].id];
        c.chunk_id = dense[i].id;
        c.dense_rank = i + 1;
        c.dense_score = dense[i].score;
    }
    for (std::size_t i = 0; i < sparse.size(); ++i) {
        auto& c = pool[sparse[i].id];
        c.chunk_id = sparse[i].id;
        c.sparse_rank = i + 1;
        c.sparse_score = sparse[i].score;
    }
    std::vector<RetrievalCandidate> out;
    out.reserve(pool.size());
    for (auto& [id, c] : pool) {
        const double d = c.dense_rank ? cfg.alpha_dense / (cfg.k_rrf + static_cast<double>(*c.dense_rank)) : 0.0;
        const double s = c.sparse_rank ? cfg.alpha_sparse / (cfg.k_rrf + static_cast<double>(*c.sparse_rank)) : 0.0;
        c.rrf_score = d + s;
        out.push_back(std::move(c));
    }
    std::sort(out.begin(), out.end(), [](const RetrievalCandidate& a, const RetrievalCandidate& b) {
        return a.rrf_score != b.rrf_score ? a.rrf_score > b.rrf_score : a.chunk_id < b.chunk_id;
    });
    if (out.size() > cfg.candidate_pool) out.resize(cfg.candidate_pool);
    return out;
}

TokenOverlapScorer::TokenOverlapScorer(DomainDictionary dict, std::map<std::string, std::string> synonyms)
    : dict_(std::move(dict)), synonyms_(std::move(synonyms)) {}

std::vector<std::string> TokenOverlapScorer::canonical_tokens(std::string_view text) const {
    auto tokens = tokenize(text, dict_);
    for (auto& t : tokens) {
        if (auto it = synonyms_.find(t); it != synonyms_.end()) t = it->second;
    }
    return tokens;
}

double TokenOverlapScorer::score(std::string_view query, std::string_view chunk_text) const {
    const auto q = canonical_tokens(query);
    const auto c = canonical_tokens(chunk_text);
    const std::set<std::string> in_chunk(c.begin(), c.end());
    const std::set<std::string> distinct_query(q.begin(), q.end());
    double overlap = 0.0;
    for (const auto& t : distinct_query) overlap += in_chunk.count(t) ? 1.0 : 0.0;
    return overlap;
}

RerankError::RerankError(std::string chunk_id, const std::string& message)
    : Error("rerank failed for '" + chunk_id + "': " + message), chunk_id_(std::move(chunk_id)) {}

std::vector<RetrievalCandidate> rerank(std::vector<RetrievalCandidate> candidates, std::string_view query,
                                       const RerankScorer& scorer, const ChunkTextLookup& text_of) {
    for (auto& c : candidates) {
        try {
            c.rerank_score = scorer.score(query, text_of(c.chunk_id));
        } catch (const RerankError&) {
            throw;
        } catch (const std::exception& e) {
            throw RerankError(c.chunk_id, e.what());
        }
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const RetrievalCandidate& a, const RetrievalCandidate& b) {
                         return *a.rerank_score > *b.rerank_score;
                     });
    return candidates;
}

HybridRetriever::HybridRetriever(const InvertedIndex* lexical, const HnswIndex* vectors,
                                 const EmbeddingProvider* provider, const DomainDictionary& dict,
                                 Bm25Params bm25, const RerankScorer* scorer, ChunkTextLookup text_of)
    : lexical_(lexical),
      vectors_(vectors),
      provider_(provider),
      dict_(dict),
      bm25_(bm25),
      scorer_(scorer),
      text_of_(std::move(text_of)) {}

HybridResult HybridRetriever::search(std::string_view query, const FusionConfig& cfg) const {
    if (std::none_of(query.begin(), query.end(), [](char c) { return is_word_char(static_cast<unsigned char>(c)); })) {
        throw InputError("query must not be empty");
    }
    cfg.validate();
    if (cfg.dense_enabled && (!vectors_ || !provider_)) {
        throw ConfigError("dense retrieval enabled but no vector index is loaded");
    }
    if (cfg.sparse_enabled && !lexical_) {
        throw ConfigError("sparse retrieval enabled but no lexical index is loaded");
    }

    HybridResult result;
    const auto t0 = Clock::now();
    std::vector<ScoredId> dense, sparse;
    if (cfg.dense_enabled) {
        const auto qv = provider_->embed(query);
        dense = vectors_->search_knn(qv, cfg.candidate_pool);
    }
    const auto t1 = Clock::now();
    if (cfg.sparse_enabled) sparse = search_sparse(query, *lexical_, dict_, bm25_, cfg.candidate_pool);
    const auto t2 = Clock::now();
    auto fused = rrf_fuse(dense, sparse, cfg);
    const auto t3 = Clock::now();
    if (cfg.rerank_enabled && scorer_ && !fused.empty()) {
        try {
            fused = rerank(std::move(fused), query, *scorer_, text_of_);
        } catch (const RerankError&) {
            if (!cfg.rerank_fallback_to_rrf) throw;
            fused = rrf_fuse(dense, sparse, cfg);
            result.rerank_fell_back = true;
        }
    }
    const auto t4 = Clock::now();
    if (fused.size() > cfg.final_k) fused.resize(cfg.final_k);
    result.candidates = std::move(fused);
    result.timings.dense_ms = ms_between(t0, t1);
    result.timings.sparse_ms = ms_between(t1, t2);
    result.timings.fuse_ms = ms_between(t2, t3);
    result.timings.rerank_ms = ms_between(t3, t4);
    result.timings.total_ms = ms_between(t0, Clock::now());
    return result;
}

void write_run_lines(std::ostream& out, const std::string& query_id,
                     const std::vector<RetrievalCandidate>& ranked) {
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        const auto& c = ranked[i];
        const double score = c.rerank_score.value_or(c.rrf_score);
        out << query_id << '\t' << c.chunk_id << '\t' << (i + 1) << '\t' << fmt_optional(score) << '\t'
            << fmt_optional(c.dense_score) << '\t' << fmt_optional(c.sparse_score) << '\t'
            << fmt_optional(c.rrf_score) << '\t' << fmt_optional(c.rerank_score) << '\n';
    }
}

}  // namespace reqrag
