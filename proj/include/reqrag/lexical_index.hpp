#pragma once

#include "reqrag/corpus.hpp"
#include "reqrag/tokenizer.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace reqrag {

struct Bm25Params {
    double k1 = 1.5;
    double b = 0.75;

    void validate() const;
};

struct ScoredId {
    std::string id;
    double score = 0.0;

    bool operator==(const ScoredId&) const = default;
};

// Document being indexed: only the id and its text matter here.
struct IndexDocument {
    std::string id;
    std::string text;
};

// Immutable BM25 inverted index over chunks.
//
// Documents are numbered in ascending chunk_id order, so posting lists sorted
// by document number are also sorted by chunk_id.
class InvertedIndex {
public:
    struct Posting {
        std::uint32_t doc = 0;
        std::uint32_t tf = 0;
    };

    InvertedIndex() = default;

    // Throws ValidationError on a duplicate id.
    static InvertedIndex build(const std::vector<IndexDocument>& docs, const DomainDictionary& dict,
                               const TokenizerOptions& opts = {});
    static InvertedIndex build(const std::vector<Chunk>& chunks, const DomainDictionary& dict,
                               const TokenizerOptions& opts = {});

    std::size_t size() const noexcept { return ids_.size(); }
    double avg_doc_length() const noexcept { return avgdl_; }
    const std::vector<std::string>& ids() const noexcept { return ids_; }
    const std::vector<std::uint32_t>& doc_lengths() const noexcept { return lengths_; }
    std::optional<std::uint32_t> doc_number(std::string_view id) const;

    // Postings for a term, empty when absent.
    const std::vector<Posting>& postings(const std::string& term) const;
    std::size_t document_frequency(const std::string& term) const { return postings(term).size(); }
    std::size_t vocabulary_size() const noexcept { return postings_.size(); }
    const TokenizerOptions& tokenizer_options() const noexcept { return opts_; }

    // Smoothed idf: ln(1 + (N - df + 0.5) / (df + 0.5)).
    double idf(std::size_t df) const;

    void save(std::ostream& out) const;
    static InvertedIndex load(std::istream& in);

    bool operator==(const InvertedIndex& other) const;

private:
    std::vector<std::string> ids_;
    std::vector<std::uint32_t> lengths_;
    std::map<std::string, std::vector<Posting>> postings_;
    double avgdl_ = 0.0;
    TokenizerOptions opts_;
};

// BM25 over the distinct query terms. Throws LookupError for an unknown chunk.
double bm25_score(const std::vector<std::string>& query_tokens, std::string_view chunk_id,
                  const InvertedIndex& index, const Bm25Params& params);

// Descending score, ties by ascending chunk_id, at most top_k entries.
std::vector<ScoredId> search_sparse(std::string_view query, const InvertedIndex& index,
                                    const DomainDictionary& dict, const Bm25Params& params,
                                    std::size_t top_k);

}  // namespace reqrag
