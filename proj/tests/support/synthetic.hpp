#pragma once

#include "reqrag/corpus.hpp"
#include "reqrag/embedding.hpp"
#include "reqrag/eval.hpp"

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace synth {

// Lowercase filler word drawn from a fixed vocabulary.
std::string word(std::mt19937_64& rng, std::size_t vocab = 400);
std::string sentence(std::mt19937_64& rng, std::size_t words, std::size_t vocab = 400);

// Random structured document: headings at random levels, paragraphs and
// table rows of random length.
reqrag::Document random_document(std::mt19937_64& rng, const std::string& doc_id, std::size_t max_blocks = 30,
                                 std::size_t max_block_words = 200);

// Document of sections with paragraphs whose word counts are roughly
// normal around `mean_words`.
reqrag::Document paragraph_document(std::mt19937_64& rng, const std::string& doc_id, double mean_words,
                                    double sd_words);

std::string to_corpus_line(const reqrag::Document& doc);

std::vector<reqrag::EmbeddingVector> random_unit_vectors(std::size_t n, std::uint64_t seed);

// Half-lexical / half-paraphrase retrieval fixture.
//
// Lexical queries name a unique part number plus two topic words; a short
// distractor chunk shares the first topic word, which pulls dense retrieval
// off target while BM25 keys on the part number. Paraphrase queries use words
// that never occur in the corpus but map onto corpus words through the
// synonym table, so BM25 finds nothing while the synonym-aware embedding
// does.
struct RetrievalFixture {
    std::vector<reqrag::Chunk> chunks;
    std::vector<std::pair<std::string, std::string>> queries;  // (query_id, text)
    std::vector<std::string> lexical_ids;
    std::vector<std::string> paraphrase_ids;
    std::map<std::string, std::string> synonyms;
    reqrag::eval::Qrels qrels;
    std::map<std::string, std::string> relevant;  // query_id -> chunk_id
    std::vector<reqrag::Document> documents;      // one single-paragraph document per chunk
};

RetrievalFixture retrieval_fixture(std::uint64_t seed = 2024);

}  // namespace synth
