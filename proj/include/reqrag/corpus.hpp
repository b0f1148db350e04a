#pragma once

#include "reqrag/tokenizer.hpp"

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace reqrag {

enum class BlockKind { heading, paragraph, table_row };

std::string_view to_string(BlockKind kind) noexcept;

struct Block {
    BlockKind kind = BlockKind::paragraph;
    int level = 0;  // 1..6 for headings, 0 otherwise
    std::string text;

    bool operator==(const Block&) const = default;
};

// Metadata attached to every chunk. Fields other than doc_id/version are
// optional so that per-chunk overrides can be layered over registry defaults.
struct ChunkMetadata {
    std::string doc_id;
    std::string version;  // ISO-8601 date of the source document
    std::optional<std::string> category;
    std::optional<std::string> compliance_level;
    std::set<std::string> supplier_tags;
    std::optional<int> year;
    std::vector<std::string> section_path;

    bool operator==(const ChunkMetadata&) const = default;
};

struct Document {
    std::string doc_id;
    std::chrono::year_month_day version_timestamp{};
    std::string title;
    std::string source_tag;
    std::vector<Block> blocks;
    ChunkMetadata metadata;  // record-level defaults (doc_id/version filled in)
};

struct BlockRange {
    std::size_t start = 0;
    std::size_t end = 0;  // exclusive

    std::size_t size() const noexcept { return end - start; }
    bool operator==(const BlockRange&) const = default;
};

struct Chunk {
    std::string chunk_id;
    std::string doc_id;
    std::vector<std::string> section_path;
    BlockRange block_range;
    std::size_t token_count = 0;
    std::string text;
    ChunkMetadata metadata;

    bool operator==(const Chunk&) const = default;
};

struct ChunkingConfig {
    std::size_t target_tokens = 384;
    std::size_t min_tokens = 64;
    std::size_t max_tokens = 768;

    // Throws ValidationError unless 0 < min <= target <= max.
    void validate() const;
};

std::string format_date(const std::chrono::year_month_day& date);
// Strict YYYY-MM-DD; std::nullopt for anything else, including impossible dates.
std::optional<std::chrono::year_month_day> parse_date(std::string_view text);

// Parses one corpus JSONL record. `offset` is reported in validation errors.
Document parse_structured_document(std::string_view raw, std::size_t offset = 0);

// Splits a document into chunks that never cross a heading and never split a
// block. Blocks are packed greedily toward target_tokens within max_tokens; a
// trailing fragment below min_tokens is merged into its predecessor in the
// same section when the result still fits.
std::vector<Chunk> semantic_chunk(const Document& doc, const ChunkingConfig& cfg,
                                  const DomainDictionary& dict,
                                  const TokenizerOptions& opts = {});

using MetadataRegistry = std::map<std::string, ChunkMetadata>;

// Layers the chunk's explicit metadata over the registry defaults for its
// document. Throws LookupError when the document is not registered.
Chunk enrich_metadata(Chunk chunk, const MetadataRegistry& registry);

// Per-record failure collected while reading a corpus file.
struct IngestFailure {
    std::size_t offset = 0;  // 1-based line number
    std::string field;
    std::string message;
};

struct IngestResult {
    std::vector<Document> documents;
    std::vector<IngestFailure> failures;
};

// Reads a corpus JSONL stream. Malformed records are reported, not thrown;
// duplicate doc_ids are reported as failures of the later record.
IngestResult read_corpus(std::istream& in);

// Chunk store persistence: one JSON object per line.
std::string chunk_to_json_line(const Chunk& chunk);
Chunk chunk_from_json_line(std::string_view line, std::size_t offset = 0);
void write_chunks(std::ostream& out, const std::vector<Chunk>& chunks);
std::vector<Chunk> read_chunks(std::istream& in);

}  // namespace reqrag

namespace reqrag {

// Read-only chunk lookup by id.
class ChunkCatalog {
public:
    ChunkCatalog() = default;
    explicit ChunkCatalog(std::vector<Chunk> chunks);  // throws ValidationError on duplicate ids

    const Chunk* find(std::string_view chunk_id) const;
    const std::vector<Chunk>& chunks() const noexcept { return chunks_; }
    std::size_t size() const noexcept { return chunks_.size(); }
    // Removes a chunk; used to model corpus changes.
    bool erase(std::string_view chunk_id);

private:
    void reindex();

    std::vector<Chunk> chunks_;
    std::map<std::string, std::size_t, std::less<>> by_id_;
};

}  // namespace reqrag
