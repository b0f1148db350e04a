#include "reqrag/corpus.hpp"

#include "reqrag/error.hpp"

#include <json.hpp>

#include <cstdio>
#include <istream>
#include <ostream>
#include <unordered_set>

namespace reqrag {

using nlohmann::json;

namespace {

const json* find_field(const json& obj, const char* name) {
    auto it = obj.find(name);
    return it == obj.end() || it->is_null() ? nullptr : &*it;
}

std::string require_string(const json& obj, const char* name, std::size_t offset,
                           bool allow_empty = false) {
    const json* v = find_field(obj, name);
    if (!v) throw ValidationError(name, "missing required field", offset);
    if (!v->is_string()) throw ValidationError(name, "expected a string", offset);
    auto s = v->get<std::string>();
    if (!allow_empty && s.empty()) throw ValidationError(name, "must not be empty", offset);
    return s;
}

std::string optional_string(const json& obj, const char* name, std::size_t offset) {
    const json* v = find_field(obj, name);
    if (!v) return {};
    if (!v->is_string()) throw ValidationError(name, "expected a string", offset);
    return v->get<std::string>();
}

bool has_word(std::string_view text) {
    for (unsigned char c : text) {
        if (is_word_char(c)) return true;
    }
    return false;
}

Block parse_block(const json& b, std::size_t index, std::size_t offset) {
    const std::string prefix = "blocks[" + std::to_string(index) + "]";
    if (!b.is_object()) throw ValidationError(prefix, "expected an object", offset);
    const json* kind = find_field(b, "kind");
    if (!kind || !kind->is_string()) {
        throw ValidationError(prefix + ".kind", "missing or not a string", offset);
    }
    Block block;
    const auto k = kind->get<std::string>();
    if (k == "heading") {
        block.kind = BlockKind::heading;
        const json* level = find_field(b, "level");
        if (!level || !level->is_number_integer()) {
            throw ValidationError(prefix + ".level", "heading requires an integer level", offset);
        }
        const auto lv = level->get<std::int64_t>();
        if (lv < 1 || lv > 6) {
            throw ValidationError(prefix + ".level",
                                  "heading level " + std::to_string(lv) + " outside 1..6", offset);
        }
        block.level = static_cast<int>(lv);
    } else if (k == "paragraph") {
        block.kind = BlockKind::paragraph;
    } else if (k == "table_row") {
        block.kind = BlockKind::table_row;
    } else {
        throw ValidationError(prefix + ".kind", "unknown block kind '" + k + "'", offset);
    }
    const json* text = find_field(b, "text");
    if (!text || !text->is_string()) {
        throw ValidationError(prefix + ".text", "missing or not a string", offset);
    }
    block.text = text->get<std::string>();
    if (!has_word(block.text)) {
        throw ValidationError(prefix + ".text", "text is empty or has no word characters", offset);
    }
    return block;
}

void parse_metadata(const json& rec, ChunkMetadata& md, std::size_t offset) {
    const json* m = find_field(rec, "metadata");
    if (!m) return;
    if (!m->is_object()) throw ValidationError("metadata", "expected an object", offset);
    if (const json* v = find_field(*m, "category")) {
        if (!v->is_string()) throw ValidationError("metadata.category", "expected a string", offset);
        md.category = v->get<std::string>();
    }
    if (const json* v = find_field(*m, "compliance_level")) {
        if (!v->is_string()) {
            throw ValidationError("metadata.compliance_level", "expected a string", offset);
        }
        md.compliance_level = v->get<std::string>();
    }
    if (const json* v = find_field(*m, "supplier_tags")) {
        if (!v->is_array()) throw ValidationError("metadata.supplier_tags", "expected an array", offset);
        for (const auto& t : *v) {
            if (!t.is_string() || t.get<std::string>().empty()) {
                throw ValidationError("metadata.supplier_tags", "tags must be non-empty strings",
                                      offset);
            }
            md.supplier_tags.insert(t.get<std::string>());
        }
    }
    if (const json* v = find_field(*m, "year")) {
        if (!v->is_number_integer()) throw ValidationError("metadata.year", "expected an integer", offset);
        const auto y = v->get<std::int64_t>();
        if (y < 1990 || y > 2100) {
            throw ValidationError("metadata.year", "year " + std::to_string(y) + " outside 1990..2100",
                                  offset);
        }
        md.year = static_cast<int>(y);
    }
}

std::size_t abs_diff(std::size_t a, std::size_t b) { return a > b ? a - b : b - a; }

json metadata_to_json(const ChunkMetadata& md) {
    json j;
    j["doc_id"] = md.doc_id;
    j["version"] = md.version;
    j["category"] = md.category ? json(*md.category) : json(nullptr);
    j["compliance_level"] = md.compliance_level ? json(*md.compliance_level) : json(nullptr);
    j["supplier_tags"] = md.supplier_tags;
    j["year"] = md.year ? json(*md.year) : json(nullptr);
    j["section_path"] = md.section_path;
    return j;
}

ChunkMetadata metadata_from_json(const json& j) {
    ChunkMetadata md;
    md.doc_id = j.at("doc_id").get<std::string>();
    md.version = j.at("version").get<std::string>();
    if (const json* v = find_field(j, "category")) md.category = v->get<std::string>();
    if (const json* v = find_field(j, "compliance_level")) md.compliance_level = v->get<std::string>();
    if (const json* v = find_field(j, "supplier_tags")) md.supplier_tags = v->get<std::set<std::string>>();
    if (const json* v = find_field(j, "year")) md.year = v->get<int>();
    if (const json* v = find_field(j, "section_path")) {
        md.section_path = v->get<std::vector<std::string>>();
    }
    return md;
}

}  // namespace

std::string_view to_string(BlockKind kind) noexcept {
    switch (kind) {
        case BlockKind::heading: return "heading";
        case BlockKind::paragraph: return "paragraph";
        case BlockKind::table_row: return "table_row";
    }
    return "paragraph";
}

void ChunkingConfig::validate() const {
    if (min_tokens == 0) throw ValidationError("chunking.min_tokens", "must be > 0");
    if (min_tokens > target_tokens) {
        throw ValidationError("chunking.min_tokens", "must not exceed target_tokens");
    }
    if (target_tokens > max_tokens) {
        throw ValidationError("chunking.target_tokens", "must not exceed max_tokens");
    }
}

std::string format_date(const std::chrono::year_month_day& date) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(date.year()),
                  static_cast<unsigned>(date.month()), static_cast<unsigned>(date.day()));
    return buf;
}

std::optional<std::chrono::year_month_day> parse_date(std::string_view text) {
    if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
    auto digits = [&](std::size_t from, std::size_t n) -> std::optional<int> {
        int v = 0;
        for (std::size_t i = from; i < from + n; ++i) {
            if (text[i] < '0' || text[i] > '9') return std::nullopt;
            v = v * 10 + (text[i] - '0');
        }
        return v;
    };
    auto y = digits(0, 4), m = digits(5, 2), d = digits(8, 2);
    if (!y || !m || !d) return std::nullopt;
    std::chrono::year_month_day ymd{std::chrono::year{*y}, std::chrono::month{static_cast<unsigned>(*m)},
                                    std::chrono::day{static_cast<unsigned>(*d)}};
    if (!ymd.ok()) return std::nullopt;
    return ymd;
}

Document parse_structured_document(std::string_view raw, std::size_t offset) {
    json rec;
    try {
        rec = json::parse(raw);
    } catch (const json::parse_error& e) {
        throw ValidationError("record", std::string("malformed JSON: ") + e.what(), offset);
    }
    if (!rec.is_object()) throw ValidationError("record", "expected a JSON object", offset);

    Document doc;
    doc.doc_id = require_string(rec, "doc_id", offset);
    const auto version = require_string(rec, "version_timestamp", offset);
    auto date = parse_date(version);
    if (!date) {
        throw ValidationError("version_timestamp", "'" + version + "' is not an ISO-8601 date",
                              offset);
    }
    doc.version_timestamp = *date;
    doc.title = optional_string(rec, "title", offset);
    doc.source_tag = optional_string(rec, "source_tag", offset);

    const json* blocks = find_field(rec, "blocks");
    if (!blocks) throw ValidationError("blocks", "missing required field", offset);
    if (!blocks->is_array()) throw ValidationError("blocks", "expected an array", offset);
    doc.blocks.reserve(blocks->size());
    for (std::size_t i = 0; i < blocks->size(); ++i) {
        doc.blocks.push_back(parse_block((*blocks)[i], i, offset));
    }

    doc.metadata.doc_id = doc.doc_id;
    doc.metadata.version = format_date(doc.version_timestamp);
    parse_metadata(rec, doc.metadata, offset);
    if (!doc.metadata.year) doc.metadata.year = static_cast<int>(doc.version_timestamp.year());
    return doc;
}

std::vector<Chunk> semantic_chunk(const Document& doc, const ChunkingConfig& cfg,
                                  const DomainDictionary& dict, const TokenizerOptions& opts) {
    cfg.validate();
    std::vector<Chunk> out;
    if (doc.blocks.empty()) return out;

    const std::size_t n = doc.blocks.size();
    std::vector<std::size_t> tokens(n);
    std::vector<std::vector<std::string>> paths(n);
    std::vector<std::pair<int, std::string>> stack;
    std::vector<std::size_t> section_starts;
    for (std::size_t i = 0; i < n; ++i) {
        const Block& b = doc.blocks[i];
        tokens[i] = count_tokens(b.text, dict, opts);
        if (b.kind == BlockKind::heading) {
            while (!stack.empty() && stack.back().first >= b.level) stack.pop_back();
            stack.emplace_back(b.level, b.text);
            section_starts.push_back(i);
        } else if (i == 0) {
            section_starts.push_back(0);
        }
        for (const auto& [lvl, text] : stack) paths[i].push_back(text);
    }
    section_starts.push_back(n);

    std::vector<BlockRange> ranges;
    for (std::size_t s = 0; s + 1 < section_starts.size(); ++s) {
        const std::size_t begin = section_starts[s];
        const std::size_t end = section_starts[s + 1];
        std::vector<std::pair<BlockRange, std::size_t>> section;
        BlockRange cur{begin, begin};
        std::size_t cur_tokens = 0;
        for (std::size_t i = begin; i < end; ++i) {
            if (cur.size() == 0) {
                cur = {i, i + 1};
                cur_tokens = tokens[i];
                continue;
            }
            const std::size_t grown = cur_tokens + tokens[i];
            const bool fits = grown <= cfg.max_tokens;
            const bool closer = cur_tokens < cfg.min_tokens ||
                                abs_diff(grown, cfg.target_tokens) <= abs_diff(cur_tokens, cfg.target_tokens);
            if (fits && closer) {
                cur.end = i + 1;
                cur_tokens = grown;
            } else {
                section.emplace_back(cur, cur_tokens);
                cur = {i, i + 1};
                cur_tokens = tokens[i];
            }
        }
        if (cur.size() > 0) section.emplace_back(cur, cur_tokens);
        if (section.size() >= 2) {
            auto& last = section.back();
            auto& prev = section[section.size() - 2];
            if (last.second < cfg.min_tokens && prev.second + last.second <= cfg.max_tokens) {
                prev.first.end = last.first.end;
                prev.second += last.second;
                section.pop_back();
            }
        }
        for (const auto& [range, count] : section) ranges.push_back(range);
    }

    out.reserve(ranges.size());
    for (std::size_t c = 0; c < ranges.size(); ++c) {
        const BlockRange r = ranges[c];
        Chunk chunk;
        char ordinal[24];
        std::snprintf(ordinal, sizeof ordinal, "%04zu", c);
        chunk.chunk_id = doc.doc_id + "#" + ordinal;
        chunk.doc_id = doc.doc_id;
        chunk.section_path = paths[r.start];
        chunk.block_range = r;
        for (std::size_t i = r.start; i < r.end; ++i) {
            if (i > r.start) chunk.text += '\n';
            chunk.text += doc.blocks[i].text;
        }
        chunk.token_count = count_tokens(chunk.text, dict, opts);
        chunk.metadata.doc_id = doc.doc_id;
        chunk.metadata.version = format_date(doc.version_timestamp);
        chunk.metadata.section_path = chunk.section_path;
        out.push_back(std::move(chunk));
    }
    return out;
}

Chunk enrich_metadata(Chunk chunk, const MetadataRegistry& registry) {
    auto it = registry.find(chunk.doc_id);
    if (it == registry.end()) {
        throw LookupError("doc_id '" + chunk.doc_id + "' not present in metadata registry");
    }
    ChunkMetadata merged = it->second;
    const ChunkMetadata& own = chunk.metadata;
    merged.doc_id = chunk.doc_id;
    if (!own.version.empty()) merged.version = own.version;
    if (own.category) merged.category = own.category;
    if (own.compliance_level) merged.compliance_level = own.compliance_level;
    if (!own.supplier_tags.empty()) merged.supplier_tags = own.supplier_tags;
    if (own.year) merged.year = own.year;
    if (!merged.year) {
        if (auto d = parse_date(merged.version)) merged.year = static_cast<int>(d->year());
    }
    merged.section_path = chunk.section_path;
    chunk.metadata = std::move(merged);
    return chunk;
}

IngestResult read_corpus(std::istream& in) {
    IngestResult result;
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            Document doc = parse_structured_document(line, lineno);
            if (!seen.insert(doc.doc_id).second) {
                throw ValidationError("doc_id", "duplicate doc_id '" + doc.doc_id + "'", lineno);
            }
            result.documents.push_back(std::move(doc));
        } catch (const ValidationError& e) {
            result.failures.push_back({lineno, e.field(), e.what()});
        }
    }
    return result;
}

std::string chunk_to_json_line(const Chunk& chunk) {
    json j;
    j["chunk_id"] = chunk.chunk_id;
    j["doc_id"] = chunk.doc_id;
    j["section_path"] = chunk.section_path;
    j["block_range"] = {chunk.block_range.start, chunk.block_range.end};
    j["token_count"] = chunk.token_count;
    j["text"] = chunk.text;
    j["metadata"] = metadata_to_json(chunk.metadata);
    return j.dump();
}

Chunk chunk_from_json_line(std::string_view line, std::size_t offset) {
    try {
        const json j = json::parse(line);
        Chunk c;
        c.chunk_id = j.at("chunk_id").get<std::string>();
        c.doc_id = j.at("doc_id").get<std::string>();
        c.section_path = j.at("section_path").get<std::vector<std::string>>();
        const auto& br = j.at("block_range");
        c.block_range = {br.at(0).get<std::size_t>(), br.at(1).get<std::size_t>()};
        c.token_count = j.at("token_count").get<std::size_t>();
        c.text = j.at("text").get<std::string>();
        c.metadata = metadata_from_json(j.at("metadata"));
        return c;
    } catch (const json::exception& e) {
        throw ParseError(offset, std::string("invalid chunk record: ") + e.what());
    }
}

void write_chunks(std::ostream& out, const std::vector<Chunk>& chunks) {
    for (const auto& c : chunks) out << chunk_to_json_line(c) << '\n';
}

std::vector<Chunk> read_chunks(std::istream& in) {
    std::vector<Chunk> chunks;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        chunks.push_back(chunk_from_json_line(line, lineno));
    }
    return chunks;
}

}  // namespace reqrag

namespace reqrag {

ChunkCatalog::ChunkCatalog(std::vector<Chunk> chunks) : chunks_(std::move(chunks)) { reindex(); }

void ChunkCatalog::reindex() {
    by_id_.clear();
    for (std::size_t i = 0; i < chunks_.size(); ++i) {
        if (!by_id_.emplace(chunks_[i].chunk_id, i).second) {
            throw ValidationError("chunk_id", "duplicate chunk_id '" + chunks_[i].chunk_id + "'");
        }
    }
}

const Chunk* ChunkCatalog::find(std::string_view chunk_id) const {
    auto it = by_id_.find(chunk_id);
    return it == by_id_.end() ? nullptr : &chunks_[it->second];
}

bool ChunkCatalog::erase(std::string_view chunk_id) {
    auto it = by_id_.find(chunk_id);
    if (it == by_id_.end()) return false;
    chunks_.erase(chunks_.begin() + static_cast<std::ptrdiff_t>(it->second));
    reindex();
    return true;
}

}  // namespace reqrag
