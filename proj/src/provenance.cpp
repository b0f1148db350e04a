#include "reqrag/provenance.hpp"

#include "reqrag/error.hpp"

#include <json.hpp>
#include <openssl/evp.h>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <set>

namespace reqrag {

using nlohmann::json;

namespace {

std::set<std::string> token_set(std::string_view text, const DomainDictionary& dict) {
    auto tokens = tokenize(text, dict);
    return {tokens.begin(), tokens.end()};
}

std::vector<std::string> split_sentences(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (c == '\n') {
            out.push_back(std::move(cur));
            cur.clear();
            continue;
        }
        cur += c;
        const bool terminal = c == '.' || c == '!' || c == '?';
        const bool boundary = i + 1 == text.size() || std::isspace(static_cast<unsigned char>(text[i + 1]));
        if (terminal && boundary) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> opt_double(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    return it->get<double>();
}

std::int64_t wall_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

}  // namespace

std::string sha256_hex(std::string_view data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw Error("sha256 digest failed");
    }
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xF];
    }
    return out;
}

double retrieval_coverage(std::string_view answer, const std::vector<std::string>& sources, double threshold,
                          const DomainDictionary& dict) {
    if (sources.empty()) return 0.0;
    std::vector<std::set<std::string>> source_tokens;
    source_tokens.reserve(sources.size());
    for (const auto& s : sources) source_tokens.push_back(token_set(s, dict));
    std::size_t sentences = 0, covered = 0;
    for (const auto& sentence : split_sentences(answer)) {
        const auto toks = token_set(sentence, dict);
        if (toks.empty()) continue;
        ++sentences;
        double best = 0.0;
        for (const auto& src : source_tokens) {
            std::size_t shared = 0;
            for (const auto& t : toks) shared += src.count(t);
            best = std::max(best, static_cast<double>(shared) / static_cast<double>(toks.size()));
        }
        if (best > threshold) ++covered;
    }
    return sentences == 0 ? 0.0 : static_cast<double>(covered) / static_cast<double>(sentences);
}

std::optional<double> multi_attempt_consistency(const std::vector<std::string>& generations,
                                                const DomainDictionary& dict) {
    if (generations.size() < 2) return std::nullopt;
    std::vector<std::set<std::string>> sets;
    for (const auto& g : generations) sets.push_back(token_set(g, dict));
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < sets.size(); ++i) {
        for (std::size_t j = i + 1; j < sets.size(); ++j) {
            std::size_t inter = 0;
            for (const auto& t : sets[i]) inter += sets[j].count(t);
            const std::size_t uni = sets[i].size() + sets[j].size() - inter;
            sum += uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
            ++pairs;
        }
    }
    return sum / static_cast<double>(pairs);
}

ProvenanceRecord assemble_provenance(std::string_view query, const std::vector<RetrievalCandidate>& candidates,
                                     const GenerationResult& generation, std::string_view prompt,
                                     const ChunkCatalog& catalog, const ProvenanceOptions& opts, int tier_id,
                                     const std::vector<std::string>& regenerations) {
    ProvenanceRecord rec;
    rec.query = std::string(query);
    rec.answer = generation.text;
    std::vector<std::string> source_texts;
    for (const auto& c : candidates) {
        SourceAttribution a;
        a.chunk_id = c.chunk_id;
        if (const Chunk* chunk = catalog.find(c.chunk_id)) {
            a.doc_id = chunk->doc_id;
            a.version_timestamp = chunk->metadata.version;
            a.section_path = chunk->section_path;
            a.block_range = chunk->block_range;
            source_texts.push_back(chunk->text);
        }
        rec.attributions.push_back(std::move(a));
        rec.retrieval_scores.push_back({c.dense_score, c.sparse_score, c.rrf_score, c.rerank_score});
    }
    rec.grounded = !rec.attributions.empty();
    rec.generation.provider_id = generation.provider_id;
    rec.generation.model_id = generation.model_id;
    rec.generation.tokens_in = generation.tokens_in;
    rec.generation.tokens_out = generation.tokens_out;
    rec.generation.attempts = generation.attempts;
    rec.generation.started_at_ms = generation.started_at_ms;
    rec.generation.finished_at_ms = generation.finished_at_ms;
    rec.generation.tier_id = tier_id;
    rec.generation.prompt_digest = sha256_hex(prompt);
    if (opts.store_prompt_text) rec.generation.prompt_text = std::string(prompt);
    rec.confidence.self_assessed_confidence = generation.self_confidence;
    rec.confidence.retrieval_coverage =
        rec.grounded ? retrieval_coverage(generation.text, source_texts, opts.coverage_threshold) : 0.0;
    rec.confidence.multi_attempt_consistency = multi_attempt_consistency(regenerations);
    return rec;
}

bool VerificationReport::all_verified() const {
    for (const auto& i : items) {
        if (i.status != Status::verified) return false;
    }
    return true;
}

std::vector<VerificationReport::Item> VerificationReport::failures() const {
    std::vector<Item> out;
    for (const auto& i : items) {
        if (i.status != Status::verified) out.push_back(i);
    }
    return out;
}

const char* to_string(VerificationReport::Status s) noexcept {
    switch (s) {
        case VerificationReport::Status::verified: return "verified";
        case VerificationReport::Status::missing_chunk: return "missing_chunk";
        case VerificationReport::Status::section_mismatch: return "section_mismatch";
    }
    return "verified";
}

VerificationReport verify_record(const ProvenanceRecord& record, const ChunkCatalog& corpus) {
    VerificationReport report;
    for (std::size_t i = 0; i < record.attributions.size(); ++i) {
        const auto& a = record.attributions[i];
        VerificationReport::Item item;
        item.index = i;
        item.chunk_id = a.chunk_id;
        item.recorded_path = a.section_path;
        const Chunk* chunk = corpus.find(a.chunk_id);
        if (!chunk) {
            item.status = VerificationReport::Status::missing_chunk;
        } else {
            item.current_path = chunk->section_path;
            if (chunk->section_path != a.section_path) item.status = VerificationReport::Status::section_mismatch;
        }
        report.items.push_back(std::move(item));
    }
    return report;
}

std::string record_to_json(const ProvenanceRecord& r) {
    json j;
    j["record_id"] = r.record_id;
    j["query"] = r.query;
    j["answer"] = r.answer;
    json attrs = json::array();
    for (std::size_t i = 0; i < r.attributions.size(); ++i) {
        const auto& a = r.attributions[i];
        const auto& s = r.retrieval_scores.at(i);
        attrs.push_back({{"doc_id", a.doc_id},
                         {"version_timestamp", a.version_timestamp},
                         {"section_path", a.section_path},
                         {"chunk_id", a.chunk_id},
                         {"block_range", {a.block_range.start, a.block_range.end}},
                         {"scores",
                          {{"dense", opt(s.dense_score)},
                           {"sparse", opt(s.sparse_score)},
                           {"rrf", opt(s.rrf_score)},
                           {"rerank", opt(s.rerank_score)}}}});
    }
    j["attributions"] = std::move(attrs);
    const auto& g = r.generation;
    j["generation"] = {{"provider_id", g.provider_id},
                       {"model_id", g.model_id},
                       {"tokens_in", g.tokens_in},
                       {"tokens_out", g.tokens_out},
                       {"attempts", g.attempts},
                       {"started_at_ms", g.started_at_ms},
                       {"finished_at_ms", g.finished_at_ms},
                       {"tier_id", g.tier_id},
                       {"prompt_digest", g.prompt_digest},
                       {"prompt_text", g.prompt_text ? json(*g.prompt_text) : json(nullptr)}};
    j["confidence"] = {{"self_assessed_confidence", opt(r.confidence.self_assessed_confidence)},
                       {"retrieval_coverage", r.confidence.retrieval_coverage},
                       {"multi_attempt_consistency", opt(r.confidence.multi_attempt_consistency)}};
    j["grounded"] = r.grounded;
    j["created_at_ms"] = r.created_at_ms;
    return j.dump();
}

ProvenanceRecord record_from_json(std::string_view text) {
    try {
        const json j = json::parse(text);
        ProvenanceRecord r;
        r.record_id = j.at("record_id").get<std::string>();
        r.query = j.at("query").get<std::string>();
        r.answer = j.at("answer").get<std::string>();
        for (const auto& a : j.at("attributions")) {
            SourceAttribution sa;
            sa.doc_id = a.at("doc_id").get<std::string>();
            sa.version_timestamp = a.at("version_timestamp").get<std::string>();
            sa.section_path = a.at("section_path").get<std::vector<std::string>>();
            sa.chunk_id = a.at("chunk_id").get<std::string>();
            sa.block_range = {a.at("block_range").at(0).get<std::size_t>(), a.at("block_range").at(1).get<std::size_t>()};
            const auto& s = a.at("scores");
            r.attributions.push_back(std::move(sa));
            r.retrieval_scores.push_back(
                {opt_double(s, "dense"), opt_double(s, "sparse"), opt_double(s, "rrf"), opt_double(s, "rerank")});
        }
        const auto& g = j.at("generation");
        r.generation.provider_id = g.at("provider_id").get<std::string>();
        r.generation.model_id = g.at("model_id").get<std::string>();
        r.generation.tokens_in = g.at("tokens_in").get<std::size_t>();
        r.generation.tokens_out = g.at("tokens_out").get<std::size_t>();
        r.generation.attempts = g.at("attempts").get<std::size_t>();
        r.generation.started_at_ms = g.at("started_at_ms").get<std::int64_t>();
        r.generation.finished_at_ms = g.at("finished_at_ms").get<std::int64_t>();
        r.generation.tier_id = g.at("tier_id").get<int>();
        r.generation.prompt_digest = g.at("prompt_digest").get<std::string>();
        if (auto it = g.find("prompt_text"); it != g.end() && !it->is_null()) {
            r.generation.prompt_text = it->get<std::string>();
        }
        const auto& c = j.at("confidence");
        r.confidence.self_assessed_confidence = opt_double(c, "self_assessed_confidence");
        r.confidence.retrieval_coverage = c.at("retrieval_coverage").get<double>();
        r.confidence.multi_attempt_consistency = opt_double(c, "multi_attempt_consistency");
        r.grounded = j.at("grounded").get<bool>();
        r.created_at_ms = j.at("created_at_ms").get<std::int64_t>();
        return r;
    } catch (const json::exception& e) {
        throw ValidationError("provenance", std::string("invalid record: ") + e.what());
    }
}

ProvenanceStore::ProvenanceStore(std::filesystem::path path) : path_(std::move(path)) {
    if (path_.empty() || !std::filesystem::exists(path_)) return;
    std::ifstream in(path_);
    if (!in) throw IoError("cannot read provenance store " + path_.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        ProvenanceRecord r;
        try {
            r = record_from_json(line);
        } catch (const ValidationError& e) {
            throw ParseError(lineno, e.what());
        }
        unsigned long long seq = 0;
        if (std::sscanf(r.record_id.c_str(), "prov-%llu", &seq) == 1) next_ = std::max<std::uint64_t>(next_, seq + 1);
        records_.emplace(r.record_id, std::move(r));
    }
}

std::string ProvenanceStore::append(ProvenanceRecord record) {
    std::unique_lock lock(mutex_);
    char id[32];
    std::snprintf(id, sizeof id, "prov-%08llu", static_cast<unsigned long long>(next_++));
    record.record_id = id;
    if (record.created_at_ms == 0) record.created_at_ms = wall_ms();
    if (!path_.empty()) {
        if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
        std::ofstream out(path_, std::ios::app);
        out << record_to_json(record) << '\n';
        out.flush();
        if (!out) throw IoError("failed appending to provenance store " + path_.string());
    }
    records_.emplace(record.record_id, std::move(record));
    return id;
}

std::optional<ProvenanceRecord> ProvenanceStore::get(const std::string& record_id) const {
    std::shared_lock lock(mutex_);
    auto it = records_.find(record_id);
    if (it == records_.end()) return std::nullopt;
    return it->second;
}

std::size_t ProvenanceStore::size() const {
    std::shared_lock lock(mutex_);
    return records_.size();
}

}  // namespace reqrag
