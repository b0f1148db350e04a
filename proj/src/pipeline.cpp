#include "reqrag/pipeline.hpp"

#include "reqrag/error.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace reqrag {

namespace fs = std::filesystem;

FusionConfig apply_flags(FusionConfig cfg, const QueryFlags& flags) {
    if (flags.sparse_only && flags.dense_only) throw InputError("--sparse-only and --dense-only are exclusive");
    if (flags.no_rerank) cfg.rerank_enabled = false;
    if (flags.sparse_only) {
        cfg.sparse_enabled = true;
        cfg.dense_enabled = false;
    }
    if (flags.dense_only) {
        cfg.dense_enabled = true;
        cfg.sparse_enabled = false;
    }
    return cfg;
}

std::unique_ptr<EmbeddingProvider> make_embedding_provider(const SystemConfig& cfg) {
    const auto& e = cfg.embedding;
    if (e.kind == "http") {
        return std::make_unique<HttpEmbeddingProvider>(e.provider_id, e.model_id, e.base_url, e.path, e.api_key,
                                                       e.timeout_seconds);
    }
    return std::make_unique<HashingEmbeddingProvider>(cfg.dictionary.build(), e.synonyms, e.model_id);
}

ProviderRegistry make_providers(const SystemConfig& cfg, Clock* clock) {
    ProviderRegistry out;
    for (const auto& [id, p] : cfg.providers) {
        if (p.kind == "http") {
            out[id] = std::make_shared<HttpLlmProvider>(id, p.model_id, p.base_url, p.path, p.api_key, p.timeout_seconds);
        } else {
            out[id] = std::make_shared<MockProvider>(id, p.model_id, clock);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Ingestion and indexing

TokenStats token_stats(const std::vector<Chunk>& chunks) {
    TokenStats s;
    if (chunks.empty()) return s;
    s.min = chunks.front().token_count;
    double sum = 0.0;
    for (const auto& c : chunks) {
        s.min = std::min(s.min, c.token_count);
        s.max = std::max(s.max, c.token_count);
        sum += static_cast<double>(c.token_count);
    }
    s.mean = sum / static_cast<double>(chunks.size());
    double ss = 0.0;
    for (const auto& c : chunks) ss += std::pow(static_cast<double>(c.token_count) - s.mean, 2.0);
    s.stddev = std::sqrt(ss / static_cast<double>(chunks.size()));
    return s;
}

std::vector<Chunk> chunk_documents(const std::vector<Document>& docs, const SystemConfig& cfg) {
    const DomainDictionary dict = cfg.dictionary.build();
    MetadataRegistry registry;
    for (const auto& d : docs) registry[d.doc_id] = d.metadata;
    std::vector<Chunk> out;
    for (const auto& d : docs) {
        for (auto& c : semantic_chunk(d, cfg.chunking, dict, cfg.dictionary.tokenizer)) {
            out.push_back(enrich_metadata(std::move(c), registry));
        }
    }
    return out;
}

namespace {

void write_chunk_store(const fs::path& file, const std::vector<Chunk>& chunks) {
    if (file.has_parent_path()) fs::create_directories(file.parent_path());
    const fs::path tmp = file.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        write_chunks(out, chunks);
        if (!out.flush()) throw IoError("failed writing " + tmp.string());
    }
    fs::rename(tmp, file);
}

std::vector<Chunk> read_chunk_store(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw IoError("cannot read chunk store '" + file.string() + "'; run the ingest command first");
    return read_chunks(in);
}

template <typename Save>
void write_snapshot(const fs::path& file, Save save) {
    const fs::path tmp = file.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        save(out);
        if (!out.flush()) throw IoError("failed writing " + tmp.string());
    }
    fs::rename(tmp, file);
}

}  // namespace

IngestStats ingest_corpus(const fs::path& corpus, const SystemConfig& cfg) {
    std::ifstream in(corpus);
    if (!in) throw IoError("cannot read corpus file '" + corpus.string() + "'");
    IngestResult parsed = read_corpus(in);
    IngestStats stats;
    stats.documents = parsed.documents.size();
    stats.failures = std::move(parsed.failures);
    const std::vector<Chunk> chunks = chunk_documents(parsed.documents, cfg);
    stats.chunks = chunks.size();
    stats.tokens = token_stats(chunks);
    if (stats.documents > 0) write_chunk_store(cfg.paths.chunks, chunks);
    return stats;
}

void write_manifest(const fs::path& file, const IndexManifest& m) {
    nlohmann::json j;
    j["chunk_count"] = m.chunk_count;
    j["lexical"] = m.lexical;
    j["dense"] = m.dense;
    j["embedding_provider"] = m.embedding_provider;
    j["embedding_model"] = m.embedding_model;
    write_snapshot(file, [&](std::ostream& out) { out << j.dump(2) << '\n'; });
}

IndexManifest read_manifest(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw IoError("index manifest '" + file.string() + "' not found; run the index command first");
    try {
        const auto j = nlohmann::json::parse(in);
        IndexManifest m;
        m.chunk_count = j.at("chunk_count").get<std::size_t>();
        m.lexical = j.at("lexical").get<bool>();
        m.dense = j.at("dense").get<bool>();
        m.embedding_provider = j.at("embedding_provider").get<std::string>();
        m.embedding_model = j.at("embedding_model").get<std::string>();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("index manifest '" + file.string() + "' is corrupt: " + e.what());
    }
}

IndexManifest build_indexes(const SystemConfig& cfg, bool dense_only) {
    const std::vector<Chunk> chunks = read_chunk_store(cfg.paths.chunks);
    if (chunks.empty()) throw InputError("chunk store '" + cfg.paths.chunks.string() + "' is empty");
    fs::create_directories(cfg.paths.index_dir);

    IndexManifest m;
    m.chunk_count = chunks.size();
    m.lexical = !dense_only;
    const fs::path lexical_file = cfg.paths.index_dir / kLexicalFile;
    if (m.lexical) {
        const InvertedIndex lexical = InvertedIndex::build(chunks, cfg.dictionary.build(), cfg.dictionary.tokenizer);
        write_snapshot(lexical_file, [&](std::ostream& out) { lexical.save(out); });
    } else {
        fs::remove(lexical_file);
    }

    const auto embedder = make_embedding_provider(cfg);
    m.embedding_provider = embedder->descriptor().provider_id;
    m.embedding_model = embedder->descriptor().model_id;
    // Insert in chunk-id order so both indexes share one id space and the
    // graph is reproducible.
    std::vector<const Chunk*> order;
    for (const auto& c : chunks) order.push_back(&c);
    std::sort(order.begin(), order.end(), [](const Chunk* a, const Chunk* b) { return a->chunk_id < b->chunk_id; });
    std::vector<std::string> texts;
    for (const Chunk* c : order) texts.push_back(c->text);
    const auto vectors = embedder->embed_batch(texts);
    HnswIndex graph(cfg.hnsw);
    for (std::size_t i = 0; i < order.size(); ++i) graph.insert(order[i]->chunk_id, vectors[i]);
    graph.freeze();
    write_snapshot(cfg.paths.index_dir / kVectorFile, [&](std::ostream& out) { graph.save(out); });
    write_manifest(cfg.paths.index_dir / kManifestFile, m);
    return m;
}

std::size_t apply_pending(const SystemConfig& cfg) {
    std::ifstream pin(cfg.paths.pending, std::ios::binary);
    if (!pin) return 0;
    const std::vector<Chunk> pending = read_chunks(pin);
    pin.close();
    if (pending.empty()) return 0;
    std::set<std::string> replaced;
    for (const auto& c : pending) replaced.insert(c.doc_id);
    std::vector<Chunk> merged;
    if (fs::exists(cfg.paths.chunks)) {
        for (auto& c : read_chunk_store(cfg.paths.chunks)) {
            if (!replaced.count(c.doc_id)) merged.push_back(std::move(c));
        }
    }
    // Later stagings of the same document win.
    std::map<std::string, std::vector<Chunk>> latest;
    for (const auto& c : pending) {
        auto& slot = latest[c.doc_id];
        if (!slot.empty() && c.chunk_id <= slot.back().chunk_id) slot.clear();
        slot.push_back(c);
    }
    std::size_t applied = 0;
    for (auto& [doc, chunks] : latest) {
        applied += chunks.size();
        for (auto& c : chunks) merged.push_back(std::move(c));
    }
    write_chunk_store(cfg.paths.chunks, merged);
    fs::remove(cfg.paths.pending);
    return applied;
}

// ---------------------------------------------------------------------------
// Query pipeline

std::unique_ptr<RagPipeline> RagPipeline::open(const SystemConfig& cfg, std::shared_ptr<Clock> clock,
                                               ProviderRegistry providers) {
    cfg.validate();
    std::unique_ptr<RagPipeline> p(new RagPipeline());
    p->cfg_ = cfg;
    p->manifest_ = read_manifest(cfg.paths.index_dir / kManifestFile);
    p->dict_ = cfg.dictionary.build();
    p->catalog_ = ChunkCatalog(read_chunk_store(cfg.paths.chunks));
    if (p->catalog_.size() != p->manifest_.chunk_count) {
        throw IoError("chunk store and index disagree on the chunk count; run the index command again");
    }
    if (p->manifest_.lexical) {
        std::ifstream in(cfg.paths.index_dir / kLexicalFile, std::ios::binary);
        if (!in) throw IoError("lexical snapshot missing; run the index command first");
        p->lexical_ = InvertedIndex::load(in);
    }
    if (p->manifest_.dense) {
        std::ifstream in(cfg.paths.index_dir / kVectorFile, std::ios::binary);
        if (!in) throw IoError("vector snapshot missing; run the index command first");
        p->vectors_ = HnswIndex::load(in);
    }
    p->embedder_ = make_embedding_provider(cfg);
    if (p->embedder_->descriptor().model_id != p->manifest_.embedding_model) {
        throw ConfigError("index was built with embedding model '" + p->manifest_.embedding_model +
                          "' but the configuration selects '" + p->embedder_->descriptor().model_id + "'");
    }
    p->scorer_ = std::make_unique<TokenOverlapScorer>(p->dict_, cfg.embedding.synonyms);
    const ChunkCatalog* catalog = &p->catalog_;
    p->retriever_ = std::make_unique<HybridRetriever>(
        p->lexical_ ? &*p->lexical_ : nullptr, p->vectors_ ? &*p->vectors_ : nullptr, p->embedder_.get(), p->dict_,
        cfg.bm25, p->scorer_.get(), [catalog](const std::string& id) -> std::string_view {
            const Chunk* c = catalog->find(id);
            if (c == nullptr) throw LookupError("chunk '" + id + "' not in the chunk store");
            return c->text;
        });
    p->clock_ = clock ? std::move(clock) : std::make_shared<SystemClock>();
    if (providers.empty()) providers = make_providers(cfg, p->clock_.get());
    p->orchestrator_ = std::make_unique<Orchestrator>(cfg.routing, cfg.retry, cfg.breaker, std::move(providers), p->clock_);
    p->store_ = std::make_unique<ProvenanceStore>(cfg.paths.provenance);
    return p;
}

HybridResult RagPipeline::retrieve(std::string_view query, const QueryFlags& flags) const {
    FusionConfig fc = apply_flags(cfg_.fusion, flags);
    if (!manifest_.lexical) {
        if (flags.sparse_only) throw ConfigError("the index was built dense-only; --sparse-only is unavailable");
        fc.sparse_enabled = false;
    }
    return retriever_->search(query, fc);
}

std::string RagPipeline::next_query_id() {
    return std::to_string(clock_->epoch_ms()) + "-" + std::to_string(sequence_.fetch_add(1) + 1);
}

PipelineAnswer RagPipeline::answer(std::string_view query, const QueryFlags& flags, std::string query_id) {
    PipelineAnswer out;
    out.query_id = query_id.empty() ? next_query_id() : std::move(query_id);
    out.retrieval = retrieve(query, flags);
    if (flags.dry_run) {
        dry_runs_.fetch_add(1);
        return out;
    }
    std::vector<std::string> context;
    for (const auto& c : out.retrieval.candidates) context.push_back(std::string(catalog_.find(c.chunk_id)->text));
    try {
        out.orchestrated = orchestrator_->answer(out.query_id, query, context, dict_);
    } catch (...) {
        failures_.fetch_add(1);
        throw;
    }
    const auto& o = *out.orchestrated;
    ProvenanceRecord rec = assemble_provenance(query, out.retrieval.candidates, o.generation, o.prompt, catalog_,
                                               cfg_.provenance, o.decision.tier_id);
    rec.record_id = store_->append(rec);
    out.record = std::move(rec);
    {
        std::lock_guard lock(ledger_mutex_);
        const fs::path& file = cfg_.paths.ledger;
        if (file.has_parent_path()) fs::create_directories(file.parent_path());
        std::ofstream ledger(file, std::ios::app);
        ledger << ledger_line(o.cost) << '\n';
        if (!ledger.flush()) throw IoError("failed appending to ledger " + file.string());
    }
    served_.fetch_add(1);
    return out;
}

PipelineCounters RagPipeline::counters() const {
    return {served_.load(), dry_runs_.load(), failures_.load()};
}

}  // namespace reqrag
