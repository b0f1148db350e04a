#include "reqrag/service.hpp"

#include "reqrag/error.hpp"

#include <httplib.h>
#include <json.hpp>

#include <fstream>
#include <mutex>

namespace reqrag {

using nlohmann::json;

namespace {

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json timings_json(const StageTimings& t) {
    return {{"dense_ms", t.dense_ms},
            {"sparse_ms", t.sparse_ms},
            {"fuse_ms", t.fuse_ms},
            {"rerank_ms", t.rerank_ms},
            {"total_ms", t.total_ms}};
}

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message, const std::string& field = {}) {
    json body{{"error", message}};
    if (!field.empty()) body["field"] = field;
    send_json(res, status, body);
}

// Field-level validation of a /query body.
struct QueryRequest {
    std::string query;
    QueryFlags flags;
};

QueryRequest parse_query_request(const std::string& text) {
    json body;
    try {
        body = json::parse(text);
    } catch (const json::parse_error&) {
        throw ValidationError("body", "request body is not valid JSON");
    }
    if (!body.is_object()) throw ValidationError("body", "request body must be a JSON object");
    for (const auto& [key, value] : body.items()) {
        if (key != "query" && key != "flags") throw ValidationError(key, "unknown field");
    }
    if (!body.contains("query")) throw ValidationError("query", "missing");
    if (!body["query"].is_string()) throw ValidationError("query", "must be a string");
    QueryRequest r;
    r.query = body["query"].get<std::string>();
    bool has_word = false;
    for (unsigned char c : r.query) has_word = has_word || is_word_char(c);
    if (!has_word) throw ValidationError("query", "must not be empty");
    if (body.contains("flags")) {
        const json& f = body["flags"];
        if (!f.is_object()) throw ValidationError("flags", "must be an object");
        for (const auto& [key, value] : f.items()) {
            bool* slot = key == "no_rerank"     ? &r.flags.no_rerank
                         : key == "sparse_only" ? &r.flags.sparse_only
                         : key == "dense_only"  ? &r.flags.dense_only
                         : key == "dry_run"     ? &r.flags.dry_run
                                                : nullptr;
            if (slot == nullptr) throw ValidationError("flags." + key, "unknown flag");
            if (!value.is_boolean()) throw ValidationError("flags." + key, "must be a boolean");
            *slot = value.get<bool>();
        }
        if (r.flags.sparse_only && r.flags.dense_only) {
            throw ValidationError("flags", "sparse_only and dense_only are exclusive");
        }
    }
    return r;
}

}  // namespace

std::string answer_to_json(const PipelineAnswer& a, const ChunkCatalog& catalog) {
    json sources = json::array();
    for (std::size_t i = 0; i < a.retrieval.candidates.size(); ++i) {
        const auto& c = a.retrieval.candidates[i];
        json s{{"rank", i + 1},
               {"chunk_id", c.chunk_id},
               {"dense_score", optional_number(c.dense_score)},
               {"sparse_score", optional_number(c.sparse_score)},
               {"rrf_score", c.rrf_score},
               {"rerank_score", optional_number(c.rerank_score)}};
        if (const Chunk* chunk = catalog.find(c.chunk_id)) {
            s["doc_id"] = chunk->doc_id;
            s["section_path"] = chunk->section_path;
        }
        sources.push_back(std::move(s));
    }
    json out{{"query_id", a.query_id}, {"sources", sources}, {"timings", timings_json(a.retrieval.timings)}};
    out["rerank_fell_back"] = a.retrieval.rerank_fell_back;
    if (a.orchestrated) {
        const auto& o = *a.orchestrated;
        out["answer"] = o.generation.text;
        out["tier"] = o.decision.tier_id;
        out["complexity"] = o.decision.complexity;
        out["provider_id"] = o.generation.provider_id;
        out["model_id"] = o.generation.model_id;
        out["cost"] = o.cost.cost.to_string();
    } else {
        out["answer"] = nullptr;
    }
    out["provenance_id"] = a.record ? json(a.record->record_id) : json(nullptr);
    return out.dump();
}

struct Service::Impl {
    RagPipeline& pipeline;
    httplib::Server server;
    std::mutex pending_mutex;

    explicit Impl(RagPipeline& p) : pipeline(p) {
        const int threads = p.config().service.threads;
        server.new_task_queue = [threads] { return new httplib::ThreadPool(static_cast<std::size_t>(threads)); };
        server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
            try {
                std::rethrow_exception(ep);
            } catch (const std::exception& e) {
                send_error(res, 500, e.what());
            } catch (...) {
                send_error(res, 500, "unknown error");
            }
        });
        server.Post("/query", [this](const httplib::Request& req, httplib::Response& res) { on_query(req, res); });
        server.Post("/ingest", [this](const httplib::Request& req, httplib::Response& res) { on_ingest(req, res); });
        server.Get(R"(/provenance/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            const std::string id = req.matches[1];
            if (auto rec = pipeline.provenance().get(id)) {
                res.status = 200;
                res.set_content(record_to_json(*rec), "application/json");
            } else {
                send_error(res, 404, "no provenance record '" + id + "'");
            }
        });
        server.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
            const auto& m = pipeline.manifest();
            send_json(res, 200,
                      {{"status", "ok"},
                       {"version", kVersion},
                       {"chunks", m.chunk_count},
                       {"lexical_index", m.lexical},
                       {"vector_index", m.dense},
                       {"embedding_model", m.embedding_model}});
        });
        server.Get("/metrics", [this](const httplib::Request&, httplib::Response& res) { on_metrics(res); });
    }

    void on_query(const httplib::Request& req, httplib::Response& res) {
        QueryRequest q;
        try {
            q = parse_query_request(req.body);
        } catch (const ValidationError& e) {
            send_error(res, 400, e.what(), e.field());
            return;
        }
        try {
            const PipelineAnswer a = pipeline.answer(q.query, q.flags);
            res.status = 200;
            res.set_content(answer_to_json(a, pipeline.catalog()), "application/json");
        } catch (const InputError& e) {
            send_error(res, 400, e.what(), "query");
        } catch (const ConfigError& e) {
            send_error(res, 400, e.what(), "flags");
        } catch (const AllProvidersFailedError& e) {
            send_error(res, 502, e.what());
        }
    }

    void on_ingest(const httplib::Request& req, httplib::Response& res) {
        Document doc;
        try {
            doc = parse_structured_document(req.body, 1);
        } catch (const ValidationError& e) {
            send_error(res, 400, e.what(), e.field());
            return;
        }
        const std::vector<Chunk> chunks = chunk_documents({doc}, pipeline.config());
        json ids = json::array();
        {
            std::lock_guard lock(pending_mutex);
            const auto& file = pipeline.config().paths.pending;
            if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
            std::ofstream out(file, std::ios::app | std::ios::binary);
            write_chunks(out, chunks);
            if (!out.flush()) throw IoError("failed staging chunks to " + file.string());
        }
        for (const auto& c : chunks) ids.push_back(c.chunk_id);
        send_json(res, 202, {{"doc_id", doc.doc_id}, {"chunk_ids", ids}, {"staged", true}});
    }

    void on_metrics(httplib::Response& res) {
        auto& orch = pipeline.orchestrator();
        const PipelineCounters counters = pipeline.counters();
        json tiers = json::object();
        for (const auto& t : orch.policy().tiers) tiers[std::to_string(t.tier_id)] = 0;
        for (const auto& [tier, n] : orch.ledger().count_by_tier()) tiers[std::to_string(tier)] = n;
        json by_tier = json::object();
        for (const auto& [tier, m] : orch.ledger().totals_by_tier()) by_tier[std::to_string(tier)] = m.to_string();
        json breakers = json::object();
        for (const auto& [id, state] : orch.breakers().states(orch.clock().now())) breakers[id] = to_string(state);
        send_json(res, 200,
                  {{"queries_served", counters.queries_served},
                   {"dry_runs", counters.dry_runs},
                   {"failures", counters.failures},
                   {"queries_by_tier", tiers},
                   {"ledger", {{"entries", orch.ledger().size()},
                               {"total", orch.ledger().total().to_string()},
                               {"by_tier", by_tier}}},
                   {"breakers", breakers},
                   {"provenance_records", pipeline.provenance().size()}});
    }
};

Service::Service(RagPipeline& pipeline) : impl_(std::make_unique<Impl>(pipeline)) {}
Service::~Service() = default;

bool Service::listen(const std::string& host, int port) { return impl_->server.listen(host, port); }
int Service::bind_any_port(const std::string& host) { return impl_->server.bind_to_any_port(host); }
bool Service::listen_after_bind() { return impl_->server.listen_after_bind(); }
void Service::stop() { impl_->server.stop(); }
void Service::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace reqrag
