#include "reqrag/commands.hpp"

#include "reqrag/error.hpp"
#include "reqrag/service.hpp"

#include <json.hpp>

#include <csignal>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

namespace reqrag {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int fail(std::ostream& err, const std::exception& e) {
    err << "error: " << e.what() << '\n';
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const InputError*>(&e)) return kExitUsage;
    return kExitFailure;
}

std::ifstream open_input(const fs::path& p, const char* what) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError(std::string("cannot read ") + what + " '" + p.string() + "'");
    return in;
}

std::string fixed(double v, int digits) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(digits) << v;
    return s.str();
}

std::string score_or_dash(const std::optional<double>& v) { return v ? fixed(*v, 4) : "-"; }

std::string join_path(const std::vector<std::string>& path) {
    std::string s;
    for (const auto& p : path) s += (s.empty() ? "" : " > ") + p;
    return s;
}

void print_timings(std::ostream& out, const StageTimings& t) {
    out << "timings (ms): dense " << fixed(t.dense_ms, 2) << "  sparse " << fixed(t.sparse_ms, 2) << "  fuse "
        << fixed(t.fuse_ms, 2) << "  rerank " << fixed(t.rerank_ms, 2) << "  total " << fixed(t.total_ms, 2)
        << '\n';
}

json stage_json(const eval::StageSummary& s) { return {{"mean", s.mean}, {"p50", s.p50}, {"p95", s.p95}}; }

json latency_json(const eval::LatencySummary& l) {
    return {{"count", l.count},          {"dense", stage_json(l.dense)},   {"sparse", stage_json(l.sparse)},
            {"fuse", stage_json(l.fuse)}, {"rerank", stage_json(l.rerank)}, {"total", stage_json(l.total)}};
}

std::string pad(const std::string& s, std::size_t width) {
    return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

std::string lpad(const std::string& s, std::size_t width) {
    return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

}  // namespace

void write_timings_line(std::ostream& out, const std::string& query_id, const StageTimings& t) {
    out << query_id << '\t' << fixed(t.dense_ms, 4) << '\t' << fixed(t.sparse_ms, 4) << '\t' << fixed(t.fuse_ms, 4)
        << '\t' << fixed(t.rerank_ms, 4) << '\t' << fixed(t.total_ms, 4) << '\n';
}

std::vector<StageTimings> parse_timings(std::istream& in) {
    std::vector<StageTimings> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream fields(line);
        fields.imbue(std::locale::classic());
        std::string qid;
        StageTimings t;
        if (!std::getline(fields, qid, '\t') || qid.empty() ||
            !(fields >> t.dense_ms >> t.sparse_ms >> t.fuse_ms >> t.rerank_ms >> t.total_ms)) {
            throw ParseError(lineno, "expected query_id and five stage timings");
        }
        std::string rest;
        if (fields >> rest) throw ParseError(lineno, "unexpected trailing field '" + rest + "'");
        out.push_back(t);
    }
    return out;
}

std::string render_metrics_text(const std::vector<std::pair<std::string, eval::MetricsReport>>& reports) {
    std::size_t width = 3;
    for (const auto& [name, r] : reports) width = std::max(width, name.size());
    std::ostringstream out;
    out << pad("run", width) << "  " << lpad("queries", 7) << "  " << lpad("MRR", 6) << "  " << lpad("P@5", 6)
        << "  " << lpad("NDCG@10", 7) << '\n';
    for (const auto& [name, r] : reports) {
        out << pad(name, width) << "  " << lpad(std::to_string(r.queries), 7) << "  " << lpad(fixed(r.mrr, 4), 6)
            << "  " << lpad(fixed(r.p_at_5, 4), 6) << "  " << lpad(fixed(r.ndcg_at_10, 4), 7) << '\n';
    }
    return out.str();
}

std::string render_evolution_text(const eval::EvolutionTable& t) {
    std::size_t width = 8;
    for (const auto& r : t.rows) width = std::max(width, r.category.size());
    const std::string y0 = std::to_string(t.start_year), y1 = std::to_string(t.end_year);
    std::ostringstream out;
    out << pad("Category", width) << "  " << lpad(y0, 7) << "  " << lpad(y1, 7) << "  " << lpad("Change", 8) << '\n';
    for (const auto& r : t.rows) {
        out << pad(r.category, width) << "  " << lpad(eval::format_count(r.count_start), 7) << "  "
            << lpad(eval::format_count(r.count_end), 7) << "  " << lpad(r.change, 8) << '\n';
    }
    return out.str();
}

int cmd_ingest(const SystemConfig& cfg, const fs::path& corpus, bool as_json, std::ostream& out, std::ostream& err) {
    IngestStats stats;
    try {
        if (!fs::exists(corpus)) {
            err << "error: corpus file '" << corpus.string() << "' does not exist\n";
            return kExitUsage;
        }
        stats = ingest_corpus(corpus, cfg);
    } catch (const std::exception& e) {
        return fail(err, e);
    }
    if (as_json) {
        json failures = json::array();
        for (const auto& f : stats.failures) {
            failures.push_back({{"line", f.offset}, {"field", f.field}, {"message", f.message}});
        }
        out << json{{"documents", stats.documents},
                    {"chunks", stats.chunks},
                    {"errors", stats.failures.size()},
                    {"failures", failures},
                    {"tokens",
                     {{"min", stats.tokens.min},
                      {"max", stats.tokens.max},
                      {"mean", stats.tokens.mean},
                      {"stddev", stats.tokens.stddev}}},
                    {"chunk_store", cfg.paths.chunks.string()}}
                   .dump(2)
            << '\n';
    } else {
        out << "documents: " << stats.documents << '\n'
            << "chunks:    " << stats.chunks << '\n'
            << "errors:    " << stats.failures.size() << '\n'
            << "tokens:    min " << stats.tokens.min << "  max " << stats.tokens.max << "  mean "
            << fixed(stats.tokens.mean, 1) << "  stddev " << fixed(stats.tokens.stddev, 1) << '\n';
        for (const auto& f : stats.failures) {
            out << "  line " << f.offset << ": " << f.field << ": " << f.message << '\n';
        }
        if (stats.documents > 0) out << "chunk store: " << cfg.paths.chunks.string() << '\n';
    }
    if (stats.documents == 0) {
        err << "error: no record could be ingested\n";
        return kExitFailure;
    }
    return kExitOk;
}

int cmd_index(const SystemConfig& cfg, bool dense_only, std::ostream& out, std::ostream& err) {
    try {
        const IndexManifest m = build_indexes(cfg, dense_only);
        out << "chunks indexed: " << m.chunk_count << '\n'
            << "lexical index:  " << (m.lexical ? (cfg.paths.index_dir / kLexicalFile).string() : "skipped (dense-only)")
            << '\n'
            << "vector index:   " << (cfg.paths.index_dir / kVectorFile).string() << " (" << m.embedding_model << ")\n";
        return kExitOk;
    } catch (const std::exception& e) {
        return fail(err, e);
    }
}

int cmd_query(const SystemConfig& cfg, const std::string& query, const QueryFlags& flags, bool as_json,
              std::ostream& out, std::ostream& err) {
    try {
        auto pipeline = RagPipeline::open(cfg);
        const PipelineAnswer a = pipeline->answer(query, flags);
        if (as_json) {
            out << json::parse(answer_to_json(a, pipeline->catalog())).dump(2) << '\n';
            return kExitOk;
        }
        out << "sources:\n";
        out << "  " << lpad("#", 2) << "  " << pad("chunk", 24) << "  " << lpad("dense", 7) << "  " << lpad("sparse", 7)
            << "  " << lpad("rrf", 7) << "  " << lpad("rerank", 7) << "  section\n";
        for (std::size_t i = 0; i < a.retrieval.candidates.size(); ++i) {
            const auto& c = a.retrieval.candidates[i];
            const Chunk* chunk = pipeline->catalog().find(c.chunk_id);
            out << "  " << lpad(std::to_string(i + 1), 2) << "  " << pad(c.chunk_id, 24) << "  "
                << lpad(score_or_dash(c.dense_score), 7) << "  " << lpad(score_or_dash(c.sparse_score), 7) << "  "
                << lpad(fixed(c.rrf_score, 5), 7) << "  " << lpad(score_or_dash(c.rerank_score), 7) << "  "
                << (chunk ? join_path(chunk->section_path) : "") << '\n';
        }
        if (a.retrieval.rerank_fell_back) out << "note: reranker failed, RRF order kept\n";
        print_timings(out, a.retrieval.timings);
        if (a.orchestrated) {
            const auto& o = *a.orchestrated;
            out << "answer (tier " << o.decision.tier_id << ", " << o.generation.provider_id << "/"
                << o.generation.model_id << ", complexity " << fixed(o.decision.complexity, 3) << ", cost "
                << o.cost.cost.to_string() << "):\n"
                << o.generation.text << '\n';
            out << "provenance: " << a.record->record_id << '\n';
        }
        return kExitOk;
    } catch (const std::exception& e) {
        return fail(err, e);
    }
}

int cmd_run(const SystemConfig& cfg, const fs::path& queries, const QueryFlags& flags, const fs::path& run_out,
            const std::optional<fs::path>& timings_out, std::ostream& out, std::ostream& err) {
    try {
        auto in = open_input(queries, "queries file");
        std::vector<std::pair<std::string, std::string>> items;
        std::string line;
        std::size_t lineno = 0;
        std::set<std::string> seen;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            const auto tab = line.find('\t');
            if (tab == std::string::npos || tab == 0) throw ParseError(lineno, "expected query_id<TAB>query");
            std::string qid = line.substr(0, tab);
            if (!seen.insert(qid).second) throw ParseError(lineno, "duplicate query id '" + qid + "'");
            items.emplace_back(std::move(qid), line.substr(tab + 1));
        }
        auto pipeline = RagPipeline::open(cfg);
        std::ofstream run(run_out, std::ios::trunc);
        if (!run) throw IoError("cannot write " + run_out.string());
        std::ofstream timings;
        if (timings_out) {
            timings.open(*timings_out, std::ios::trunc);
            if (!timings) throw IoError("cannot write " + timings_out->string());
        }
        for (const auto& [qid, text] : items) {
            const HybridResult r = pipeline->retrieve(text, flags);
            write_run_lines(run, qid, r.candidates);
            if (timings_out) write_timings_line(timings, qid, r.timings);
        }
        out << "queries: " << items.size() << '\n' << "run file: " << run_out.string() << '\n';
        if (timings_out) out << "timings: " << timings_out->string() << '\n';
        return kExitOk;
    } catch (const std::exception& e) {
        return fail(err, e);
    }
}

int cmd_eval(const EvalOptions& opts, std::ostream& out, std::ostream& err) {
    try {
        if (opts.runs.empty() || opts.runs.size() > 2) throw InputError("eval takes one or two run files");
        auto qin = open_input(opts.qrels, "qrels file");
        eval::Qrels qrels;
        try {
            qrels = eval::parse_qrels(qin);
        } catch (const ParseError& e) {
            throw ParseError(e.line(), opts.qrels.string() + ":" + std::to_string(e.line()) + ": " + e.what());
        }
        std::vector<std::pair<std::string, eval::MetricsReport>> reports;
        std::vector<std::map<std::string, double>> rr;
        for (const auto& path : opts.runs) {
            auto rin = open_input(path, "run file");
            eval::RunFile run;
            try {
                run = eval::parse_run(rin);
            } catch (const ParseError& e) {
                throw ParseError(e.line(), path.string() + ":" + std::to_string(e.line()) + ": " + e.what());
            }
            reports.emplace_back(path.filename().string(), eval::evaluate(run, qrels, opts.threshold));
            rr.push_back(eval::reciprocal_ranks(run, qrels, opts.threshold));
        }
        std::optional<eval::LatencySummary> latency;
        if (opts.timings) {
            auto tin = open_input(*opts.timings, "timings file");
            latency = eval::latency_stats(parse_timings(tin));
        }
        std::optional<eval::MannWhitneyResult> mwu;
        if (rr.size() == 2) {
            std::vector<double> a, b;
            for (const auto& [q, v] : rr[0]) a.push_back(v);
            for (const auto& [q, v] : rr[1]) b.push_back(v);
            mwu = eval::mann_whitney_u(a, b);
        }

        if (opts.json) {
            json runs = json::array();
            for (const auto& [name, r] : reports) {
                runs.push_back({{"run", name},
                                {"queries", r.queries},
                                {"mrr", r.mrr},
                                {"p_at_5", r.p_at_5},
                                {"ndcg_at_10", r.ndcg_at_10}});
            }
            json j{{"relevance_threshold", opts.threshold}, {"runs", runs}};
            j["latency_ms"] = latency ? latency_json(*latency) : json(nullptr);
            if (mwu) {
                j["mann_whitney"] = {{"statistic", "reciprocal rank per query"},
                                     {"u", mwu->u},
                                     {"u_first", mwu->u_a},
                                     {"p_value", mwu->p_value},
                                     {"exact", mwu->exact}};
            }
            out << j.dump(2) << '\n';
            return kExitOk;
        }
        out << render_metrics_text(reports);
        if (latency) {
            out << "\nlatency (ms, n=" << latency->count << ")\n";
            out << pad("stage", 6) << "  " << lpad("mean", 9) << "  " << lpad("p50", 9) << "  " << lpad("p95", 9) << '\n';
            const std::pair<const char*, const eval::StageSummary*> rows[] = {
                {"dense", &latency->dense}, {"sparse", &latency->sparse}, {"fuse", &latency->fuse},
                {"rerank", &latency->rerank}, {"total", &latency->total}};
            for (const auto& [name, s] : rows) {
                out << pad(name, 6) << "  " << lpad(fixed(s->mean, 3), 9) << "  " << lpad(fixed(s->p50, 3), 9) << "  "
                    << lpad(fixed(s->p95, 3), 9) << '\n';
            }
        }
        if (mwu) {
            out << "\nMann-Whitney U on per-query reciprocal rank (" << reports[0].first << " vs " << reports[1].first
                << ")\n"
                << "U = " << fixed(mwu->u, 1) << "  (U_first = " << fixed(mwu->u_a, 1) << ")  p = "
                << fixed(mwu->p_value, 6) << (mwu->exact ? "  exact" : "  normal approximation") << '\n';
        }
        return kExitOk;
    } catch (const std::exception& e) {
        return fail(err, e);
    }
}

int cmd_evolution(const SystemConfig& cfg, const std::optional<fs::path>& records, int start_year, int end_year,
                  bool as_json, std::ostream& out, std::ostream& err) {
    try {
        std::vector<eval::RequirementRecord> recs;
        if (records) {
            auto in = open_input(*records, "records file");
            recs = eval::parse_requirement_records(in);
        } else {
            auto in = open_input(cfg.paths.chunks, "chunk store");
            std::vector<ChunkMetadata> per_doc;
            std::set<std::string> seen;
            for (const auto& c : read_chunks(in)) {
                if (seen.insert(c.doc_id).second) per_doc.push_back(c.metadata);
            }
            recs = eval::requirement_records(per_doc);
        }
        const eval::EvolutionTable t = eval::evolution_report(recs, start_year, end_year);
        if (as_json) {
            json rows = json::array();
            for (const auto& r : t.rows) {
                rows.push_back({{"category", r.category},
                                {"count_start", r.count_start},
                                {"count_end", r.count_end},
                                {"change", r.change}});
            }
            out << json{{"start_year", t.start_year}, {"end_year", t.end_year}, {"rows", rows}}.dump(2) << '\n';
        } else {
            out << render_evolution_text(t);
        }
        return kExitOk;
    } catch (const std::exception& e) {
        return fail(err, e);
    }
}

int cmd_provenance(const SystemConfig& cfg, const std::string& record_id, bool verify, std::ostream& out,
                   std::ostream& err) {
    try {
        const ProvenanceStore store(cfg.paths.provenance);
        const auto rec = store.get(record_id);
        if (!rec) {
            err << "error: no provenance record '" << record_id << "'\n";
            return kExitFailure;
        }
        if (!verify) {
            out << record_to_json(*rec) << '\n';
            return kExitOk;
        }
        auto in = open_input(cfg.paths.chunks, "chunk store");
        const ChunkCatalog catalog(read_chunks(in));
        const VerificationReport report = verify_record(*rec, catalog);
        for (const auto& item : report.items) {
            out << item.index << '\t' << item.chunk_id << '\t' << to_string(item.status) << '\n';
        }
        return report.all_verified() ? kExitOk : kExitFailure;
    } catch (const std::exception& e) {
        return fail(err, e);
    }
}

int cmd_ledger(const SystemConfig& cfg, std::ostream& out, std::ostream& err) {
    try {
        std::ifstream in(cfg.paths.ledger);
        std::map<int, std::pair<std::size_t, Money>> by_tier;
        Money total;
        std::size_t count = 0;
        std::string line;
        std::size_t lineno = 0;
        while (in && std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            const LedgerEntry e = parse_ledger_line(line, lineno);
            out << line << '\n';
            auto& slot = by_tier[e.tier_id];
            ++slot.first;
            slot.second += e.cost;
            total += e.cost;
            ++count;
        }
        out << "\nqueries: " << count << "  total: " << total.to_string();
        if (count > 0) out << "  mean: " << Money{total.nanos / static_cast<std::int64_t>(count)}.to_string();
        out << '\n';
        for (const auto& [tier, s] : by_tier) {
            out << "tier " << tier << ": " << s.first << " queries, " << s.second.to_string() << '\n';
        }
        return kExitOk;
    } catch (const std::exception& e) {
        return fail(err, e);
    }
}

int cmd_apply_pending(const SystemConfig& cfg, std::ostream& out, std::ostream& err) {
    try {
        const std::size_t n = apply_pending(cfg);
        out << "chunks applied: " << n << '\n';
        if (n > 0) out << "run the index command to rebuild the snapshots\n";
        return kExitOk;
    } catch (const std::exception& e) {
        return fail(err, e);
    }
}

namespace {
Service* g_service = nullptr;
extern "C" void stop_service(int) {
    if (g_service != nullptr) g_service->stop();
}
}  // namespace

int cmd_serve(const SystemConfig& cfg, std::ostream& out, std::ostream& err) {
    try {
        auto pipeline = RagPipeline::open(cfg);
        Service service(*pipeline);
        g_service = &service;
        std::signal(SIGINT, stop_service);
        std::signal(SIGTERM, stop_service);
        out << "listening on " << cfg.service.host << ":" << cfg.service.port << std::endl;
        const bool ok = service.listen(cfg.service.host, cfg.service.port);
        g_service = nullptr;
        if (!ok) {
            err << "error: cannot listen on " << cfg.service.host << ":" << cfg.service.port << '\n';
            return kExitFailure;
        }
        return kExitOk;
    } catch (const std::exception& e) {
        return fail(err, e);
    }
}

}  // namespace reqrag
