#include "reqrag/commands.hpp"
#include "reqrag/error.hpp"
#include "reqrag/service.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace reqrag;

int main(int argc, char** argv) {
    CLI::App app{"Requirements retrieval and answering with source attribution"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    std::string config_file;
    app.add_option("-c,--config", config_file, "JSON configuration file")->check(CLI::ExistingFile);

    // Overrides; flag > config > default.
    std::optional<std::string> chunks_path, index_dir;
    app.add_option("--chunks", chunks_path, "chunk store path");
    app.add_option("--index-dir", index_dir, "index snapshot directory");

    bool json = false;

    auto* ingest = app.add_subcommand("ingest", "Chunk a corpus JSONL file into the chunk store");
    std::string corpus;
    ingest->add_option("corpus", corpus, "corpus file (defaults to paths.corpus)");
    ingest->add_flag("--json", json, "machine-readable stats");

    auto* index = app.add_subcommand("index", "Build the lexical and vector snapshots");
    bool dense_only_index = false;
    index->add_flag("--dense-only", dense_only_index, "skip the lexical index");

    QueryFlags flags;
    std::optional<std::size_t> final_k;
    auto add_query_flags = [&](CLI::App* cmd) {
        cmd->add_flag("--no-rerank", flags.no_rerank, "keep RRF order");
        auto* so = cmd->add_flag("--sparse-only", flags.sparse_only, "BM25 only");
        auto* dd = cmd->add_flag("--dense-only", flags.dense_only, "vector search only");
        so->excludes(dd);
        cmd->add_option("-k,--final-k", final_k, "results per query");
    };

    auto* query = app.add_subcommand("query", "Answer a question with sources and provenance");
    std::string query_text;
    query->add_option("query", query_text, "question")->required();
    add_query_flags(query);
    query->add_flag("--dry-run", flags.dry_run, "retrieval only, no generation");
    query->add_flag("--json", json, "JSON output");

    auto* run = app.add_subcommand("run", "Retrieve for a batch of queries and write a run file");
    std::string queries_file, run_out;
    std::optional<std::string> timings_out;
    run->add_option("queries", queries_file, "query_id<TAB>query lines")->required()->check(CLI::ExistingFile);
    run->add_option("-o,--output", run_out, "run file to write")->required();
    run->add_option("--timings", timings_out, "stage timings file to write");
    add_query_flags(run);

    auto* evalc = app.add_subcommand("eval", "Score run files against qrels");
    EvalOptions eopts;
    std::vector<std::string> run_files;
    std::string qrels_file;
    std::optional<std::string> timings_in;
    evalc->add_option("--run", run_files, "run file (give twice to compare)")->required()->expected(1, 2);
    evalc->add_option("--qrels", qrels_file, "qrels file")->required();
    evalc->add_option("--timings", timings_in, "stage timings file");
    evalc->add_option("--threshold", eopts.threshold, "minimum relevant grade")->check(CLI::Range(0, 4));
    evalc->add_flag("--json", json, "JSON report");

    auto* evo = app.add_subcommand("evolution", "Requirement counts per category between two years");
    std::optional<std::string> records;
    int start_year = 0, end_year = 0;
    evo->add_option("--records", records, "year<TAB>categories file (defaults to the chunk store)");
    evo->add_option("--from", start_year, "start year")->required();
    evo->add_option("--to", end_year, "end year")->required();
    evo->add_flag("--json", json, "JSON output");

    auto* prov = app.add_subcommand("provenance", "Export a provenance record by id");
    std::string record_id;
    bool verify = false;
    prov->add_option("id", record_id, "record id")->required();
    prov->add_flag("--verify", verify, "check attributions against the chunk store");

    auto* ledger = app.add_subcommand("ledger", "Print the cost ledger with totals");
    auto* pending = app.add_subcommand("apply-pending", "Merge chunks staged by the service into the chunk store");

    auto* serve = app.add_subcommand("serve", "Run the HTTP service");
    std::optional<std::string> host;
    std::optional<int> port;
    serve->add_option("--host", host, "bind address");
    serve->add_option("--port", port, "bind port");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    SystemConfig cfg;
    try {
        cfg = config_file.empty() ? SystemConfig::defaults() : load_config(config_file);
        if (chunks_path) cfg.paths.chunks = *chunks_path;
        if (index_dir) cfg.paths.index_dir = *index_dir;
        if (final_k) cfg.fusion.final_k = *final_k;
        if (host) cfg.service.host = *host;
        if (port) cfg.service.port = *port;
        cfg.validate();
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    }

    if (*ingest) {
        if (corpus.empty()) corpus = cfg.paths.corpus.string();
        if (corpus.empty()) {
            std::cerr << "error: no corpus file given and paths.corpus is unset\n";
            return kExitUsage;
        }
        return cmd_ingest(cfg, corpus, json, std::cout, std::cerr);
    }
    if (*index) return cmd_index(cfg, dense_only_index, std::cout, std::cerr);
    if (*query) return cmd_query(cfg, query_text, flags, json, std::cout, std::cerr);
    if (*run) {
        std::optional<std::filesystem::path> t;
        if (timings_out) t = *timings_out;
        return cmd_run(cfg, queries_file, flags, run_out, t, std::cout, std::cerr);
    }
    if (*evalc) {
        for (const auto& r : run_files) eopts.runs.emplace_back(r);
        eopts.qrels = qrels_file;
        if (timings_in) eopts.timings = *timings_in;
        eopts.json = json;
        return cmd_eval(eopts, std::cout, std::cerr);
    }
    if (*evo) {
        std::optional<std::filesystem::path> r;
        if (records) r = *records;
        return cmd_evolution(cfg, r, start_year, end_year, json, std::cout, std::cerr);
    }
    if (*prov) return cmd_provenance(cfg, record_id, verify, std::cout, std::cerr);
    if (*ledger) return cmd_ledger(cfg, std::cout, std::cerr);
    if (*pending) return cmd_apply_pending(cfg, std::cout, std::cerr);
    if (*serve) return cmd_serve(cfg, std::cout, std::cerr);
    return kExitUsage;
}
