#include "reqrag/commands.hpp"
#include "reqrag/error.hpp"
#include "reqrag/service.hpp"

#include <catch_amalgamated.hpp>
#include <httplib.h>
#include <json.hpp>

#include <fstream>
#include <sstream>
#include <thread>

using namespace reqrag;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kData = REQRAG_TEST_DATA;

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

// Fresh working directory holding a copy of the sample configuration.
struct Workspace {
    fs::path dir;
    SystemConfig cfg;

    explicit Workspace(const std::string& name, const json& overrides = json::object()) {
        dir = fs::temp_directory_path() / ("reqrag_pipeline_" + name);
        fs::remove_all(dir);
        fs::create_directories(dir);
        json base = json::parse(slurp(kData / "config.json"));
        base.merge_patch(overrides);
        cfg = parse_config(base.dump(), dir);
    }
    ~Workspace() { fs::remove_all(dir); }

    void write(const std::string& file, const std::string& text) const { std::ofstream(dir / file) << text; }

    void ingest_and_index(const fs::path& corpus = kData / "corpus10.jsonl") const {
        std::ostringstream out, err;
        REQUIRE(cmd_ingest(cfg, corpus, false, out, err) == kExitOk);
        REQUIRE(cmd_index(cfg, false, out, err) == kExitOk);
    }
};

std::vector<std::string> source_ids(const json& answer) {
    std::vector<std::string> ids;
    for (const auto& s : answer.at("sources")) ids.push_back(s.at("chunk_id").get<std::string>());
    return ids;
}

json query_json(const SystemConfig& cfg, const std::string& q, const QueryFlags& flags = {}) {
    std::ostringstream out, err;
    const int code = cmd_query(cfg, q, flags, true, out, err);
    INFO(err.str());
    REQUIRE(code == kExitOk);
    return json::parse(out.str());
}

}  // namespace

TEST_CASE("ingest reports documents and chunks") {
    const Workspace w("ingest");
    std::ostringstream out, err;
    REQUIRE(cmd_ingest(w.cfg, kData / "corpus10.jsonl", true, out, err) == kExitOk);
    const auto stats = json::parse(out.str());
    CHECK(stats["documents"] == 10);
    CHECK(stats["chunks"] == 15);
    CHECK(stats["errors"] == 0);
    CHECK(fs::exists(w.cfg.paths.chunks));
}

TEST_CASE("one malformed record is skipped") {
    const Workspace w("malformed");
    std::string text = slurp(kData / "corpus10.jsonl");
    const auto first_end = text.find('\n');
    text = "{\"doc_id\": \"broken\", \"blocks\": 7}" + text.substr(first_end);
    w.write("bad.jsonl", text);
    std::ostringstream out, err;
    CHECK(cmd_ingest(w.cfg, w.dir / "bad.jsonl", true, out, err) == kExitOk);
    const auto stats = json::parse(out.str());
    CHECK(stats["documents"] == 9);
    CHECK(stats["errors"] == 1);
    CHECK(stats["failures"][0]["line"] == 1);
}

TEST_CASE("ingest exit codes") {
    const Workspace w("exits");
    std::ostringstream out, err;
    CHECK(cmd_ingest(w.cfg, w.dir / "nope.jsonl", false, out, err) == kExitUsage);
    w.write("junk.jsonl", "not json\n{}\n");
    CHECK(cmd_ingest(w.cfg, w.dir / "junk.jsonl", false, out, err) == kExitFailure);
    CHECK(err.str().find("no record") != std::string::npos);
}

TEST_CASE("querying before indexing says what to run") {
    const Workspace w("noindex");
    std::ostringstream out, err;
    REQUIRE(cmd_ingest(w.cfg, kData / "corpus10.jsonl", false, out, err) == kExitOk);
    CHECK(cmd_query(w.cfg, "emergency stop", {}, false, out, err) == kExitFailure);
    CHECK(err.str().find("run the index command") != std::string::npos);
}

TEST_CASE("rebuilding gives byte-identical snapshots") {
    const Workspace w("rebuild");
    w.ingest_and_index();
    const auto vectors = slurp(w.cfg.paths.index_dir / kVectorFile);
    const auto lexical = slurp(w.cfg.paths.index_dir / kLexicalFile);
    std::ostringstream out, err;
    REQUIRE(cmd_index(w.cfg, false, out, err) == kExitOk);
    CHECK(slurp(w.cfg.paths.index_dir / kVectorFile) == vectors);
    CHECK(slurp(w.cfg.paths.index_dir / kLexicalFile) == lexical);
    CHECK_FALSE(vectors.empty());
}

TEST_CASE("dense-only index") {
    const Workspace w("denseonly");
    std::ostringstream out, err;
    REQUIRE(cmd_ingest(w.cfg, kData / "corpus10.jsonl", false, out, err) == kExitOk);
    REQUIRE(cmd_index(w.cfg, true, out, err) == kExitOk);
    CHECK_FALSE(fs::exists(w.cfg.paths.index_dir / kLexicalFile));
    const auto a = query_json(w.cfg, "emergency stop actuator", {false, false, false, true});
    for (const auto& s : a["sources"]) CHECK(s["sparse_score"].is_null());
    QueryFlags sparse;
    sparse.sparse_only = true;
    CHECK(cmd_query(w.cfg, "emergency stop", sparse, false, out, err) == kExitUsage);
}

TEST_CASE("dry run skips generation and the ledger") {
    const Workspace w("dryrun");
    w.ingest_and_index();
    QueryFlags dry;
    dry.dry_run = true;
    const auto a = query_json(w.cfg, "ECU supply voltage range", dry);
    CHECK(a["answer"].is_null());
    CHECK(a["provenance_id"].is_null());
    CHECK_FALSE(source_ids(a).empty());
    CHECK_FALSE(fs::exists(w.cfg.paths.ledger));
}

TEST_CASE("answers are costed and traceable") {
    const Workspace w("answer");
    w.ingest_and_index();
    const auto a = query_json(w.cfg, "Within what time must the emergency stop reach a safe state?");
    REQUIRE(a["provenance_id"].is_string());
    const std::string id = a["provenance_id"];
    CHECK(a["answer"].get<std::string>().find("200 ms") != std::string::npos);
    std::ostringstream out, err;
    REQUIRE(cmd_provenance(w.cfg, id, false, out, err) == kExitOk);
    const auto rec = record_from_json(out.str());
    CHECK(rec.record_id == id);
    CHECK(rec.attributions.size() == a["sources"].size());
    std::ostringstream vout;
    CHECK(cmd_provenance(w.cfg, id, true, vout, err) == kExitOk);
    CHECK(cmd_provenance(w.cfg, "prov-99999999", false, out, err) == kExitFailure);
    std::ostringstream lout;
    REQUIRE(cmd_ledger(w.cfg, lout, err) == kExitOk);
    CHECK(lout.str().find("queries: 1") != std::string::npos);
}

TEST_CASE("dense path lifts a paraphrased requirement") {
    const Workspace w("paraphrase", {{"embedding", {{"synonyms", {{"packing", "gasket"}, {"rust", "corrosion"}}}}}});
    std::string corpus;
    const std::vector<std::pair<std::string, std::string>> docs = {
        {"K1", "The gasket shall resist corrosion for ten years."},
        {"K2", "The seal on the door shall keep water out."},
        {"K3", "Wiper motor current draw during stall shall stay below 8 A."},
        {"K4", "Seat belt pretensioner firing time shall not exceed 12 ms."},
        {"K5", "Battery thermal runaway shall be detected within one second."},
    };
    for (const auto& [id, text] : docs) {
        const json block{{"kind", "paragraph"}, {"text", text}};
        corpus += json{{"doc_id", id}, {"version_timestamp", "2022-01-01"}, {"blocks", {block}}}.dump() + "\n";
    }
    w.write("para.jsonl", corpus);
    w.ingest_and_index(w.dir / "para.jsonl");

    auto rank_of = [](const json& a, const std::string& id) {
        const auto ids = source_ids(a);
        const auto it = std::find(ids.begin(), ids.end(), id);
        return it == ids.end() ? ids.size() + 100 : static_cast<std::size_t>(it - ids.begin());
    };
    QueryFlags dry;
    dry.dry_run = true;
    QueryFlags sparse = dry;
    sparse.sparse_only = true;
    const std::string q = "packing rust seal";
    const auto hybrid = query_json(w.cfg, q, dry);
    const auto lexical = query_json(w.cfg, q, sparse);
    CHECK(rank_of(hybrid, "K1#0000") < rank_of(lexical, "K1#0000"));
}

TEST_CASE("eval compares two runs") {
    const Workspace w("eval");
    w.write("qrels.tsv", "q1\ta\t3\nq2\tb\t4\nq3\tc\t3\n");
    w.write("r1.tsv", "q1\ta\t1\t1\nq2\tx\t1\t1\nq2\tb\t2\t0.5\nq3\tc\t1\t1\n");
    w.write("r2.tsv", "q1\tx\t1\t1\nq1\ta\t2\t1\nq2\ty\t1\t1\nq3\tz\t1\t1\n");
    EvalOptions opts;
    opts.runs = {w.dir / "r1.tsv", w.dir / "r2.tsv"};
    opts.qrels = w.dir / "qrels.tsv";
    std::ostringstream out, err;
    REQUIRE(cmd_eval(opts, out, err) == kExitOk);
    CHECK(out.str().find("Mann-Whitney") != std::string::npos);
    opts.json = true;
    std::ostringstream jout;
    REQUIRE(cmd_eval(opts, jout, err) == kExitOk);
    const auto j = json::parse(jout.str());
    CHECK(j["runs"][0]["mrr"].get<double>() == Catch::Approx(2.5 / 3));
    CHECK(j["mann_whitney"]["exact"] == true);

    w.write("short.tsv", "q1\ta\t3\n");
    opts.qrels = w.dir / "short.tsv";
    std::ostringstream eout, eerr;
    CHECK(cmd_eval(opts, eout, eerr) != kExitOk);
    CHECK(eerr.str().find("q2") != std::string::npos);
}

TEST_CASE("batch run file feeds eval") {
    const Workspace w("batch");
    w.ingest_and_index();
    w.write("queries.tsv", "q1\temergency stop safe state\nq2\tECU supply voltage\n");
    std::ostringstream out, err;
    REQUIRE(cmd_run(w.cfg, w.dir / "queries.tsv", {}, w.dir / "run.tsv", w.dir / "t.tsv", out, err) == kExitOk);
    std::ifstream tin(w.dir / "t.tsv");
    CHECK(parse_timings(tin).size() == 2);
    std::ifstream rin(w.dir / "run.tsv");
    const auto run = eval::parse_run(rin);
    CHECK(run.rankings.at("q1").front().chunk_id.rfind("MBN-9666-1#", 0) == 0);
    CHECK(run.rankings.at("q2").front().chunk_id.rfind("LAH-ECU-12#", 0) == 0);
}

TEST_CASE("command line binary") {
    const std::string cli = REQRAG_CLI;
    CHECK(std::system((cli + " --help > /dev/null").c_str()) == 0);
    CHECK(std::system((cli + " frobnicate > /dev/null 2>&1").c_str()) != 0);
}

namespace {

struct Running {
    std::unique_ptr<RagPipeline> pipeline;
    std::unique_ptr<Service> service;
    std::thread thread;
    int port = 0;

    explicit Running(const SystemConfig& cfg) {
        pipeline = RagPipeline::open(cfg);
        service = std::make_unique<Service>(*pipeline);
        port = service->bind_any_port("127.0.0.1");
        REQUIRE(port > 0);
        thread = std::thread([this] { service->listen_after_bind(); });
        service->wait_until_ready();
    }
    ~Running() {
        service->stop();
        thread.join();
    }
    httplib::Client client() const { return httplib::Client("127.0.0.1", port); }
};

}  // namespace

TEST_CASE("http service") {
    const Workspace w("service");
    w.ingest_and_index();
    Running r(w.cfg);
    auto cli = r.client();

    const auto health = cli.Get("/health");
    REQUIRE(health);
    CHECK(health->status == 200);

    const auto q = cli.Post("/query", R"({"query": "How fast must the ECU wake up on CAN activity?"})",
                            "application/json");
    REQUIRE(q);
    REQUIRE(q->status == 200);
    const auto body = json::parse(q->body);
    CHECK_FALSE(body["sources"].empty());
    const std::string id = body["provenance_id"];
    const auto prov = cli.Get("/provenance/" + id);
    REQUIRE(prov);
    CHECK(prov->status == 200);
    CHECK(record_from_json(prov->body).record_id == id);
    CHECK(cli.Get("/provenance/prov-99999999")->status == 404);

    CHECK(cli.Post("/query", R"({"query": "   "})", "application/json")->status == 400);
    CHECK(cli.Post("/query", R"({"query": "x", "flags": {"turbo": true}})", "application/json")->status == 400);
    CHECK(cli.Post("/query", "nope", "application/json")->status == 400);

    // Same retrieval through the service and the command line.
    const std::string text = "diagnostic session authentication keys";
    const auto served = cli.Post("/query", json{{"query", text}, {"flags", {{"dry_run", true}}}}.dump(),
                                 "application/json");
    REQUIRE(served);
    QueryFlags dry;
    dry.dry_run = true;
    CHECK(source_ids(json::parse(served->body)) == source_ids(query_json(w.cfg, text, dry)));

    for (const char* extra : {"Compare the emergency stop requirements of MBN 9666-1 with clause 5 and the secure "
                              "boot rules of ISO 21434 for every ECU on CAN and UDS",
                              "List UDS services"}) {
        REQUIRE(cli.Post("/query", json{{"query", extra}}.dump(), "application/json")->status == 200);
    }
    const auto metrics = json::parse(cli.Get("/metrics")->body);
    std::size_t per_tier = 0;
    for (const auto& [tier, n] : metrics["queries_by_tier"].items()) per_tier += n.get<std::size_t>();
    CHECK(metrics["queries_served"] == 3);
    CHECK(per_tier == 3);
    CHECK(metrics["dry_runs"] == 1);

    const json doc{{"doc_id", "NEW-1"},
                   {"version_timestamp", "2024-01-02"},
                   {"blocks", {{{"kind", "paragraph"}, {"text", "The horn shall sound at 110 dB."}}}}};
    const auto ing = cli.Post("/ingest", doc.dump(), "application/json");
    REQUIRE(ing);
    CHECK(ing->status == 202);
    CHECK(cli.Post("/ingest", R"({"doc_id": ""})", "application/json")->status == 400);

    std::ostringstream out, err;
    REQUIRE(cmd_apply_pending(w.cfg, out, err) == kExitOk);
    CHECK(out.str().find("chunks applied: 1") != std::string::npos);
    REQUIRE(cmd_index(w.cfg, false, out, err) == kExitOk);
    const auto after = query_json(w.cfg, "horn sound level dB", dry);
    CHECK(source_ids(after).front() == "NEW-1#0000");
}
