#include "synthetic.hpp"

#include "reqrag/corpus.hpp"
#include "reqrag/error.hpp"

#include <catch_amalgamated.hpp>

#include <numeric>
#include <sstream>

using namespace reqrag;

namespace {

std::string words(std::size_t n, const std::string& stem = "w") {
    std::string s;
    for (std::size_t i = 0; i < n; ++i) s += (i ? " " : "") + stem + std::to_string(i);
    return s;
}

Document doc_with(std::vector<Block> blocks, const std::string& id = "D-1") {
    Document d;
    d.doc_id = id;
    d.version_timestamp = std::chrono::year{2023} / 3 / 1;
    d.metadata.doc_id = id;
    d.metadata.version = "2023-03-01";
    d.blocks = std::move(blocks);
    return d;
}

}  // namespace

TEST_CASE("parse a minimal record") {
    const auto d = parse_structured_document(
        R"({"doc_id":"MBN-1","version_timestamp":"2015-03-02","title":"T","source_tag":"pdf",)"
        R"("blocks":[{"kind":"heading","level":1,"text":"Scope"},{"kind":"paragraph","text":"Body text."}]})");
    CHECK(d.doc_id == "MBN-1");
    CHECK(format_date(d.version_timestamp) == "2015-03-02");
    REQUIRE(d.blocks.size() == 2);
    CHECK(d.blocks[0] == Block{BlockKind::heading, 1, "Scope"});
    CHECK(d.blocks[1] == Block{BlockKind::paragraph, 0, "Body text."});
    CHECK(d.metadata.year == 2015);
}

TEST_CASE("missing doc_id is a validation error") {
    try {
        parse_structured_document(R"({"version_timestamp":"2015-03-02","blocks":[]})", 7);
        FAIL("accepted");
    } catch (const ValidationError& e) {
        CHECK(e.field() == "doc_id");
        CHECK(e.offset() == 7u);
    }
}

TEST_CASE("metadata fields are read and checked") {
    const auto d = parse_structured_document(
        R"({"doc_id":"S","version_timestamp":"2023-01-09","blocks":[],"metadata":)"
        R"({"category":"IT Security","compliance_level":"ASIL-B","supplier_tags":["acme","bolt"],"year":2022}})");
    CHECK(d.metadata.category == "IT Security");
    CHECK(d.metadata.compliance_level == "ASIL-B");
    CHECK(d.metadata.supplier_tags == std::set<std::string>{"acme", "bolt"});
    CHECK(d.metadata.year == 2022);
}

TEST_CASE("dates are strict ISO-8601") {
    CHECK(parse_date("2024-02-29").has_value());
    CHECK_FALSE(parse_date("2023-02-29").has_value());
    CHECK_FALSE(parse_date("2023-2-01").has_value());
    CHECK_FALSE(parse_date("2023-02-01T00:00").has_value());
}

TEST_CASE("section paths follow heading levels") {
    const auto d = doc_with({{BlockKind::heading, 1, "A"},
                             {BlockKind::paragraph, 0, words(10)},
                             {BlockKind::heading, 2, "B"},
                             {BlockKind::heading, 3, "C"},
                             {BlockKind::paragraph, 0, words(10)},
                             {BlockKind::heading, 2, "D"},
                             {BlockKind::paragraph, 0, words(10)}});
    const auto chunks = semantic_chunk(d, {}, {});
    REQUIRE(chunks.size() == 4);
    CHECK(chunks[0].section_path == std::vector<std::string>{"A"});
    CHECK(chunks[1].section_path == std::vector<std::string>{"A", "B"});
    CHECK(chunks[2].section_path == std::vector<std::string>{"A", "B", "C"});
    CHECK(chunks[3].section_path == std::vector<std::string>{"A", "D"});
    CHECK(chunks[2].chunk_id == "D-1#0002");
}

TEST_CASE("empty document yields no chunks") {
    CHECK(semantic_chunk(doc_with({}), {}, {}).empty());
}

TEST_CASE("single paragraph is one chunk") {
    const auto chunks = semantic_chunk(doc_with({{BlockKind::paragraph, 0, words(100)}}), {}, {});
    REQUIRE(chunks.size() == 1);
    CHECK(chunks[0].token_count == 100);
    CHECK(chunks[0].block_range == BlockRange{0, 1});
    CHECK(chunks[0].chunk_id == "D-1#0000");
}

TEST_CASE("sections of 300, 500 and 900 tokens") {
    std::vector<Block> blocks;
    std::vector<BlockRange> sections;
    for (std::size_t paragraphs : {3, 5, 9}) {
        const std::size_t start = blocks.size();
        blocks.push_back({BlockKind::heading, 1, "Section " + std::to_string(paragraphs)});
        for (std::size_t p = 0; p < paragraphs; ++p) blocks.push_back({BlockKind::paragraph, 0, words(100)});
        sections.push_back({start, blocks.size()});
    }
    const ChunkingConfig cfg;  // 64 / 384 / 768
    const auto chunks = semantic_chunk(doc_with(blocks), cfg, {});
    for (const auto& c : chunks) {
        const auto owner = std::find_if(sections.begin(), sections.end(), [&](const BlockRange& s) {
            return c.block_range.start >= s.start && c.block_range.start < s.end;
        });
        REQUIRE(owner != sections.end());
        CHECK(c.block_range.end <= owner->end);
        CHECK(c.token_count <= cfg.max_tokens);
    }
    const auto in_last = std::count_if(chunks.begin(), chunks.end(),
                                       [&](const Chunk& c) { return c.block_range.start >= sections[2].start; });
    CHECK(in_last >= 2);
}

TEST_CASE("oversized block stands alone") {
    ChunkingConfig cfg{20, 5, 30};
    const auto chunks = semantic_chunk(
        doc_with({{BlockKind::paragraph, 0, words(10)}, {BlockKind::paragraph, 0, words(50)},
                  {BlockKind::paragraph, 0, words(10)}}),
        cfg, {});
    REQUIRE(chunks.size() == 3);
    CHECK(chunks[1].token_count == 50);
}

TEST_CASE("short trailing fragment merges into its predecessor when it fits") {
    ChunkingConfig cfg{20, 5, 30};
    auto chunks = semantic_chunk(
        doc_with({{BlockKind::paragraph, 0, words(20)}, {BlockKind::paragraph, 0, words(3)}}), cfg, {});
    REQUIRE(chunks.size() == 1);
    CHECK(chunks[0].token_count == 23);
    chunks = semantic_chunk(
        doc_with({{BlockKind::paragraph, 0, words(29)}, {BlockKind::paragraph, 0, words(3)}}), cfg, {});
    CHECK(chunks.size() == 2);
}

TEST_CASE("mean chunk size on a paragraph corpus") {
    std::mt19937_64 rng(384);
    std::vector<std::size_t> sizes;
    for (int i = 0; i < 200; ++i) {
        const auto d = synth::paragraph_document(rng, "P-" + std::to_string(i), 120.0, 40.0);
        for (const auto& c : semantic_chunk(d, {}, {})) sizes.push_back(c.token_count);
    }
    const double mean = std::accumulate(sizes.begin(), sizes.end(), 0.0) / static_cast<double>(sizes.size());
    INFO("mean chunk size " << mean << " over " << sizes.size() << " chunks");
    CHECK(mean >= 300.0);
    CHECK(mean <= 470.0);
}

TEST_CASE("chunking is deterministic and covers every block") {
    std::mt19937_64 rng(21);
    for (int i = 0; i < 200; ++i) {
        const auto d = synth::random_document(rng, "R-" + std::to_string(i));
        const auto a = semantic_chunk(d, {64, 16, 128}, {});
        CHECK(a == semantic_chunk(d, {64, 16, 128}, {}));
        std::size_t next = 0;
        for (const auto& c : a) {
            CHECK(c.block_range.start == next);
            next = c.block_range.end;
        }
        CHECK(next == d.blocks.size());
    }
}

TEST_CASE("chunking config must be ordered") {
    CHECK_THROWS_AS((ChunkingConfig{10, 20, 30}.validate()), ValidationError);
    CHECK_THROWS_AS((ChunkingConfig{40, 5, 30}.validate()), ValidationError);
    CHECK_THROWS_AS((ChunkingConfig{10, 0, 30}.validate()), ValidationError);
    CHECK_NOTHROW(ChunkingConfig{}.validate());
}

TEST_CASE("metadata enrichment layers chunk values over the registry") {
    auto chunk = semantic_chunk(doc_with({{BlockKind::paragraph, 0, "text"}}), {}, {}).front();
    MetadataRegistry registry;
    ChunkMetadata defaults;
    defaults.doc_id = "D-1";
    defaults.category = "IT Security";
    defaults.compliance_level = "ASIL-A";
    defaults.year = 2023;
    registry["D-1"] = defaults;
    chunk.metadata.compliance_level = "ASIL-D";
    const auto enriched = enrich_metadata(chunk, registry);
    CHECK(enriched.metadata.category == "IT Security");
    CHECK(enriched.metadata.compliance_level == "ASIL-D");
    CHECK(enriched.metadata.year == 2023);
    CHECK(enriched.metadata.version == "2023-03-01");
    chunk.doc_id = "unknown";
    CHECK_THROWS_AS(enrich_metadata(chunk, registry), LookupError);
}

TEST_CASE("corpus reader collects failures and duplicates") {
    std::istringstream in(
        R"({"doc_id":"A","version_timestamp":"2020-01-01","blocks":[]})"
        "\n\n"
        R"({"doc_id":"B","version_timestamp":"bad","blocks":[]})"
        "\n"
        R"({"doc_id":"A","version_timestamp":"2021-01-01","blocks":[]})"
        "\n");
    const auto r = read_corpus(in);
    REQUIRE(r.documents.size() == 1);
    REQUIRE(r.failures.size() == 2);
    CHECK(r.failures[0].offset == 3);
    CHECK(r.failures[0].field == "version_timestamp");
    CHECK(r.failures[1].offset == 4);
    CHECK(r.failures[1].field == "doc_id");
}

TEST_CASE("chunk store round trip") {
    std::mt19937_64 rng(2);
    std::vector<Chunk> all;
    for (int i = 0; i < 30; ++i) {
        auto d = synth::random_document(rng, "RT-" + std::to_string(i));
        d.metadata.category = "Cat " + std::to_string(i % 3);
        d.metadata.supplier_tags = {"s" + std::to_string(i)};
        d.metadata.year = 2000 + i;
        MetadataRegistry reg{{d.doc_id, d.metadata}};
        for (auto& c : semantic_chunk(d, {}, {})) all.push_back(enrich_metadata(c, reg));
    }
    std::stringstream buf;
    write_chunks(buf, all);
    CHECK(read_chunks(buf) == all);
}

TEST_CASE("catalog lookups") {
    const auto chunks = semantic_chunk(doc_with({{BlockKind::paragraph, 0, "a"}, {BlockKind::heading, 1, "H"},
                                                 {BlockKind::paragraph, 0, "b"}}),
                                       {}, {});
    ChunkCatalog cat(chunks);
    REQUIRE(cat.find("D-1#0001") != nullptr);
    CHECK(cat.find("D-1#0001")->section_path == std::vector<std::string>{"H"});
    CHECK(cat.find("nope") == nullptr);
    CHECK(cat.erase("D-1#0000"));
    CHECK(cat.find("D-1#0000") == nullptr);
    CHECK(cat.find("D-1#0001") != nullptr);
    auto dup = chunks;
    dup.push_back(chunks.front());
    CHECK_THROWS_AS(ChunkCatalog(dup), ValidationError);
}
