#include "oracles.hpp"
#include "synthetic.hpp"

#include "reqrag/error.hpp"
#include "reqrag/lexical_index.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

using namespace reqrag;
using Catch::Matchers::WithinAbs;

namespace {

const DomainDictionary kNone;

}  // namespace

TEST_CASE("postings and document lengths") {
    const auto idx = InvertedIndex::build(
        std::vector<IndexDocument>{{"c", "valve torque"}, {"a", "valve seal seal"}, {"b", "valve"}}, kNone);
    CHECK(idx.size() == 3);
    CHECK(idx.ids() == std::vector<std::string>{"a", "b", "c"});
    CHECK(idx.postings("valve").size() == 3);
    CHECK(idx.document_frequency("seal") == 1);
    CHECK(idx.postings("seal").front().tf == 2);
    CHECK(idx.postings("absent").empty());
    CHECK_THAT(idx.avg_doc_length(), WithinAbs(2.0, 1e-12));
}

TEST_CASE("empty index answers nothing") {
    const auto idx = InvertedIndex::build(std::vector<IndexDocument>{}, kNone);
    CHECK(idx.size() == 0);
    CHECK(search_sparse("anything", idx, kNone, {}, 5).empty());
}

TEST_CASE("duplicate ids are rejected") {
    CHECK_THROWS_AS(InvertedIndex::build(std::vector<IndexDocument>{{"a", "x"}, {"a", "y"}}, kNone),
                    ValidationError);
}

TEST_CASE("single-term hand evaluation") {
    // df 1, tf 2, dl == avgdl == 2.
    const auto idx = InvertedIndex::build(
        std::vector<IndexDocument>{{"d1", "gear gear"}, {"d2", "belt chain"}, {"d3", "axle hub"}}, kNone);
    const double idf = std::log(1.0 + (3 - 1 + 0.5) / (1 + 0.5));
    const double expected = idf * 2 * 2.5 / (2 + 1.5);
    CHECK_THAT(bm25_score({"gear"}, "d1", idx, {}), WithinAbs(expected, 1e-9));
    CHECK(bm25_score({"pump"}, "d1", idx, {}) == 0.0);
    Bm25Params k0;
    k0.k1 = 0.0;
    CHECK_THAT(bm25_score({"gear"}, "d1", idx, k0), WithinAbs(idf, 1e-12));
    CHECK_THROWS_AS(bm25_score({"gear"}, "d9", idx, {}), LookupError);
}

TEST_CASE("repeated query terms count once") {
    const auto idx = InvertedIndex::build(std::vector<IndexDocument>{{"a", "gear box"}, {"b", "cable"}}, kNone);
    CHECK(bm25_score({"gear", "gear"}, "a", idx, {}) == bm25_score({"gear"}, "a", idx, {}));
}

TEST_CASE("idf is non-negative for every df") {
    const auto idx = InvertedIndex::build(
        std::vector<IndexDocument>{{"a", "x"}, {"b", "x"}, {"c", "x"}, {"d", "x"}}, kNone);
    for (std::size_t df = 0; df <= idx.size(); ++df) CHECK(idx.idf(df) >= 0.0);
}

TEST_CASE("score does not decrease with term frequency") {
    for (int tf = 1; tf < 10; ++tf) {
        std::string lo = "filler filler filler filler filler filler filler filler filler filler";
        std::string hi = lo;
        for (int i = 0; i < tf; ++i) lo.replace(lo.find("filler"), 6, "brake");
        for (int i = 0; i < tf + 1; ++i) hi.replace(hi.find("filler"), 6, "brake");
        const auto idx = InvertedIndex::build(
            std::vector<IndexDocument>{{"lo", lo}, {"hi", hi}, {"x", "other words here"}}, kNone);
        CHECK(bm25_score({"brake"}, "hi", idx, {}) >= bm25_score({"brake"}, "lo", idx, {}));
    }
}

TEST_CASE("search ranking and ties") {
    const auto idx = InvertedIndex::build(
        std::vector<IndexDocument>{{"z", "seal ring"}, {"m", "seal ring"}, {"q", "door hinge latch"}}, kNone);
    const auto exact = search_sparse("door hinge latch", idx, kNone, {}, 5);
    REQUIRE(exact.size() == 1);
    CHECK(exact[0].id == "q");
    const auto tied = search_sparse("seal", idx, kNone, {}, 10);
    REQUIRE(tied.size() == 2);
    CHECK(tied[0].id == "m");
    CHECK(tied[1].id == "z");
    CHECK(tied[0].score == tied[1].score);
    CHECK_THROWS_AS(search_sparse("seal", idx, kNone, {}, 0), InputError);
}

TEST_CASE("search results are prefixes of longer searches") {
    std::mt19937_64 rng(6);
    std::vector<IndexDocument> docs;
    for (int i = 0; i < 120; ++i) docs.push_back({"d" + std::to_string(i), synth::sentence(rng, 15, 40)});
    const auto idx = InvertedIndex::build(docs, kNone);
    for (int q = 0; q < 30; ++q) {
        const auto text = synth::sentence(rng, 3, 40);
        const auto longest = search_sparse(text, idx, kNone, {}, 60);
        for (std::size_t k = 1; k < 60; ++k) {
            const auto shorter = search_sparse(text, idx, kNone, {}, k);
            REQUIRE(shorter.size() == std::min(k, longest.size()));
            CHECK(std::equal(shorter.begin(), shorter.end(), longest.begin()));
        }
    }
}

TEST_CASE("search scores agree with the reference formula") {
    std::mt19937_64 rng(12);
    std::vector<IndexDocument> docs;
    std::vector<std::vector<std::string>> toks;
    for (int i = 0; i < 40; ++i) {
        const auto s = synth::sentence(rng, 1 + rng() % 20, 30);
        docs.push_back({"d" + std::to_string(i), s});
        toks.push_back(tokenize(s, kNone));
    }
    const auto idx = InvertedIndex::build(docs, kNone);
    const auto query = synth::sentence(rng, 4, 30);
    for (const auto& hit : search_sparse(query, idx, kNone, {}, 40)) {
        const std::size_t i = std::stoul(hit.id.substr(1));
        CHECK_THAT(hit.score, WithinAbs(oracle::bm25(tokenize(query, kNone), toks, i, 1.5, 0.75), 1e-9));
    }
}

TEST_CASE("dictionary terms index as single tokens") {
    DomainDictionary d;
    d.add_preserved_literal("MBN 9666-1");
    const auto idx = InvertedIndex::build(
        std::vector<IndexDocument>{{"a", "per MBN 9666-1"}, {"b", "MBN 9666 1 draft"}}, d);
    const auto hits = search_sparse("mbn 9666-1", idx, d, {}, 5);
    REQUIRE(hits.size() == 1);
    CHECK(hits[0].id == "a");
}

TEST_CASE("snapshot round trip") {
    std::mt19937_64 rng(3);
    std::vector<IndexDocument> docs;
    for (int i = 0; i < 50; ++i) docs.push_back({"d" + std::to_string(i), synth::sentence(rng, 12)});
    const auto idx = InvertedIndex::build(docs, kNone);
    std::stringstream buf;
    idx.save(buf);
    const auto loaded = InvertedIndex::load(buf);
    CHECK(loaded == idx);
    std::stringstream again;
    loaded.save(again);
    std::stringstream first;
    idx.save(first);
    CHECK(again.str() == first.str());

    std::stringstream broken("not an index");
    CHECK_THROWS_AS(InvertedIndex::load(broken), Error);
}

TEST_CASE("parameters are validated") {
    Bm25Params p;
    p.k1 = -1;
    CHECK_THROWS(p.validate());
    p = {};
    p.b = 1.5;
    CHECK_THROWS(p.validate());
}
