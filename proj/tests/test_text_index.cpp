#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "bm25_oracle.hpp"
#include "met/error.hpp"
#include "met/text_index.hpp"
#include "met/tokenizer.hpp"
#include "support.hpp"

using namespace met;
using testing_support::Bm25Oracle;
using testing_support::EntitySpec;
using testing_support::make_kb;
using Terms = std::vector<std::string>;

namespace {

std::string join(const Terms& t)
{
    std::string s;
    for (const auto& w : t) {
        s += (s.empty() ? "" : " ") + w;
    }
    return s;
}

/// One entity per document, ids zero-padded so document order is list order.
KnowledgeBase corpus_kb(const std::vector<Terms>& docs)
{
    std::vector<EntitySpec> specs;
    char id[16];
    for (std::size_t i = 0; i < docs.size(); ++i) {
        std::snprintf(id, sizeof id, "d%05zu", i);
        specs.push_back({id, {join(docs[i])}, {}});
    }
    return make_kb(specs);
}

std::vector<Terms> random_corpus(Rng& rng, std::size_t docs, std::size_t vocab)
{
    std::vector<Terms> out(docs);
    for (auto& d : out) {
        const auto len = 1 + uniform_index(rng, 12);
        for (std::size_t i = 0; i < len; ++i) {
            d.push_back("w" + std::to_string(uniform_index(rng, vocab)));
        }
    }
    return out;
}

}  // namespace

TEST_CASE("tokenize lowercases and splits on non-alphanumerics")
{
    CHECK(tokenize("An iron tower in Paris") == Terms{"an", "iron", "tower", "in", "paris"});
    CHECK(tokenize("").empty());
    CHECK(tokenize("Philip IV / Louis-XIV") == Terms{"philip", "iv", "louis", "xiv"});
    CHECK(tokenize("  ,,  ").empty());
    CHECK(tokenize("abc123 x_y") == Terms{"abc123", "x", "y"});
}

TEST_CASE("tokenize handles non-ASCII letters as word characters")
{
    CHECK(tokenize("Café Ünïcode") == Terms{"café", "ünïcode"});
    CHECK(tokenize("東京タワー") == Terms{"東京タワー"});
    CHECK(tokenize("a\xff" "b") == Terms{"a", "b"});
}

TEST_CASE("build: vocabulary, document frequency and average length by hand")
{
    const auto kb = make_kb({{"e1", {"a b", "b c"}, {}}});
    const auto idx = TextIndex::build(kb);
    CHECK(idx.num_docs() == 2);
    CHECK(Terms(idx.vocabulary().begin(), idx.vocabulary().end()) == Terms{"a", "b", "c"});
    CHECK(idx.document_frequency("b") == 2);
    CHECK(idx.document_frequency("a") == 1);
    CHECK(idx.avgdl() == doctest::Approx(2.0));
    CHECK(idx.doc_ref(1) == DocRef{EntityId("e1"), 1});
}

TEST_CASE("empty KB gives an empty index and empty results")
{
    const auto idx = TextIndex::build(KnowledgeBase{});
    CHECK(idx.num_docs() == 0);
    CHECK(idx.search("anything", 10).empty());
}

TEST_CASE("bm25 of the two-document example is ln 2")
{
    const auto kb = corpus_kb({{"x"}, {"y"}});
    const auto idx = TextIndex::build(kb);
    CHECK(idx.score(Terms{"x"}, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(idx.score(Terms{"x"}, 1) == 0.0);
    CHECK(idx.score(Terms{"z"}, 0) == 0.0);
}

TEST_CASE("unknown document is a data error")
{
    const auto idx = TextIndex::build(corpus_kb({{"x"}}));
    CHECK_THROWS_AS(idx.score(Terms{"x"}, 7), DataError);
    CHECK_THROWS_AS(idx.score(Terms{"x"}, DocRef{EntityId("nope"), 0}), DataError);
}

TEST_CASE("term frequency raises the score at fixed length")
{
    const auto idx = TextIndex::build(corpus_kb({{"x", "y", "z"}, {"x", "x", "z"}, {"q", "r", "s"}}));
    CHECK(idx.score(Terms{"x"}, 1) > idx.score(Terms{"x"}, 0));
}

TEST_CASE("idf decreases with document frequency and scores are non-negative")
{
    const auto idx = TextIndex::build(corpus_kb({{"a"}, {"a", "b"}, {"a", "b", "c"}}));
    CHECK(idx.idf(1) > idx.idf(2));
    CHECK(idx.idf(2) > idx.idf(3));
    CHECK(idx.idf(3) > 0.0);
}

TEST_CASE("a verbatim unique gloss retrieves itself first")
{
    const auto kb = make_kb({{"e1", {"red apple fruit"}, {}}, {"e2", {"green apple tree"}, {}}, {"e3", {"blue sky"}, {}}});
    const auto idx = TextIndex::build(kb);
    const auto hits = idx.search("green apple tree", 3);
    REQUIRE(!hits.empty());
    CHECK(idx.doc_ref(hits[0].doc).entity == EntityId("e2"));
    CHECK(idx.search("zebra quokka", 5).empty());
}

TEST_CASE("search equals brute-force scoring on a 1000-doc corpus")
{
    Rng rng(99);
    const auto docs = random_corpus(rng, 1000, 150);
    const auto idx = TextIndex::build(corpus_kb(docs));
    const Bm25Oracle oracle{docs};
    for (int q = 0; q < 20; ++q) {
        Terms query;
        for (std::size_t i = 0, n = 1 + uniform_index(rng, 4); i < n; ++i) {
            query.push_back("w" + std::to_string(uniform_index(rng, 160)));
        }
        const auto got = idx.search_terms(query, 10);
        const auto want = oracle.top(query, 10);
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].doc == want[i].first);
            CHECK(std::abs(got[i].score - want[i].second) < 1e-9);
        }
    }
}

TEST_CASE("ties are broken by document order")
{
    const auto idx = TextIndex::build(corpus_kb({{"a", "b"}, {"a", "c"}, {"a", "d"}}));
    const auto hits = idx.search("a", 3);
    REQUIRE(hits.size() == 3);
    CHECK(hits[0].doc == 0);
    CHECK(hits[1].doc == 1);
    CHECK(hits[2].doc == 2);
    CHECK(hits[0].score == hits[2].score);
}

TEST_CASE("fewer results than n only when fewer documents match")
{
    const auto idx = TextIndex::build(corpus_kb({{"a"}, {"b"}, {"a", "b"}}));
    CHECK(idx.search("a", 10).size() == 2);
    CHECK(idx.search("a b", 10).size() == 3);
    CHECK(idx.search("a b", 1).size() == 1);
}

TEST_CASE("invalid BM25 parameters are rejected")
{
    const auto kb = corpus_kb({{"a"}});
    CHECK_THROWS_AS(TextIndex::build(kb, {0.0, 0.75}), ConfigError);
    CHECK_THROWS_AS(TextIndex::build(kb, {1.2, 1.5}), ConfigError);
}

TEST_CASE("MTIX dump: rebuild gives identical bytes and load gives identical search")
{
    Rng rng(5);
    const auto docs = random_corpus(rng, 300, 60);
    const auto kb = corpus_kb(docs);
    testing_support::TempDir dir;
    TextIndex::build(kb).save(dir / "a.mtix");
    TextIndex::build(kb).save(dir / "b.mtix");
    const auto a = testing_support::slurp(dir / "a.mtix");
    CHECK(a == testing_support::slurp(dir / "b.mtix"));
    CHECK(a.substr(0, 4) == "MTIX");

    const auto loaded = TextIndex::load(dir / "a.mtix");
    const auto fresh = TextIndex::build(kb);
    for (const char* q : {"w1 w2", "w7", "w30 w30 w11"}) {
        const auto x = loaded.search(q, 10);
        const auto y = fresh.search(q, 10);
        REQUIRE(x.size() == y.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
            CHECK(x[i].doc == y[i].doc);
            CHECK(x[i].score == y[i].score);
        }
    }
}

TEST_CASE("loading a truncated dump is a data error")
{
    testing_support::TempDir dir;
    TextIndex::build(corpus_kb({{"a", "b"}, {"c"}})).save(dir / "x.mtix");
    auto bytes = testing_support::slurp(dir / "x.mtix");
    bytes.resize(bytes.size() - 3);
    std::FILE* f = std::fopen((dir / "y.mtix").c_str(), "wb");
    std::fwrite(bytes.data(), 1, bytes.size(), f);
    std::fclose(f);
    CHECK_THROWS_AS(TextIndex::load(dir / "y.mtix"), DataError);
    CHECK_THROWS_AS(TextIndex::load(dir / "missing.mtix"), DataError);
}
