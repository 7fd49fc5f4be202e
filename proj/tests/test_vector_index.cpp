#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "met/error.hpp"
#include "met/hnsw.hpp"
#include "met/kernels.hpp"
#include "support.hpp"

using namespace met;
using testing_support::random_unit;
using testing_support::random_unit_store;

namespace {

VectorStore store_of(std::vector<std::pair<std::string, std::vector<float>>> rows)
{
    VectorStore s(static_cast<std::uint32_t>(rows.front().second.size()));
    for (auto& [id, v] : rows) {
        s.add(ImageId(id), v);
    }
    s.seal();
    return s;
}

/// Cosine by the textbook formula in long double.
long double naive_cosine(std::span<const float> a, std::span<const float> b)
{
    long double ab = 0, aa = 0, bb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += static_cast<long double>(a[i]) * b[i];
        aa += static_cast<long double>(a[i]) * a[i];
        bb += static_cast<long double>(b[i]) * b[i];
    }
    return ab / std::sqrt(aa * bb);
}

}  // namespace

TEST_CASE("cosine hand cases")
{
    const std::vector<float> x{1, 0}, y{1, 1}, z{0, 1}, w{3, 4};
    CHECK(cosine_similarity(x, y) == doctest::Approx(0.70710678118).epsilon(1e-9));
    CHECK(cosine_similarity(x, z) == 0.0);
    CHECK(cosine_similarity(w, w) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(cosine_similarity(x, std::vector<float>{1, 0, 0}), std::invalid_argument);
    CHECK_THROWS_AS(cosine_similarity(x, std::vector<float>{0, 0}), std::invalid_argument);
}

TEST_CASE("cosine is symmetric and bounded on random vectors")
{
    Rng rng(3);
    std::normal_distribution<float> g(0.f, 10.f);
    for (int t = 0; t < 500; ++t) {
        std::vector<float> a(17), b(17);
        for (auto& v : a) {
            v = g(rng);
        }
        for (auto& v : b) {
            v = g(rng);
        }
        const double ab = cosine_similarity(a, b);
        CHECK(ab == cosine_similarity(b, a));
        CHECK(std::abs(ab) <= 1.0 + 1e-6);
        CHECK(std::abs(ab - static_cast<double>(naive_cosine(a, b))) < 1e-9);
        CHECK(cosine_similarity(a, a) == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("exact knn hand case")
{
    const auto s = store_of({{"a", {1, 0}}, {"b", {0, 1}}, {"c", {-1, 0}}});
    const auto hits = exact_knn(s, std::vector<float>{1, 0.1f}, 3);
    REQUIRE(hits.size() == 3);
    CHECK(s.id(hits[0].row) == ImageId("a"));
    CHECK(s.id(hits[1].row) == ImageId("b"));
    CHECK(s.id(hits[2].row) == ImageId("c"));
}

TEST_CASE("exact knn full ranking is a permutation and matches a naive sort")
{
    const auto s = random_unit_store(400, 12, 8);
    Rng rng(9);
    const auto q = random_unit(12, rng);
    const auto hits = exact_knn(s, q, s.size());
    REQUIRE(hits.size() == s.size());
    std::set<std::uint32_t> rows;
    for (const auto& h : hits) {
        rows.insert(h.row);
    }
    CHECK(rows.size() == s.size());
    for (std::size_t i = 1; i < hits.size(); ++i) {
        CHECK(hits[i - 1].similarity >= hits[i].similarity);
        CHECK(naive_cosine(q, s.row(hits[i - 1].row)) >= naive_cosine(q, s.row(hits[i].row)) - 1e-9L);
    }
    CHECK_THROWS_AS(exact_knn(s, std::vector<float>(5, 1.f), 3), std::invalid_argument);
}

TEST_CASE("serial and parallel exact scans agree exactly")
{
    const auto s = random_unit_store(3000, 32, 21);
    const auto rows = prepare_rows(s, Metric::cosine);
    Rng rng(4);
    for (int t = 0; t < 20; ++t) {
        const auto q = prepare_query(random_unit(32, rng), Metric::cosine);
        CHECK(exact_knn_serial(rows, 32, q, 50) == exact_knn_parallel(rows, 32, q, 50));
    }
}

TEST_CASE("duplicate vectors tie and are ordered by image id")
{
    const auto s = store_of({{"z", {1, 2}}, {"m", {1, 2}}, {"a", {-2, 1}}, {"b", {1, 2}}});
    const auto exact = exact_knn(s, std::vector<float>{1, 2}, 3);
    CHECK(s.id(exact[0].row) == ImageId("b"));
    CHECK(s.id(exact[1].row) == ImageId("m"));
    CHECK(s.id(exact[2].row) == ImageId("z"));
    CHECK(exact[0].similarity == exact[2].similarity);

    const auto idx = HnswIndex::build(s);
    CHECK(idx.search(std::vector<float>{1, 2}, 3) == exact);
}

TEST_CASE("single-vector index returns that vector")
{
    const auto s = store_of({{"only", {0.3f, 0.4f, 0.5f}}});
    const auto idx = HnswIndex::build(s);
    const auto hits = idx.search(std::vector<float>{-1, 0, 0}, 5);
    REQUIRE(hits.size() == 1);
    CHECK(idx.id(hits[0].row) == ImageId("only"));
}

TEST_CASE("m larger than the store returns every vector sorted")
{
    const auto s = random_unit_store(40, 8, 2);
    const auto idx = HnswIndex::build(s);
    Rng rng(1);
    const auto q = random_unit(8, rng);
    CHECK(idx.search(q, 100) == exact_knn(s, q, 100));
}

TEST_CASE("a stored vector is its own first hit with similarity 1")
{
    const auto s = random_unit_store(2000, 24, 17);
    const auto idx = HnswIndex::build(s);
    for (std::size_t r : {0u, 777u, 1999u}) {
        const auto hits = idx.search(s.row(r), 1);
        REQUIRE(hits.size() == 1);
        CHECK(hits[0].row == r);
        CHECK(hits[0].similarity == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("top-10 overlap with exact search averages at least 9 on 1000 vectors")
{
    const auto s = random_unit_store(1000, 32, 31);
    const auto idx = HnswIndex::build(s);
    Rng rng(32);
    std::size_t overlap = 0;
    for (int q = 0; q < 100; ++q) {
        const auto v = random_unit(32, rng);
        const auto a = idx.search(v, 10);
        const auto b = exact_knn(s, v, 10);
        std::set<std::uint32_t> truth;
        for (const auto& h : b) {
            truth.insert(h.row);
        }
        for (const auto& h : a) {
            overlap += truth.count(h.row);
        }
        for (std::size_t i = 1; i < a.size(); ++i) {
            CHECK(hit_before(a[i - 1], a[i]));
        }
    }
    CHECK(static_cast<double>(overlap) / 100.0 >= 9.0);
}

TEST_CASE("graph structure respects the link limits")
{
    const auto s = random_unit_store(1500, 16, 5);
    HnswParams p;
    p.m = 8;
    p.ef_construction = 64;
    const auto idx = HnswIndex::build(s, p);
    for (std::uint32_t n = 0; n < idx.size(); ++n) {
        for (int l = 0; l <= idx.level(n); ++l) {
            const auto nb = idx.neighbors(n, l);
            CHECK(nb.size() <= (l == 0 ? 2 * p.m : p.m));
            for (auto x : nb) {
                CHECK(x != n);
                CHECK(idx.level(x) >= l);
            }
        }
    }
}

TEST_CASE("builds are deterministic and persistence preserves results")
{
    const auto s = random_unit_store(1200, 16, 77);
    const auto a = HnswIndex::build(s);
    const auto b = HnswIndex::build(s);
    testing_support::TempDir dir;
    a.save(dir / "a.mann");
    b.save(dir / "b.mann");
    CHECK(testing_support::slurp(dir / "a.mann") == testing_support::slurp(dir / "b.mann"));
    const auto loaded = HnswIndex::load(dir / "a.mann");
    CHECK(loaded.params().m == a.params().m);
    Rng rng(6);
    for (int q = 0; q < 20; ++q) {
        const auto v = random_unit(16, rng);
        const auto ra = a.search(v, 25);
        CHECK(ra == b.search(v, 25));
        CHECK(ra == loaded.search(v, 25));
    }
}

TEST_CASE("search rejects a query of the wrong dimension")
{
    const auto idx = HnswIndex::build(random_unit_store(10, 4, 1));
    CHECK_THROWS_AS(idx.search(std::vector<float>{1, 0}, 1), std::invalid_argument);
}

TEST_CASE("invalid parameters are configuration errors")
{
    HnswParams p;
    p.m = 1;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p = {};
    p.ef_construction = 4;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    CHECK(HnswParams{}.effective_ef(10) == 128);
    CHECK(HnswParams{}.effective_ef(100) == 200);
}

TEST_CASE("vector store rejects wrong dimensions and duplicates")
{
    VectorStore s(3);
    try {
        s.add(ImageId("bad_img"), std::vector<float>{1, 2});
        FAIL("expected a dimension error");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("bad_img") != std::string::npos);
    }
    s.add(ImageId("x"), std::vector<float>{1, 2, 3});
    s.add(ImageId("x"), std::vector<float>{1, 2, 3});
    CHECK_THROWS_AS(s.seal(), DataError);
}
