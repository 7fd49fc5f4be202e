#include <doctest.h>

#include <array>
#include <map>
#include <set>

#include "met/dataset.hpp"
#include "met/error.hpp"
#include "met/retrieval.hpp"
#include "support.hpp"

using namespace met;
using testing_support::make_kb;

namespace {

struct Fixture {
    KnowledgeBase kb;
    TextIndex text;
    HnswIndex image;
    Indices view() const { return {text, image}; }
};

Fixture index(KnowledgeBase kb)
{
    auto text = TextIndex::build(kb);
    auto image = HnswIndex::build(kb.images());
    return {std::move(kb), std::move(text), std::move(image)};
}

QueryPair query(const std::string& text, std::vector<float> vec)
{
    return {"q", text, ImageId("qimg"), std::move(vec), {}, std::nullopt};
}

}  // namespace

TEST_CASE("first pairing takes the first image and the first gloss")
{
    const auto kb = make_kb({{"e", {"g0", "g1"}, {{1, 0}, {0, 1}}}, {"bare", {"g"}, {}}});
    CHECK(pair_text_candidate(kb, EntityId("e"), PairingMode::first) == ImageId("e_i0"));
    CHECK(pair_image_candidate(kb, EntityId("e"), PairingMode::first) == 0u);
    CHECK(!pair_text_candidate(kb, EntityId("bare"), PairingMode::first));
    CHECK(!pair_text_candidate(kb, EntityId("bare"), PairingMode::random, 4, "q"));
}

TEST_CASE("random image pairing is uniform over three images")
{
    const auto kb = make_kb({{"e", {"g"}, {{1, 0}, {0, 1}, {1, 1}}}});
    std::map<std::string, int> freq;
    for (std::uint64_t seed = 0; seed < 3000; ++seed) {
        freq[pair_text_candidate(kb, EntityId("e"), PairingMode::random, seed, "q1")->str()] += 1;
    }
    REQUIRE(freq.size() == 3);
    for (const auto& [id, n] : freq) {
        CHECK(std::abs(n / 3000.0 - 1.0 / 3.0) <= 0.05);
    }
    CHECK(pair_text_candidate(kb, EntityId("e"), PairingMode::random, 17, "q1") ==
          pair_text_candidate(kb, EntityId("e"), PairingMode::random, 17, "q1"));
}

TEST_CASE("random gloss pairing is uniform over four glosses (chi-square, 3 dof)")
{
    const auto kb = make_kb({{"e", {"g0", "g1", "g2", "g3"}, {{1, 0}}}});
    std::array<double, 4> counts{};
    for (std::uint64_t seed = 0; seed < 4000; ++seed) {
        counts[*pair_image_candidate(kb, EntityId("e"), PairingMode::random, seed, "q")] += 1;
    }
    double chi2 = 0.0;
    for (double c : counts) {
        chi2 += (c - 1000.0) * (c - 1000.0) / 1000.0;
    }
    CHECK(chi2 < 16.27);
}

TEST_CASE("an entity found by both channels keeps both retrieved items")
{
    const auto f = index(make_kb({{"a", {"alpha one", "alpha two"}, {{0, 1}, {1, 0}}},
                                  {"b", {"beta"}, {{-1, 0}}},
                                  {"c", {"gamma"}, {{0, -1}}}}));
    const auto cands = retrieve_candidates(f.kb, f.view(), query("alpha two", {1, 0.05f}), {1, 1});
    REQUIRE(cands.size() == 1);
    const auto& c = cands[0];
    CHECK(c.entity == EntityId("a"));
    CHECK(c.channel == Channel::both);
    CHECK(c.gloss == 1u);
    CHECK(c.image == ImageId("a_i1"));
    CHECK(c.text_rank == 1u);
    CHECK(c.image_rank == 1u);
    CHECK(c.text_score.has_value());
    CHECK(c.image_score.has_value());
}

TEST_CASE("text-channel entities come first, then image-only entities")
{
    const auto f = index(make_kb({{"a", {"apple"}, {{0, 1}}}, {"b", {"banana"}, {{1, 0}}}, {"c", {"cherry"}, {{-1, 0}}}}));
    const auto cands = retrieve_candidates(f.kb, f.view(), query("apple", {1, 0}), {5, 3});
    REQUIRE(cands.size() == 3);
    CHECK(cands[0].entity == EntityId("a"));
    CHECK(cands[0].channel == Channel::both);
    CHECK(cands[0].image == ImageId("a_i0"));
    CHECK(cands[1].entity == EntityId("b"));
    CHECK(cands[1].channel == Channel::image);
    CHECK(cands[1].gloss == 0u);
    CHECK(cands[1].image_rank == 1u);
    CHECK(cands[2].entity == EntityId("c"));
    CHECK(cands[2].channel == Channel::image);
    CHECK(cands[0].image_rank == 2u);
}

TEST_CASE("candidates on the synthetic KB: bounded, unique, evidence owned by the entity")
{
    const auto r = generate_synthetic_mkb(SynthSpec{});
    const auto f = index(r.kb);
    RetrievalConfig cfg{20, 15, PairingMode::random, 3};
    for (const auto& q : r.splits.dev) {
        const auto cands = retrieve_candidates(f.kb, f.view(), q, cfg);
        CHECK(cands.size() <= 35);
        std::set<EntityId> seen;
        for (const auto& c : cands) {
            CHECK(seen.insert(c.entity).second);
            const auto& e = f.kb.at(c.entity);
            REQUIRE(c.gloss.has_value());
            CHECK(*c.gloss < e.glosses.size());
            REQUIRE(c.image.has_value());
            CHECK(f.kb.image_owner(*c.image) == f.kb.find(c.entity));
        }
        CHECK(retrieve_candidates(f.kb, f.view(), q, cfg) == cands);
    }
}

TEST_CASE("zero N or M is a configuration error")
{
    const auto f = index(make_kb({{"a", {"x"}, {{1, 0}}}}));
    CHECK_THROWS_AS(retrieve_candidates(f.kb, f.view(), query("x", {1, 0}), {0, 1}), ConfigError);
    CHECK_THROWS_AS(retrieve_candidates(f.kb, f.view(), query("x", {1, 0}), {1, 0}), ConfigError);
}

TEST_CASE("channel names round-trip")
{
    for (auto c : {Channel::text, Channel::image, Channel::both}) {
        CHECK(channel_from_string(to_string(c)) == c);
    }
    CHECK_THROWS_AS(channel_from_string("audio"), DataError);
}
