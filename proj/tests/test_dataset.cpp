#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>

#include "met/dataset.hpp"
#include "met/error.hpp"
#include "met/kernels.hpp"
#include "met/text_index.hpp"
#include "met/tokenizer.hpp"
#include "support.hpp"

using namespace met;
using testing_support::EntitySpec;
using testing_support::make_kb;

namespace {

std::vector<float> unit(std::size_t i, std::size_t dim = 16)
{
    std::vector<float> v(dim, 0.01f);
    v[i % dim] = 1.0f;
    v[(i / dim) % dim] += 0.5f;
    return v;
}

EntitySpec entity(const std::string& id, std::size_t glosses, std::size_t images, std::size_t& counter)
{
    EntitySpec e{id, {}, {}};
    for (std::size_t g = 0; g < glosses; ++g) {
        e.glosses.push_back(id + " gloss " + std::to_string(g));
    }
    for (std::size_t i = 0; i < images; ++i) {
        e.images.push_back(unit(counter++));
    }
    return e;
}

/// Brute-force no-leak check over the four groups, by gloss string and by image id.
std::size_t brute_force_intersections(const KnowledgeBase& kb, const Splits& s)
{
    std::vector<std::set<std::string>> texts(4), images(4);
    for (const auto& e : kb.entities()) {
        texts[0].insert(e.glosses.begin(), e.glosses.end());
        for (const auto& i : e.image_ids) {
            images[0].insert(i.str());
        }
    }
    const std::vector<const std::vector<QueryPair>*> splits{&s.train, &s.dev, &s.test};
    for (std::size_t g = 0; g < 3; ++g) {
        for (const auto& q : *splits[g]) {
            texts[g + 1].insert(q.text);
            images[g + 1].insert(q.image_id.str());
        }
    }
    std::size_t hits = 0;
    for (std::size_t a = 0; a < 4; ++a) {
        for (std::size_t b = a + 1; b < 4; ++b) {
            for (const auto& t : texts[a]) {
                hits += texts[b].count(t);
            }
            for (const auto& i : images[a]) {
                hits += images[b].count(i);
            }
        }
    }
    return hits;
}

}  // namespace

TEST_CASE("entity with two glosses is filtered out")
{
    std::size_t c = 0;
    const auto raw = make_kb({entity("e1", 4, 4, c), entity("e2", 2, 4, c), entity("e3", 4, 4, c),
                              entity("e4", 5, 3, c), entity("e5", 4, 5, c)});
    const auto r = filter_and_split(raw, {1, 1, 7});
    CHECK(!r.kb.find(EntityId("e2")));
    CHECK(r.kb.size() == 4);
    CHECK(r.splits.dev.size() == 1);
    CHECK(r.splits.test.size() == 1);
    CHECK(r.splits.train.size() == 4);
    CHECK(brute_force_intersections(r.kb, r.splits) == 0);
    for (const auto& e : r.kb.entities()) {
        CHECK(e.glosses.size() >= 1);
        CHECK(e.image_ids.size() >= 1);
    }
}

TEST_CASE("split sizes must be positive and fit the eligible entities")
{
    std::size_t c = 0;
    const auto raw = make_kb({entity("e1", 4, 4, c), entity("e2", 4, 4, c), entity("e3", 4, 4, c)});
    CHECK_THROWS_AS(filter_and_split(raw, {0, 1, 1}), ConfigError);
    CHECK_THROWS_AS(filter_and_split(raw, {2, 1, 1}), DataError);
}

TEST_CASE("synthetic 200-entity split is leak-free and sized as requested")
{
    SynthSpec spec;
    spec.num_entities = 200;
    const auto r0 = generate_synthetic_mkb(spec);
    const auto r = filter_and_split(r0.raw, {20, 20, 7});
    CHECK(r.splits.dev.size() == 20);
    CHECK(r.splits.test.size() == 20);
    CHECK(brute_force_intersections(r.kb, r.splits) == 0);
    CHECK(find_leaks(r.kb, r.splits).empty());

    std::set<EntityId> dev, test;
    for (const auto& q : r.splits.dev) {
        dev.insert(*q.gold);
    }
    for (const auto& q : r.splits.test) {
        test.insert(*q.gold);
        CHECK(!dev.count(*q.gold));
    }
    CHECK(dev.size() == 20);
    CHECK(test.size() == 20);
    CHECK(filter_and_split(r0.raw, {20, 20, 7}).splits == r.splits);
    CHECK(!(filter_and_split(r0.raw, {20, 20, 8}).splits == r.splits));
}

TEST_CASE("find_leaks reports an injected leak")
{
    SynthSpec spec;
    spec.num_entities = 50;
    auto r = generate_synthetic_mkb(spec);
    r.splits.test[0].text = r.splits.dev[0].text;
    const auto leaks = find_leaks(r.kb, r.splits);
    REQUIRE(leaks.size() == 1);
    CHECK(leaks[0].kind == "gloss");
}

TEST_CASE("single withheld gloss and image give the only possible pair")
{
    VectorStore images(2);
    images.add(ImageId("i"), std::vector<float>{1, 0});
    images.seal();
    const std::vector<WithheldPool> pools{{EntityId("e"), {"only gloss"}, {ImageId("i")}}};
    const auto pairs = generate_pairs(pools, images, nullptr, 5, "dev");
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0].text == "only gloss");
    CHECK(pairs[0].image_id == ImageId("i"));
    CHECK(pairs[0].gold == EntityId("e"));
    CHECK(pairs[0].image_vec == std::vector<float>{1, 0});
    CHECK(generate_pairs(pools, images, nullptr, 5, "dev") == pairs);

    const std::vector<WithheldPool> empty{{EntityId("e"), {}, {ImageId("i")}}};
    CHECK_THROWS_AS(generate_pairs(empty, images, nullptr, 5, "dev"), DataError);
}

TEST_CASE("pair draws are uniform over withheld glosses (chi-square, 3 dof)")
{
    VectorStore images(2);
    std::vector<WithheldPool> pools;
    for (int e = 0; e < 100; ++e) {
        WithheldPool p{EntityId("e" + std::to_string(e)), {}, {}};
        for (int g = 0; g < 4; ++g) {
            p.glosses.push_back("e" + std::to_string(e) + " g" + std::to_string(g));
        }
        p.image_ids.emplace_back("e" + std::to_string(e) + "_i");
        images.add(p.image_ids.back(), std::vector<float>{1, 0});
        pools.push_back(p);
    }
    images.seal();
    std::array<double, 4> counts{};
    for (std::uint64_t s = 0; s < 100; ++s) {
        for (const auto& q : generate_pairs(pools, images, nullptr, derive_seed(3, std::to_string(s)), "train")) {
            counts[static_cast<std::size_t>(q.text.back() - '0')] += 1;
        }
    }
    double chi2 = 0.0;
    for (double c : counts) {
        chi2 += (c - 2500.0) * (c - 2500.0) / 2500.0;
    }
    CHECK(chi2 < 16.27);
}

TEST_CASE("stats: unique evidence gives zero ambiguity")
{
    std::size_t c = 0;
    const auto kb = make_kb({entity("a", 1, 2, c), entity("b", 3, 4, c)});
    const auto s = compute_stats(kb);
    CHECK(s.pct_images_multi_entity == 0.0);
    CHECK(s.pct_texts_multi_entity == 0.0);
    CHECK(s.pct_entities_one_text == 50.0);
    CHECK(s.pct_entities_leq3_images == 50.0);
    CHECK(s.gloss_histogram.at(1) == 1);
    CHECK(s.image_histogram.at(4) == 1);
}

TEST_CASE("stats: 10 images, 3 shared by 2 entities gives 30 percent")
{
    std::vector<std::vector<float>> content;
    for (std::size_t i = 0; i < 10; ++i) {
        content.push_back(unit(i));
    }
    EntitySpec a{"a", {"shared text", "a only"}, {content[0], content[1], content[2], content[3], content[4], content[5]}};
    EntitySpec b{"b", {"shared text"}, {content[3], content[4], content[5], content[6], content[7], content[8], content[9]}};
    const auto s = compute_stats(make_kb({a, b}));
    CHECK(s.images == 13);
    CHECK(s.pct_images_multi_entity == doctest::Approx(30.0));
    CHECK(s.pct_texts_multi_entity == doctest::Approx(50.0));
    CHECK(stats_to_json(s).find("pct_images_multi_entity") != std::string::npos);
    CHECK(stats_to_table(s).find("30.0") != std::string::npos);
}

TEST_CASE("batch sampler: no positives gives a plain sample")
{
    std::vector<char> raw(200, 0);
    const std::span<const bool> none(reinterpret_cast<const bool*>(raw.data()), raw.size());
    const auto b = sample_training_batch(none, 64, 1);
    CHECK(b.size() == 64);
    CHECK(std::set<std::size_t>(b.begin(), b.end()).size() == 64);
    CHECK(sample_training_batch(none, 64, 1) == b);
    CHECK(!(sample_training_batch(none, 64, 2) == b));
    CHECK_THROWS_AS(sample_training_batch(none, 201, 1), ConfigError);
}

TEST_CASE("batch sampler: a single positive is in every batch over 1000 seeds")
{
    std::unique_ptr<bool[]> pos(new bool[200]());
    pos[137] = true;
    std::size_t present = 0;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        const auto b = sample_training_batch({pos.get(), 200}, 64, seed);
        present += std::count(b.begin(), b.end(), 137u) == 1 ? 1 : 0;
        CHECK(std::set<std::size_t>(b.begin(), b.end()).size() == 64);
    }
    CHECK(present == 1000);
}

TEST_CASE("batch sampler: 64 positives with batch 64 still satisfies the constraint")
{
    std::unique_ptr<bool[]> pos(new bool[200]());
    for (int i = 0; i < 64; ++i) {
        pos[i * 3] = true;
    }
    const auto b = sample_training_batch({pos.get(), 200}, 64, 9);
    CHECK(std::any_of(b.begin(), b.end(), [&](std::size_t i) { return pos[i]; }));
}

TEST_CASE("synthetic generator is deterministic in its seed")
{
    SynthSpec spec;
    spec.num_entities = 120;
    const auto a = generate_synthetic_mkb(spec);
    const auto b = generate_synthetic_mkb(spec);
    CHECK(a.kb == b.kb);
    CHECK(a.splits == b.splits);
    CHECK(a.lexicon == b.lexicon);
    spec.seed = 2;
    CHECK(!(generate_synthetic_mkb(spec).kb == a.kb));
}

TEST_CASE("synthetic spec with 500 entities is leak-free with valid structure")
{
    const auto r = generate_synthetic_mkb(SynthSpec{});
    CHECK(r.raw.size() == 500);
    CHECK(brute_force_intersections(r.kb, r.splits) == 0);
    CHECK(validate_kb(r.raw, KbRules::post_filter()).empty());
    CHECK(validate_kb(r.kb).empty());
    CHECK(r.splits.train.size() == 500);
    CHECK(r.splits.dev.size() == 100);
    CHECK(r.splits.test.size() == 100);
}

TEST_CASE("zero noise: images of an entity coincide and exact image search is perfect")
{
    SynthSpec spec;
    spec.noise_sigma = 0.0;
    const auto r = generate_synthetic_mkb(spec);
    for (const auto& e : r.raw.entities()) {
        const auto first = r.raw.images().lookup(e.image_ids.front());
        for (const auto& id : e.image_ids) {
            const auto v = r.raw.images().lookup(id);
            CHECK(std::equal(v.begin(), v.end(), first.begin()));
        }
    }
    std::size_t hit = 0;
    for (const auto& q : r.splits.test) {
        const auto top = exact_knn(r.kb.images(), q.image_vec, 1);
        const auto owner = r.kb.image_owner(r.kb.images().id(top.front().row));
        hit += r.kb.entity(*owner).id == *q.gold ? 1 : 0;
    }
    CHECK(hit == r.splits.test.size());
}

TEST_CASE("synthetic vocabulary is drawn from the generator token sets")
{
    const SynthSpec spec;
    const auto r = generate_synthetic_mkb(spec);
    const auto idx = TextIndex::build(r.kb);
    std::set<std::string> universe;
    for (std::size_t t = 0; t < spec.vocab_size; ++t) {
        universe.insert("c" + std::to_string(t));
    }
    for (std::size_t t = 0; t < spec.stopword_count; ++t) {
        universe.insert("s" + std::to_string(t));
    }
    std::set<std::string> from_glosses;
    for (const auto& e : r.kb.entities()) {
        for (const auto& g : e.glosses) {
            for (auto& t : tokenize(g)) {
                from_glosses.insert(t);
            }
        }
    }
    const std::set<std::string> vocab(idx.vocabulary().begin(), idx.vocabulary().end());
    CHECK(vocab == from_glosses);
    CHECK(std::includes(universe.begin(), universe.end(), vocab.begin(), vocab.end()));
}

TEST_CASE("large vocabulary gives disjoint content tokens, a small one forces collisions")
{
    auto owners = [](const SynthResult& r) {
        std::map<std::string, std::set<std::string>> m;
        for (const auto& e : r.raw.entities()) {
            for (const auto& g : e.glosses) {
                for (const auto& t : tokenize(g)) {
                    if (t[0] == 'c') {
                        m[t].insert(e.id.str());
                    }
                }
            }
        }
        std::size_t shared = 0;
        for (const auto& [t, o] : m) {
            shared += o.size() > 1 ? 1 : 0;
        }
        return shared;
    };
    SynthSpec spec;
    spec.num_entities = 200;
    CHECK(owners(generate_synthetic_mkb(spec)) == 0);
    spec.vocab_size = 100;
    CHECK(owners(generate_synthetic_mkb(spec)) > 0);
}

TEST_CASE("invalid synth specs are configuration errors")
{
    SynthSpec s;
    s.image_dim = 8;
    CHECK_THROWS_AS(validate(s), ConfigError);
    s = {};
    s.num_entities = 0;
    CHECK_THROWS_AS(validate(s), ConfigError);
    s = {};
    s.noise_sigma = -1;
    CHECK_THROWS_AS(validate(s), ConfigError);
}
