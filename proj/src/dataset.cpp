#include "met/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "met/error.hpp"
#include "met/rng.hpp"

namespace met {

namespace {

/// First `k` elements of a uniform random permutation of `items`.
template <typename T>
std::vector<T> draw_without_replacement(std::vector<T> items, std::size_t k, Rng& rng)
{
    k = std::min(k, items.size());
    for (std::size_t i = 0; i < k; ++i) {
        auto j = i + uniform_index(rng, items.size() - i);
        std::swap(items[i], items[j]);
    }
    items.resize(k);
    return items;
}

struct Withholding {
    std::vector<std::size_t> glosses;  // indices, in draw order
    std::vector<std::size_t> images;
};

}  // namespace

std::vector<QueryPair> generate_pairs(std::span<const WithheldPool> pools, const VectorStore& images,
                                      const VectorStore* joint, std::uint64_t seed, std::string_view split)
{
    std::vector<QueryPair> out;
    out.reserve(pools.size());
    for (const auto& pool : pools) {
        if (pool.glosses.empty() || pool.image_ids.empty()) {
            throw DataError("empty withheld pool for entity " + pool.entity.str());
        }
        auto rng = make_rng(seed, std::string(split) + ":" + pool.entity.str());
        const auto g = uniform_index(rng, pool.glosses.size());
        const auto i = uniform_index(rng, pool.image_ids.size());

        QueryPair q;
        q.query_id = std::string(split) + ":" + pool.entity.str();
        q.text = pool.glosses[g];
        q.image_id = pool.image_ids[i];
        auto v = images.lookup(q.image_id);
        if (v.empty()) {
            throw DataError("withheld image " + q.image_id.str() + " has no vector");
        }
        q.image_vec.assign(v.begin(), v.end());
        if (joint) {
            auto jv = joint->lookup(q.image_id);
            q.joint_vec.assign(jv.begin(), jv.end());
        }
        q.gold = pool.entity;
        out.push_back(std::move(q));
    }
    return out;
}

SplitResult filter_and_split(const KnowledgeBase& raw, const SplitSpec& spec)
{
    if (spec.dev_size == 0 || spec.test_size == 0) {
        throw ConfigError("dev_size and test_size must be positive");
    }

    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const auto& e = raw.entity(i);
        if (e.glosses.size() >= spec.min_glosses && e.image_ids.size() >= spec.min_images) {
            eligible.push_back(i);
        }
    }
    if (spec.dev_size + spec.test_size >= eligible.size()) {
        throw DataError("not enough eligible entities: " + std::to_string(eligible.size()) + " eligible, dev+test = "
                        + std::to_string(spec.dev_size + spec.test_size));
    }

    std::unordered_map<std::string, std::size_t> gloss_freq;
    for (auto i : eligible) {
        for (const auto& g : raw.entity(i).glosses) {
            ++gloss_freq[g];
        }
    }
    auto unique_glosses = [&](const Entity& e) {
        std::vector<std::size_t> idx;
        for (std::size_t g = 0; g < e.glosses.size(); ++g) {
            if (gloss_freq[e.glosses[g]] == 1) {
                idx.push_back(g);
            }
        }
        return idx;
    };
    // Withholding w glosses/images must leave at least one of each on the KB side.
    auto can_withhold = [&](const Entity& e, std::size_t w) {
        return unique_glosses(e).size() >= w && e.glosses.size() > w && e.image_ids.size() > w;
    };

    // 0 = train only, 1 = dev, 2 = test
    std::vector<int> role(raw.size(), 0);
    {
        auto order = eligible;
        auto rng = make_rng(spec.seed, "split-order");
        order = draw_without_replacement(std::move(order), order.size(), rng);
        std::size_t dev = 0;
        std::size_t test = 0;
        for (auto i : order) {
            if (dev == spec.dev_size && test == spec.test_size) {
                break;
            }
            if (!can_withhold(raw.entity(i), 2)) {
                continue;
            }
            if (dev < spec.dev_size) {
                role[i] = 1;
                ++dev;
            } else {
                role[i] = 2;
                ++test;
            }
        }
        if (dev < spec.dev_size || test < spec.test_size) {
            throw DataError("not enough entities with spare evidence for dev/test: got dev " + std::to_string(dev)
                            + ", test " + std::to_string(test));
        }
    }

    std::vector<Entity> kept;
    std::vector<WithheldPool> train_pools;
    std::vector<WithheldPool> dev_pools;
    std::vector<WithheldPool> test_pools;
    std::unordered_set<ImageId> kept_images;

    for (auto i : eligible) {
        const auto& e = raw.entity(i);
        std::size_t w = role[i] == 0 ? 1 : 2;
        if (!can_withhold(e, w)) {
            w = 0;
        }
        auto rng = make_rng(spec.seed, "withhold:" + e.id.str());
        std::vector<std::size_t> all_images(e.image_ids.size());
        std::iota(all_images.begin(), all_images.end(), std::size_t{0});
        Withholding held{draw_without_replacement(unique_glosses(e), w, rng),
                         draw_without_replacement(std::move(all_images), w, rng)};

        Entity k{e.id, {}, {}};
        for (std::size_t g = 0; g < e.glosses.size(); ++g) {
            if (std::find(held.glosses.begin(), held.glosses.end(), g) == held.glosses.end()) {
                k.glosses.push_back(e.glosses[g]);
            }
        }
        for (std::size_t m = 0; m < e.image_ids.size(); ++m) {
            if (std::find(held.images.begin(), held.images.end(), m) == held.images.end()) {
                k.image_ids.push_back(e.image_ids[m]);
                kept_images.insert(e.image_ids[m]);
            }
        }
        kept.push_back(std::move(k));

        if (w >= 1) {
            train_pools.push_back({e.id, {e.glosses[held.glosses[0]]}, {e.image_ids[held.images[0]]}});
        }
        if (w == 2) {
            WithheldPool p{e.id, {e.glosses[held.glosses[1]]}, {e.image_ids[held.images[1]]}};
            (role[i] == 1 ? dev_pools : test_pools).push_back(std::move(p));
        }
    }

    auto keep = [&](const ImageId& id) { return kept_images.contains(id); };
    std::optional<VectorStore> joint;
    if (raw.joint()) {
        joint = raw.joint()->filtered(keep);
    }
    SplitResult result{KnowledgeBase(std::move(kept), raw.images().filtered(keep), std::move(joint)), {}};

    const auto pair_seed = derive_seed(spec.seed, "pairs");
    for (const auto& e : result.kb.entities()) {
        result.splits.kb_entities.push_back(e.id);
    }
    result.splits.train = generate_pairs(train_pools, raw.images(), raw.joint(), pair_seed, "train");
    result.splits.dev = generate_pairs(dev_pools, raw.images(), raw.joint(), pair_seed, "dev");
    result.splits.test = generate_pairs(test_pools, raw.images(), raw.joint(), pair_seed, "test");
    return result;
}

std::vector<Leak> find_leaks(const KnowledgeBase& kb, const Splits& splits)
{
    std::vector<Leak> leaks;
    std::unordered_map<std::string, std::string> gloss_group;
    std::unordered_map<std::string, std::string> image_group;

    auto note = [&](auto& table, const char* kind, const std::string& value, const char* group) {
        auto [it, fresh] = table.emplace(value, group);
        if (!fresh && it->second != group) {
            leaks.push_back({kind, value, it->second, group});
        }
    };
    for (const auto& e : kb.entities()) {
        for (const auto& g : e.glosses) {
            note(gloss_group, "gloss", g, "kb");
        }
        for (const auto& i : e.image_ids) {
            note(image_group, "image", i.str(), "kb");
        }
    }
    const std::pair<const char*, const std::vector<QueryPair>*> parts[] = {
        {"train", &splits.train}, {"dev", &splits.dev}, {"test", &splits.test}};
    for (const auto& [name, part] : parts) {
        for (const auto& q : *part) {
            note(gloss_group, "gloss", q.text, name);
            note(image_group, "image", q.image_id.str(), name);
        }
    }
    return leaks;
}

StatsReport compute_stats(const KnowledgeBase& kb)
{
    StatsReport s;
    s.entities = kb.size();
    std::size_t leq3 = 0;
    std::size_t one_text = 0;
    std::unordered_map<std::string, std::set<std::size_t>> by_content;
    std::unordered_map<std::string, std::set<std::size_t>> by_text;

    for (std::size_t i = 0; i < kb.size(); ++i) {
        const auto& e = kb.entity(i);
        s.glosses += e.glosses.size();
        s.images += e.image_ids.size();
        ++s.gloss_histogram[e.glosses.size()];
        ++s.image_histogram[e.image_ids.size()];
        if (e.image_ids.size() <= 3) {
            ++leq3;
        }
        if (e.glosses.size() == 1) {
            ++one_text;
        }
        for (const auto& g : e.glosses) {
            by_text[g].insert(i);
        }
        for (const auto& img : e.image_ids) {
            auto v = kb.images().lookup(img);
            std::string content(reinterpret_cast<const char*>(v.data()), v.size_bytes());
            by_content[std::move(content)].insert(i);
        }
    }
    auto pct = [](std::size_t part, std::size_t whole) {
        return whole == 0 ? 0.0 : 100.0 * static_cast<double>(part) / static_cast<double>(whole);
    };
    auto multi = [](const auto& table) {
        return static_cast<std::size_t>(
            std::count_if(table.begin(), table.end(), [](const auto& kv) { return kv.second.size() >= 2; }));
    };
    s.pct_entities_leq3_images = pct(leq3, s.entities);
    s.pct_entities_one_text = pct(one_text, s.entities);
    s.pct_images_multi_entity = pct(multi(by_content), by_content.size());
    s.pct_texts_multi_entity = pct(multi(by_text), by_text.size());
    return s;
}

std::string stats_to_json(const StatsReport& s)
{
    nlohmann::json j;
    j["entities"] = s.entities;
    j["glosses"] = s.glosses;
    j["images"] = s.images;
    j["pct_entities_leq3_images"] = s.pct_entities_leq3_images;
    j["pct_entities_one_text"] = s.pct_entities_one_text;
    j["pct_images_multi_entity"] = s.pct_images_multi_entity;
    j["pct_texts_multi_entity"] = s.pct_texts_multi_entity;
    auto hist = [](const std::map<std::size_t, std::size_t>& h) {
        auto a = nlohmann::json::array();
        for (auto [k, v] : h) {
            a.push_back({k, v});
        }
        return a;
    };
    j["gloss_histogram"] = hist(s.gloss_histogram);
    j["image_histogram"] = hist(s.image_histogram);
    return j.dump(2) + "\n";
}

std::string stats_to_table(const StatsReport& s)
{
    std::ostringstream os;
    char buf[128];
    auto row = [&](const char* label, const std::string& value) {
        std::snprintf(buf, sizeof buf, "%-38s %12s\n", label, value.c_str());
        os << buf;
    };
    auto pct = [](double v) {
        char b[32];
        std::snprintf(b, sizeof b, "%.1f%%", v);
        return std::string(b);
    };
    row("entities", std::to_string(s.entities));
    row("glosses", std::to_string(s.glosses));
    row("images", std::to_string(s.images));
    row("entities with <= 3 images", pct(s.pct_entities_leq3_images));
    row("entities with one text", pct(s.pct_entities_one_text));
    row("images associated with >= 2 entities", pct(s.pct_images_multi_entity));
    row("texts associated with >= 2 entities", pct(s.pct_texts_multi_entity));
    return os.str();
}

std::vector<std::size_t> sample_training_batch(std::span<const bool> positive, std::size_t batch_size,
                                               std::uint64_t seed)
{
    if (batch_size > positive.size()) {
        throw ConfigError("batch size " + std::to_string(batch_size) + " exceeds candidate count "
                          + std::to_string(positive.size()));
    }
    Rng rng(derive_seed(seed, "batch"));
    std::vector<std::size_t> all(positive.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    auto batch = draw_without_replacement(std::move(all), batch_size, rng);
    if (batch.empty()) {
        return batch;
    }

    std::vector<std::size_t> positives;
    for (std::size_t i = 0; i < positive.size(); ++i) {
        if (positive[i]) {
            positives.push_back(i);
        }
    }
    const bool drawn = std::any_of(batch.begin(), batch.end(), [&](std::size_t i) { return positive[i]; });
    if (!drawn && !positives.empty()) {
        auto slot = uniform_index(rng, batch.size());
        batch[slot] = positives[uniform_index(rng, positives.size())];
    }
    return batch;
}

void validate(const SynthSpec& spec)
{
    if (spec.num_entities == 0 || spec.glosses_per_entity == 0 || spec.images_per_entity == 0
        || spec.latent_dim == 0 || spec.image_dim == 0 || spec.vocab_size == 0 || spec.tokens_per_entity == 0
        || spec.gloss_length == 0) {
        throw ConfigError("synth spec: all counts must be positive");
    }
    if (spec.image_dim < spec.latent_dim) {
        throw ConfigError("synth spec: image_dim must be >= latent_dim");
    }
    if (!(spec.noise_sigma >= 0.0) || !std::isfinite(spec.noise_sigma)) {
        throw ConfigError("synth spec: noise_sigma must be finite and non-negative");
    }
    if (spec.stopword_ratio < 0.0 || spec.stopword_ratio >= 1.0) {
        throw ConfigError("synth spec: stopword_ratio must be in [0, 1)");
    }
    if (spec.stopword_ratio > 0.0 && spec.stopword_count == 0) {
        throw ConfigError("synth spec: stopword_ratio > 0 needs stopword_count > 0");
    }
    if (spec.tokens_per_entity > spec.vocab_size) {
        throw ConfigError("synth spec: tokens_per_entity exceeds vocab_size");
    }
}

namespace {

std::vector<double> unit_gaussian(Rng& rng, std::size_t dim)
{
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> v(dim);
    double norm = 0.0;
    while (norm == 0.0) {
        for (auto& x : v) {
            x = normal(rng);
        }
        norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
    }
    for (auto& x : v) {
        x /= norm;
    }
    return v;
}

/// image_dim x latent_dim matrix with orthonormal columns, row-major.
std::vector<double> orthonormal_projection(Rng& rng, std::size_t rows, std::size_t cols)
{
    std::vector<std::vector<double>> basis;
    while (basis.size() < cols) {
        auto v = unit_gaussian(rng, rows);
        for (const auto& b : basis) {
            double d = std::inner_product(v.begin(), v.end(), b.begin(), 0.0);
            for (std::size_t r = 0; r < rows; ++r) {
                v[r] -= d * b[r];
            }
        }
        double n = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
        if (n < 1e-6) {
            continue;
        }
        for (auto& x : v) {
            x /= n;
        }
        basis.push_back(std::move(v));
    }
    std::vector<double> m(rows * cols);
    for (std::size_t c = 0; c < cols; ++c) {
        for (std::size_t r = 0; r < rows; ++r) {
            m[r * cols + c] = basis[c][r];
        }
    }
    return m;
}

std::string padded_id(char prefix, std::size_t i, std::size_t total)
{
    auto width = std::to_string(total == 0 ? 0 : total - 1).size();
    auto digits = std::to_string(i);
    return std::string(1, prefix) + std::string(width > digits.size() ? width - digits.size() : 0, '0') + digits;
}

}  // namespace

SynthResult generate_synthetic_mkb(const SynthSpec& spec)
{
    validate(spec);
    const auto n = spec.num_entities;
    const auto seed = spec.seed;

    std::vector<EntityId> ids;
    ids.reserve(n);
    for (std::size_t e = 0; e < n; ++e) {
        ids.emplace_back(padded_id('e', e, n));
    }

    std::vector<std::vector<double>> latents;
    {
        auto rng = make_rng(seed, "latents");
        for (std::size_t e = 0; e < n; ++e) {
            latents.push_back(unit_gaussian(rng, spec.latent_dim));
        }
    }
    std::vector<double> projection;
    {
        auto rng = make_rng(seed, "projection");
        projection = orthonormal_projection(rng, spec.image_dim, spec.latent_dim);
    }

    // Content tokens per entity.
    std::vector<std::vector<std::size_t>> tokens(n);
    {
        auto rng = make_rng(seed, "vocab");
        std::vector<std::size_t> vocab(spec.vocab_size);
        std::iota(vocab.begin(), vocab.end(), std::size_t{0});
        if (spec.vocab_size >= n * spec.tokens_per_entity) {
            auto perm = draw_without_replacement(vocab, vocab.size(), rng);
            for (std::size_t e = 0; e < n; ++e) {
                tokens[e].assign(perm.begin() + static_cast<std::ptrdiff_t>(e * spec.tokens_per_entity),
                                 perm.begin() + static_cast<std::ptrdiff_t>((e + 1) * spec.tokens_per_entity));
            }
        } else {
            for (std::size_t e = 0; e < n; ++e) {
                tokens[e] = draw_without_replacement(vocab, spec.tokens_per_entity, rng);
            }
        }
    }

    VectorStore images(static_cast<std::uint32_t>(spec.image_dim));
    VectorStore joint(static_cast<std::uint32_t>(spec.latent_dim));
    std::vector<Entity> entities;
    std::unordered_set<std::string> all_glosses;
    std::normal_distribution<double> noise(0.0, 1.0);

    for (std::size_t e = 0; e < n; ++e) {
        Entity ent{ids[e], {}, {}};
        const auto& z = latents[e];

        auto img_rng = make_rng(seed, "images:" + ids[e].str());
        std::vector<float> img(spec.image_dim);
        std::vector<float> jv(spec.latent_dim);
        for (std::size_t m = 0; m < spec.images_per_entity; ++m) {
            for (std::size_t r = 0; r < spec.image_dim; ++r) {
                double x = 0.0;
                for (std::size_t c = 0; c < spec.latent_dim; ++c) {
                    x += projection[r * spec.latent_dim + c] * z[c];
                }
                img[r] = static_cast<float>(x + spec.noise_sigma * noise(img_rng));
            }
            for (std::size_t c = 0; c < spec.latent_dim; ++c) {
                jv[c] = static_cast<float>(z[c] + spec.noise_sigma * noise(img_rng));
            }
            ImageId id(ids[e].str() + "_i" + std::to_string(m));
            images.add(id, img);
            joint.add(id, jv);
            ent.image_ids.push_back(std::move(id));
        }

        auto text_rng = make_rng(seed, "glosses:" + ids[e].str());
        std::bernoulli_distribution stop(spec.stopword_ratio);
        for (std::size_t g = 0; g < spec.glosses_per_entity; ++g) {
            std::string gloss;
            int attempts = 0;
            do {
                if (++attempts > 1000) {
                    throw DataError("synthetic generator could not produce a unique gloss for " + ids[e].str());
                }
                gloss.clear();
                for (std::size_t t = 0; t < spec.gloss_length; ++t) {
                    if (!gloss.empty()) {
                        gloss += ' ';
                    }
                    if (spec.stopword_ratio > 0.0 && stop(text_rng)) {
                        gloss += "s" + std::to_string(uniform_index(text_rng, spec.stopword_count));
                    } else {
                        gloss += "c" + std::to_string(tokens[e][uniform_index(text_rng, tokens[e].size())]);
                    }
                }
            } while (all_glosses.contains(gloss));
            all_glosses.insert(gloss);
            ent.glosses.push_back(std::move(gloss));
        }
        entities.push_back(std::move(ent));
    }

    // Lexicon: each content token maps to the normalized sum of its owners' latents.
    std::map<std::size_t, std::vector<double>> token_sum;
    for (std::size_t e = 0; e < n; ++e) {
        for (auto t : tokens[e]) {
            auto& acc = token_sum[t];
            acc.resize(spec.latent_dim, 0.0);
            for (std::size_t c = 0; c < spec.latent_dim; ++c) {
                acc[c] += latents[e][c];
            }
        }
    }
    VectorStore lexicon(static_cast<std::uint32_t>(spec.latent_dim));
    for (const auto& [t, acc] : token_sum) {
        double norm = std::sqrt(std::inner_product(acc.begin(), acc.end(), acc.begin(), 0.0));
        if (norm == 0.0) {
            continue;
        }
        std::vector<float> v(spec.latent_dim);
        for (std::size_t c = 0; c < spec.latent_dim; ++c) {
            v[c] = static_cast<float>(acc[c] / norm);
        }
        lexicon.add(ImageId("c" + std::to_string(t)), v);
    }
    lexicon.seal();

    SynthResult out;
    for (std::size_t e = 0; e < n; ++e) {
        out.latents[ids[e]] = std::vector<float>(latents[e].begin(), latents[e].end());
    }
    out.raw = KnowledgeBase(std::move(entities), std::move(images), std::move(joint));
    out.lexicon = std::move(lexicon);

    SplitSpec split;
    split.dev_size = spec.dev_size ? spec.dev_size : n / 5;
    split.test_size = spec.test_size ? spec.test_size : n / 5;
    split.seed = derive_seed(seed, "split");
    auto result = filter_and_split(out.raw, split);
    out.kb = std::move(result.kb);
    out.splits = std::move(result.splits);
    return out;
}

}  // namespace met
