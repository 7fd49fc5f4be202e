#include "met/retrieval.hpp"

#include <unordered_map>

#include "met/error.hpp"
#include "met/rng.hpp"

namespace met {

const char* to_string(Channel c)
{
    switch (c) {
    case Channel::text:
        return "text";
    case Channel::image:
        return "image";
    case Channel::both:
        return "both";
    }
    return "?";
}

Channel channel_from_string(std::string_view s)
{
    if (s == "text") {
        return Channel::text;
    }
    if (s == "image") {
        return Channel::image;
    }
    if (s == "both") {
        return Channel::both;
    }
    throw DataError("unknown channel: " + std::string(s));
}

void RetrievalConfig::validate() const
{
    if (n_texts == 0 || m_images == 0) {
        throw ConfigError("retrieval: N and M must be >= 1");
    }
}

std::optional<ImageId> pair_text_candidate(const KnowledgeBase& kb, const EntityId& entity, PairingMode mode,
                                           std::uint64_t seed, std::string_view key)
{
    const auto& images = kb.at(entity).image_ids;
    if (images.empty()) {
        return std::nullopt;
    }
    if (mode == PairingMode::first) {
        return images.front();
    }
    auto rng = make_rng(seed, "pair-image:" + std::string(key) + "|" + entity.str());
    return images[uniform_index(rng, images.size())];
}

std::optional<std::uint32_t> pair_image_candidate(const KnowledgeBase& kb, const EntityId& entity,
                                                  PairingMode mode, std::uint64_t seed, std::string_view key)
{
    const auto& glosses = kb.at(entity).glosses;
    if (glosses.empty()) {
        return std::nullopt;
    }
    if (mode == PairingMode::first) {
        return 0U;
    }
    auto rng = make_rng(seed, "pair-text:" + std::string(key) + "|" + entity.str());
    return static_cast<std::uint32_t>(uniform_index(rng, glosses.size()));
}

std::vector<Candidate> retrieve_candidates(const KnowledgeBase& kb, const Indices& indices, const QueryPair& query,
                                           const RetrievalConfig& cfg)
{
    cfg.validate();
    std::vector<Candidate> out;
    std::unordered_map<EntityId, std::size_t> slot;

    // Hits arrive best first, so the first hit per entity is its best.
    std::uint32_t rank = 0;
    for (const auto& hit : indices.text.search(query.text, cfg.n_texts)) {
        const auto& ref = indices.text.doc_ref(hit.doc);
        if (slot.contains(ref.entity)) {
            continue;
        }
        Candidate c;
        c.entity = ref.entity;
        c.gloss = ref.gloss;
        c.channel = Channel::text;
        c.text_score = hit.score;
        c.text_rank = ++rank;
        slot.emplace(ref.entity, out.size());
        out.push_back(std::move(c));
    }
    const std::size_t text_count = out.size();

    rank = 0;
    std::unordered_map<EntityId, bool> seen_image;
    for (const auto& hit : indices.image.search(query.image_vec, cfg.m_images)) {
        const auto& image_id = indices.image.id(hit.row);
        auto owner = kb.image_owner(image_id);
        if (!owner) {
            continue;
        }
        const auto& entity = kb.entity(*owner).id;
        if (!seen_image.emplace(entity, true).second) {
            continue;
        }
        ++rank;
        if (auto it = slot.find(entity); it != slot.end()) {
            auto& c = out[it->second];
            c.image = image_id;
            c.channel = Channel::both;
            c.image_score = hit.similarity;
            c.image_rank = rank;
            continue;
        }
        Candidate c;
        c.entity = entity;
        c.image = image_id;
        c.channel = Channel::image;
        c.image_score = hit.similarity;
        c.image_rank = rank;
        slot.emplace(entity, out.size());
        out.push_back(std::move(c));
    }

    for (std::size_t i = 0; i < out.size(); ++i) {
        auto& c = out[i];
        if (i < text_count && c.channel == Channel::text) {
            c.image = pair_text_candidate(kb, c.entity, cfg.pairing, cfg.pairing_seed, query.query_id);
        } else if (c.channel == Channel::image) {
            c.gloss = pair_image_candidate(kb, c.entity, cfg.pairing, cfg.pairing_seed, query.query_id);
        }
    }
    return out;
}

}  // namespace met
