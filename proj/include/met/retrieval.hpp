#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "met/hnsw.hpp"
#include "met/kb.hpp"
#include "met/text_index.hpp"

namespace met {

enum class Channel { text, image, both };

const char* to_string(Channel c);
Channel channel_from_string(std::string_view s);

enum class PairingMode { first, random };

/// A retrieved entity with the single (text, image) evidence pair it is
/// scored on. Either side may be missing when the entity has no KB-side
/// evidence of that modality.
struct Candidate {
    EntityId entity;
    std::optional<std::uint32_t> gloss;  ///< index into the entity's glosses
    std::optional<ImageId> image;
    Channel channel = Channel::text;
    std::optional<double> text_score;   ///< BM25 of the retrieved gloss
    std::optional<double> image_score;  ///< similarity of the retrieved image
    std::optional<std::uint32_t> text_rank;   ///< 1-based entity rank in the text channel
    std::optional<std::uint32_t> image_rank;  ///< 1-based entity rank in the image channel

    /// Text-channel score when present, otherwise the image-channel score.
    double retrieval_score() const { return text_score ? *text_score : image_score.value_or(0.0); }

    friend bool operator==(const Candidate&, const Candidate&) = default;
};

struct RetrievalConfig {
    std::size_t n_texts = 100;
    std::size_t m_images = 100;
    PairingMode pairing = PairingMode::first;
    std::uint64_t pairing_seed = 0;

    void validate() const;
};

/// Borrowed views of the two stage-1 indices built over the same KB.
struct Indices {
    const TextIndex& text;
    const HnswIndex& image;
};

/// Image paired with a text-channel hit. First mode takes the entity's first
/// KB-side image; random mode draws uniformly with a generator keyed by
/// (seed, key). Returns nullopt when the entity has no KB-side image.
std::optional<ImageId> pair_text_candidate(const KnowledgeBase& kb, const EntityId& entity, PairingMode mode,
                                           std::uint64_t seed = 0, std::string_view key = {});

/// Gloss index paired with an image-channel hit; mirror of pair_text_candidate.
std::optional<std::uint32_t> pair_image_candidate(const KnowledgeBase& kb, const EntityId& entity,
                                                  PairingMode mode, std::uint64_t seed = 0,
                                                  std::string_view key = {});

/// Runs both channels, keeps the best hit per entity per channel, and merges
/// the channels by entity. Text-channel entities come first in text rank
/// order, then image-only entities in image rank order. An entity found by
/// both channels keeps its retrieved gloss and its retrieved image.
std::vector<Candidate> retrieve_candidates(const KnowledgeBase& kb, const Indices& indices, const QueryPair& query,
                                           const RetrievalConfig& cfg);

}  // namespace met
