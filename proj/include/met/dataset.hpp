#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "met/kb.hpp"

namespace met {

struct SplitSpec {
    std::size_t dev_size = 0;
    std::size_t test_size = 0;
    std::uint64_t seed = 0;
    std::size_t min_glosses = 3;
    std::size_t min_images = 3;
};

/// Glosses and images removed from one entity's KB-side evidence so they can
/// be used as queries for one split.
struct WithheldPool {
    EntityId entity;
    std::vector<std::string> glosses;
    std::vector<ImageId> image_ids;
};

struct SplitResult {
    KnowledgeBase kb;
    Splits splits;
};

/// Drops entities below the evidence minimums, chooses disjoint dev and test
/// entity subsets, withholds one gloss and one image per split slot, and
/// draws a query pair from each withheld pool. Query glosses are only taken
/// from gloss strings that occur once in the filtered KB, so no split shares
/// a gloss string or image id with another split or with the KB side.
SplitResult filter_and_split(const KnowledgeBase& raw, const SplitSpec& spec);

/// One query per pool: a uniformly drawn gloss paired with a uniformly drawn
/// image. `split` prefixes the query ids ("<split>:<entity id>").
std::vector<QueryPair> generate_pairs(std::span<const WithheldPool> pools, const VectorStore& images,
                                      const VectorStore* joint, std::uint64_t seed, std::string_view split);

struct Leak {
    std::string kind;  ///< "gloss" or "image"
    std::string value;
    std::string first_group;
    std::string second_group;
};

/// Gloss strings and image ids shared between any two of {kb, train, dev, test}.
std::vector<Leak> find_leaks(const KnowledgeBase& kb, const Splits& splits);

struct StatsReport {
    std::size_t entities = 0;
    std::size_t glosses = 0;
    std::size_t images = 0;
    double pct_entities_leq3_images = 0.0;
    double pct_entities_one_text = 0.0;
    double pct_images_multi_entity = 0.0;
    double pct_texts_multi_entity = 0.0;
    std::map<std::size_t, std::size_t> gloss_histogram;  ///< gloss count -> entities
    std::map<std::size_t, std::size_t> image_histogram;  ///< image count -> entities
};

/// Sparsity and ambiguity statistics. Images are compared by content hash of
/// their vector bytes, texts by exact string equality; the ambiguity
/// percentages are over distinct contents.
StatsReport compute_stats(const KnowledgeBase& kb);

std::string stats_to_json(const StatsReport& s);
std::string stats_to_table(const StatsReport& s);

/// Uniform sample of `batch_size` candidate indices without replacement. If
/// any candidate is positive and none was drawn, a uniformly chosen slot is
/// overwritten by a uniformly chosen positive.
std::vector<std::size_t> sample_training_batch(std::span<const bool> positive, std::size_t batch_size,
                                               std::uint64_t seed);

struct SynthSpec {
    std::size_t num_entities = 500;
    std::size_t glosses_per_entity = 4;
    std::size_t images_per_entity = 4;
    std::size_t latent_dim = 16;
    std::size_t image_dim = 64;
    double noise_sigma = 0.1;
    /// Distinct content tokens. At or above num_entities * tokens_per_entity
    /// every entity owns a disjoint token set; below it entities draw their
    /// tokens from a shared pool and collide.
    std::size_t vocab_size = 4000;
    std::uint64_t seed = 1;

    std::size_t tokens_per_entity = 8;
    std::size_t gloss_length = 6;
    std::size_t stopword_count = 16;
    double stopword_ratio = 0.25;
    std::size_t dev_size = 0;   ///< 0: num_entities / 5
    std::size_t test_size = 0;  ///< 0: num_entities / 5
};

struct SynthResult {
    KnowledgeBase raw;
    KnowledgeBase kb;
    Splits splits;
    /// Joint-space embedding of every content token, used by the toy
    /// inter-modality text encoder.
    VectorStore lexicon;
    /// Latent unit vector per entity, in KB entity order.
    std::map<EntityId, std::vector<float>> latents;
};

/// Desk-scale MKB with known structure. Each entity has a latent unit vector;
/// its images are an orthonormal projection of the latent plus Gaussian noise
/// of per-component standard deviation noise_sigma, its joint-space vectors
/// are the latent plus the same noise, and its glosses mix the entity's
/// content tokens with shared stopwords.
SynthResult generate_synthetic_mkb(const SynthSpec& spec);

void validate(const SynthSpec& spec);

}  // namespace met
