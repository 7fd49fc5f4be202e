#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "met/kb.hpp"
#include "met/retrieval.hpp"
#include "met/vector_store.hpp"

namespace met {

class ScorerClient;

/// Matcher kinds in the fixed order used by score vectors, fusion weights and
/// the grid-search tie rule.
enum class MatcherKind : std::uint8_t { tbm = 0, tcm = 1, ibm = 2, clip = 3 };

inline constexpr std::size_t kNumMatchers = 4;
inline constexpr std::array<MatcherKind, kNumMatchers> kMatcherKinds = {MatcherKind::tbm, MatcherKind::tcm,
                                                                        MatcherKind::ibm, MatcherKind::clip};
inline constexpr double kNeutralScore = 0.5;

const char* to_string(MatcherKind k);
MatcherKind matcher_from_string(std::string_view s);
constexpr std::size_t index_of(MatcherKind k) { return static_cast<std::size_t>(k); }

/// Normalized score per matcher in [0, 1]. A missing score is exactly 0.5.
struct ScoreVector {
    std::array<double, kNumMatchers> score{kNeutralScore, kNeutralScore, kNeutralScore, kNeutralScore};
    std::array<bool, kNumMatchers> missing{};

    double operator[](MatcherKind k) const { return score[index_of(k)]; }
    void set(MatcherKind k, double normalized)
    {
        score[index_of(k)] = normalized;
        missing[index_of(k)] = false;
    }
    void set_missing(MatcherKind k)
    {
        score[index_of(k)] = kNeutralScore;
        missing[index_of(k)] = true;
    }

    friend bool operator==(const ScoreVector&, const ScoreVector&) = default;
};

/// Cosine kinds (TBM, IBM, CLIP) map [-1, 1] to [0, 1] linearly; TCM applies
/// the logistic function to the cross scorer's relevance. Throws
/// std::invalid_argument for a non-finite raw value.
double normalize_score(MatcherKind kind, double raw);

// ---------------------------------------------------------------------------
// Text encoders

class TextEmbedder {
  public:
    virtual ~TextEmbedder() = default;
    /// nullopt when the text has no embedding (unknown to a store, or no
    /// token the encoder recognizes).
    virtual std::optional<std::vector<float>> embed(std::string_view text) const = 0;
};

/// Tokens hashed (FNV-1a 64) into `dim` buckets with a +-1 sign taken from
/// the hash's top bit; bucket counts are L2-normalized.
class HashedBowEmbedder final : public TextEmbedder {
  public:
    explicit HashedBowEmbedder(std::size_t dim = 256) : dim_(dim) {}
    std::optional<std::vector<float>> embed(std::string_view text) const override;
    std::size_t dim() const noexcept { return dim_; }

  private:
    std::size_t dim_;
};

/// Sum of per-token joint-space vectors from a lexicon, L2-normalized.
/// Tokens absent from the lexicon contribute nothing.
class LexiconEmbedder final : public TextEmbedder {
  public:
    explicit LexiconEmbedder(const VectorStore& lexicon) : lexicon_(lexicon) {}
    std::optional<std::vector<float>> embed(std::string_view text) const override;

  private:
    const VectorStore& lexicon_;
};

/// Precomputed embeddings keyed by the exact text.
class StoreEmbedder final : public TextEmbedder {
  public:
    explicit StoreEmbedder(const VectorStore& store) : store_(store) {}
    std::optional<std::vector<float>> embed(std::string_view text) const override;

  private:
    const VectorStore& store_;
};

/// Logit of the clamped token-set Jaccard: J' = J (1 - 2 eps) + eps,
/// raw = ln(J' / (1 - J')). Two empty token sets have J = 0.
double toy_cross_score(std::string_view query_text, std::string_view evidence_text, double eps = 1e-6);

// ---------------------------------------------------------------------------
// Single-pair raw scores

std::optional<double> tbm_score(std::string_view query_text, std::string_view evidence_text,
                                const TextEmbedder& encoder);
double tcm_score(std::string_view query_text, std::string_view evidence_text);
double ibm_score(std::span<const float> query_image, std::span<const float> evidence_image);
std::optional<double> clip_score(std::string_view text, std::span<const float> joint_image,
                                 const TextEmbedder& joint_encoder);

// ---------------------------------------------------------------------------
// Batched scorers

/// One pair to score. Text kinds use the texts; IBM uses the two images;
/// CLIP scores `left_text` against `right_image` (a joint-space vector).
struct MatchItem {
    std::string_view left_text;
    std::string_view right_text;
    std::span<const float> left_image;
    std::span<const float> right_image;
    std::string_view left_image_id;
    std::string_view right_image_id;
};

class KindScorer {
  public:
    virtual ~KindScorer() = default;
    /// Raw scores aligned with `items`; nullopt marks an unavailable score.
    virtual std::vector<std::optional<double>> score(std::span<const MatchItem> items) = 0;
    /// True when score() may be called from several threads at once.
    virtual bool concurrent() const { return true; }
};

enum class Provider { toy, precomputed, remote };

const char* to_string(Provider p);
Provider provider_from_string(std::string_view s);

struct ScorerBinding {
    std::array<Provider, kNumMatchers> provider{Provider::toy, Provider::toy, Provider::toy, Provider::toy};
};

/// Inputs the providers may need. Unused pointers may stay null.
struct MatcherResources {
    const VectorStore* lexicon = nullptr;          ///< toy CLIP token vectors
    const VectorStore* text_embeddings = nullptr;  ///< precomputed TBM embeddings
    const VectorStore* joint_text_embeddings = nullptr;  ///< precomputed CLIP text embeddings
    std::shared_ptr<ScorerClient> client;               ///< remote provider
    std::size_t toy_dim = 256;
};

/// One scorer per matcher kind. Throws ConfigError when a binding cannot be
/// satisfied by the given resources.
class MatcherSet {
  public:
    MatcherSet(const ScorerBinding& binding, const MatcherResources& resources);
    explicit MatcherSet(std::array<std::unique_ptr<KindScorer>, kNumMatchers> scorers);

    KindScorer& scorer(MatcherKind k) { return *scorers_[index_of(k)]; }
    bool concurrent() const;

  private:
    std::array<std::unique_ptr<KindScorer>, kNumMatchers> scorers_;
    std::vector<std::unique_ptr<TextEmbedder>> embedders_;
};

/// Scores every candidate against the query, one scorer call per matcher
/// kind. With `instances` = K > 1 each matcher averages over the candidate's
/// retrieved (or paired) instance plus its first K-1 other KB-side instances
/// in stored order. The CLIP score is the mean of its two directions
/// (query text vs evidence image, evidence text vs query image), each
/// direction itself a mean over instances. Averages are over normalized
/// scores; a matcher with nothing to average is missing.
std::vector<ScoreVector> score_candidates(const KnowledgeBase& kb, const QueryPair& query,
                                          std::span<const Candidate> candidates, MatcherSet& matchers,
                                          std::size_t instances = 1);

/// Score vector of one candidate averaged over k instances per modality.
/// k = 1 reproduces score_candidates exactly.
ScoreVector assemble_scores(const KnowledgeBase& kb, const QueryPair& query, const Candidate& candidate,
                            std::size_t k, MatcherSet& matchers);

}  // namespace met
