#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "met/ids.hpp"
#include "met/matchers.hpp"

namespace met {

/// One weight per matcher, in MatcherKind order.
struct FusionWeights {
    std::array<double, kNumMatchers> w{};

    double operator[](MatcherKind k) const { return w[index_of(k)]; }
    /// Throws ConfigError if a weight is negative or non-finite, or all are zero.
    void validate() const;

    static FusionWeights one_hot(MatcherKind k, double value = 1.0)
    {
        FusionWeights f;
        f.w[index_of(k)] = value;
        return f;
    }

    friend bool operator==(const FusionWeights&, const FusionWeights&) = default;
};

/// Weights reported in the paper for the full and the assembled model,
/// kept as reference fixtures (TBM, TCM, IBM, CLIP order).
inline constexpr FusionWeights kReferenceFullWeights{{0.1, 0.2, 0.3, 0.9}};
inline constexpr FusionWeights kReferenceAssembledWeights{{0.3, 0.1, 0.1, 0.9}};

/// Sum over kinds of w_kind * score_kind, accumulated in kind order.
double fuse(const ScoreVector& scores, const FusionWeights& w);

/// The cached stage-2 input for one query: candidate entities with their
/// score vectors, plus stage-1 channel ranks of the gold entity.
struct ScoredQuery {
    std::string query_id;
    std::optional<EntityId> gold;
    std::vector<EntityId> entities;
    std::vector<ScoreVector> scores;
    std::optional<std::uint32_t> gold_text_rank;
    std::optional<std::uint32_t> gold_image_rank;

    friend bool operator==(const ScoredQuery&, const ScoredQuery&) = default;
};

struct RankedEntity {
    EntityId entity;
    double score;
};

struct RankedList {
    std::string query_id;
    std::vector<RankedEntity> entries;

    /// 1-based rank of `e`, or nullopt if absent.
    std::optional<std::size_t> rank_of(const EntityId& e) const;
};

/// Descending fused score, ties by entity id. Duplicate entities keep their
/// highest fused score.
RankedList rank_entities(const ScoredQuery& query, const FusionWeights& w);

inline constexpr std::array<std::size_t, 4> kDefaultHitsAt = {1, 3, 10, 100};

struct HitsReport {
    std::array<double, 4> hits{};  ///< percentages at kDefaultHitsAt
    std::size_t queries = 0;

    double at(std::size_t n) const;
    friend bool operator==(const HitsReport&, const HitsReport&) = default;
};

/// Percentage of queries whose gold entity sits within the top n, for each n
/// in {1, 3, 10, 100}. A gold entity absent from the list counts as a miss.
/// Throws DataError when `golds` has a missing entry or sizes differ.
HitsReport hits_at_n(std::span<const RankedList> ranked, std::span<const std::optional<EntityId>> golds);

/// Ranks a scored split with fixed weights and evaluates it.
HitsReport evaluate(std::span<const ScoredQuery> queries, const FusionWeights& w);

/// Hits@N of one stage-1 channel, from the gold entity's channel rank.
HitsReport evaluate_channel(std::span<const ScoredQuery> queries, bool text_channel);

std::vector<double> default_grid();

/// Bit set over matcher kinds (bit i = kMatcherKinds[i]).
using KindMask = std::uint8_t;
inline constexpr KindMask kAllKinds = 0x0F;
constexpr KindMask mask_of(MatcherKind k) { return static_cast<KindMask>(1U << index_of(k)); }

struct GridSearchResult {
    FusionWeights weights;
    HitsReport dev;
    std::size_t evaluated = 0;
};

/// Exhaustive search over grid^|subset| weight tuples, all-zero excluded.
/// Kinds outside `subset` are held at zero. Maximizes dev Hits@1, then
/// Hits@3, then Hits@10; remaining ties go to the lexicographically smallest
/// tuple in kind order. Tuples are evaluated in parallel; the result does not
/// depend on the thread count. Throws DataError on an empty dev set.
GridSearchResult grid_search_weights(std::span<const ScoredQuery> dev, std::span<const double> grid,
                                     KindMask subset = kAllKinds);

/// Single-threaded reference with the same contract.
GridSearchResult grid_search_weights_serial(std::span<const ScoredQuery> dev, std::span<const double> grid,
                                            KindMask subset = kAllKinds);

struct AblationRow {
    std::string name;
    KindMask subset = kAllKinds;
    FusionWeights weights;
    HitsReport dev;
    HitsReport test;
};

/// Full model and one leave-one-out row per matcher, in the order Full,
/// w/o IBM, w/o CLIP, w/o TBM, w/o TCM.
std::vector<std::pair<std::string, KindMask>> default_ablation_subsets();

/// Single-matcher rows TBM, TCM, IBM, CLIP.
std::vector<std::pair<std::string, KindMask>> single_matcher_subsets();

/// Re-tunes weights on dev within each subset and evaluates on test.
std::vector<AblationRow> run_ablation(std::span<const ScoredQuery> dev, std::span<const ScoredQuery> test,
                                      std::span<const double> grid,
                                      std::span<const std::pair<std::string, KindMask>> subsets);

}  // namespace met
