#include "met/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

#include <omp.h>

#include "met/error.hpp"

namespace met {

void FusionWeights::validate() const
{
    bool any = false;
    for (double x : w) {
        if (!std::isfinite(x) || x < 0.0) {
            throw ConfigError("fusion weights must be finite and non-negative");
        }
        any = any || x != 0.0;
    }
    if (!any) {
        throw ConfigError("fusion weights are all zero");
    }
}

double fuse(const ScoreVector& scores, const FusionWeights& w)
{
    double s = 0.0;
    for (std::size_t i = 0; i < kNumMatchers; ++i) {
        s += w.w[i] * scores.score[i];
    }
    return s;
}

std::optional<std::size_t> RankedList::rank_of(const EntityId& e) const
{
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (entries[i].entity == e) {
            return i + 1;
        }
    }
    return std::nullopt;
}

RankedList rank_entities(const ScoredQuery& query, const FusionWeights& w)
{
    w.validate();
    RankedList out{query.query_id, {}};
    std::unordered_map<EntityId, std::size_t> slot;
    for (std::size_t i = 0; i < query.entities.size(); ++i) {
        const double f = fuse(query.scores[i], w);
        auto [it, fresh] = slot.emplace(query.entities[i], out.entries.size());
        if (fresh) {
            out.entries.push_back({query.entities[i], f});
        } else {
            auto& cur = out.entries[it->second].score;
            cur = std::max(cur, f);
        }
    }
    std::sort(out.entries.begin(), out.entries.end(), [](const RankedEntity& a, const RankedEntity& b) {
        return a.score != b.score ? a.score > b.score : a.entity < b.entity;
    });
    return out;
}

double HitsReport::at(std::size_t n) const
{
    for (std::size_t i = 0; i < kDefaultHitsAt.size(); ++i) {
        if (kDefaultHitsAt[i] == n) {
            return hits[i];
        }
    }
    throw std::out_of_range("no Hits@" + std::to_string(n) + " in report");
}

namespace {

HitsReport report_from_ranks(std::span<const std::optional<std::size_t>> ranks)
{
    HitsReport r;
    r.queries = ranks.size();
    if (ranks.empty()) {
        return r;
    }
    for (std::size_t i = 0; i < kDefaultHitsAt.size(); ++i) {
        std::size_t hit = 0;
        for (const auto& rank : ranks) {
            if (rank && *rank <= kDefaultHitsAt[i]) {
                ++hit;
            }
        }
        r.hits[i] = 100.0 * static_cast<double>(hit) / static_cast<double>(ranks.size());
    }
    return r;
}

}  // namespace

HitsReport hits_at_n(std::span<const RankedList> ranked, std::span<const std::optional<EntityId>> golds)
{
    if (ranked.size() != golds.size()) {
        throw DataError("hits_at_n: ranked lists and gold labels differ in length");
    }
    std::vector<std::optional<std::size_t>> ranks;
    ranks.reserve(ranked.size());
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        if (!golds[i]) {
            throw DataError("query " + ranked[i].query_id + " has no gold entity");
        }
        ranks.push_back(ranked[i].rank_of(*golds[i]));
    }
    return report_from_ranks(ranks);
}

HitsReport evaluate(std::span<const ScoredQuery> queries, const FusionWeights& w)
{
    std::vector<RankedList> ranked;
    std::vector<std::optional<EntityId>> golds;
    ranked.reserve(queries.size());
    for (const auto& q : queries) {
        ranked.push_back(rank_entities(q, w));
        golds.push_back(q.gold);
    }
    return hits_at_n(ranked, golds);
}

HitsReport evaluate_channel(std::span<const ScoredQuery> queries, bool text_channel)
{
    std::vector<std::optional<std::size_t>> ranks;
    for (const auto& q : queries) {
        if (!q.gold) {
            throw DataError("query " + q.query_id + " has no gold entity");
        }
        const auto& r = text_channel ? q.gold_text_rank : q.gold_image_rank;
        ranks.push_back(r ? std::optional<std::size_t>(*r) : std::nullopt);
    }
    return report_from_ranks(ranks);
}

std::vector<double> default_grid()
{
    std::vector<double> g;
    for (int i = 0; i < 10; ++i) {
        g.push_back(i / 10.0);
    }
    return g;
}

namespace {

// Per-query layout for fast gold-rank evaluation: candidates grouped by
// entity, with a flag telling whether each entity id sorts before the gold.
struct PreparedQuery {
    std::vector<ScoreVector> rows;
    std::vector<std::uint32_t> group;
    std::vector<char> before_gold;
    std::size_t groups = 0;
    std::ptrdiff_t gold = -1;
    bool has_duplicates = false;
};

std::vector<PreparedQuery> prepare(std::span<const ScoredQuery> dev)
{
    std::vector<PreparedQuery> out;
    out.reserve(dev.size());
    for (const auto& q : dev) {
        if (!q.gold) {
            throw DataError("query " + q.query_id + " has no gold entity");
        }
        PreparedQuery p;
        p.rows = q.scores;
        std::unordered_map<EntityId, std::uint32_t> ids;
        std::vector<const EntityId*> group_ids;
        for (const auto& e : q.entities) {
            auto [it, fresh] = ids.emplace(e, static_cast<std::uint32_t>(group_ids.size()));
            if (fresh) {
                group_ids.push_back(&e);
            } else {
                p.has_duplicates = true;
            }
            p.group.push_back(it->second);
        }
        p.groups = group_ids.size();
        if (auto it = ids.find(*q.gold); it != ids.end()) {
            p.gold = it->second;
        }
        p.before_gold.resize(p.groups, 0);
        for (std::size_t g = 0; g < p.groups; ++g) {
            p.before_gold[g] = p.gold >= 0 && *group_ids[g] < *q.gold ? 1 : 0;
        }
        out.push_back(std::move(p));
    }
    return out;
}

/// 1-based gold rank under `w`, 0 when the gold entity is not a candidate.
std::size_t gold_rank(const PreparedQuery& q, const FusionWeights& w, std::vector<double>& scratch)
{
    if (q.gold < 0) {
        return 0;
    }
    scratch.assign(q.groups, -std::numeric_limits<double>::infinity());
    for (std::size_t r = 0; r < q.rows.size(); ++r) {
        auto& s = scratch[q.group[r]];
        s = std::max(s, fuse(q.rows[r], w));
    }
    const double g = scratch[static_cast<std::size_t>(q.gold)];
    std::size_t ahead = 0;
    for (std::size_t e = 0; e < q.groups; ++e) {
        if (scratch[e] > g || (scratch[e] == g && q.before_gold[e])) {
            ++ahead;
        }
    }
    return ahead + 1;
}

struct TupleScore {
    std::array<std::size_t, 3> hits{};  // Hits@1, @3, @10 counts
    std::size_t index = 0;
    bool valid = false;
};

/// True when `a` should replace `b` as the best tuple.
bool preferred(const TupleScore& a, const TupleScore& b)
{
    if (!b.valid) {
        return a.valid;
    }
    if (!a.valid) {
        return false;
    }
    if (a.hits != b.hits) {
        return a.hits > b.hits;
    }
    return a.index < b.index;
}

struct GridSpace {
    std::vector<double> grid;
    std::vector<std::size_t> kinds;  // indices of active kinds, kind order
    std::size_t tuples = 1;

    FusionWeights weights(std::size_t t) const
    {
        FusionWeights f;
        for (std::size_t k = kinds.size(); k-- > 0;) {
            f.w[kinds[k]] = grid[t % grid.size()];
            t /= grid.size();
        }
        return f;
    }
};

GridSpace make_space(std::span<const double> grid, KindMask subset)
{
    GridSpace s;
    s.grid.assign(grid.begin(), grid.end());
    std::sort(s.grid.begin(), s.grid.end());
    s.grid.erase(std::unique(s.grid.begin(), s.grid.end()), s.grid.end());
    if (s.grid.empty()) {
        throw ConfigError("grid search: empty grid");
    }
    for (double v : s.grid) {
        if (!std::isfinite(v) || v < 0.0) {
            throw ConfigError("grid search: grid values must be finite and non-negative");
        }
    }
    for (std::size_t k = 0; k < kNumMatchers; ++k) {
        if (subset & (1U << k)) {
            s.kinds.push_back(k);
            s.tuples *= s.grid.size();
        }
    }
    if (s.kinds.empty()) {
        throw ConfigError("grid search: empty matcher subset");
    }
    return s;
}

TupleScore score_tuple(const std::vector<PreparedQuery>& prepared, const FusionWeights& w, std::size_t index,
                       std::vector<double>& scratch)
{
    TupleScore ts;
    ts.index = index;
    ts.valid = true;
    for (const auto& q : prepared) {
        const auto r = gold_rank(q, w, scratch);
        if (r == 0) {
            continue;
        }
        ts.hits[0] += r <= 1;
        ts.hits[1] += r <= 3;
        ts.hits[2] += r <= 10;
    }
    return ts;
}

bool all_zero(const FusionWeights& w)
{
    return std::all_of(w.w.begin(), w.w.end(), [](double x) { return x == 0.0; });
}

GridSearchResult finish(std::span<const ScoredQuery> dev, const GridSpace& space, const TupleScore& best,
                        std::size_t evaluated)
{
    if (!best.valid) {
        throw ConfigError("grid search: no non-zero weight tuple in the grid");
    }
    GridSearchResult r;
    r.weights = space.weights(best.index);
    r.dev = evaluate(dev, r.weights);
    r.evaluated = evaluated;
    return r;
}

}  // namespace

GridSearchResult grid_search_weights_serial(std::span<const ScoredQuery> dev, std::span<const double> grid,
                                            KindMask subset)
{
    if (dev.empty()) {
        throw DataError("grid search: empty dev set");
    }
    const auto space = make_space(grid, subset);
    const auto prepared = prepare(dev);
    std::vector<double> scratch;
    TupleScore best;
    std::size_t evaluated = 0;
    for (std::size_t t = 0; t < space.tuples; ++t) {
        const auto w = space.weights(t);
        if (all_zero(w)) {
            continue;
        }
        ++evaluated;
        auto ts = score_tuple(prepared, w, t, scratch);
        if (preferred(ts, best)) {
            best = ts;
        }
    }
    return finish(dev, space, best, evaluated);
}

GridSearchResult grid_search_weights(std::span<const ScoredQuery> dev, std::span<const double> grid, KindMask subset)
{
    if (dev.empty()) {
        throw DataError("grid search: empty dev set");
    }
    const auto space = make_space(grid, subset);
    const auto prepared = prepare(dev);
    TupleScore best;
    std::size_t evaluated = 0;
    const auto tuples = static_cast<std::int64_t>(space.tuples);

#pragma omp parallel
    {
        std::vector<double> scratch;
        TupleScore local;
        std::size_t local_count = 0;
#pragma omp for schedule(dynamic, 16) nowait
        for (std::int64_t t = 0; t < tuples; ++t) {
            const auto w = space.weights(static_cast<std::size_t>(t));
            if (all_zero(w)) {
                continue;
            }
            ++local_count;
            auto ts = score_tuple(prepared, w, static_cast<std::size_t>(t), scratch);
            if (preferred(ts, local)) {
                local = ts;
            }
        }
#pragma omp critical(met_grid_reduce)
        {
            evaluated += local_count;
            if (preferred(local, best)) {
                best = local;
            }
        }
    }
    return finish(dev, space, best, evaluated);
}

std::vector<std::pair<std::string, KindMask>> default_ablation_subsets()
{
    return {
        {"Full Model", kAllKinds},
        {"w/o IBM", static_cast<KindMask>(kAllKinds & ~mask_of(MatcherKind::ibm))},
        {"w/o CLIP", static_cast<KindMask>(kAllKinds & ~mask_of(MatcherKind::clip))},
        {"w/o TBM", static_cast<KindMask>(kAllKinds & ~mask_of(MatcherKind::tbm))},
        {"w/o TCM", static_cast<KindMask>(kAllKinds & ~mask_of(MatcherKind::tcm))},
    };
}

std::vector<std::pair<std::string, KindMask>> single_matcher_subsets()
{
    std::vector<std::pair<std::string, KindMask>> out;
    for (auto k : kMatcherKinds) {
        out.emplace_back(to_string(k), mask_of(k));
    }
    return out;
}

std::vector<AblationRow> run_ablation(std::span<const ScoredQuery> dev, std::span<const ScoredQuery> test,
                                      std::span<const double> grid,
                                      std::span<const std::pair<std::string, KindMask>> subsets)
{
    std::vector<AblationRow> rows;
    for (const auto& [name, mask] : subsets) {
        auto tuned = grid_search_weights(dev, grid, mask);
        rows.push_back({name, mask, tuned.weights, tuned.dev, evaluate(test, tuned.weights)});
    }
    return rows;
}

}  // namespace met
