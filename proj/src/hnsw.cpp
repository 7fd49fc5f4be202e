#include "met/hnsw.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <queue>
#include <stdexcept>
#include <string>

#include "met/binary_io.hpp"
#include "met/error.hpp"
#include "met/rng.hpp"

namespace met {

void HnswParams::validate() const
{
    if (m < 2) {
        throw ConfigError("hnsw: m must be >= 2");
    }
    if (ef_construction < m) {
        throw ConfigError("hnsw: ef_construction must be >= m");
    }
}

std::size_t HnswParams::effective_ef(std::size_t k) const
{
    const auto base = ef_search != 0 ? ef_search : std::max<std::size_t>(128, 2 * k);
    return std::max(base, k);
}

namespace {

// Per-thread visited marks. A fresh epoch invalidates all marks in O(1).
class VisitedSet {
  public:
    void reset(std::size_t n)
    {
        if (marks_.size() < n) {
            marks_.assign(n, 0);
            epoch_ = 0;
        }
        if (++epoch_ == 0) {
            std::fill(marks_.begin(), marks_.end(), 0);
            epoch_ = 1;
        }
    }
    bool test_and_set(std::uint32_t i)
    {
        if (marks_[i] == epoch_) {
            return true;
        }
        marks_[i] = epoch_;
        return false;
    }

  private:
    std::vector<std::uint32_t> marks_;
    std::uint32_t epoch_ = 0;
};

VisitedSet& visited_set()
{
    thread_local VisitedSet v;
    return v;
}

}  // namespace

double HnswIndex::sim(std::span<const float> q, std::uint32_t node) const { return dot(q, vec(node)); }

int HnswIndex::draw_level(const ImageId& id) const
{
    Rng rng(derive_seed(params_.seed, "level:" + id.str()));
    const double ml = 1.0 / std::log(static_cast<double>(params_.m));
    return static_cast<int>(std::floor(-std::log(uniform_open01(rng)) * ml));
}

std::span<const std::uint32_t> HnswIndex::neighbors(std::uint32_t node, int layer) const
{
    if (layer > levels_[node]) {
        return {};
    }
    return links_[node][static_cast<std::size_t>(layer)];
}

std::uint32_t HnswIndex::greedy(std::span<const float> q, std::uint32_t entry, int layer) const
{
    std::uint32_t cur = entry;
    double best = sim(q, cur);
    bool changed = true;
    while (changed) {
        changed = false;
        for (auto n : neighbors(cur, layer)) {
            const double s = sim(q, n);
            if (s > best) {
                best = s;
                cur = n;
                changed = true;
            }
        }
    }
    return cur;
}

std::vector<HnswIndex::Candidate> HnswIndex::search_layer(std::span<const float> q,
                                                          std::span<const std::uint32_t> entries, std::size_t ef,
                                                          int layer) const
{
    // "a before b" means a is the better candidate.
    auto better = [](const Candidate& a, const Candidate& b) {
        return a.sim != b.sim ? a.sim > b.sim : a.node < b.node;
    };
    auto worse = [&](const Candidate& a, const Candidate& b) { return better(b, a); };
    // Frontier pops the best candidate; results keep the worst on top.
    std::priority_queue<Candidate, std::vector<Candidate>, decltype(worse)> frontier(worse);
    std::priority_queue<Candidate, std::vector<Candidate>, decltype(better)> results(better);

    auto& visited = visited_set();
    visited.reset(ids_.size());
    for (auto e : entries) {
        if (visited.test_and_set(e)) {
            continue;
        }
        Candidate c{sim(q, e), e};
        frontier.push(c);
        results.push(c);
        if (results.size() > ef) {
            results.pop();
        }
    }

    while (!frontier.empty()) {
        const auto c = frontier.top();
        if (results.size() >= ef && better(results.top(), c)) {
            break;
        }
        frontier.pop();
        for (auto n : neighbors(c.node, layer)) {
            if (visited.test_and_set(n)) {
                continue;
            }
            Candidate cand{sim(q, n), n};
            if (results.size() < ef || better(cand, results.top())) {
                frontier.push(cand);
                results.push(cand);
                if (results.size() > ef) {
                    results.pop();
                }
            }
        }
    }

    std::vector<Candidate> out;
    out.reserve(results.size());
    while (!results.empty()) {
        out.push_back(results.top());
        results.pop();
    }
    std::reverse(out.begin(), out.end());
    return out;
}

std::vector<std::uint32_t> HnswIndex::select_neighbors(std::vector<Candidate> candidates, std::size_t limit) const
{
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
        return a.sim != b.sim ? a.sim > b.sim : a.node < b.node;
    });
    std::vector<std::uint32_t> chosen;
    if (candidates.size() <= limit) {
        for (const auto& c : candidates) {
            chosen.push_back(c.node);
        }
        return chosen;
    }
    // Keep a candidate only if it is closer to the base point than to every
    // neighbor already kept.
    for (const auto& c : candidates) {
        if (chosen.size() >= limit) {
            break;
        }
        bool keep = true;
        for (auto r : chosen) {
            if (dot(vec(r), vec(c.node)) > c.sim) {
                keep = false;
                break;
            }
        }
        if (keep) {
            chosen.push_back(c.node);
        }
    }
    return chosen;
}

void HnswIndex::insert(std::uint32_t node)
{
    const int level = levels_[node];
    links_[node].resize(static_cast<std::size_t>(level) + 1);
    if (max_level_ < 0) {
        entry_ = node;
        max_level_ = level;
        return;
    }
    const auto q = vec(node);
    std::uint32_t cur = entry_;
    for (int l = max_level_; l > level; --l) {
        cur = greedy(q, cur, l);
    }
    for (int l = std::min(level, max_level_); l >= 0; --l) {
        const std::uint32_t entry[] = {cur};
        auto found = search_layer(q, entry, params_.ef_construction, l);
        auto chosen = select_neighbors(found, max_links(l));
        links(node, l) = chosen;
        for (auto n : chosen) {
            auto& back = links(n, l);
            back.push_back(node);
            if (back.size() > max_links(l)) {
                std::vector<Candidate> pool;
                pool.reserve(back.size());
                for (auto b : back) {
                    pool.push_back({dot(vec(n), vec(b)), b});
                }
                back = select_neighbors(std::move(pool), max_links(l));
            }
        }
        cur = found.front().node;
    }
    if (level > max_level_) {
        max_level_ = level;
        entry_ = node;
    }
}

HnswIndex HnswIndex::build(const VectorStore& store, const HnswParams& params)
{
    params.validate();
    if (!store.sealed()) {
        throw std::invalid_argument("hnsw: store must be sealed before indexing");
    }
    HnswIndex index;
    index.params_ = params;
    index.dim_ = store.dim();
    index.data_ = prepare_rows(store, params.metric);
    index.ids_.reserve(store.size());
    index.levels_.reserve(store.size());
    for (std::size_t r = 0; r < store.size(); ++r) {
        index.ids_.push_back(store.id(r));
        index.levels_.push_back(index.draw_level(store.id(r)));
    }
    index.links_.resize(store.size());
    for (std::uint32_t node = 0; node < store.size(); ++node) {
        index.insert(node);
    }
    return index;
}

std::vector<VectorHit> HnswIndex::search(std::span<const float> query, std::size_t k, std::size_t ef) const
{
    if (query.size() != dim_) {
        throw std::invalid_argument("hnsw search: query dimension " + std::to_string(query.size())
                                    + " does not match index dimension " + std::to_string(dim_));
    }
    if (k == 0 || ids_.empty()) {
        return {};
    }
    const auto q = prepare_query(query, params_.metric);
    std::uint32_t cur = entry_;
    for (int l = max_level_; l > 0; --l) {
        cur = greedy(q, cur, l);
    }
    const auto width = std::max(ef != 0 ? ef : params_.effective_ef(k), k);
    const std::uint32_t entry[] = {cur};
    auto found = search_layer(q, entry, width, 0);

    std::vector<VectorHit> hits;
    hits.reserve(found.size());
    for (const auto& c : found) {
        hits.push_back({c.node, c.sim});
    }
    std::sort(hits.begin(), hits.end(), hit_before);
    if (hits.size() > k) {
        hits.resize(k);
    }
    return hits;
}

void HnswIndex::save(const std::filesystem::path& path) const
{
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) {
        throw DataError("cannot open for writing: " + path.string());
    }
    binary::write_magic(os, "MANN");
    binary::write_uint<std::uint32_t>(os, kAnnIndexVersion);
    binary::write_uint<std::uint64_t>(os, params_.m);
    binary::write_uint<std::uint64_t>(os, params_.ef_construction);
    binary::write_uint<std::uint64_t>(os, params_.ef_search);
    binary::write_uint<std::uint64_t>(os, params_.seed);
    binary::write_uint<std::uint32_t>(os, params_.metric == Metric::cosine ? 0U : 1U);
    binary::write_uint<std::uint32_t>(os, static_cast<std::uint32_t>(dim_));
    binary::write_uint<std::uint64_t>(os, ids_.size());
    binary::write_uint<std::uint32_t>(os, entry_);
    binary::write_uint<std::uint32_t>(os, static_cast<std::uint32_t>(max_level_));
    for (std::uint32_t n = 0; n < ids_.size(); ++n) {
        binary::write_short_string(os, ids_[n].str());
        binary::write_f32_span(os, vec(n));
        binary::write_uint<std::uint32_t>(os, static_cast<std::uint32_t>(levels_[n]));
        for (const auto& layer : links_[n]) {
            binary::write_uint<std::uint32_t>(os, static_cast<std::uint32_t>(layer.size()));
            for (auto x : layer) {
                binary::write_uint<std::uint32_t>(os, x);
            }
        }
    }
    if (!os) {
        throw DataError("write failed: " + path.string());
    }
}

HnswIndex HnswIndex::load(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw DataError("cannot open ANN index: " + path.string());
    }
    binary::Reader in(is, path.string());
    in.expect_magic("MANN");
    if (auto v = in.read_uint<std::uint32_t>(); v != kAnnIndexVersion) {
        in.fail("unsupported version " + std::to_string(v));
    }
    HnswIndex index;
    index.params_.m = in.read_uint<std::uint64_t>();
    index.params_.ef_construction = in.read_uint<std::uint64_t>();
    index.params_.ef_search = in.read_uint<std::uint64_t>();
    index.params_.seed = in.read_uint<std::uint64_t>();
    index.params_.metric = in.read_uint<std::uint32_t>() == 0 ? Metric::cosine : Metric::inner_product;
    index.dim_ = in.read_uint<std::uint32_t>();
    const auto count = in.read_uint<std::uint64_t>();
    index.entry_ = in.read_uint<std::uint32_t>();
    index.max_level_ = static_cast<std::int32_t>(in.read_uint<std::uint32_t>());
    index.data_.resize(count * index.dim_);
    index.links_.resize(count);
    for (std::uint64_t n = 0; n < count; ++n) {
        index.ids_.emplace_back(in.read_short_string());
        in.read_f32_span(std::span<float>(index.data_.data() + n * index.dim_, index.dim_));
        const auto level = static_cast<int>(in.read_uint<std::uint32_t>());
        index.levels_.push_back(level);
        index.links_[n].resize(static_cast<std::size_t>(level) + 1);
        for (auto& layer : index.links_[n]) {
            layer.resize(in.read_uint<std::uint32_t>());
            for (auto& x : layer) {
                x = in.read_uint<std::uint32_t>();
                if (x >= count) {
                    in.fail("neighbor id out of range");
                }
            }
        }
    }
    in.expect_eof();
    if (count > 0 && index.entry_ >= count) {
        in.fail("entry point out of range");
    }
    return index;
}

}  // namespace met
