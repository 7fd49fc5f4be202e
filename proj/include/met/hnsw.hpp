#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "met/ids.hpp"
#include "met/kernels.hpp"
#include "met/vector_store.hpp"

namespace met {

struct HnswParams {
    std::size_t m = 16;
    std::size_t ef_construction = 200;
    /// Candidate list size at query time; 0 selects max(128, 2 k) per query.
    std::size_t ef_search = 0;
    std::uint64_t seed = 42;
    Metric metric = Metric::cosine;

    void validate() const;
    std::size_t effective_ef(std::size_t k) const;
};

/// Hierarchical navigable small-world graph over a sealed vector store.
///
/// Nodes are inserted in row (image id) order on one thread. A node's level
/// is drawn from a generator seeded by (seed, image id), so a build is fully
/// determined by the store contents and the parameters. The graph is frozen
/// after build; searches are read-only and may run concurrently.
class HnswIndex {
  public:
    HnswIndex() = default;

    static HnswIndex build(const VectorStore& store, const HnswParams& params = {});

    std::size_t size() const noexcept { return ids_.size(); }
    std::size_t dim() const noexcept { return dim_; }
    const HnswParams& params() const noexcept { return params_; }
    const ImageId& id(std::uint32_t row) const { return ids_[row]; }
    int max_level() const noexcept { return max_level_; }
    int level(std::uint32_t node) const { return levels_[node]; }
    std::span<const std::uint32_t> neighbors(std::uint32_t node, int layer) const;

    /// Top-k rows by similarity, descending, ties by image id. `ef` of 0 uses
    /// the parameter default; the effective candidate list is never smaller
    /// than k. Throws std::invalid_argument on a dimension mismatch.
    std::vector<VectorHit> search(std::span<const float> query, std::size_t k, std::size_t ef = 0) const;

    /// The prepared (normalized, under cosine) vectors the graph scores against.
    std::span<const float> prepared_rows() const noexcept { return data_; }

    // MANN container: "MANN", u32 version, u64 m, u64 ef_construction,
    // u64 ef_search, u64 seed, u32 metric, u32 dim, u64 count, u32 entry,
    // i32 max level, then per node (u16+bytes id, dim f32, u32 level, per
    // layer u32 count + ids). Little-endian.
    void save(const std::filesystem::path& path) const;
    static HnswIndex load(const std::filesystem::path& path);

  private:
    struct Candidate {
        double sim;
        std::uint32_t node;
    };

    std::span<const float> vec(std::uint32_t node) const { return {data_.data() + std::size_t{node} * dim_, dim_}; }
    double sim(std::span<const float> q, std::uint32_t node) const;
    int draw_level(const ImageId& id) const;
    std::uint32_t greedy(std::span<const float> q, std::uint32_t entry, int layer) const;
    std::vector<Candidate> search_layer(std::span<const float> q, std::span<const std::uint32_t> entries,
                                        std::size_t ef, int layer) const;
    std::vector<std::uint32_t> select_neighbors(std::vector<Candidate> candidates, std::size_t limit) const;
    std::vector<std::uint32_t>& links(std::uint32_t node, int layer) { return links_[node][static_cast<std::size_t>(layer)]; }
    std::size_t max_links(int layer) const { return layer == 0 ? 2 * params_.m : params_.m; }
    void insert(std::uint32_t node);

    HnswParams params_;
    std::size_t dim_ = 0;
    std::vector<ImageId> ids_;
    std::vector<float> data_;
    std::vector<int> levels_;
    std::vector<std::vector<std::vector<std::uint32_t>>> links_;  // node -> layer -> neighbors
    std::uint32_t entry_ = 0;
    int max_level_ = -1;
};

inline constexpr std::uint32_t kAnnIndexVersion = 1;

}  // namespace met
