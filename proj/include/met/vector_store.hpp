#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "met/ids.hpp"

namespace met {

/// Dense float vectors of one fixed dimension, keyed by image id. Rows are
/// kept sorted by id once sealed, so row order doubles as the id tie-break
/// order used by every search routine.
class VectorStore {
  public:
    VectorStore() = default;
    explicit VectorStore(std::uint32_t dim) : dim_(dim) {}

    std::uint32_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return ids_.size(); }
    bool empty() const noexcept { return ids_.empty(); }

    /// Appends a vector. Throws DataError when the dimension differs from the store's.
    void add(ImageId id, std::span<const float> values);

    /// Sorts rows by id and builds the lookup table. Throws DataError on duplicate ids.
    void seal();
    bool sealed() const noexcept { return sealed_; }

    const ImageId& id(std::size_t row) const { return ids_[row]; }
    std::span<const float> row(std::size_t row) const
    {
        return {data_.data() + row * dim_, dim_};
    }
    std::span<const float> flat() const noexcept { return data_; }

    std::optional<std::size_t> find(const ImageId& id) const;
    bool contains(const ImageId& id) const { return find(id).has_value(); }

    /// Vector for `id`; empty span when absent.
    std::span<const float> lookup(const ImageId& id) const;

    /// Keeps only the rows whose ids satisfy `keep`, preserving order.
    template <typename Pred>
    VectorStore filtered(Pred keep) const
    {
        VectorStore out(dim_);
        for (std::size_t r = 0; r < size(); ++r) {
            if (keep(ids_[r])) {
                out.add(ids_[r], row(r));
            }
        }
        out.seal();
        return out;
    }

    friend bool operator==(const VectorStore& a, const VectorStore& b)
    {
        return a.dim_ == b.dim_ && a.ids_ == b.ids_ && a.data_ == b.data_;
    }

  private:
    std::uint32_t dim_ = 0;
    std::vector<ImageId> ids_;
    std::vector<float> data_;
    std::unordered_map<ImageId, std::size_t> index_;
    bool sealed_ = true;
};

// MVEC container: "MVEC", u32 version=1, u32 dim, u64 count, then per record
// u16 id length, id bytes, dim little-endian f32. Records sorted by id.
inline constexpr std::uint32_t kVectorStoreVersion = 1;

void save_vector_store(const VectorStore& store, const std::filesystem::path& path);
VectorStore load_vector_store(const std::filesystem::path& path);

}  // namespace met
