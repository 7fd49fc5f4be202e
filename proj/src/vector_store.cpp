#include "met/vector_store.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "met/binary_io.hpp"
#include "met/error.hpp"

namespace met {

void VectorStore::add(ImageId id, std::span<const float> values)
{
    if (values.size() != dim_) {
        throw DataError("dimension mismatch for image " + id.str() + ": got " + std::to_string(values.size())
                        + ", store dim is " + std::to_string(dim_));
    }
    ids_.push_back(std::move(id));
    data_.insert(data_.end(), values.begin(), values.end());
    sealed_ = false;
}

void VectorStore::seal()
{
    if (sealed_) {
        return;
    }
    std::vector<std::size_t> order(ids_.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ids_[a] < ids_[b]; });

    std::vector<ImageId> ids;
    std::vector<float> data;
    ids.reserve(ids_.size());
    data.reserve(data_.size());
    for (auto r : order) {
        if (!ids.empty() && ids.back() == ids_[r]) {
            throw DataError("duplicate image id in vector store: " + ids_[r].str());
        }
        ids.push_back(std::move(ids_[r]));
        data.insert(data.end(), data_.begin() + static_cast<std::ptrdiff_t>(r * dim_),
                    data_.begin() + static_cast<std::ptrdiff_t>((r + 1) * dim_));
    }
    ids_ = std::move(ids);
    data_ = std::move(data);

    index_.clear();
    index_.reserve(ids_.size());
    for (std::size_t r = 0; r < ids_.size(); ++r) {
        index_.emplace(ids_[r], r);
    }
    sealed_ = true;
}

std::optional<std::size_t> VectorStore::find(const ImageId& id) const
{
    auto it = index_.find(id);
    if (it == index_.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::span<const float> VectorStore::lookup(const ImageId& id) const
{
    auto r = find(id);
    if (!r) {
        return {};
    }
    return row(*r);
}

void save_vector_store(const VectorStore& store, const std::filesystem::path& path)
{
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) {
        throw DataError("cannot open for writing: " + path.string());
    }
    binary::write_magic(os, "MVEC");
    binary::write_uint<std::uint32_t>(os, kVectorStoreVersion);
    binary::write_uint<std::uint32_t>(os, store.dim());
    binary::write_uint<std::uint64_t>(os, store.size());
    for (std::size_t r = 0; r < store.size(); ++r) {
        binary::write_short_string(os, store.id(r).str());
        binary::write_f32_span(os, store.row(r));
    }
    if (!os) {
        throw DataError("write failed: " + path.string());
    }
}

VectorStore load_vector_store(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw DataError("cannot open vector store: " + path.string());
    }
    binary::Reader in(is, path.string());
    in.expect_magic("MVEC");
    if (auto version = in.read_uint<std::uint32_t>(); version != kVectorStoreVersion) {
        in.fail("unsupported version " + std::to_string(version));
    }
    const auto dim = in.read_uint<std::uint32_t>();
    const auto count = in.read_uint<std::uint64_t>();

    VectorStore store(dim);
    std::vector<float> buf(dim);
    for (std::uint64_t i = 0; i < count; ++i) {
        ImageId id(in.read_short_string());
        try {
            in.read_f32_span(buf);
        } catch (const DataError& e) {
            throw DataError(std::string(e.what()) + " (vector of image " + id.str() + " shorter than dimension "
                            + std::to_string(dim) + ")");
        }
        store.add(std::move(id), buf);
    }
    in.expect_eof();
    store.seal();
    return store;
}

}  // namespace met
