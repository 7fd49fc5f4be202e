#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "met/vector_store.hpp"

namespace met {

enum class Metric { cosine, inner_product };

/// A hit refers to a row of the searched store; row order is image id order.
struct VectorHit {
    std::uint32_t row;
    double similarity;

    friend bool operator==(const VectorHit&, const VectorHit&) = default;
};

/// Descending similarity, ties by row ascending.
inline bool hit_before(const VectorHit& a, const VectorHit& b)
{
    return a.similarity != b.similarity ? a.similarity > b.similarity : a.row < b.row;
}

/// <a, b> / (|a| |b|). Throws std::invalid_argument on a dimension mismatch
/// or a zero-norm input.
double cosine_similarity(std::span<const float> a, std::span<const float> b);

/// Inner product accumulated in double.
double dot(std::span<const float> a, std::span<const float> b) noexcept;

/// Row-major copy of the store's vectors, unit-normalized under the cosine
/// metric. Both the exact scan and the graph index score against this same
/// representation, so their similarities agree bit for bit.
std::vector<float> prepare_rows(const VectorStore& store, Metric metric);
std::vector<float> prepare_query(std::span<const float> query, Metric metric);

/// Exhaustive top-m over prepared rows. Serial reference.
std::vector<VectorHit> exact_knn_serial(std::span<const float> rows, std::size_t dim,
                                        std::span<const float> prepared_query, std::size_t m);

/// Same contract as exact_knn_serial; the scan is split across OpenMP threads.
std::vector<VectorHit> exact_knn_parallel(std::span<const float> rows, std::size_t dim,
                                          std::span<const float> prepared_query, std::size_t m);

/// Exact top-m of `query` against `store`. Throws std::invalid_argument on a
/// dimension mismatch.
std::vector<VectorHit> exact_knn(const VectorStore& store, std::span<const float> query, std::size_t m,
                                 Metric metric = Metric::cosine);

}  // namespace met
