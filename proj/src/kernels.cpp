#include "met/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include <omp.h>

namespace met {

double dot(std::span<const float> a, std::span<const float> b) noexcept
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    }
    return s;
}

double cosine_similarity(std::span<const float> a, std::span<const float> b)
{
    if (a.size() != b.size()) {
        throw std::invalid_argument("cosine_similarity: dimension mismatch (" + std::to_string(a.size()) + " vs "
                                    + std::to_string(b.size()) + ")");
    }
    const double na = std::sqrt(dot(a, a));
    const double nb = std::sqrt(dot(b, b));
    if (na == 0.0 || nb == 0.0) {
        throw std::invalid_argument("cosine_similarity: zero-norm vector");
    }
    return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

namespace {

void normalize_into(std::span<const float> in, std::span<float> out)
{
    const double n = std::sqrt(dot(in, in));
    for (std::size_t i = 0; i < in.size(); ++i) {
        out[i] = n > 0.0 ? static_cast<float>(in[i] / n) : 0.0f;
    }
}

void keep_top(std::vector<VectorHit>& hits, std::size_t m)
{
    const auto k = std::min(m, hits.size());
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(k), hits.end(), hit_before);
    hits.resize(k);
}

}  // namespace

std::vector<float> prepare_rows(const VectorStore& store, Metric metric)
{
    std::vector<float> rows(store.flat().begin(), store.flat().end());
    if (metric == Metric::cosine) {
        const std::size_t d = store.dim();
        for (std::size_t r = 0; r < store.size(); ++r) {
            normalize_into(store.row(r), std::span<float>(rows.data() + r * d, d));
        }
    }
    return rows;
}

std::vector<float> prepare_query(std::span<const float> query, Metric metric)
{
    std::vector<float> q(query.begin(), query.end());
    if (metric == Metric::cosine) {
        normalize_into(query, q);
    }
    return q;
}

std::vector<VectorHit> exact_knn_serial(std::span<const float> rows, std::size_t dim,
                                        std::span<const float> prepared_query, std::size_t m)
{
    const std::size_t n = dim == 0 ? 0 : rows.size() / dim;
    std::vector<VectorHit> hits;
    hits.reserve(n);
    for (std::size_t r = 0; r < n; ++r) {
        hits.push_back({static_cast<std::uint32_t>(r), dot(prepared_query, rows.subspan(r * dim, dim))});
    }
    keep_top(hits, m);
    return hits;
}

std::vector<VectorHit> exact_knn_parallel(std::span<const float> rows, std::size_t dim,
                                          std::span<const float> prepared_query, std::size_t m)
{
    const auto n = static_cast<std::int64_t>(dim == 0 ? 0 : rows.size() / dim);
    std::vector<VectorHit> hits(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(static)
    for (std::int64_t r = 0; r < n; ++r) {
        const auto row = static_cast<std::size_t>(r);
        hits[row] = {static_cast<std::uint32_t>(row), dot(prepared_query, rows.subspan(row * dim, dim))};
    }
    keep_top(hits, m);
    return hits;
}

std::vector<VectorHit> exact_knn(const VectorStore& store, std::span<const float> query, std::size_t m,
                                 Metric metric)
{
    if (query.size() != store.dim()) {
        throw std::invalid_argument("exact_knn: query dimension " + std::to_string(query.size())
                                    + " does not match store dimension " + std::to_string(store.dim()));
    }
    auto rows = prepare_rows(store, metric);
    auto q = prepare_query(query, metric);
    return exact_knn_parallel(rows, store.dim(), q, m);
}

}  // namespace met
