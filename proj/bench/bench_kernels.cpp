#include <benchmark/benchmark.h>

#include <random>

#include "met/dataset.hpp"
#include "met/fusion.hpp"
#include "met/hnsw.hpp"
#include "met/kernels.hpp"
#include "met/rng.hpp"
#include "met/text_index.hpp"

using namespace met;

namespace {

VectorStore unit_store(std::size_t n, std::size_t dim, std::uint64_t seed)
{
    Rng rng(seed);
    std::normal_distribution<float> g;
    VectorStore s(static_cast<std::uint32_t>(dim));
    std::vector<float> v(dim);
    char id[24];
    for (std::size_t i = 0; i < n; ++i) {
        for (auto& x : v) {
            x = g(rng);
        }
        std::snprintf(id, sizeof id, "v%06zu", i);
        s.add(ImageId(id), v);
    }
    s.seal();
    return s;
}

std::vector<float> query(std::size_t dim, std::uint64_t seed)
{
    const auto s = unit_store(1, dim, seed);
    return prepare_query(s.row(0), Metric::cosine);
}

std::vector<ScoredQuery> random_dev(std::size_t queries, std::size_t candidates)
{
    Rng rng(3);
    std::vector<ScoredQuery> dev;
    for (std::size_t q = 0; q < queries; ++q) {
        ScoredQuery sq;
        sq.query_id = "q" + std::to_string(q);
        for (std::size_t c = 0; c < candidates; ++c) {
            sq.entities.emplace_back("e" + std::to_string(uniform_index(rng, 2 * candidates)));
            ScoreVector s;
            for (auto k : kMatcherKinds) {
                s.set(k, uniform_open01(rng));
            }
            sq.scores.push_back(s);
        }
        sq.gold = sq.entities.front();
        dev.push_back(std::move(sq));
    }
    return dev;
}

void BM_ExactKnnSerial(benchmark::State& st)
{
    const auto store = unit_store(static_cast<std::size_t>(st.range(0)), 64, 1);
    const auto rows = prepare_rows(store, Metric::cosine);
    const auto q = query(64, 2);
    for (auto _ : st) {
        benchmark::DoNotOptimize(exact_knn_serial(rows, 64, q, 100));
    }
}

void BM_ExactKnnParallel(benchmark::State& st)
{
    const auto store = unit_store(static_cast<std::size_t>(st.range(0)), 64, 1);
    const auto rows = prepare_rows(store, Metric::cosine);
    const auto q = query(64, 2);
    for (auto _ : st) {
        benchmark::DoNotOptimize(exact_knn_parallel(rows, 64, q, 100));
    }
}

void BM_HnswSearch(benchmark::State& st)
{
    const auto store = unit_store(static_cast<std::size_t>(st.range(0)), 64, 1);
    const auto idx = HnswIndex::build(store);
    const auto q = query(64, 2);
    for (auto _ : st) {
        benchmark::DoNotOptimize(idx.search(q, 100));
    }
}

void BM_HnswBuild(benchmark::State& st)
{
    const auto store = unit_store(static_cast<std::size_t>(st.range(0)), 64, 1);
    for (auto _ : st) {
        benchmark::DoNotOptimize(HnswIndex::build(store));
    }
}

void BM_GridSearchSerial(benchmark::State& st)
{
    const auto dev = random_dev(static_cast<std::size_t>(st.range(0)), 50);
    const auto grid = default_grid();
    for (auto _ : st) {
        benchmark::DoNotOptimize(grid_search_weights_serial(dev, grid));
    }
}

void BM_GridSearchParallel(benchmark::State& st)
{
    const auto dev = random_dev(static_cast<std::size_t>(st.range(0)), 50);
    const auto grid = default_grid();
    for (auto _ : st) {
        benchmark::DoNotOptimize(grid_search_weights(dev, grid));
    }
}

void BM_Bm25Search(benchmark::State& st)
{
    SynthSpec spec;
    spec.num_entities = static_cast<std::size_t>(st.range(0));
    const auto r = generate_synthetic_mkb(spec);
    const auto idx = TextIndex::build(r.kb);
    std::size_t i = 0;
    for (auto _ : st) {
        benchmark::DoNotOptimize(idx.search(r.splits.train[i++ % r.splits.train.size()].text, 100));
    }
}

}  // namespace

BENCHMARK(BM_ExactKnnSerial)->Arg(10000)->Arg(100000)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ExactKnnParallel)->Arg(10000)->Arg(100000)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_HnswSearch)->Arg(10000)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_HnswBuild)->Arg(10000)->Unit(benchmark::kMillisecond)->Iterations(1);
BENCHMARK(BM_GridSearchSerial)->Arg(100)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GridSearchParallel)->Arg(100)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Bm25Search)->Arg(2000)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
