// Serial reference vs OpenMP BM25 scoring over synthetic collections.

#include <algorithm>
#include <map>
#include <random>

#include <benchmark/benchmark.h>

#include "arise/bm25_kernels.hpp"

namespace {

using namespace arise::bm25;

struct Synthetic {
    std::vector<ChunkTerms> chunks;
    std::vector<double> idf_table;
    std::vector<std::uint32_t> query;
    Collection view() const {
        double total = 0;
        for (const auto& c : chunks) total += c.length;
        return {chunks, idf_table, total / static_cast<double>(chunks.size()), {}};
    }
};

Synthetic make(std::size_t n_chunks, std::uint32_t vocab = 5000) {
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<std::uint32_t> term(0, vocab - 1);
    std::vector<std::size_t> df(vocab, 0);
    Synthetic s;
    s.chunks.resize(n_chunks);
    for (auto& c : s.chunks) {
        std::map<std::uint32_t, std::uint32_t> counts;
        for (int i = 0; i < 400; ++i) ++counts[term(rng)];
        for (auto [t, n] : counts) {
            c.term_ids.push_back(t);
            c.counts.push_back(n);
            ++df[t];
        }
        c.length = 400;
    }
    for (auto d : df) s.idf_table.push_back(idf(n_chunks, d));
    for (int i = 0; i < 12; ++i) s.query.push_back(term(rng));
    std::sort(s.query.begin(), s.query.end());
    s.query.erase(std::unique(s.query.begin(), s.query.end()), s.query.end());
    return s;
}

void BM_serial(benchmark::State& state) {
    auto s = make(static_cast<std::size_t>(state.range(0)));
    auto c = s.view();
    for (auto _ : state) benchmark::DoNotOptimize(score_all_serial(c, s.query));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_parallel(benchmark::State& state) {
    auto s = make(static_cast<std::size_t>(state.range(0)));
    auto c = s.view();
    for (auto _ : state) benchmark::DoNotOptimize(score_all_parallel(c, s.query));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_serial)->Arg(1000)->Arg(10000)->Arg(50000);
BENCHMARK(BM_parallel)->Arg(1000)->Arg(10000)->Arg(50000);
BENCHMARK_MAIN();
