#include "arise/bm25_kernels.hpp"

#include <algorithm>
#include <cmath>

namespace arise::bm25 {

double idf(std::size_t num_chunks, std::size_t doc_freq) {
    const double n = static_cast<double>(num_chunks);
    const double df = static_cast<double>(doc_freq);
    return std::log((n - df + 0.5) / (df + 0.5) + 1.0);
}

double score_chunk(const Collection& c, const ChunkTerms& chunk, std::span<const std::uint32_t> query) {
    const double norm = c.params.k1 * (1.0 - c.params.b + c.params.b * chunk.length / c.avg_length);
    double score = 0.0;
    // Both lists ascending: merge walk.
    std::size_t i = 0;
    for (std::uint32_t term : query) {
        while (i < chunk.term_ids.size() && chunk.term_ids[i] < term) ++i;
        if (i == chunk.term_ids.size()) break;
        if (chunk.term_ids[i] != term) continue;
        const double tf = chunk.counts[i];
        score += c.idf[term] * tf * (c.params.k1 + 1.0) / (tf + norm);
    }
    return score;
}

std::vector<double> score_all_serial(const Collection& c, std::span<const std::uint32_t> query) {
    std::vector<double> scores(c.chunks.size(), 0.0);
    for (std::size_t i = 0; i < c.chunks.size(); ++i) scores[i] = score_chunk(c, c.chunks[i], query);
    return scores;
}

std::vector<double> score_all_parallel(const Collection& c, std::span<const std::uint32_t> query) {
    std::vector<double> scores(c.chunks.size(), 0.0);
    const auto n = static_cast<std::ptrdiff_t>(c.chunks.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) scores[i] = score_chunk(c, c.chunks[i], query);
    return scores;
}

}  // namespace arise::bm25
