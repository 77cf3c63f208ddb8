#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace arise::bm25 {

struct Params {
    double k1 = 1.2;
    double b = 0.75;
};

/// Term statistics of one chunk: sorted term ids with their counts.
struct ChunkTerms {
    std::vector<std::uint32_t> term_ids;  // ascending, unique
    std::vector<std::uint32_t> counts;
    std::uint32_t length = 0;             // analyzed tokens in the chunk
};

/// Read-only view over a published collection.
struct Collection {
    std::span<const ChunkTerms> chunks;
    std::span<const double> idf;  // indexed by term id
    double avg_length = 0.0;
    Params params;
};

double idf(std::size_t num_chunks, std::size_t doc_freq);

/// Score of one chunk for query terms given in ascending term-id order.
/// The terms are accumulated in that order, so serial and parallel scoring agree bitwise.
double score_chunk(const Collection& c, const ChunkTerms& chunk, std::span<const std::uint32_t> query);

/// Reference implementation: one chunk after another.
std::vector<double> score_all_serial(const Collection& c, std::span<const std::uint32_t> query);

/// OpenMP data-parallel version of score_all_serial; identical output.
std::vector<double> score_all_parallel(const Collection& c, std::span<const std::uint32_t> query);

// Below this many chunks retrieve() scores serially.
inline constexpr std::size_t parallel_threshold = 2048;

}  // namespace arise::bm25
