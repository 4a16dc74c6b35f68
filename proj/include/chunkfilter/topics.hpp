#pragma once

#include "chunkfilter/chunking.hpp"
#include "chunkfilter/embedding.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace chunkfilter {

struct TopicAssignment {
    std::map<std::string, int> topic_by_chunk;
    int n_topics = 0;

    int topic_of(const std::string& chunk_id) const;
};

// max(2, round(sqrt(n / 2))) clamped to n; the scale heuristic for callers
// that do not pin a topic count.
std::size_t default_topic_count(std::size_t n_chunks);

// Spherical k-means on L2-normalized vectors: deterministic farthest-point
// seeding (first center drawn from the seed, then max-min-distance picks,
// ties to the lowest index), then at most 50 assign/update rounds, stopping
// early when every centroid moves less than 1e-4.
TopicAssignment assign_topics(const std::vector<Chunk>& chunks,
                              const std::vector<Embedding>& embeddings, std::size_t n_topics,
                              std::uint64_t seed);

} // namespace chunkfilter
