#pragma once

#include "chunkfilter/chunking.hpp"
#include "chunkfilter/embedding.hpp"
#include "chunkfilter/entities.hpp"
#include "chunkfilter/minhash.hpp"
#include "chunkfilter/topics.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace chunkfilter {

enum class FilterStrategy {
    none,
    exact_norm,
    minhash_lsh,
    random,
    similarity,
    similarity_topics,
    similarity_ner,
    similarity_topics_ner,
    ner_exact,
    ner_half,
};

std::string strategy_name(FilterStrategy strategy); // config token, e.g. "minhash_lsh"
FilterStrategy strategy_from_name(const std::string& name);
std::string strategy_label(FilterStrategy strategy); // table label, e.g. "MinHash-LSH"

struct RemovedChunk {
    std::string chunk_id;
    std::string witness; // kept chunk that justified the removal, or "random"
};

struct FilterReport {
    FilterStrategy strategy = FilterStrategy::none;
    std::optional<double> threshold;
    std::string sweep_mode = "exhaustive";
    std::map<std::string, std::string> config_echo;
    std::vector<std::string> kept; // canonical order
    std::vector<RemovedChunk> removed;
    double reduction = 0.0; // removed / input, exact

    std::size_t input_count() const { return kept.size() + removed.size(); }
};

void write_filter_report(const std::string& path, const FilterReport& report);
FilterReport load_filter_report(const std::string& path);

// Every filter walks chunks in canonical (doc_id, token_start, token_end)
// order and keeps the earliest member of each redundancy group; a chunk is
// only ever compared against already-kept chunks.

FilterReport filter_none(const std::vector<Chunk>& chunks);

// Identical normalized text (NFKC, lowercase, collapsed whitespace) keeps
// only the first occurrence.
FilterReport filter_exact_norm(const std::vector<Chunk>& chunks);

// LSH proposes candidate pairs; removal requires exact shingle Jaccard >=
// the threshold against a kept chunk, so removals are never false positives.
FilterReport filter_minhash_lsh(const std::vector<Chunk>& chunks, const MinHashConfig& cfg);

// Removes exactly floor(reduction_target * n) chunks, seeded shuffle.
FilterReport filter_random(const std::vector<Chunk>& chunks, double reduction_target,
                           std::uint64_t seed);

enum class EntityMode { off, overlap_nonempty };
enum class SimilaritySweep { exhaustive, topic_blocked };
enum class SimilarityScope { corpus, document };

std::string similarity_scope_name(SimilarityScope scope);
SimilarityScope similarity_scope_from_name(const std::string& name);

struct SimilarityOptions {
    double tau = 0.8; // cosine redundancy threshold, (0, 1]
    const TopicAssignment* topics = nullptr;       // non-null enables the topic condition
    const std::vector<EntitySet>* entities = nullptr; // aligned with the chunk vector
    EntityMode entity_mode = EntityMode::off;
    // topic_blocked compares only same-topic kept chunks; identical outcome
    // when the topic condition is on, rejected when it is off.
    SimilaritySweep sweep = SimilaritySweep::exhaustive;
    // document scope never compares chunks from different documents.
    SimilarityScope scope = SimilarityScope::corpus;
};

// Covers Similarity and its +Topics / +NER / +Topics+NER variants: a chunk
// is removed iff some kept chunk has cosine >= tau and every enabled extra
// condition (same topic, entity overlap) also holds.
FilterReport filter_similarity(const std::vector<Chunk>& chunks,
                               const std::vector<Embedding>& embeddings,
                               const SimilarityOptions& options);

// Equal non-empty entity sets keep only the first; entity-free chunks are
// never removed by either NER filter.
FilterReport filter_ner_exact(const std::vector<Chunk>& chunks,
                              const std::vector<EntitySet>& entities);

// Removes a chunk when at least half of its own entities appear in some
// kept chunk's set.
FilterReport filter_ner_half(const std::vector<Chunk>& chunks,
                             const std::vector<EntitySet>& entities);

} // namespace chunkfilter
