#pragma once

#include "chunkfilter/chunking.hpp"
#include "chunkfilter/corpus.hpp"

#include <atomic>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace chunkfilter {

// Normalized named entities of one chunk. Empty is meaningful: strategies
// that key on entities leave entity-free chunks alone.
struct EntitySet {
    std::set<std::string> entities;

    bool empty() const { return entities.empty(); }
    std::size_t size() const { return entities.size(); }
    bool operator==(const EntitySet&) const = default;
};

// Lowercase, whitespace runs collapsed to single spaces, trimmed. Idempotent.
std::string normalize_entity(std::string_view raw);

enum class EntityExtractor { heuristic, annotations_file };

std::string entity_extractor_name(EntityExtractor extractor);
EntityExtractor entity_extractor_from_name(const std::string& name);

// Rule-based extractor: maximal runs of capitalized words joined only by
// whitespace (a run counts with length >= 2, or length 1 when not opening a
// sentence), plus standalone four-digit number tokens treated as years.
EntitySet extract_entities(const Chunk& chunk);
std::vector<EntitySet> extract_entities_heuristic(const std::vector<Chunk>& chunks);

struct AnnotationSpan {
    std::size_t start_char = 0;
    std::size_t end_char = 0; // exclusive byte offset into the document text
    std::string label;
};

// Externally produced entity annotations, JSONL. Accepted line shapes:
//   {"chunk_id": ..., "entities": [...]}
//   {"doc_id": ...,   "entities": [...]}
//   {"doc_id": ...,   "spans": [{"start_char", "end_char", "label"}]}
// Lookup per chunk: exact chunk_id match, else spans of the chunk's document
// intersected with the chunk's byte range, else the document's entity list,
// else empty with the miss counter bumped.
class AnnotationStore {
public:
    AnnotationStore() = default;
    AnnotationStore(AnnotationStore&& other) noexcept
        : by_chunk_(std::move(other.by_chunk_)), by_doc_(std::move(other.by_doc_)),
          spans_(std::move(other.spans_)), misses_(other.misses_.load()) {}
    AnnotationStore& operator=(AnnotationStore&& other) noexcept {
        by_chunk_ = std::move(other.by_chunk_);
        by_doc_ = std::move(other.by_doc_);
        spans_ = std::move(other.spans_);
        misses_.store(other.misses_.load());
        return *this;
    }

    static AnnotationStore load(const std::string& path);

    std::vector<EntitySet> entities_for(const std::vector<Chunk>& chunks,
                                        const std::vector<Document>& docs) const;

    std::uint64_t miss_count() const { return misses_.load(); }

private:
    std::map<std::string, EntitySet> by_chunk_;
    std::map<std::string, EntitySet> by_doc_;
    std::map<std::string, std::vector<AnnotationSpan>> spans_;
    mutable std::atomic<std::uint64_t> misses_{0};
};

} // namespace chunkfilter
