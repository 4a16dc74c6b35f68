#pragma once

#include "chunkfilter/chunking.hpp"
#include "chunkfilter/embedding.hpp"
#include "chunkfilter/text.hpp"

#include <map>
#include <string>
#include <vector>

namespace chunkfilter {

struct RetrievalConfig {
    std::size_t k = 5;

    void validate() const;
};

struct ScoredChunk {
    std::string chunk_id;
    double score;
};

// Immutable exact-search index: one embedding per chunk plus cached token
// sets for both evaluation modes.
class VectorIndex {
public:
    static VectorIndex build(const std::vector<Chunk>& chunks, EmbeddingProvider& provider,
                             const Stopwords& stopwords = Stopwords::builtin_english());

    // Directory layout: manifest.json, vectors.f32 (little-endian row-major
    // f32), chunks.jsonl. Token caches are rebuilt at load, so the same
    // stopword list must be supplied.
    void save(const std::string& dir) const;
    static VectorIndex load(const std::string& dir,
                            const Stopwords& stopwords = Stopwords::builtin_english());

    std::size_t size() const { return chunks_.size(); }
    std::size_t dim() const { return dim_; }
    const std::string& provider_name() const { return provider_name_; }
    const std::vector<Chunk>& chunks() const { return chunks_; }
    const Embedding& vector_at(std::size_t pos) const { return vectors_[pos]; }
    const TokenSet& tokens_at(std::size_t pos, TokenMode mode) const;
    std::size_t position_of(const std::string& chunk_id) const;

private:
    VectorIndex() = default;
    void index_ids();

    std::string provider_name_;
    std::size_t dim_ = 0;
    std::vector<Chunk> chunks_;
    std::vector<Embedding> vectors_;
    std::vector<TokenSet> raw_tokens_;
    std::vector<TokenSet> preprocessed_tokens_;
    std::map<std::string, std::size_t> position_by_id_;
};

// Exhaustive cosine scan; min(k, size) results by descending score, ties by
// ascending chunk_id.
std::vector<ScoredChunk> retrieve_top_k(const VectorIndex& index, const std::string& query,
                                        EmbeddingProvider& provider, const RetrievalConfig& cfg);

// Greedy maximum coverage of the reference tokens: each step takes the chunk
// with the largest uncovered-token gain (ties by ascending chunk_id), until
// k picks or the best gain is zero. Uses the token mode of the reference.
std::vector<std::string> oracle_select(const VectorIndex& index, const TokenSet& reference,
                                       const RetrievalConfig& cfg);

} // namespace chunkfilter
