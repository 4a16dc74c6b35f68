#pragma once

#include "chunkfilter/corpus.hpp"
#include "chunkfilter/embedding.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace chunkfilter {

// Contiguous token span of one document. text is the exact substring of the
// document from the first token's start byte to the last token's end byte.
struct Chunk {
    std::string chunk_id; // "doc_id#start:end"
    std::string doc_id;
    std::size_t token_start = 0;
    std::size_t token_end = 0; // exclusive
    std::string text;

    bool operator==(const Chunk&) const = default;
};

std::string make_chunk_id(const std::string& doc_id, std::size_t start, std::size_t end);

// Canonical chunk order: (doc_id, token_start, token_end) ascending. Every
// filter sweep and report walks chunks in this order.
bool chunk_order_less(const Chunk& a, const Chunk& b);

enum class ChunkerFamily { fixed_token, recursive_token, cluster_semantic };

std::string chunker_family_name(ChunkerFamily family);
ChunkerFamily chunker_family_from_name(const std::string& name);
// Class-style label used in table file names and captions.
std::string chunker_display_name(ChunkerFamily family);

struct ChunkerConfig {
    ChunkerFamily family = ChunkerFamily::fixed_token;
    std::size_t chunk_size = 400; // max tokens per chunk
    std::size_t overlap = 0;      // tokens shared with the predecessor
    double boundary_threshold = 0.3; // cluster_semantic: min cosine to extend a chunk

    void validate() const;
};

std::vector<Chunk> chunk_fixed(const Document& doc, const ChunkerConfig& cfg);
std::vector<Chunk> chunk_recursive(const Document& doc, const ChunkerConfig& cfg);
std::vector<Chunk> chunk_cluster_semantic(const Document& doc, const ChunkerConfig& cfg,
                                          EmbeddingProvider& provider);

// Dispatch on cfg.family; provider may be null for the token-only families.
std::vector<Chunk> chunk_document(const Document& doc, const ChunkerConfig& cfg,
                                  EmbeddingProvider* provider = nullptr);

// All documents, canonical order. Documents are independent; callers may
// parallelize and concatenate instead.
std::vector<Chunk> chunk_corpus(const std::vector<Document>& docs, const ChunkerConfig& cfg,
                                EmbeddingProvider* provider = nullptr);

// JSONL persistence: {chunk_id, doc_id, token_start, token_end, text}.
void write_chunks_jsonl(const std::string& path, const std::vector<Chunk>& chunks);
std::vector<Chunk> load_chunks_jsonl(const std::string& path);

} // namespace chunkfilter
