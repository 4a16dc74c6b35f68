#pragma once

#include <string>
#include <vector>

namespace chunkfilter {

struct Document {
    std::string doc_id;
    std::string text; // preserved byte-exactly from input
};

struct QueryRecord {
    std::string query_id;
    std::string question;
    std::string reference_text;   // the gold passage; never empty
    std::string reference_doc_id; // optional, empty when absent
};

enum class CorpusFormat { jsonl, plain_dir };

CorpusFormat corpus_format_from_name(const std::string& name);
std::string corpus_format_name(CorpusFormat format);

// JSONL: one {"doc_id", "text"} object per line. plain_dir: every regular
// file in the directory is one document, filename stem as doc_id. Documents
// are returned sorted by doc_id; duplicates and empty corpora are errors.
std::vector<Document> load_corpus(const std::string& path, CorpusFormat format);

void write_corpus(const std::string& path, const std::vector<Document>& docs);

// JSONL with query_id, question, reference_text, optional reference_doc_id.
// Sorted by query_id; a record without a non-empty reference_text is rejected.
std::vector<QueryRecord> load_queries(const std::string& path);

void write_queries(const std::string& path, const std::vector<QueryRecord>& queries);

} // namespace chunkfilter
