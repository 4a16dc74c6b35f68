#pragma once

#include "chunkfilter/corpus.hpp"
#include "chunkfilter/filtering.hpp"
#include "chunkfilter/retrieval.hpp"
#include "chunkfilter/text.hpp"

#include <optional>
#include <string>
#include <vector>

namespace chunkfilter {

struct Metrics {
    double precision = 0.0;
    double recall = 0.0;
    double iou = 0.0;
};

// precision = |E∩R|/|R|, recall = |E∩R|/|E|, iou = |E∩R|/|E∪R| over the
// reference set E and retrieved-union set R. Empty R gives precision 0 by
// convention; empty E is rejected.
Metrics token_metrics(const TokenSet& reference, const TokenSet& retrieved_union);

struct EvalRecord {
    std::string query_id;
    TokenMode mode = TokenMode::raw;
    double precision = 0.0;
    double recall = 0.0;
    double iou = 0.0;
    double oracle_precision = 0.0;
    double oracle_recall = 0.0;
    double oracle_iou = 0.0;
    std::vector<std::string> retrieved; // top-k chunk ids, rank order
    std::vector<std::string> oracle;    // greedy picks, selection order
};

// Retrieves top-k for the question, unions the cached chunk token sets, and
// scores against the reference passage tokens; same again for the greedy
// oracle picks over the same index and mode.
EvalRecord evaluate_query(const VectorIndex& index, const QueryRecord& query,
                          EmbeddingProvider& provider, const RetrievalConfig& cfg, TokenMode mode,
                          const Stopwords& stopwords = Stopwords::builtin_english());

struct AggregateReport {
    std::string corpus;
    std::string chunker; // family name
    std::size_t chunk_size = 0;
    std::size_t overlap = 0;
    FilterStrategy strategy = FilterStrategy::none;
    std::optional<double> threshold;
    TokenMode mode = TokenMode::raw;
    double reduction_percent = 0.0;
    double precision = 0.0; // arithmetic means over all queries
    double recall = 0.0;
    double iou = 0.0;
    double oracle_precision = 0.0;
    double oracle_recall = 0.0;
    double oracle_iou = 0.0;
    std::size_t query_count = 0;
};

struct AggregateMeta {
    std::string corpus;
    std::string chunker;
    std::size_t chunk_size = 0;
    std::size_t overlap = 0;
};

AggregateReport aggregate(const std::vector<EvalRecord>& records, const FilterReport& report,
                          const AggregateMeta& meta);

void write_eval_jsonl(const std::string& path, const std::vector<EvalRecord>& records);
std::vector<EvalRecord> load_eval_jsonl(const std::string& path);

void write_aggregates_json(const std::string& path, const std::vector<AggregateReport>& reports);
std::vector<AggregateReport> load_aggregates_json(const std::string& path);

// Fixed-point with three decimals, the format of every table cell.
std::string format_fixed3(double value);

// CSV with header "method,threshold,reduction_percent,precision,recall,iou,
// oracle"; metric columns at three decimals, oracle column = mean oracle
// recall, empty threshold for threshold-free strategies.
void write_aggregate_csv(const std::string& path, const std::vector<AggregateReport>& rows);

} // namespace chunkfilter
