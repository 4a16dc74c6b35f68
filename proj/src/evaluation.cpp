#include "chunkfilter/evaluation.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace chunkfilter {

namespace {

using nlohmann::json;

std::size_t intersection_size(const std::set<std::string>& a, const std::set<std::string>& b) {
    std::size_t n = 0;
    auto i = a.begin();
    auto j = b.begin();
    while (i != a.end() && j != b.end()) {
        if (*i == *j) {
            ++n;
            ++i;
            ++j;
        } else if (*i < *j) {
            ++i;
        } else {
            ++j;
        }
    }
    return n;
}

TokenSet union_of_chunks(const VectorIndex& index, const std::vector<std::string>& chunk_ids,
                         TokenMode mode) {
    TokenSet out;
    out.mode = mode;
    for (const auto& id : chunk_ids) {
        const auto& tokens = index.tokens_at(index.position_of(id), mode).tokens;
        out.tokens.insert(tokens.begin(), tokens.end());
    }
    return out;
}

std::string threshold_field(const std::optional<double>& threshold) {
    if (!threshold) return "";
    json j = *threshold;
    return j.dump();
}

} // namespace

Metrics token_metrics(const TokenSet& reference, const TokenSet& retrieved_union) {
    if (reference.mode != retrieved_union.mode)
        throw std::invalid_argument("token_metrics: mode mismatch (" +
                                    token_mode_name(reference.mode) + " vs " +
                                    token_mode_name(retrieved_union.mode) + ")");
    if (reference.empty()) throw std::invalid_argument("token_metrics: empty reference set");

    const std::size_t inter = intersection_size(reference.tokens, retrieved_union.tokens);
    const std::size_t uni = reference.size() + retrieved_union.size() - inter;
    Metrics m;
    m.precision = retrieved_union.empty() ? 0.0 : double(inter) / double(retrieved_union.size());
    m.recall = double(inter) / double(reference.size());
    m.iou = double(inter) / double(uni);
    return m;
}

EvalRecord evaluate_query(const VectorIndex& index, const QueryRecord& query,
                          EmbeddingProvider& provider, const RetrievalConfig& cfg, TokenMode mode,
                          const Stopwords& stopwords) {
    const TokenSet reference = token_set(query.reference_text, mode, stopwords);
    if (reference.empty())
        throw std::invalid_argument("query " + query.query_id + ": reference text has no " +
                                    token_mode_name(mode) + " tokens");

    EvalRecord record;
    record.query_id = query.query_id;
    record.mode = mode;

    const auto hits = retrieve_top_k(index, query.question, provider, cfg);
    record.retrieved.reserve(hits.size());
    for (const auto& h : hits) record.retrieved.push_back(h.chunk_id);
    const Metrics retrieved = token_metrics(reference, union_of_chunks(index, record.retrieved, mode));
    record.precision = retrieved.precision;
    record.recall = retrieved.recall;
    record.iou = retrieved.iou;

    record.oracle = oracle_select(index, reference, cfg);
    const Metrics oracle = token_metrics(reference, union_of_chunks(index, record.oracle, mode));
    record.oracle_precision = oracle.precision;
    record.oracle_recall = oracle.recall;
    record.oracle_iou = oracle.iou;
    return record;
}

AggregateReport aggregate(const std::vector<EvalRecord>& records, const FilterReport& report,
                          const AggregateMeta& meta) {
    if (records.empty()) throw std::invalid_argument("aggregate: no records");
    for (const auto& r : records)
        if (r.mode != records.front().mode)
            throw std::invalid_argument("aggregate: mixed token modes");

    AggregateReport out;
    out.corpus = meta.corpus;
    out.chunker = meta.chunker;
    out.chunk_size = meta.chunk_size;
    out.overlap = meta.overlap;
    out.strategy = report.strategy;
    out.threshold = report.threshold;
    out.mode = records.front().mode;
    out.reduction_percent = 100.0 * report.reduction;
    out.query_count = records.size();
    for (const auto& r : records) {
        out.precision += r.precision;
        out.recall += r.recall;
        out.iou += r.iou;
        out.oracle_precision += r.oracle_precision;
        out.oracle_recall += r.oracle_recall;
        out.oracle_iou += r.oracle_iou;
    }
    const double n = double(records.size());
    out.precision /= n;
    out.recall /= n;
    out.iou /= n;
    out.oracle_precision /= n;
    out.oracle_recall /= n;
    out.oracle_iou /= n;
    return out;
}

void write_eval_jsonl(const std::string& path, const std::vector<EvalRecord>& records) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    for (const auto& r : records) {
        nlohmann::ordered_json line;
        line["query_id"] = r.query_id;
        line["mode"] = token_mode_name(r.mode);
        line["precision"] = r.precision;
        line["recall"] = r.recall;
        line["iou"] = r.iou;
        line["oracle_precision"] = r.oracle_precision;
        line["oracle_recall"] = r.oracle_recall;
        line["oracle_iou"] = r.oracle_iou;
        line["retrieved"] = r.retrieved;
        line["oracle"] = r.oracle;
        out << line.dump() << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<EvalRecord> load_eval_jsonl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    std::vector<EvalRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json row;
        try {
            row = json::parse(line);
        } catch (const json::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": malformed JSON: " + e.what());
        }
        EvalRecord r;
        try {
            r.query_id = row.at("query_id").get<std::string>();
            r.mode = token_mode_from_name(row.at("mode").get<std::string>());
            r.precision = row.at("precision").get<double>();
            r.recall = row.at("recall").get<double>();
            r.iou = row.at("iou").get<double>();
            r.oracle_precision = row.at("oracle_precision").get<double>();
            r.oracle_recall = row.at("oracle_recall").get<double>();
            r.oracle_iou = row.at("oracle_iou").get<double>();
            r.retrieved = row.at("retrieved").get<std::vector<std::string>>();
            r.oracle = row.at("oracle").get<std::vector<std::string>>();
        } catch (const json::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        records.push_back(std::move(r));
    }
    return records;
}

namespace {

nlohmann::ordered_json aggregate_to_json(const AggregateReport& a) {
    nlohmann::ordered_json row;
    row["corpus"] = a.corpus;
    row["chunker"] = a.chunker;
    row["chunk_size"] = a.chunk_size;
    row["overlap"] = a.overlap;
    row["strategy"] = strategy_name(a.strategy);
    row["threshold"] = a.threshold ? json(*a.threshold) : json(nullptr);
    row["mode"] = token_mode_name(a.mode);
    row["reduction_percent"] = a.reduction_percent;
    row["precision"] = a.precision;
    row["recall"] = a.recall;
    row["iou"] = a.iou;
    row["oracle_precision"] = a.oracle_precision;
    row["oracle_recall"] = a.oracle_recall;
    row["oracle_iou"] = a.oracle_iou;
    row["query_count"] = a.query_count;
    return row;
}

AggregateReport aggregate_from_json(const json& row) {
    AggregateReport a;
    a.corpus = row.at("corpus").get<std::string>();
    a.chunker = row.at("chunker").get<std::string>();
    a.chunk_size = row.at("chunk_size").get<std::size_t>();
    a.overlap = row.at("overlap").get<std::size_t>();
    a.strategy = strategy_from_name(row.at("strategy").get<std::string>());
    if (!row.at("threshold").is_null()) a.threshold = row.at("threshold").get<double>();
    a.mode = token_mode_from_name(row.at("mode").get<std::string>());
    a.reduction_percent = row.at("reduction_percent").get<double>();
    a.precision = row.at("precision").get<double>();
    a.recall = row.at("recall").get<double>();
    a.iou = row.at("iou").get<double>();
    a.oracle_precision = row.at("oracle_precision").get<double>();
    a.oracle_recall = row.at("oracle_recall").get<double>();
    a.oracle_iou = row.at("oracle_iou").get<double>();
    a.query_count = row.at("query_count").get<std::size_t>();
    return a;
}

} // namespace

void write_aggregates_json(const std::string& path, const std::vector<AggregateReport>& reports) {
    nlohmann::ordered_json out = nlohmann::ordered_json::array();
    for (const auto& a : reports) out.push_back(aggregate_to_json(a));
    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw std::runtime_error("cannot open for writing: " + path);
    file << out.dump(2) << '\n';
    if (!file) throw std::runtime_error("write failed: " + path);
}

std::vector<AggregateReport> load_aggregates_json(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw std::runtime_error("cannot open: " + path);
    json in;
    try {
        in = json::parse(file);
    } catch (const json::exception& e) {
        throw std::runtime_error("malformed aggregate file " + path + ": " + e.what());
    }
    std::vector<AggregateReport> out;
    for (const auto& row : in) out.push_back(aggregate_from_json(row));
    return out;
}

std::string format_fixed3(double value) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", value);
    return buf;
}

void write_aggregate_csv(const std::string& path, const std::vector<AggregateReport>& rows) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "method,threshold,reduction_percent,precision,recall,iou,oracle\n";
    for (const auto& a : rows) {
        out << strategy_label(a.strategy) << ',' << threshold_field(a.threshold) << ','
            << format_fixed3(a.reduction_percent) << ',' << format_fixed3(a.precision) << ','
            << format_fixed3(a.recall) << ',' << format_fixed3(a.iou) << ','
            << format_fixed3(a.oracle_recall) << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

} // namespace chunkfilter
