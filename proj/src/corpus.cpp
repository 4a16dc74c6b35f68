#include "chunkfilter/corpus.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include <json.hpp>

namespace fs = std::filesystem;

namespace chunkfilter {

CorpusFormat corpus_format_from_name(const std::string& name) {
    if (name == "jsonl") return CorpusFormat::jsonl;
    if (name == "plain_dir") return CorpusFormat::plain_dir;
    throw std::invalid_argument("unknown corpus format: " + name);
}

std::string corpus_format_name(CorpusFormat format) {
    return format == CorpusFormat::jsonl ? "jsonl" : "plain_dir";
}

namespace {

bool blank_line(const std::string& line) {
    return line.find_first_not_of(" \t\r\n") == std::string::npos;
}

std::string require_string(const nlohmann::json& obj, const char* key, std::size_t line_no,
                           const std::string& path) {
    if (!obj.contains(key) || !obj[key].is_string()) {
        throw std::runtime_error(path + ":" + std::to_string(line_no) + ": missing string key '" +
                                 key + "'");
    }
    return obj[key].get<std::string>();
}

std::vector<Document> load_corpus_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open corpus file: " + path);
    std::vector<Document> docs;
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (blank_line(line)) continue;
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": malformed JSON line: " + e.what());
        }
        Document doc;
        doc.doc_id = require_string(obj, "doc_id", line_no, path);
        doc.text = require_string(obj, "text", line_no, path);
        if (doc.doc_id.empty())
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": empty doc_id");
        if (!seen.insert(doc.doc_id).second)
            throw std::runtime_error(path + ": duplicate doc_id '" + doc.doc_id + "'");
        docs.push_back(std::move(doc));
    }
    return docs;
}

std::vector<Document> load_corpus_dir(const std::string& path) {
    if (!fs::is_directory(path))
        throw std::runtime_error("corpus path is not a directory: " + path);
    std::vector<Document> docs;
    std::unordered_set<std::string> seen;
    for (const auto& entry : fs::directory_iterator(path)) {
        if (!entry.is_regular_file()) continue;
        std::string doc_id = entry.path().stem().string();
        if (doc_id.empty()) continue;
        if (!seen.insert(doc_id).second)
            throw std::runtime_error(path + ": duplicate doc_id '" + doc_id + "'");
        std::ifstream file(entry.path(), std::ios::binary);
        if (!file) throw std::runtime_error("cannot open document file: " + entry.path().string());
        std::ostringstream buf;
        buf << file.rdbuf();
        docs.push_back({std::move(doc_id), buf.str()});
    }
    return docs;
}

} // namespace

std::vector<Document> load_corpus(const std::string& path, CorpusFormat format) {
    std::vector<Document> docs = format == CorpusFormat::jsonl ? load_corpus_jsonl(path)
                                                               : load_corpus_dir(path);
    if (docs.empty()) throw std::runtime_error("empty corpus: " + path);
    std::sort(docs.begin(), docs.end(),
              [](const Document& a, const Document& b) { return a.doc_id < b.doc_id; });
    return docs;
}

void write_corpus(const std::string& path, const std::vector<Document>& docs) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write corpus file: " + path);
    for (const auto& doc : docs) {
        nlohmann::ordered_json obj;
        obj["doc_id"] = doc.doc_id;
        obj["text"] = doc.text;
        out << obj.dump() << '\n';
    }
}

std::vector<QueryRecord> load_queries(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open queries file: " + path);
    std::vector<QueryRecord> queries;
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (blank_line(line)) continue;
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": malformed JSON line: " + e.what());
        }
        QueryRecord q;
        q.query_id = require_string(obj, "query_id", line_no, path);
        q.question = require_string(obj, "question", line_no, path);
        q.reference_text = require_string(obj, "reference_text", line_no, path);
        if (obj.contains("reference_doc_id") && obj["reference_doc_id"].is_string())
            q.reference_doc_id = obj["reference_doc_id"].get<std::string>();
        if (q.query_id.empty())
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": empty query_id");
        if (q.reference_text.empty())
            throw std::runtime_error(path + ": query '" + q.query_id +
                                     "' has empty reference_text");
        if (!seen.insert(q.query_id).second)
            throw std::runtime_error(path + ": duplicate query_id '" + q.query_id + "'");
        queries.push_back(std::move(q));
    }
    if (queries.empty()) throw std::runtime_error("empty queries file: " + path);
    std::sort(queries.begin(), queries.end(),
              [](const QueryRecord& a, const QueryRecord& b) { return a.query_id < b.query_id; });
    return queries;
}

void write_queries(const std::string& path, const std::vector<QueryRecord>& queries) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write queries file: " + path);
    for (const auto& q : queries) {
        nlohmann::ordered_json obj;
        obj["query_id"] = q.query_id;
        obj["question"] = q.question;
        obj["reference_text"] = q.reference_text;
        if (!q.reference_doc_id.empty()) obj["reference_doc_id"] = q.reference_doc_id;
        out << obj.dump() << '\n';
    }
}

} // namespace chunkfilter
