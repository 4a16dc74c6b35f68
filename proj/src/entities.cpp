#include "chunkfilter/entities.hpp"

#include "chunkfilter/text.hpp"

#include <json.hpp>
#include <unicode/uchar.h>
#include <unicode/utf8.h>

#include <fstream>
#include <stdexcept>

namespace chunkfilter {

namespace {

using nlohmann::json;

UChar32 first_codepoint(std::string_view text, const TokenSpan& span) {
    UChar32 cp = 0;
    int32_t i = 0;
    U8_NEXT(reinterpret_cast<const std::uint8_t*>(text.data() + span.byte_start), i,
            int32_t(span.byte_end - span.byte_start), cp);
    return cp;
}

bool gap_is_whitespace(std::string_view text, const TokenSpan& left, const TokenSpan& right) {
    for (std::size_t i = left.byte_end; i < right.byte_start; ++i) {
        const unsigned char c = static_cast<unsigned char>(text[i]);
        if (c != ' ' && c != '\t' && c != '\r' && c != '\f' && c != '\v') return false;
    }
    return true;
}

bool gap_ends_sentence(std::string_view text, const TokenSpan& left, const TokenSpan& right) {
    for (std::size_t i = left.byte_end; i < right.byte_start; ++i) {
        const char c = text[i];
        if (c == '.' || c == '!' || c == '?' || c == '\n') return true;
    }
    return false;
}

bool is_year_token(const std::string& token) {
    if (token.size() != 4) return false;
    for (char c : token)
        if (c < '0' || c > '9') return false;
    return true;
}

} // namespace

std::string normalize_entity(std::string_view raw) { return fold_whitespace_lower(raw); }

std::string entity_extractor_name(EntityExtractor extractor) {
    switch (extractor) {
    case EntityExtractor::heuristic: return "heuristic";
    case EntityExtractor::annotations_file: return "annotations_file";
    }
    throw std::logic_error("unknown entity extractor");
}

EntityExtractor entity_extractor_from_name(const std::string& name) {
    if (name == "heuristic") return EntityExtractor::heuristic;
    if (name == "annotations_file") return EntityExtractor::annotations_file;
    throw std::invalid_argument("unknown entity extractor: " + name);
}

EntitySet extract_entities(const Chunk& chunk) {
    const std::string_view text = chunk.text;
    const auto spans = tokenize_spans(text);
    EntitySet out;

    std::vector<bool> capitalized(spans.size());
    std::vector<bool> sentence_start(spans.size());
    for (std::size_t i = 0; i < spans.size(); ++i) {
        capitalized[i] = u_isupper(first_codepoint(text, spans[i]));
        sentence_start[i] = i == 0 || gap_ends_sentence(text, spans[i - 1], spans[i]);
    }

    for (std::size_t i = 0; i < spans.size();) {
        if (!capitalized[i]) {
            if (is_year_token(spans[i].text)) out.entities.insert(spans[i].text);
            ++i;
            continue;
        }
        // Extend the run while the next word is capitalized and nothing but
        // plain whitespace separates it; punctuation breaks the run.
        std::size_t j = i + 1;
        while (j < spans.size() && capitalized[j] &&
               gap_is_whitespace(text, spans[j - 1], spans[j]))
            ++j;
        const std::size_t run_len = j - i;
        if (run_len >= 2 || !sentence_start[i]) {
            const std::string_view raw =
                text.substr(spans[i].byte_start, spans[j - 1].byte_end - spans[i].byte_start);
            out.entities.insert(normalize_entity(raw));
        }
        i = j;
    }
    return out;
}

std::vector<EntitySet> extract_entities_heuristic(const std::vector<Chunk>& chunks) {
    std::vector<EntitySet> out;
    out.reserve(chunks.size());
    for (const auto& c : chunks) out.push_back(extract_entities(c));
    return out;
}

AnnotationStore AnnotationStore::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    AnnotationStore store;
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
        const auto where = path + ":" + std::to_string(line_no);
        if (row.contains("chunk_id")) {
            if (!row.contains("entities"))
                throw std::runtime_error(where + ": chunk_id line needs \"entities\"");
            EntitySet set;
            for (const auto& e : row.at("entities"))
                set.entities.insert(normalize_entity(e.get<std::string>()));
            store.by_chunk_[row.at("chunk_id").get<std::string>()] = std::move(set);
        } else if (row.contains("doc_id")) {
            const auto doc_id = row.at("doc_id").get<std::string>();
            if (row.contains("spans")) {
                auto& spans = store.spans_[doc_id];
                for (const auto& s : row.at("spans")) {
                    AnnotationSpan span;
                    span.start_char = s.at("start_char").get<std::size_t>();
                    span.end_char = s.at("end_char").get<std::size_t>();
                    if (s.contains("label")) span.label = s.at("label").get<std::string>();
                    if (span.start_char >= span.end_char)
                        throw std::runtime_error(where + ": empty span for doc " + doc_id);
                    spans.push_back(std::move(span));
                }
            } else if (row.contains("entities")) {
                EntitySet set;
                for (const auto& e : row.at("entities"))
                    set.entities.insert(normalize_entity(e.get<std::string>()));
                store.by_doc_[doc_id] = std::move(set);
            } else {
                throw std::runtime_error(where + ": doc_id line needs \"entities\" or \"spans\"");
            }
        } else {
            throw std::runtime_error(where + ": line needs \"chunk_id\" or \"doc_id\"");
        }
    }
    return store;
}

std::vector<EntitySet> AnnotationStore::entities_for(const std::vector<Chunk>& chunks,
                                                     const std::vector<Document>& docs) const {
    std::map<std::string, const Document*> doc_by_id;
    for (const auto& d : docs) doc_by_id[d.doc_id] = &d;
    // Token spans per document, computed once on demand; chunk token offsets
    // map through them to byte ranges for span intersection.
    std::map<std::string, std::vector<TokenSpan>> token_spans;

    std::vector<EntitySet> out;
    out.reserve(chunks.size());
    for (const auto& chunk : chunks) {
        if (auto it = by_chunk_.find(chunk.chunk_id); it != by_chunk_.end()) {
            out.push_back(it->second);
            continue;
        }
        if (auto sp = spans_.find(chunk.doc_id); sp != spans_.end()) {
            auto doc_it = doc_by_id.find(chunk.doc_id);
            if (doc_it == doc_by_id.end())
                throw std::runtime_error("annotations reference doc \"" + chunk.doc_id +
                                         "\" but it is not in the corpus");
            const Document& doc = *doc_it->second;
            auto [ts, inserted] = token_spans.try_emplace(chunk.doc_id);
            if (inserted) ts->second = tokenize_spans(doc.text);
            const auto& spans = ts->second;
            if (chunk.token_end > spans.size())
                throw std::runtime_error("chunk " + chunk.chunk_id +
                                         " is out of range for doc \"" + chunk.doc_id + "\"");
            const std::size_t lo = spans[chunk.token_start].byte_start;
            const std::size_t hi = spans[chunk.token_end - 1].byte_end;
            EntitySet set;
            for (const auto& span : sp->second) {
                if (span.start_char < hi && span.end_char > lo && span.end_char <= doc.text.size())
                    set.entities.insert(normalize_entity(
                        std::string_view(doc.text).substr(span.start_char,
                                                          span.end_char - span.start_char)));
            }
            out.push_back(std::move(set));
            continue;
        }
        if (auto it = by_doc_.find(chunk.doc_id); it != by_doc_.end()) {
            out.push_back(it->second);
            continue;
        }
        misses_.fetch_add(1);
        out.push_back(EntitySet{});
    }
    return out;
}

} // namespace chunkfilter
