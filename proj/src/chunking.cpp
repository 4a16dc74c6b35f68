#include "chunkfilter/chunking.hpp"

#include "chunkfilter/text.hpp"

#include <json.hpp>
#include <unicode/uchar.h>
#include <unicode/utf8.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace chunkfilter {

namespace {

using nlohmann::json;

// Separator strength between adjacent tokens, coarse to fine:
//   0 blank line, 1 line break, 2 sentence end, 3 anything else.
// A sentence end needs . ! or ? with whitespace after it, and the next
// token must open with an uppercase letter or digit, so "3.50" and
// "e.g. word" do not count as boundaries.
constexpr int kGapLevels = 4;

int gap_level(std::string_view doc, const TokenSpan& left, const TokenSpan& right) {
    const std::string_view gap = doc.substr(left.byte_end, right.byte_start - left.byte_end);
    int newlines = 0;
    for (char c : gap)
        if (c == '\n') ++newlines;
    if (newlines >= 2) return 0;
    if (newlines == 1) return 1;

    const auto punct = gap.find_first_of(".!?");
    if (punct != std::string_view::npos &&
        gap.find_first_of(" \t\r\f\v", punct + 1) != std::string_view::npos) {
        UChar32 first = 0;
        int32_t i = 0;
        U8_NEXT(reinterpret_cast<const std::uint8_t*>(doc.data() + right.byte_start),
                i, int32_t(right.byte_end - right.byte_start), first);
        if (first > 0 && (u_isupper(first) || u_isdigit(first))) return 2;
    }
    return 3;
}

struct TokenRange {
    std::size_t begin = 0;
    std::size_t end = 0; // exclusive

    std::size_t size() const { return end - begin; }
};

Chunk make_chunk(const Document& doc, const std::vector<TokenSpan>& spans, std::size_t start,
                 std::size_t end) {
    Chunk c;
    c.doc_id = doc.doc_id;
    c.token_start = start;
    c.token_end = end;
    c.chunk_id = make_chunk_id(doc.doc_id, start, end);
    c.text = doc.text.substr(spans[start].byte_start,
                             spans[end - 1].byte_end - spans[start].byte_start);
    return c;
}

// Recursively break [range] into units of at most `limit` tokens, splitting
// at the coarsest separator level present before descending. A range with no
// separators at all falls back to hard windows.
void split_units(std::string_view doc, const std::vector<TokenSpan>& spans, TokenRange range,
                 int level, std::size_t limit, const std::vector<int>& levels,
                 std::vector<TokenRange>& out) {
    if (range.size() <= limit) {
        out.push_back(range);
        return;
    }
    while (level < kGapLevels) {
        bool found = false;
        for (std::size_t i = range.begin; i + 1 < range.end && !found; ++i)
            found = levels[i] <= level;
        if (found) break;
        ++level;
    }
    if (level == kGapLevels) {
        for (std::size_t b = range.begin; b < range.end; b += limit)
            out.push_back({b, std::min(range.end, b + limit)});
        return;
    }
    std::size_t piece_begin = range.begin;
    for (std::size_t i = range.begin; i + 1 < range.end; ++i) {
        if (levels[i] <= level) {
            split_units(doc, spans, {piece_begin, i + 1}, level + 1, limit, levels, out);
            piece_begin = i + 1;
        }
    }
    split_units(doc, spans, {piece_begin, range.end}, level + 1, limit, levels, out);
}

std::vector<int> gap_levels(std::string_view doc, const std::vector<TokenSpan>& spans) {
    std::vector<int> levels(spans.empty() ? 0 : spans.size() - 1);
    for (std::size_t i = 0; i + 1 < spans.size(); ++i)
        levels[i] = gap_level(doc, spans[i], spans[i + 1]);
    return levels;
}

// Greedy left-to-right merge of adjacent units under the size limit.
std::vector<TokenRange> merge_units(const std::vector<TokenRange>& units, std::size_t limit) {
    std::vector<TokenRange> merged;
    for (const auto& unit : units) {
        if (!merged.empty() && unit.end - merged.back().begin <= limit)
            merged.back().end = unit.end;
        else
            merged.push_back(unit);
    }
    return merged;
}

} // namespace

std::string make_chunk_id(const std::string& doc_id, std::size_t start, std::size_t end) {
    return doc_id + "#" + std::to_string(start) + ":" + std::to_string(end);
}

bool chunk_order_less(const Chunk& a, const Chunk& b) {
    if (a.doc_id != b.doc_id) return a.doc_id < b.doc_id;
    if (a.token_start != b.token_start) return a.token_start < b.token_start;
    return a.token_end < b.token_end;
}

std::string chunker_family_name(ChunkerFamily family) {
    switch (family) {
    case ChunkerFamily::fixed_token: return "fixed_token";
    case ChunkerFamily::recursive_token: return "recursive_token";
    case ChunkerFamily::cluster_semantic: return "cluster_semantic";
    }
    throw std::logic_error("unknown chunker family");
}

ChunkerFamily chunker_family_from_name(const std::string& name) {
    if (name == "fixed_token") return ChunkerFamily::fixed_token;
    if (name == "recursive_token") return ChunkerFamily::recursive_token;
    if (name == "cluster_semantic") return ChunkerFamily::cluster_semantic;
    throw std::invalid_argument("unknown chunker family: " + name);
}

std::string chunker_display_name(ChunkerFamily family) {
    switch (family) {
    case ChunkerFamily::fixed_token: return "FixedTokenChunker";
    case ChunkerFamily::recursive_token: return "RecursiveTokenChunker";
    case ChunkerFamily::cluster_semantic: return "ClusterSemanticChunker";
    }
    throw std::logic_error("unknown chunker family");
}

void ChunkerConfig::validate() const {
    if (chunk_size == 0) throw std::invalid_argument("chunker: chunk_size must be positive");
    if (overlap >= chunk_size)
        throw std::invalid_argument("chunker: overlap " + std::to_string(overlap) +
                                    " must be smaller than chunk_size " +
                                    std::to_string(chunk_size));
    if (family == ChunkerFamily::cluster_semantic && overlap != 0)
        throw std::invalid_argument("chunker: cluster_semantic requires overlap 0");
    if (boundary_threshold < -1.0 || boundary_threshold > 1.0)
        throw std::invalid_argument("chunker: boundary_threshold must lie in [-1, 1]");
}

std::vector<Chunk> chunk_fixed(const Document& doc, const ChunkerConfig& cfg) {
    cfg.validate();
    const auto spans = tokenize_spans(doc.text);
    std::vector<Chunk> chunks;
    if (spans.empty()) return chunks;
    const std::size_t stride = cfg.chunk_size - cfg.overlap;
    for (std::size_t start = 0;; start += stride) {
        const std::size_t end = std::min(spans.size(), start + cfg.chunk_size);
        chunks.push_back(make_chunk(doc, spans, start, end));
        if (end == spans.size()) break;
    }
    return chunks;
}

std::vector<Chunk> chunk_recursive(const Document& doc, const ChunkerConfig& cfg) {
    cfg.validate();
    const auto spans = tokenize_spans(doc.text);
    std::vector<Chunk> chunks;
    if (spans.empty()) return chunks;

    const auto levels = gap_levels(doc.text, spans);
    std::vector<TokenRange> units;
    split_units(doc.text, spans, {0, spans.size()}, 0, cfg.chunk_size, levels, units);
    const auto cores = merge_units(units, cfg.chunk_size);

    for (std::size_t i = 0; i < cores.size(); ++i) {
        std::size_t start = cores[i].begin;
        if (cfg.overlap > 0 && i > 0) {
            // Prefix with the predecessor's tail, clipped so the chunk still
            // fits the size limit.
            const std::size_t prefix = std::min(cfg.overlap, cores[i - 1].size());
            start = std::max(cores[i].begin - prefix,
                             cores[i].end > cfg.chunk_size ? cores[i].end - cfg.chunk_size : 0);
        }
        chunks.push_back(make_chunk(doc, spans, start, cores[i].end));
    }
    return chunks;
}

std::vector<Chunk> chunk_cluster_semantic(const Document& doc, const ChunkerConfig& cfg,
                                          EmbeddingProvider& provider) {
    cfg.validate();
    const auto spans = tokenize_spans(doc.text);
    std::vector<Chunk> chunks;
    if (spans.empty()) return chunks;

    // Base units: sentences, with oversize sentences pre-split into hard
    // windows so the size cap is always satisfiable.
    const auto levels = gap_levels(doc.text, spans);
    std::vector<TokenRange> sentences;
    std::size_t begin = 0;
    for (std::size_t i = 0; i + 1 < spans.size(); ++i) {
        if (levels[i] <= 2) {
            sentences.push_back({begin, i + 1});
            begin = i + 1;
        }
    }
    sentences.push_back({begin, spans.size()});
    std::vector<TokenRange> units;
    for (const auto& s : sentences) {
        for (std::size_t b = s.begin; b < s.end; b += cfg.chunk_size)
            units.push_back({b, std::min(s.end, b + cfg.chunk_size)});
    }

    std::vector<std::string> texts;
    texts.reserve(units.size());
    for (const auto& u : units)
        texts.push_back(doc.text.substr(spans[u.begin].byte_start,
                                        spans[u.end - 1].byte_end - spans[u.begin].byte_start));
    std::vector<Embedding> vectors;
    try {
        vectors = provider.embed(texts);
    } catch (const EmbeddingError& e) {
        throw EmbeddingError(e.kind, "while chunking doc \"" + doc.doc_id + "\": " + e.what());
    }
    if (vectors.size() != units.size())
        throw std::runtime_error("provider returned " + std::to_string(vectors.size()) +
                                 " vectors for " + std::to_string(units.size()) + " sentences");

    // Running chunk centroid as an unnormalized sum; cosine is scale
    // invariant, so the sum stands in for the mean.
    TokenRange current = units[0];
    std::vector<double> centroid(vectors[0].values.begin(), vectors[0].values.end());
    auto flush = [&] { chunks.push_back(make_chunk(doc, spans, current.begin, current.end)); };
    for (std::size_t i = 1; i < units.size(); ++i) {
        const auto& next = vectors[i];
        double dot = 0.0, nc = 0.0, nn = 0.0;
        for (std::size_t d = 0; d < next.values.size(); ++d) {
            dot += centroid[d] * next.values[d];
            nc += centroid[d] * centroid[d];
            nn += double(next.values[d]) * next.values[d];
        }
        const bool similar = nc > 0.0 && nn > 0.0 &&
                             dot / (std::sqrt(nc) * std::sqrt(nn)) >= cfg.boundary_threshold;
        const bool fits = units[i].end - current.begin <= cfg.chunk_size;
        if (similar && fits) {
            current.end = units[i].end;
            for (std::size_t d = 0; d < next.values.size(); ++d) centroid[d] += next.values[d];
        } else {
            flush();
            current = units[i];
            centroid.assign(next.values.begin(), next.values.end());
        }
    }
    flush();
    return chunks;
}

std::vector<Chunk> chunk_document(const Document& doc, const ChunkerConfig& cfg,
                                  EmbeddingProvider* provider) {
    switch (cfg.family) {
    case ChunkerFamily::fixed_token: return chunk_fixed(doc, cfg);
    case ChunkerFamily::recursive_token: return chunk_recursive(doc, cfg);
    case ChunkerFamily::cluster_semantic:
        if (!provider)
            throw std::invalid_argument("cluster_semantic chunking needs an embedding provider");
        return chunk_cluster_semantic(doc, cfg, *provider);
    }
    throw std::logic_error("unknown chunker family");
}

std::vector<Chunk> chunk_corpus(const std::vector<Document>& docs, const ChunkerConfig& cfg,
                                EmbeddingProvider* provider) {
    std::vector<Chunk> all;
    for (const auto& doc : docs) {
        auto chunks = chunk_document(doc, cfg, provider);
        all.insert(all.end(), std::make_move_iterator(chunks.begin()),
                   std::make_move_iterator(chunks.end()));
    }
    std::sort(all.begin(), all.end(), chunk_order_less);
    return all;
}

void write_chunks_jsonl(const std::string& path, const std::vector<Chunk>& chunks) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    for (const auto& c : chunks) {
        nlohmann::ordered_json line;
        line["chunk_id"] = c.chunk_id;
        line["doc_id"] = c.doc_id;
        line["token_start"] = c.token_start;
        line["token_end"] = c.token_end;
        line["text"] = c.text;
        out << line.dump() << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<Chunk> load_chunks_jsonl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    std::vector<Chunk> chunks;
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
        Chunk c;
        try {
            c.chunk_id = row.at("chunk_id").get<std::string>();
            c.doc_id = row.at("doc_id").get<std::string>();
            c.token_start = row.at("token_start").get<std::size_t>();
            c.token_end = row.at("token_end").get<std::size_t>();
            c.text = row.at("text").get<std::string>();
        } catch (const json::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        if (c.token_start >= c.token_end)
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": empty token span in chunk " + c.chunk_id);
        chunks.push_back(std::move(c));
    }
    return chunks;
}

} // namespace chunkfilter
