#include "chunkfilter/retrieval.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace chunkfilter {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

} // namespace

void RetrievalConfig::validate() const {
    if (k == 0) throw std::invalid_argument("retrieval: k must be positive");
}

const TokenSet& VectorIndex::tokens_at(std::size_t pos, TokenMode mode) const {
    return mode == TokenMode::raw ? raw_tokens_[pos] : preprocessed_tokens_[pos];
}

std::size_t VectorIndex::position_of(const std::string& chunk_id) const {
    auto it = position_by_id_.find(chunk_id);
    if (it == position_by_id_.end())
        throw std::out_of_range("chunk not in index: " + chunk_id);
    return it->second;
}

void VectorIndex::index_ids() {
    for (std::size_t i = 0; i < chunks_.size(); ++i) {
        if (!position_by_id_.emplace(chunks_[i].chunk_id, i).second)
            throw std::invalid_argument("duplicate chunk_id in index: " + chunks_[i].chunk_id);
    }
}

VectorIndex VectorIndex::build(const std::vector<Chunk>& chunks, EmbeddingProvider& provider,
                               const Stopwords& stopwords) {
    if (chunks.empty()) throw std::invalid_argument("empty index");
    VectorIndex index;
    index.provider_name_ = provider.name();
    index.dim_ = provider.dim();
    index.chunks_ = chunks;
    std::sort(index.chunks_.begin(), index.chunks_.end(), chunk_order_less);
    index.index_ids();

    std::vector<std::string> texts;
    texts.reserve(index.chunks_.size());
    for (const auto& c : index.chunks_) texts.push_back(c.text);
    index.vectors_ = provider.embed(texts);
    if (index.vectors_.size() != index.chunks_.size())
        throw std::runtime_error("provider returned " + std::to_string(index.vectors_.size()) +
                                 " vectors for " + std::to_string(index.chunks_.size()) +
                                 " chunks");
    for (const auto& v : index.vectors_)
        if (v.dim() != index.dim_)
            throw std::runtime_error("provider emitted dimension " + std::to_string(v.dim()) +
                                     ", declared " + std::to_string(index.dim_));

    index.raw_tokens_.reserve(index.chunks_.size());
    index.preprocessed_tokens_.reserve(index.chunks_.size());
    for (const auto& c : index.chunks_) {
        index.raw_tokens_.push_back(token_set(c.text, TokenMode::raw));
        index.preprocessed_tokens_.push_back(
            token_set(c.text, TokenMode::preprocessed, stopwords));
    }
    return index;
}

void VectorIndex::save(const std::string& dir) const {
    fs::create_directories(dir);
    write_chunks_jsonl((fs::path(dir) / "chunks.jsonl").string(), chunks_);

    std::ofstream vec((fs::path(dir) / "vectors.f32").string(), std::ios::binary | std::ios::trunc);
    if (!vec) throw std::runtime_error("cannot open for writing: " + dir + "/vectors.f32");
    std::string blob;
    blob.reserve(vectors_.size() * dim_ * 4);
    for (const auto& v : vectors_) {
        for (float x : v.values) {
            std::uint32_t bits;
            std::memcpy(&bits, &x, sizeof bits);
            blob.push_back(char(bits & 0xff));
            blob.push_back(char(bits >> 8 & 0xff));
            blob.push_back(char(bits >> 16 & 0xff));
            blob.push_back(char(bits >> 24 & 0xff));
        }
    }
    vec.write(blob.data(), std::streamsize(blob.size()));
    if (!vec) throw std::runtime_error("write failed: " + dir + "/vectors.f32");

    nlohmann::ordered_json manifest;
    manifest["provider"] = provider_name_;
    manifest["dim"] = dim_;
    manifest["count"] = chunks_.size();
    manifest["vectors_file"] = "vectors.f32";
    manifest["chunks_file"] = "chunks.jsonl";
    std::ofstream out((fs::path(dir) / "manifest.json").string(),
                      std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + dir + "/manifest.json");
    out << manifest.dump(2) << '\n';
    if (!out) throw std::runtime_error("write failed: " + dir + "/manifest.json");
}

VectorIndex VectorIndex::load(const std::string& dir, const Stopwords& stopwords) {
    std::ifstream mf((fs::path(dir) / "manifest.json").string(), std::ios::binary);
    if (!mf) throw std::runtime_error("cannot open: " + dir + "/manifest.json");
    json manifest;
    try {
        manifest = json::parse(mf);
    } catch (const json::exception& e) {
        throw std::runtime_error("malformed index manifest in " + dir + ": " + e.what());
    }

    VectorIndex index;
    index.provider_name_ = manifest.at("provider").get<std::string>();
    index.dim_ = manifest.at("dim").get<std::size_t>();
    const auto count = manifest.at("count").get<std::size_t>();
    const auto chunks_file = manifest.at("chunks_file").get<std::string>();
    const auto vectors_file = manifest.at("vectors_file").get<std::string>();

    index.chunks_ = load_chunks_jsonl((fs::path(dir) / chunks_file).string());
    if (index.chunks_.size() != count)
        throw std::runtime_error("index " + dir + " declares " + std::to_string(count) +
                                 " chunks but " + chunks_file + " holds " +
                                 std::to_string(index.chunks_.size()));
    index.index_ids();

    std::ifstream vec((fs::path(dir) / vectors_file).string(), std::ios::binary);
    if (!vec) throw std::runtime_error("cannot open: " + dir + "/" + vectors_file);
    std::string blob((std::istreambuf_iterator<char>(vec)), std::istreambuf_iterator<char>());
    if (blob.size() != count * index.dim_ * 4)
        throw std::runtime_error("index " + dir + " vector file holds " +
                                 std::to_string(blob.size()) + " bytes, expected " +
                                 std::to_string(count * index.dim_ * 4));
    const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data());
    index.vectors_.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        auto& values = index.vectors_[i].values;
        values.resize(index.dim_);
        for (std::size_t d = 0; d < index.dim_; ++d, bytes += 4) {
            std::uint32_t bits = std::uint32_t(bytes[0]) | std::uint32_t(bytes[1]) << 8 |
                                 std::uint32_t(bytes[2]) << 16 | std::uint32_t(bytes[3]) << 24;
            float x;
            std::memcpy(&x, &bits, sizeof x);
            values[d] = x;
        }
    }

    index.raw_tokens_.reserve(count);
    index.preprocessed_tokens_.reserve(count);
    for (const auto& c : index.chunks_) {
        index.raw_tokens_.push_back(token_set(c.text, TokenMode::raw));
        index.preprocessed_tokens_.push_back(
            token_set(c.text, TokenMode::preprocessed, stopwords));
    }
    return index;
}

std::vector<ScoredChunk> retrieve_top_k(const VectorIndex& index, const std::string& query,
                                        EmbeddingProvider& provider, const RetrievalConfig& cfg) {
    cfg.validate();
    if (index.size() == 0) throw std::invalid_argument("retrieve_top_k: empty index");
    if (provider.name() != index.provider_name())
        throw std::invalid_argument("index was built with provider \"" + index.provider_name() +
                                    "\" but query uses \"" + provider.name() + "\"");

    const Embedding q = provider.embed_one(query);
    std::vector<ScoredChunk> scored;
    scored.reserve(index.size());
    for (std::size_t i = 0; i < index.size(); ++i)
        scored.push_back({index.chunks()[i].chunk_id, cosine_similarity(q, index.vector_at(i))});
    std::sort(scored.begin(), scored.end(), [](const ScoredChunk& a, const ScoredChunk& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.chunk_id < b.chunk_id;
    });
    scored.resize(std::min(cfg.k, scored.size()));
    return scored;
}

std::vector<std::string> oracle_select(const VectorIndex& index, const TokenSet& reference,
                                       const RetrievalConfig& cfg) {
    cfg.validate();
    if (reference.empty()) throw std::invalid_argument("oracle_select: empty reference set");

    std::set<std::string> uncovered = reference.tokens;
    std::vector<bool> picked(index.size(), false);
    std::vector<std::string> selection;
    for (std::size_t step = 0; step < cfg.k && !uncovered.empty(); ++step) {
        std::size_t best = index.size();
        std::size_t best_gain = 0;
        for (std::size_t i = 0; i < index.size(); ++i) {
            if (picked[i]) continue;
            const auto& tokens = index.tokens_at(i, reference.mode).tokens;
            std::size_t gain = 0;
            for (const auto& t : uncovered)
                if (tokens.count(t)) ++gain;
            if (gain > best_gain ||
                (gain == best_gain && gain > 0 && best != index.size() &&
                 index.chunks()[i].chunk_id < index.chunks()[best].chunk_id)) {
                best = i;
                best_gain = gain;
            }
        }
        if (best == index.size() || best_gain == 0) break;
        picked[best] = true;
        selection.push_back(index.chunks()[best].chunk_id);
        for (const auto& t : index.tokens_at(best, reference.mode).tokens) uncovered.erase(t);
    }
    return selection;
}

} // namespace chunkfilter
