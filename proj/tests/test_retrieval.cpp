#include <doctest.h>

#include "chunkfilter/embedding.hpp"
#include "chunkfilter/retrieval.hpp"

#include <algorithm>
#include <filesystem>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

using namespace chunkfilter;
using doctest::Approx;

namespace {

Chunk make_chunk(std::string id, std::string text) {
    Chunk c;
    c.chunk_id = std::move(id);
    c.doc_id = "d";
    c.token_start = 0;
    c.token_end = 1;
    c.text = std::move(text);
    return c;
}

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("cf_index_" + std::to_string(std::random_device{}()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

// Embeds "themeN ..." onto axis N (plus a small shared component), giving
// exact, collision-free geometry for ranking tests.
class ThemeProvider : public EmbeddingProvider {
public:
    const std::string& name() const override {
        static const std::string n = "theme-test";
        return n;
    }
    std::size_t dim() const override { return 16; }
    std::size_t batch_limit() const override { return 1024; }
    std::vector<Embedding> embed(const std::vector<std::string>& texts) override {
        std::vector<Embedding> out;
        for (const auto& text : texts) {
            Embedding e;
            e.values.assign(16, 0.0f);
            const auto pos = text.find("theme");
            const std::size_t axis =
                pos == std::string::npos ? 15 : (text[pos + 5] - '0') % 15;
            e.values[axis] = 1.0f;
            e.values[15] += 0.2f;  // shared component: scores vary smoothly
            float norm = 0.0f;
            for (float v : e.values) norm += v * v;
            for (float& v : e.values) v /= std::sqrt(norm);
            out.push_back(std::move(e));
        }
        return out;
    }
};

}  // namespace

TEST_CASE("build indexes every chunk with the provider dimension") {
    HashEmbeddingProvider provider(HashProviderConfig{32, 0});
    const std::vector<Chunk> chunks = {make_chunk("a", "red apples"),
                                       make_chunk("b", "blue sky"),
                                       make_chunk("c", "green moss")};
    const auto index = VectorIndex::build(chunks, provider);
    CHECK(index.size() == 3);
    CHECK(index.dim() == 32);
    CHECK(index.provider_name() == provider.name());
    CHECK(index.position_of("b") == 1);
    CHECK(index.chunks()[1].text == "blue sky");
    CHECK(index.vector_at(0).values.size() == 32);
    CHECK(index.tokens_at(0, TokenMode::raw).tokens ==
          std::set<std::string>{"red", "apples"});
    CHECK_THROWS_AS(index.position_of("missing"), std::out_of_range);
}

TEST_CASE("build rejects duplicate chunk ids and empty input") {
    HashEmbeddingProvider provider(HashProviderConfig{16, 0});
    const std::vector<Chunk> duplicated = {make_chunk("a", "x"), make_chunk("a", "y")};
    CHECK_THROWS_AS(VectorIndex::build(duplicated, provider), std::invalid_argument);
    CHECK_THROWS_WITH_AS(VectorIndex::build({}, provider), doctest::Contains("empty"),
                         std::invalid_argument);
}

TEST_CASE("retrieval config validates k") {
    RetrievalConfig config;
    config.validate();
    config.k = 0;
    CHECK_THROWS_AS(config.validate(), std::invalid_argument);
}

TEST_CASE("querying a chunk's own text ranks it first with score one") {
    HashEmbeddingProvider provider(HashProviderConfig{64, 0});
    const std::vector<Chunk> chunks = {make_chunk("a", "ocean tide and salt"),
                                       make_chunk("b", "forest moss and fern"),
                                       make_chunk("c", "desert dune and heat")};
    const auto index = VectorIndex::build(chunks, provider);
    RetrievalConfig config;
    config.k = 3;

    for (const auto& chunk : chunks) {
        const auto results = retrieve_top_k(index, chunk.text, provider, config);
        REQUIRE(results.size() == 3);
        CHECK(results[0].chunk_id == chunk.chunk_id);
        CHECK(results[0].score == Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("scores come out non-increasing and k is clipped to the index size") {
    ThemeProvider provider;
    std::vector<Chunk> chunks;
    for (int i = 0; i < 5; ++i) {
        chunks.push_back(make_chunk("c" + std::to_string(i),
                                    "theme" + std::to_string(i) + " words here"));
    }
    const auto index = VectorIndex::build(chunks, provider);

    RetrievalConfig config;
    config.k = 50;
    const auto results = retrieve_top_k(index, "theme2 words here", provider, config);
    REQUIRE(results.size() == 5);  // clipped
    for (std::size_t i = 1; i < results.size(); ++i) {
        CHECK(results[i - 1].score >= results[i].score);
    }
    CHECK(results[0].chunk_id == "c2");
}

TEST_CASE("equal scores break ties by ascending chunk id") {
    // Identical texts embed identically, so all scores tie exactly.
    HashEmbeddingProvider provider(HashProviderConfig{32, 0});
    const std::vector<Chunk> chunks = {make_chunk("delta", "same words"),
                                       make_chunk("alpha", "same words"),
                                       make_chunk("charlie", "same words")};
    const auto index = VectorIndex::build(chunks, provider);
    RetrievalConfig config;
    config.k = 3;
    const auto results = retrieve_top_k(index, "same words", provider, config);
    REQUIRE(results.size() == 3);
    CHECK(results[0].chunk_id == "alpha");
    CHECK(results[1].chunk_id == "charlie");
    CHECK(results[2].chunk_id == "delta");
}

TEST_CASE("index save/load round-trips contents and rankings") {
    HashEmbeddingProvider provider(HashProviderConfig{48, 3});
    std::vector<Chunk> chunks;
    for (int i = 0; i < 8; ++i) {
        chunks.push_back(make_chunk("c" + std::to_string(i),
                                    "subject" + std::to_string(i % 4) + " body text"));
    }
    const auto index = VectorIndex::build(chunks, provider);

    TempDir dir;
    index.save(dir.path.string());
    CHECK(std::filesystem::exists(dir.path / "manifest.json"));
    CHECK(std::filesystem::exists(dir.path / "vectors.f32"));
    CHECK(std::filesystem::exists(dir.path / "chunks.jsonl"));

    const auto loaded = VectorIndex::load(dir.path.string());
    CHECK(loaded.size() == index.size());
    CHECK(loaded.dim() == index.dim());
    CHECK(loaded.provider_name() == index.provider_name());
    for (std::size_t i = 0; i < index.size(); ++i) {
        CHECK(loaded.chunks()[i] == index.chunks()[i]);
        CHECK(loaded.vector_at(i).values == index.vector_at(i).values);
        CHECK(loaded.tokens_at(i, TokenMode::preprocessed).tokens ==
              index.tokens_at(i, TokenMode::preprocessed).tokens);
    }

    RetrievalConfig config;
    const auto before = retrieve_top_k(index, "subject2 body", provider, config);
    const auto after = retrieve_top_k(loaded, "subject2 body", provider, config);
    REQUIRE(before.size() == after.size());
    for (std::size_t i = 0; i < before.size(); ++i) {
        CHECK(before[i].chunk_id == after[i].chunk_id);
        CHECK(before[i].score == Approx(after[i].score));
    }
}

TEST_CASE("querying with a mismatched provider is rejected") {
    HashEmbeddingProvider build_provider(HashProviderConfig{32, 0});
    const auto index =
        VectorIndex::build({make_chunk("a", "words"), make_chunk("b", "more words")},
                           build_provider);

    HashEmbeddingProvider other_seed(HashProviderConfig{32, 9});
    RetrievalConfig config;
    CHECK_THROWS_AS(retrieve_top_k(index, "words", other_seed, config),
                    std::invalid_argument);
    HashEmbeddingProvider other_dim(HashProviderConfig{16, 0});
    CHECK_THROWS_AS(retrieve_top_k(index, "words", other_dim, config),
                    std::invalid_argument);
}

TEST_CASE("oracle greedily covers the reference tokens") {
    HashEmbeddingProvider provider(HashProviderConfig{32, 0});
    const std::vector<Chunk> chunks = {make_chunk("a", "alpha beta"),
                                       make_chunk("b", "gamma delta"),
                                       make_chunk("c", "unrelated words")};
    const auto index = VectorIndex::build(chunks, provider);

    TokenSet reference;
    reference.mode = TokenMode::raw;
    reference.tokens = {"alpha", "beta", "gamma", "delta"};

    RetrievalConfig config;
    config.k = 5;
    const auto picks = oracle_select(index, reference, config);
    // Two chunks cover everything; the third adds nothing and is skipped.
    CHECK(picks == std::vector<std::string>{"a", "b"});
}

TEST_CASE("oracle stops after one pick when a single chunk covers everything") {
    HashEmbeddingProvider provider(HashProviderConfig{32, 0});
    const std::vector<Chunk> chunks = {make_chunk("small", "alpha"),
                                       make_chunk("full", "alpha beta gamma"),
                                       make_chunk("half", "beta gamma")};
    const auto index = VectorIndex::build(chunks, provider);

    TokenSet reference;
    reference.mode = TokenMode::raw;
    reference.tokens = {"alpha", "beta", "gamma"};

    RetrievalConfig config;
    config.k = 3;
    CHECK(oracle_select(index, reference, config) == std::vector<std::string>{"full"});
}

TEST_CASE("oracle respects k and breaks gain ties by chunk id") {
    HashEmbeddingProvider provider(HashProviderConfig{32, 0});
    const std::vector<Chunk> chunks = {make_chunk("zed", "alpha"),
                                       make_chunk("ann", "alpha"),
                                       make_chunk("mid", "beta")};
    const auto index = VectorIndex::build(chunks, provider);

    TokenSet reference;
    reference.mode = TokenMode::raw;
    reference.tokens = {"alpha", "beta", "gamma"};

    RetrievalConfig config;
    config.k = 1;
    // Gain ties between zed and ann resolve to the lexicographically lower id.
    CHECK(oracle_select(index, reference, config) == std::vector<std::string>{"ann"});

    config.k = 3;
    const auto picks = oracle_select(index, reference, config);
    CHECK(picks == std::vector<std::string>{"ann", "mid"});  // zed adds no new tokens
}

TEST_CASE("oracle with preprocessed reference uses preprocessed chunk tokens") {
    HashEmbeddingProvider provider(HashProviderConfig{32, 0});
    // "the cats" preprocesses to {cat}: stopword dropped, plural lemmatized.
    const std::vector<Chunk> chunks = {make_chunk("a", "the cats"),
                                       make_chunk("b", "a dog")};
    const auto index = VectorIndex::build(chunks, provider);

    TokenSet reference;
    reference.mode = TokenMode::preprocessed;
    reference.tokens = {"cat"};

    RetrievalConfig config;
    config.k = 2;
    CHECK(oracle_select(index, reference, config) == std::vector<std::string>{"a"});
}

TEST_CASE("oracle rejects an empty reference") {
    HashEmbeddingProvider provider(HashProviderConfig{32, 0});
    const auto index = VectorIndex::build({make_chunk("a", "words")}, provider);
    TokenSet reference;
    reference.mode = TokenMode::raw;
    RetrievalConfig config;
    CHECK_THROWS_AS(oracle_select(index, reference, config), std::invalid_argument);
}

TEST_CASE("filtered index ranks like the full index minus removed chunks") {
    HashEmbeddingProvider provider(HashProviderConfig{64, 5});
    std::vector<Chunk> chunks;
    for (int i = 0; i < 12; ++i) {
        chunks.push_back(make_chunk("c" + std::to_string(i),
                                    "theme" + std::to_string(i % 5) + " filler words"));
    }
    const auto full = VectorIndex::build(chunks, provider);

    // Drop every third chunk, as a filter would.
    std::vector<Chunk> kept;
    std::set<std::string> removed;
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        if (i % 3 == 2) {
            removed.insert(chunks[i].chunk_id);
        } else {
            kept.push_back(chunks[i]);
        }
    }
    const auto filtered = VectorIndex::build(kept, provider);

    // Rank everything in both indexes; the filtered ranking must equal the
    // full ranking with the removed ids struck out.
    RetrievalConfig config;
    config.k = chunks.size();
    const auto full_results = retrieve_top_k(full, "theme3 filler", provider, config);
    const auto filtered_results = retrieve_top_k(filtered, "theme3 filler", provider, config);
    REQUIRE(filtered_results.size() == kept.size());

    std::vector<std::string> expected;
    for (const auto& r : full_results) {
        if (!removed.count(r.chunk_id)) expected.push_back(r.chunk_id);
    }
    std::vector<std::string> actual;
    for (const auto& r : filtered_results) actual.push_back(r.chunk_id);
    CHECK(actual == expected);
}
