#include "chunkfilter/chunking.hpp"

#include "chunkfilter/text.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

using namespace chunkfilter;

namespace {

Document make_doc(const std::string& id, const std::string& text) { return Document{id, text}; }

std::string n_tokens(std::size_t n, const std::string& word = "tok") {
    std::string out;
    for (std::size_t i = 0; i < n; ++i) {
        if (!out.empty()) out += ' ';
        out += word + std::to_string(i);
    }
    return out;
}

std::vector<std::pair<std::size_t, std::size_t>> spans_of(const std::vector<Chunk>& chunks) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (const auto& c : chunks) out.emplace_back(c.token_start, c.token_end);
    return out;
}

// Scripted provider: the first token of the input selects a fixed basis
// vector, giving exact orthogonality between designated sentence groups.
struct ScriptedProvider final : EmbeddingProvider {
    std::string provider_name = "scripted";
    const std::string& name() const override { return provider_name; }
    std::size_t dim() const override { return 4; }
    std::size_t batch_limit() const override { return 1024; }
    std::vector<Embedding> embed(const std::vector<std::string>& texts) override {
        std::vector<Embedding> out;
        for (const auto& t : texts) {
            const auto tokens = tokenize(t);
            Embedding e;
            e.values.assign(4, 0.0f);
            std::size_t axis = 3;
            if (!tokens.empty()) {
                if (tokens[0].starts_with("red")) axis = 0;
                else if (tokens[0].starts_with("blue")) axis = 1;
                else axis = 2;
            }
            e.values[axis] = 1.0f;
            out.push_back(std::move(e));
        }
        return out;
    }
};

} // namespace

TEST_CASE("chunker config validation") {
    ChunkerConfig cfg;
    cfg.chunk_size = 4;
    cfg.overlap = 4;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument); // overlap must be < size
    cfg.overlap = 5;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.overlap = 3;
    CHECK_NOTHROW(cfg.validate());
    cfg.chunk_size = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("chunker family names round-trip") {
    for (auto f : {ChunkerFamily::fixed_token, ChunkerFamily::recursive_token,
                   ChunkerFamily::cluster_semantic})
        CHECK(chunker_family_from_name(chunker_family_name(f)) == f);
    CHECK(chunker_display_name(ChunkerFamily::fixed_token) == "FixedTokenChunker");
    CHECK(chunker_display_name(ChunkerFamily::recursive_token) == "RecursiveTokenChunker");
    CHECK(chunker_display_name(ChunkerFamily::cluster_semantic) == "ClusterSemanticChunker");
    CHECK_THROWS_AS((void)chunker_family_from_name("other"), std::invalid_argument);
}

TEST_CASE("fixed chunker strides by size minus overlap") {
    ChunkerConfig cfg;
    cfg.family = ChunkerFamily::fixed_token;
    cfg.chunk_size = 4;
    cfg.overlap = 2;
    const auto doc = make_doc("d", n_tokens(10));
    const auto chunks = chunk_fixed(doc, cfg);
    CHECK(spans_of(chunks) == std::vector<std::pair<std::size_t, std::size_t>>{
                                  {0, 4}, {2, 6}, {4, 8}, {6, 10}});
    // Chunk text re-tokenizes to exactly the span's tokens.
    const auto all = tokenize(doc.text);
    for (const auto& c : chunks) {
        const auto sub = tokenize(c.text);
        REQUIRE(sub.size() == c.token_end - c.token_start);
        for (std::size_t i = 0; i < sub.size(); ++i) CHECK(sub[i] == all[c.token_start + i]);
    }
    CHECK(chunks[0].chunk_id == "d#0:4");
}

TEST_CASE("fixed chunker short and exact-fit documents") {
    ChunkerConfig cfg;
    cfg.family = ChunkerFamily::fixed_token;
    cfg.chunk_size = 4;
    cfg.overlap = 0;

    const auto short_doc = chunk_fixed(make_doc("d", n_tokens(3)), cfg);
    CHECK(spans_of(short_doc) == std::vector<std::pair<std::size_t, std::size_t>>{{0, 3}});

    const auto exact = chunk_fixed(make_doc("d", n_tokens(8)), cfg);
    CHECK(spans_of(exact) == std::vector<std::pair<std::size_t, std::size_t>>{{0, 4}, {4, 8}});

    CHECK(chunk_fixed(make_doc("d", ""), cfg).empty());
    CHECK(chunk_fixed(make_doc("d", " ,.; "), cfg).empty());
}

TEST_CASE("recursive chunker merges paragraphs under the size limit") {
    ChunkerConfig cfg;
    cfg.family = ChunkerFamily::recursive_token;
    cfg.chunk_size = 200;
    cfg.overlap = 0;

    const auto merged = chunk_recursive(
        make_doc("d", n_tokens(100, "a") + "\n\n" + n_tokens(100, "b")), cfg);
    CHECK(spans_of(merged) == std::vector<std::pair<std::size_t, std::size_t>>{{0, 200}});

    const auto split = chunk_recursive(
        make_doc("d", n_tokens(150, "a") + "\n\n" + n_tokens(150, "b")), cfg);
    CHECK(spans_of(split) ==
          std::vector<std::pair<std::size_t, std::size_t>>{{0, 150}, {150, 300}});
}

TEST_CASE("recursive chunker splits an unbroken paragraph at sentences and spaces") {
    ChunkerConfig cfg;
    cfg.family = ChunkerFamily::recursive_token;
    cfg.chunk_size = 200;
    cfg.overlap = 0;

    // 500 tokens, one paragraph, sentence punctuation every 7 tokens.
    std::string text;
    for (int i = 0; i < 500; ++i) {
        if (!text.empty()) text += (i % 7 == 0) ? ". " : " ";
        text += "Word" + std::to_string(i);
    }
    const auto doc = make_doc("d", text);
    const auto chunks = chunk_recursive(doc, cfg);
    REQUIRE(!chunks.empty());

    const auto all = tokenize(doc.text);
    std::size_t covered = 0;
    for (const auto& c : chunks) {
        CHECK(c.token_start == covered); // contiguous, no gaps at overlap 0
        CHECK(c.token_end - c.token_start <= cfg.chunk_size);
        const auto sub = tokenize(c.text);
        REQUIRE(sub.size() == c.token_end - c.token_start);
        for (std::size_t i = 0; i < sub.size(); ++i) CHECK(sub[i] == all[c.token_start + i]);
        covered = c.token_end;
    }
    CHECK(covered == all.size());
}

TEST_CASE("recursive chunker overlap duplicates the predecessor suffix") {
    ChunkerConfig cfg;
    cfg.family = ChunkerFamily::recursive_token;
    cfg.chunk_size = 10;
    cfg.overlap = 4;

    const auto doc = make_doc("d", n_tokens(18)); // one space-separated run
    const auto chunks = chunk_recursive(doc, cfg);
    REQUIRE(chunks.size() >= 2);
    const auto all = tokenize(doc.text);
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        const auto& c = chunks[i];
        CHECK(c.token_end - c.token_start <= cfg.chunk_size);
        if (i > 0) {
            // The chunk starts at most `overlap` tokens before the previous
            // chunk's end and never before its start.
            CHECK(c.token_start < chunks[i - 1].token_end);
            CHECK(chunks[i - 1].token_end - c.token_start <= cfg.overlap);
            CHECK(c.token_start >= chunks[i - 1].token_start);
        }
    }
    CHECK(chunks.front().token_start == 0);
    CHECK(chunks.back().token_end == all.size());
}

TEST_CASE("cluster semantic chunker splits only at the size cap for uniform content") {
    ScriptedProvider provider;
    ChunkerConfig cfg;
    cfg.family = ChunkerFamily::cluster_semantic;
    cfg.chunk_size = 6;
    cfg.overlap = 0;
    cfg.boundary_threshold = 0.3;

    // 8 identical 3-token sentences: similarity is always 1, so only the
    // 6-token cap forces boundaries -> chunks of two sentences each.
    std::string text;
    for (int i = 0; i < 8; ++i) text += "Red one two. ";
    const auto chunks = chunk_cluster_semantic(make_doc("d", text), cfg, provider);
    CHECK(spans_of(chunks) == std::vector<std::pair<std::size_t, std::size_t>>{
                                  {0, 6}, {6, 12}, {12, 18}, {18, 24}});
}

TEST_CASE("cluster semantic chunker breaks at orthogonal sentences") {
    ScriptedProvider provider;
    ChunkerConfig cfg;
    cfg.family = ChunkerFamily::cluster_semantic;
    cfg.chunk_size = 100;
    cfg.overlap = 0;
    cfg.boundary_threshold = 0.3;

    const auto two = chunk_cluster_semantic(
        make_doc("d", "Red apples everywhere. Blue sky above."), cfg, provider);
    CHECK(spans_of(two) == std::vector<std::pair<std::size_t, std::size_t>>{{0, 3}, {3, 6}});

    // 20 sentences, topic switch at sentence 10 -> exactly one boundary there.
    std::string text;
    for (int i = 0; i < 20; ++i)
        text += (i < 10 ? "Red item here. " : "Blue item here. ");
    const auto chunks = chunk_cluster_semantic(make_doc("d", text), cfg, provider);
    CHECK(spans_of(chunks) == std::vector<std::pair<std::size_t, std::size_t>>{{0, 30}, {30, 60}});
}

TEST_CASE("cluster semantic chunker propagates provider failures with context") {
    struct FailingProvider final : EmbeddingProvider {
        std::string provider_name = "failing";
        const std::string& name() const override { return provider_name; }
        std::size_t dim() const override { return 2; }
        std::size_t batch_limit() const override { return 8; }
        std::vector<Embedding> embed(const std::vector<std::string>&) override {
            throw EmbeddingError(EmbeddingError::Kind::transport, "boom");
        }
    } provider;
    ChunkerConfig cfg;
    cfg.family = ChunkerFamily::cluster_semantic;
    cfg.chunk_size = 10;
    CHECK_THROWS_WITH_AS(
        (void)chunk_cluster_semantic(make_doc("doc7", "One two. Three four."), cfg, provider),
        doctest::Contains("doc7"), EmbeddingError);
}

TEST_CASE("chunk_document requires a provider only for cluster_semantic") {
    ChunkerConfig cfg;
    cfg.family = ChunkerFamily::cluster_semantic;
    cfg.chunk_size = 10;
    CHECK_THROWS_AS((void)chunk_document(make_doc("d", "a b c"), cfg, nullptr),
                    std::invalid_argument);
    cfg.family = ChunkerFamily::fixed_token;
    CHECK(chunk_document(make_doc("d", "a b c"), cfg, nullptr).size() == 1);
}

TEST_CASE("every chunker covers all tokens and respects the size bound") {
    std::mt19937_64 rng(99);
    ScriptedProvider provider;
    const char* vocab[] = {"red",  "blue", "green", "word", "item",
                           "data", "line", "page",  "note", "case"};
    for (int trial = 0; trial < 25; ++trial) {
        std::string text;
        const int len = 1 + int(rng() % 300);
        for (int i = 0; i < len; ++i) {
            text += vocab[rng() % 10];
            const auto r = rng() % 12;
            if (r < 1) text += ".\n\n";
            else if (r < 2) text += ".\n";
            else if (r < 4) text += ". ";
            else text += ' ';
        }
        const Document doc = make_doc("doc" + std::to_string(trial), text);
        const std::size_t total = tokenize(doc.text).size();
        for (auto family : {ChunkerFamily::fixed_token, ChunkerFamily::recursive_token,
                            ChunkerFamily::cluster_semantic}) {
            ChunkerConfig cfg;
            cfg.family = family;
            cfg.chunk_size = 40;
            cfg.overlap = family == ChunkerFamily::fixed_token ? 10 : 0;
            const auto chunks = chunk_document(doc, cfg, &provider);
            std::size_t covered = 0;
            for (const auto& c : chunks) {
                CHECK(c.token_end - c.token_start <= cfg.chunk_size);
                CHECK(c.token_start <= covered); // no gap
                covered = std::max(covered, c.token_end);
            }
            CHECK(covered == total);
            // Determinism: same inputs, same output.
            CHECK(chunk_document(doc, cfg, &provider) == chunks);
        }
    }
}

TEST_CASE("chunk_corpus returns canonical order and unique ids") {
    ChunkerConfig cfg;
    cfg.family = ChunkerFamily::fixed_token;
    cfg.chunk_size = 3;
    std::vector<Document> docs = {make_doc("b", n_tokens(7)), make_doc("a", n_tokens(4))};
    const auto chunks = chunk_corpus(docs, cfg);
    REQUIRE(chunks.size() == 5);
    for (std::size_t i = 1; i < chunks.size(); ++i)
        CHECK(chunk_order_less(chunks[i - 1], chunks[i]));
    CHECK(chunks[0].doc_id == "a");
    CHECK(chunks.back().chunk_id == "b#6:7");
}

TEST_CASE("chunks round-trip through JSONL") {
    ChunkerConfig cfg;
    cfg.family = ChunkerFamily::recursive_token;
    cfg.chunk_size = 5;
    const auto doc = make_doc("d", "One two three. Four five six seven.\n\nEight nine.");
    const auto chunks = chunk_document(doc, cfg);
    const auto path =
        (std::filesystem::temp_directory_path() / "chunkfilter_chunks_rt.jsonl").string();
    write_chunks_jsonl(path, chunks);
    const auto back = load_chunks_jsonl(path);
    CHECK(back == chunks);
    std::filesystem::remove(path);
}

TEST_CASE("chunk JSONL loader reports malformed lines") {
    const auto path =
        (std::filesystem::temp_directory_path() / "chunkfilter_chunks_bad.jsonl").string();
    {
        std::ofstream out(path);
        out << "{\"chunk_id\": \"a#0:1\", \"doc_id\": \"a\", \"token_start\": 0, "
               "\"token_end\": 1, \"text\": \"x\"}\n"
            << "garbage\n";
    }
    CHECK_THROWS_WITH_AS((void)load_chunks_jsonl(path), doctest::Contains(":2"),
                         std::runtime_error);
    std::filesystem::remove(path);
}
