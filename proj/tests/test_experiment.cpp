#include <doctest.h>

#include "chunkfilter/experiment.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

using namespace chunkfilter;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempTree {
    fs::path root;
    TempTree() {
        root = fs::temp_directory_path() /
               ("cf_exp_" + std::to_string(std::random_device{}()));
        fs::create_directories(root);
    }
    ~TempTree() { fs::remove_all(root); }
};

// Small corpus with built-in duplicates so every strategy has work to do.
void write_fixture_inputs(const fs::path& dir) {
    std::ofstream corpus(dir / "corpus.jsonl");
    const char* sentences[] = {
        "The tide rises at dawn near the old harbor wall and the gulls wake.",
        "Moss covers the north face of the granite boulders after long rain.",
        "Desert winds carve fresh ripples into the high dunes every night.",
        "Merchants carried salt and copper across the mountain passes in autumn.",
    };
    std::vector<std::string> texts;
    for (int d = 0; d < 3; ++d) {
        std::string text;
        for (int s = 0; s < 6; ++s) {
            text += sentences[(d + s) % 4];
            text += ' ';
        }
        texts.push_back(text);
    }
    // doc3 repeats doc0 verbatim, so its chunks duplicate doc0's exactly at
    // every chunk size and feed all the dedupers.
    texts.push_back(texts[0]);
    for (std::size_t d = 0; d < texts.size(); ++d) {
        json line = {{"doc_id", "doc" + std::to_string(d)}, {"text", texts[d]}};
        corpus << line.dump() << "\n";
    }
    corpus.close();

    std::ofstream queries(dir / "queries.jsonl");
    for (int q = 0; q < 3; ++q) {
        json line = {{"query_id", "q" + std::to_string(q)},
                     {"question", sentences[q]},
                     {"reference_text", sentences[q]}};
        queries << line.dump() << "\n";
    }
}

json base_config(const fs::path& dir) {
    return json{{"corpus", (dir / "corpus.jsonl").string()},
                {"queries", (dir / "queries.jsonl").string()},
                {"seed", 11},
                {"out", (dir / "run").string()},
                {"provider", {{"kind", "hash"}, {"dim", 64}}},
                {"chunkers", json::array({{{"family", "fixed_token"},
                                           {"size", 30},
                                           {"overlap", 0}}})},
                {"strategies", json::array({"none", "exact_norm"})},
                {"k", 2}};
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("config parses the single-corpus shorthand") {
    const auto cfg = ExperimentConfig::from_json(
        json{{"corpus", "/data/wiki.jsonl"}, {"queries", "/data/q.jsonl"}, {"seed", 1}});
    REQUIRE(cfg.corpora.size() == 1);
    CHECK(cfg.corpora[0].name == "wiki");  // path stem
    CHECK(cfg.corpora[0].path == "/data/wiki.jsonl");
    CHECK(cfg.corpora[0].format == CorpusFormat::jsonl);
    CHECK(cfg.queries_path == "/data/q.jsonl");
    CHECK(cfg.seed == 1);
    CHECK(cfg.seed_set);
}

TEST_CASE("config parses explicit corpora with names and formats") {
    const auto cfg = ExperimentConfig::from_json(
        json{{"corpora", json::array({{{"name", "alpha"},
                                       {"path", "/a.jsonl"}},
                                      {{"name", "beta"},
                                       {"path", "/b_dir"},
                                       {"format", "plain_dir"}}})},
             {"queries", "/q.jsonl"},
             {"seed", 2}});
    REQUIRE(cfg.corpora.size() == 2);
    CHECK(cfg.corpora[0].name == "alpha");
    CHECK(cfg.corpora[1].format == CorpusFormat::plain_dir);
}

TEST_CASE("config falls back to the default grids") {
    const auto cfg = ExperimentConfig::from_json(
        json{{"corpus", "/c.jsonl"}, {"queries", "/q.jsonl"}, {"seed", 3}});

    // Token chunkers get four size/overlap pairs, cluster_semantic two.
    std::size_t fixed = 0, recursive = 0, cluster = 0;
    for (const auto& entry : cfg.chunkers) {
        if (entry.family == ChunkerFamily::fixed_token) ++fixed;
        if (entry.family == ChunkerFamily::recursive_token) ++recursive;
        if (entry.family == ChunkerFamily::cluster_semantic) ++cluster;
    }
    CHECK(fixed == 4);
    CHECK(recursive == 4);
    CHECK(cluster == 2);

    // Full strategy set with default thresholds.
    CHECK(cfg.strategies.size() == 10);
    for (const auto& s : cfg.strategies) {
        switch (s.strategy) {
        case FilterStrategy::minhash_lsh:
            CHECK(s.thresholds == std::vector<double>{0.6, 0.7, 0.8});
            break;
        case FilterStrategy::random:
            CHECK(s.thresholds == std::vector<double>{0.2, 0.4, 0.6, 0.8});
            break;
        case FilterStrategy::none:
        case FilterStrategy::exact_norm:
        case FilterStrategy::ner_exact:
        case FilterStrategy::ner_half:
            CHECK(s.thresholds.empty());
            break;
        default:  // the similarity family
            CHECK(s.thresholds == std::vector<double>{0.8});
            break;
        }
    }
    CHECK(cfg.k == 5);
    CHECK(cfg.modes == std::vector<TokenMode>{TokenMode::raw});
    CHECK(cfg.provider.kind == "hash");
}

TEST_CASE("config rejects unknown keys") {
    const json top_level_typo = {{"corpus", "/c.jsonl"},
                                 {"queries", "/q.jsonl"},
                                 {"seed", 1},
                                 {"chunker", "typo"}};
    CHECK_THROWS_WITH_AS(ExperimentConfig::from_json(top_level_typo),
                         doctest::Contains("chunker"), std::invalid_argument);

    const json nested_typo = {{"corpus", "/c.jsonl"},
                              {"queries", "/q.jsonl"},
                              {"seed", 1},
                              {"provider", {{"kind", "hash"}, {"dims", 8}}}};
    CHECK_THROWS_AS(ExperimentConfig::from_json(nested_typo), std::invalid_argument);
}

TEST_CASE("validate requires a seed and sane thresholds") {
    auto valid = ExperimentConfig::from_json(json{{"corpus", "/c.jsonl"},
                                                  {"queries", "/q.jsonl"},
                                                  {"seed", 1},
                                                  {"out", "/tmp/cf_run"}});
    valid.validate();

    auto no_seed = valid;
    no_seed.seed_set = false;
    CHECK_THROWS_WITH_AS(no_seed.validate(), doctest::Contains("seed"),
                         std::invalid_argument);

    auto bad_tau = valid;
    bad_tau.strategies = {{FilterStrategy::similarity, {1.2}}};
    CHECK_THROWS_AS(bad_tau.validate(), std::invalid_argument);

    auto bad_random = valid;
    bad_random.strategies = {{FilterStrategy::random, {1.0}}};
    CHECK_THROWS_AS(bad_random.validate(), std::invalid_argument);

    auto thresholded_none = valid;
    thresholded_none.strategies = {{FilterStrategy::exact_norm, {0.5}}};
    CHECK_THROWS_AS(thresholded_none.validate(), std::invalid_argument);

    auto bad_overlap = valid;
    bad_overlap.chunkers = {{ChunkerFamily::fixed_token, 100, 100}};
    CHECK_THROWS_AS(bad_overlap.validate(), std::invalid_argument);

    auto no_queries = valid;
    no_queries.queries_path.clear();
    CHECK_THROWS_AS(no_queries.validate(), std::invalid_argument);
}

TEST_CASE("config echo reports every effective field") {
    const auto cfg = ExperimentConfig::from_json(
        json{{"corpus", "/c.jsonl"}, {"queries", "/q.jsonl"}, {"seed", 9}});
    const auto echo = cfg.echo();
    CHECK(echo["seed"] == 9);
    CHECK(echo["k"] == 5);
    CHECK(echo["provider"]["kind"] == "hash");
    CHECK(echo["modes"][0] == "raw");
    CHECK(echo["corpora"][0]["name"] == "c");
    CHECK(echo["chunkers"].size() == 10);
    CHECK(echo["strategies"].size() == 10);
}

TEST_CASE("run_grid executes cells with the baseline first") {
    TempTree tmp;
    write_fixture_inputs(tmp.root);
    const auto cfg = ExperimentConfig::from_json(base_config(tmp.root));
    const auto manifest = run_grid(cfg);

    CHECK(manifest.all_ok());
    REQUIRE(manifest.cells.size() == 2);
    CHECK(manifest.cells[0].strategy == FilterStrategy::none);
    CHECK(manifest.cells[0].from_config);  // "none" was configured explicitly
    CHECK(manifest.cells[1].strategy == FilterStrategy::exact_norm);
    CHECK(manifest.cells[1].baseline_id == manifest.cells[0].id);
    CHECK(manifest.cells[0].id == "corpus--fixed_token-30-0--none");
    CHECK(manifest.cells[1].id == "corpus--fixed_token-30-0--exact_norm");

    for (const auto& cell : manifest.cells) {
        CHECK(cell.status == "ok");
        const fs::path dir = tmp.root / "run" / cell.dir;
        CHECK(fs::exists(dir / "chunks.jsonl"));
        CHECK(fs::exists(dir / "filter_report.json"));
        CHECK(fs::exists(dir / "eval.jsonl"));
        CHECK(fs::exists(dir / "aggregate.json"));
    }
    CHECK(fs::exists(tmp.root / "run" / "manifest.json"));

    // The duplicate paragraphs guarantee exact_norm removed something.
    const auto report = load_filter_report(
        (tmp.root / "run" / manifest.cells[1].dir / "filter_report.json").string());
    CHECK(report.reduction > 0.0);

    // Table: one file, baseline row first, then exact_norm.
    const fs::path table =
        tmp.root / "run" / "tables" / "corpus__FixedTokenChunker_30_0.csv";
    REQUIRE(fs::exists(table));
    std::ifstream in(table);
    std::string header, row1, row2;
    std::getline(in, header);
    std::getline(in, row1);
    std::getline(in, row2);
    CHECK(header == "method,threshold,reduction_percent,precision,recall,iou,oracle");
    CHECK(row1.rfind("No filtering,", 0) == 0);
    CHECK(row2.rfind("ExactNorm,", 0) == 0);

    // Tradeoff: exact_norm is threshold-free, a single row with empty slot.
    const fs::path tradeoff =
        tmp.root / "run" / "tradeoff" / "corpus__fixed_token_30_0__exact_norm.csv";
    REQUIRE(fs::exists(tradeoff));
    std::ifstream tin(tradeoff);
    std::string theader, trow;
    std::getline(tin, theader);
    std::getline(tin, trow);
    CHECK(theader == "threshold,reduction_percent,precision,recall,iou,oracle");
    CHECK(trow.rfind(",", 0) == 0);
}

TEST_CASE("run_grid synthesizes a baseline when none is not configured") {
    TempTree tmp;
    write_fixture_inputs(tmp.root);
    auto j = base_config(tmp.root);
    j["strategies"] = json::array({"exact_norm"});
    const auto manifest = run_grid(ExperimentConfig::from_json(j));

    REQUIRE(manifest.cells.size() == 2);
    CHECK(manifest.cells[0].strategy == FilterStrategy::none);
    CHECK(!manifest.cells[0].from_config);  // implicit baseline
    CHECK(manifest.cells[1].strategy == FilterStrategy::exact_norm);
}

TEST_CASE("manifest round-trips through json") {
    TempTree tmp;
    write_fixture_inputs(tmp.root);
    const auto manifest = run_grid(ExperimentConfig::from_json(base_config(tmp.root)));

    const auto loaded = load_manifest((tmp.root / "run" / "manifest.json").string());
    CHECK(loaded.seed == manifest.seed);
    CHECK(loaded.provider_name == manifest.provider_name);
    CHECK(loaded.config_echo == manifest.config_echo);
    REQUIRE(loaded.cells.size() == manifest.cells.size());
    for (std::size_t i = 0; i < loaded.cells.size(); ++i) {
        CHECK(loaded.cells[i].id == manifest.cells[i].id);
        CHECK(loaded.cells[i].corpus == manifest.cells[i].corpus);
        CHECK(loaded.cells[i].strategy == manifest.cells[i].strategy);
        CHECK(loaded.cells[i].threshold == manifest.cells[i].threshold);
        CHECK(loaded.cells[i].baseline_id == manifest.cells[i].baseline_id);
        CHECK(loaded.cells[i].from_config == manifest.cells[i].from_config);
        CHECK(loaded.cells[i].status == manifest.cells[i].status);
        CHECK(loaded.cells[i].dir == manifest.cells[i].dir);
    }
    CHECK(loaded.all_ok());
}

TEST_CASE("identical runs produce byte-identical tables and tradeoff data") {
    TempTree tmp;
    write_fixture_inputs(tmp.root);

    auto j = base_config(tmp.root);
    j["strategies"] =
        json::array({"none", "exact_norm",
                     json{{"name", "random"}, {"thresholds", json::array({0.2, 0.4})}},
                     json{{"name", "similarity"}, {"threshold", 0.9}}});
    j["jobs"] = 2;

    j["out"] = (tmp.root / "run_a").string();
    const auto first = run_grid(ExperimentConfig::from_json(j));
    j["out"] = (tmp.root / "run_b").string();
    const auto second = run_grid(ExperimentConfig::from_json(j));

    CHECK(first.all_ok());
    CHECK(second.all_ok());
    REQUIRE(first.cells.size() == second.cells.size());

    for (const char* sub : {"tables", "tradeoff"}) {
        const fs::path dir_a = tmp.root / "run_a" / sub;
        const fs::path dir_b = tmp.root / "run_b" / sub;
        std::vector<fs::path> files_a;
        for (const auto& entry : fs::directory_iterator(dir_a)) {
            files_a.push_back(entry.path());
        }
        std::sort(files_a.begin(), files_a.end());
        CHECK(!files_a.empty());
        for (const auto& file : files_a) {
            const fs::path twin = dir_b / file.filename();
            REQUIRE(fs::exists(twin));
            CHECK(slurp(file) == slurp(twin));
        }
    }

    // Cell artifacts replay byte-for-byte as well.
    for (const auto& cell : first.cells) {
        for (const char* artifact :
             {"chunks.jsonl", "filter_report.json", "eval.jsonl", "aggregate.json"}) {
            CHECK(slurp(tmp.root / "run_a" / cell.dir / artifact) ==
                  slurp(tmp.root / "run_b" / cell.dir / artifact));
        }
    }
}

TEST_CASE("tables order strategies canonically and sort thresholds") {
    TempTree tmp;
    write_fixture_inputs(tmp.root);
    auto j = base_config(tmp.root);
    // Scrambled on purpose; the table must come out in canonical order.
    j["strategies"] = json::array(
        {json{{"name", "random"}, {"thresholds", json::array({0.4, 0.2})}},
         "ner_exact", json{{"name", "similarity"}, {"threshold", 0.9}}, "none",
         "exact_norm"});
    const auto manifest = run_grid(ExperimentConfig::from_json(j));
    CHECK(manifest.all_ok());

    const fs::path table =
        tmp.root / "run" / "tables" / "corpus__FixedTokenChunker_30_0.csv";
    std::ifstream in(table);
    std::string line;
    std::getline(in, line);  // header
    std::vector<std::string> methods;
    std::vector<std::string> thresholds;
    while (std::getline(in, line)) {
        const auto first_comma = line.find(',');
        const auto second_comma = line.find(',', first_comma + 1);
        methods.push_back(line.substr(0, first_comma));
        thresholds.push_back(line.substr(first_comma + 1, second_comma - first_comma - 1));
    }
    CHECK(methods == std::vector<std::string>{"No filtering", "ExactNorm", "NER Exact",
                                              "Similarity", "Random", "Random"});
    CHECK(thresholds[4] == "0.2");
    CHECK(thresholds[5] == "0.4");
}

TEST_CASE("emit functions rebuild outputs from a loaded manifest") {
    TempTree tmp;
    write_fixture_inputs(tmp.root);
    const auto run_dir = (tmp.root / "run").string();
    run_grid(ExperimentConfig::from_json(base_config(tmp.root)));

    const auto table_path =
        tmp.root / "run" / "tables" / "corpus__FixedTokenChunker_30_0.csv";
    const auto original = slurp(table_path);
    fs::remove_all(tmp.root / "run" / "tables");
    fs::remove_all(tmp.root / "run" / "tradeoff");

    const auto manifest = load_manifest((tmp.root / "run" / "manifest.json").string());
    const auto tables = emit_tables(manifest, run_dir);
    const auto tradeoff = emit_tradeoff_data(manifest, run_dir);
    CHECK(tables.size() == 1);
    // One series per configured strategy; the baseline is the anchor point.
    CHECK(tradeoff.size() == 2);
    CHECK(slurp(table_path) == original);
}

TEST_CASE("emit_tables fails loudly when no cell completed") {
    RunManifest manifest;
    manifest.config_echo = json::object();
    CellResult cell;
    cell.id = "x";
    cell.status = "failed";
    manifest.cells.push_back(cell);
    TempTree tmp;
    CHECK_THROWS_AS(emit_tables(manifest, tmp.root.string()), std::runtime_error);
}
