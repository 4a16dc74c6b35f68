// chunkfilter: chunk, dedupe, index, and evaluate retrieval corpora.
//
// Every subcommand works on persisted intermediates, so each pipeline stage
// can run (and be inspected) on its own:
//
//   chunkfilter chunk   --corpus docs.jsonl --family recursive_token --size 400 --out chunks.jsonl
//   chunkfilter filter  --chunks chunks.jsonl --strategy similarity --threshold 0.8 --out cell/
//   chunkfilter index   --chunks cell/chunks.jsonl --out index/
//   chunkfilter eval    --index index/ --queries queries.jsonl --out eval.jsonl
//   chunkfilter run     --config experiment.json
//   chunkfilter report  --run out/

#include "chunkfilter/experiment.hpp"
#include "chunkfilter/hashing.hpp"
#include "chunkfilter/topics.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

using namespace chunkfilter;
namespace fs = std::filesystem;

void add_provider_options(CLI::App* cmd, ProviderConfig& cfg) {
    cmd->add_option("--provider", cfg.kind, "Embedding provider: hash or remote")
        ->check(CLI::IsMember({"hash", "remote"}))
        ->capture_default_str();
    cmd->add_option("--dim", cfg.dim, "Embedding dimension")->capture_default_str();
    cmd->add_option("--provider-seed", cfg.seed, "Hash provider seed")->capture_default_str();
    cmd->add_option("--model", cfg.model, "Remote model name");
    cmd->add_option("--url", cfg.url, "Remote endpoint (default: $CHUNKFILTER_EMBED_URL)");
    cmd->add_option("--batch-limit", cfg.batch_limit, "Remote request batch size")
        ->capture_default_str();
}

Stopwords load_stopwords(const std::string& path) {
    return path.empty() ? Stopwords::builtin_english() : Stopwords::from_file(path);
}

struct ChunkArgs {
    std::string corpus;
    std::string format = "jsonl";
    std::string family = "fixed_token";
    std::size_t size = 400;
    std::size_t overlap = 0;
    double boundary_threshold = 0.3;
    ProviderConfig provider;
    std::string out;
};

int run_chunk(const ChunkArgs& args) {
    ChunkerConfig cfg;
    cfg.family = chunker_family_from_name(args.family);
    cfg.chunk_size = args.size;
    cfg.overlap = args.overlap;
    cfg.boundary_threshold = args.boundary_threshold;
    cfg.validate();

    const auto docs = load_corpus(args.corpus, corpus_format_from_name(args.format));
    std::unique_ptr<EmbeddingProvider> provider;
    if (cfg.family == ChunkerFamily::cluster_semantic) provider = make_provider(args.provider);
    const auto chunks = chunk_corpus(docs, cfg, provider.get());
    write_chunks_jsonl(args.out, chunks);
    std::cerr << "chunked " << docs.size() << " documents into " << chunks.size()
              << " chunks -> " << args.out << "\n";
    return 0;
}

struct FilterArgs {
    std::string chunks;
    std::string strategy = "none";
    std::optional<double> threshold;
    std::uint64_t seed = 0;
    std::string extractor = "heuristic";
    std::string annotations;
    std::string corpus; // only for annotation span lookup
    std::string format = "jsonl";
    std::optional<std::size_t> n_topics;
    std::string scope = "corpus";
    std::size_t shingle_width = 3;
    std::size_t num_hashes = 128;
    std::size_t bands = 32;
    std::size_t rows = 4;
    ProviderConfig provider;
    std::string out;
};

int run_filter(const FilterArgs& args) {
    const auto chunks = load_chunks_jsonl(args.chunks);
    const auto strategy = strategy_from_name(args.strategy);

    auto need_threshold = [&](const char* what) {
        if (!args.threshold)
            throw std::invalid_argument(std::string("--threshold is required for ") + what);
        return *args.threshold;
    };

    std::vector<EntitySet> entities;
    auto compute_entities = [&]() -> const std::vector<EntitySet>& {
        if (!entities.empty() || chunks.empty()) return entities;
        if (entity_extractor_from_name(args.extractor) == EntityExtractor::annotations_file) {
            if (args.annotations.empty() || args.corpus.empty())
                throw std::invalid_argument(
                    "--entities annotations_file needs --annotations and --corpus");
            const auto store = AnnotationStore::load(args.annotations);
            const auto docs = load_corpus(args.corpus, corpus_format_from_name(args.format));
            entities = store.entities_for(chunks, docs);
        } else {
            entities = extract_entities_heuristic(chunks);
        }
        return entities;
    };

    std::vector<Embedding> embeddings;
    std::unique_ptr<EmbeddingProvider> provider;
    auto compute_embeddings = [&]() -> const std::vector<Embedding>& {
        if (!embeddings.empty() || chunks.empty()) return embeddings;
        provider = make_provider(args.provider);
        std::vector<std::string> texts;
        texts.reserve(chunks.size());
        for (const auto& c : chunks) texts.push_back(c.text);
        embeddings = provider->embed(texts);
        return embeddings;
    };

    std::optional<TopicAssignment> topics;
    auto compute_topics = [&]() -> const TopicAssignment& {
        if (!topics) {
            const auto& vectors = compute_embeddings();
            const std::size_t n =
                args.n_topics ? *args.n_topics : default_topic_count(chunks.size());
            topics = assign_topics(chunks, vectors, n, splitmix64(args.seed ^ fnv1a64("topics")));
        }
        return *topics;
    };

    FilterReport report;
    switch (strategy) {
    case FilterStrategy::none: report = filter_none(chunks); break;
    case FilterStrategy::exact_norm: report = filter_exact_norm(chunks); break;
    case FilterStrategy::minhash_lsh: {
        MinHashConfig mh;
        mh.shingle_width = args.shingle_width;
        mh.num_hashes = args.num_hashes;
        mh.bands = args.bands;
        mh.rows = args.rows;
        mh.jaccard_threshold = need_threshold("minhash_lsh");
        mh.seed = splitmix64(args.seed ^ fnv1a64("minhash"));
        report = filter_minhash_lsh(chunks, mh);
        break;
    }
    case FilterStrategy::random:
        report = filter_random(chunks, need_threshold("random"), args.seed);
        break;
    case FilterStrategy::ner_exact: report = filter_ner_exact(chunks, compute_entities()); break;
    case FilterStrategy::ner_half: report = filter_ner_half(chunks, compute_entities()); break;
    case FilterStrategy::similarity:
    case FilterStrategy::similarity_topics:
    case FilterStrategy::similarity_ner:
    case FilterStrategy::similarity_topics_ner: {
        SimilarityOptions options;
        options.tau = need_threshold("similarity filtering");
        options.scope = similarity_scope_from_name(args.scope);
        if (strategy == FilterStrategy::similarity_topics ||
            strategy == FilterStrategy::similarity_topics_ner)
            options.topics = &compute_topics();
        if (strategy == FilterStrategy::similarity_ner ||
            strategy == FilterStrategy::similarity_topics_ner) {
            options.entities = &compute_entities();
            options.entity_mode = EntityMode::overlap_nonempty;
        }
        report = filter_similarity(chunks, compute_embeddings(), options);
        break;
    }
    }

    fs::create_directories(args.out);
    write_filter_report((fs::path(args.out) / "filter_report.json").string(), report);
    std::set<std::string> kept(report.kept.begin(), report.kept.end());
    std::vector<Chunk> surviving;
    surviving.reserve(report.kept.size());
    for (const auto& c : chunks)
        if (kept.count(c.chunk_id)) surviving.push_back(c);
    write_chunks_jsonl((fs::path(args.out) / "chunks.jsonl").string(), surviving);
    std::cerr << "kept " << report.kept.size() << " of " << chunks.size() << " chunks ("
              << format_fixed3(100.0 * report.reduction) << "% removed) -> " << args.out << "\n";
    return 0;
}

struct IndexArgs {
    std::string chunks;
    std::string stopwords;
    ProviderConfig provider;
    std::string out;
};

int run_index(const IndexArgs& args) {
    const auto chunks = load_chunks_jsonl(args.chunks);
    const auto provider = make_provider(args.provider);
    const auto stopwords = load_stopwords(args.stopwords);
    const auto index = VectorIndex::build(chunks, *provider, stopwords);
    index.save(args.out);
    std::cerr << "indexed " << index.size() << " chunks (" << index.provider_name() << ", dim "
              << index.dim() << ") -> " << args.out << "\n";
    return 0;
}

struct EvalArgs {
    std::string index_dir;
    std::string queries;
    std::size_t k = 5;
    std::vector<std::string> modes = {"raw"};
    std::string stopwords;
    std::string filter_report;
    std::string corpus_name;
    ProviderConfig provider;
    std::string out;
    std::string aggregate_out;
};

int run_eval(const EvalArgs& args) {
    const auto stopwords = load_stopwords(args.stopwords);
    const auto index = VectorIndex::load(args.index_dir, stopwords);
    const auto queries = load_queries(args.queries);
    const auto provider = make_provider(args.provider);
    RetrievalConfig rc;
    rc.k = args.k;
    rc.validate();

    std::vector<EvalRecord> records;
    std::vector<AggregateReport> aggregates;
    FilterReport report;
    if (!args.filter_report.empty())
        report = load_filter_report(args.filter_report);
    else
        for (const auto& c : index.chunks()) report.kept.push_back(c.chunk_id);
    AggregateMeta meta;
    meta.corpus = args.corpus_name;
    for (const auto& mode_name : args.modes) {
        const auto mode = token_mode_from_name(mode_name);
        std::vector<EvalRecord> mode_records;
        mode_records.reserve(queries.size());
        for (const auto& q : queries)
            mode_records.push_back(evaluate_query(index, q, *provider, rc, mode, stopwords));
        aggregates.push_back(aggregate(mode_records, report, meta));
        records.insert(records.end(), mode_records.begin(), mode_records.end());
    }
    write_eval_jsonl(args.out, records);
    if (!args.aggregate_out.empty()) write_aggregates_json(args.aggregate_out, aggregates);
    std::cerr << "evaluated " << queries.size() << " queries x " << args.modes.size()
              << " mode(s) -> " << args.out << "\n";
    for (const auto& a : aggregates)
        std::cerr << "  " << token_mode_name(a.mode) << ": precision "
                  << format_fixed3(a.precision) << ", recall " << format_fixed3(a.recall)
                  << ", iou " << format_fixed3(a.iou) << ", oracle "
                  << format_fixed3(a.oracle_recall) << "\n";
    return 0;
}

struct RunArgs {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<int> jobs;
    std::string provider_kind;
};

int run_run(const RunArgs& args) {
    auto cfg = ExperimentConfig::from_json_file(args.config);
    if (args.seed) {
        cfg.seed = *args.seed;
        cfg.seed_set = true;
    }
    if (!args.out.empty()) cfg.out_dir = args.out;
    if (args.jobs) cfg.jobs = *args.jobs;
    if (!args.provider_kind.empty()) cfg.provider.kind = args.provider_kind;

    const auto manifest = run_grid(cfg);
    std::size_t ok = 0;
    for (const auto& cell : manifest.cells) {
        if (cell.status == "ok") {
            ++ok;
        } else {
            std::cerr << "cell " << cell.id << " failed: " << cell.error << "\n";
        }
    }
    std::cerr << ok << "/" << manifest.cells.size() << " cells completed -> " << cfg.out_dir
              << "\n";
    return manifest.all_ok() ? 0 : 1;
}

int run_report(const std::string& run_dir) {
    const auto manifest = load_manifest((fs::path(run_dir) / "manifest.json").string());
    const auto tables = emit_tables(manifest, run_dir);
    const auto tradeoff = emit_tradeoff_data(manifest, run_dir);
    std::cerr << "wrote " << tables.size() << " table(s) and " << tradeoff.size()
              << " trade-off series -> " << run_dir << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Chunk, filter, index, and evaluate retrieval corpora"};
    app.require_subcommand(1);
    int exit_code = 0;

    ChunkArgs chunk_args;
    auto* chunk_cmd = app.add_subcommand("chunk", "Split a corpus into chunks");
    chunk_cmd->add_option("--corpus", chunk_args.corpus, "Corpus path")->required();
    chunk_cmd->add_option("--format", chunk_args.format, "Corpus format: jsonl or plain_dir")
        ->capture_default_str();
    chunk_cmd
        ->add_option("--family", chunk_args.family,
                     "Chunker: fixed_token, recursive_token, or cluster_semantic")
        ->capture_default_str();
    chunk_cmd->add_option("--size", chunk_args.size, "Chunk size in tokens")
        ->capture_default_str();
    chunk_cmd->add_option("--overlap", chunk_args.overlap, "Overlap in tokens")
        ->capture_default_str();
    chunk_cmd
        ->add_option("--boundary-threshold", chunk_args.boundary_threshold,
                     "cluster_semantic cosine boundary")
        ->capture_default_str();
    add_provider_options(chunk_cmd, chunk_args.provider);
    chunk_cmd->add_option("--out", chunk_args.out, "Output chunks JSONL")->required();
    chunk_cmd->callback([&] { exit_code = run_chunk(chunk_args); });

    FilterArgs filter_args;
    auto* filter_cmd = app.add_subcommand("filter", "Drop redundant chunks");
    filter_cmd->add_option("--chunks", filter_args.chunks, "Chunks JSONL")->required();
    filter_cmd->add_option("--strategy", filter_args.strategy, "Filtering strategy")
        ->capture_default_str();
    filter_cmd->add_option("--threshold", filter_args.threshold,
                           "Strategy threshold (similarity tau, Jaccard, or random target)");
    filter_cmd->add_option("--seed", filter_args.seed, "Seed for seeded strategies")
        ->capture_default_str();
    filter_cmd
        ->add_option("--entities", filter_args.extractor,
                     "Entity source: heuristic or annotations_file")
        ->capture_default_str();
    filter_cmd->add_option("--annotations", filter_args.annotations, "Annotations JSONL");
    filter_cmd->add_option("--corpus", filter_args.corpus,
                           "Corpus path (annotation span lookup only)");
    filter_cmd->add_option("--format", filter_args.format, "Corpus format")
        ->capture_default_str();
    filter_cmd->add_option("--n-topics", filter_args.n_topics,
                           "Topic count (default: scale heuristic)");
    filter_cmd
        ->add_option("--scope", filter_args.scope,
                     "Similarity comparison scope: corpus or document")
        ->check(CLI::IsMember({"corpus", "document"}))
        ->capture_default_str();
    filter_cmd->add_option("--shingle-width", filter_args.shingle_width, "MinHash shingle width")
        ->capture_default_str();
    filter_cmd->add_option("--num-hashes", filter_args.num_hashes, "MinHash signature length")
        ->capture_default_str();
    filter_cmd->add_option("--bands", filter_args.bands, "LSH bands")->capture_default_str();
    filter_cmd->add_option("--rows", filter_args.rows, "LSH rows per band")
        ->capture_default_str();
    add_provider_options(filter_cmd, filter_args.provider);
    filter_cmd
        ->add_option("--out", filter_args.out,
                     "Output directory (chunks.jsonl + filter_report.json)")
        ->required();
    filter_cmd->callback([&] { exit_code = run_filter(filter_args); });

    IndexArgs index_args;
    auto* index_cmd = app.add_subcommand("index", "Embed chunks into a vector index");
    index_cmd->add_option("--chunks", index_args.chunks, "Chunks JSONL")->required();
    index_cmd->add_option("--stopwords", index_args.stopwords,
                          "Stopword list (default: built-in English)");
    add_provider_options(index_cmd, index_args.provider);
    index_cmd->add_option("--out", index_args.out, "Output index directory")->required();
    index_cmd->callback([&] { exit_code = run_index(index_args); });

    EvalArgs eval_args;
    auto* eval_cmd = app.add_subcommand("eval", "Score retrieval against reference passages");
    eval_cmd->add_option("--index", eval_args.index_dir, "Index directory")->required();
    eval_cmd->add_option("--queries", eval_args.queries, "Queries JSONL")->required();
    eval_cmd->add_option("--k", eval_args.k, "Top-k retrieval depth")->capture_default_str();
    eval_cmd->add_option("--mode", eval_args.modes, "Token modes: raw and/or preprocessed")
        ->capture_default_str();
    eval_cmd->add_option("--stopwords", eval_args.stopwords,
                         "Stopword list (default: built-in English)");
    eval_cmd->add_option("--filter-report", eval_args.filter_report,
                         "Filter report feeding the reduction column");
    eval_cmd->add_option("--corpus-name", eval_args.corpus_name, "Corpus label for aggregates");
    add_provider_options(eval_cmd, eval_args.provider);
    eval_cmd->add_option("--out", eval_args.out, "Output eval JSONL")->required();
    eval_cmd->add_option("--aggregate", eval_args.aggregate_out, "Optional aggregate JSON path");
    eval_cmd->callback([&] { exit_code = run_eval(eval_args); });

    RunArgs run_args;
    auto* run_cmd = app.add_subcommand("run", "Execute a full experiment grid");
    run_cmd->add_option("--config", run_args.config, "Experiment config JSON")->required();
    run_cmd->add_option("--seed", run_args.seed, "Override the config seed");
    run_cmd->add_option("--out", run_args.out, "Override the output directory");
    run_cmd->add_option("--jobs", run_args.jobs, "Worker pool width");
    run_cmd->add_option("--provider", run_args.provider_kind, "Override the provider kind")
        ->check(CLI::IsMember({"hash", "remote"}));
    run_cmd->callback([&] { exit_code = run_run(run_args); });

    std::string report_dir;
    auto* report_cmd = app.add_subcommand("report", "Re-emit tables from a finished run");
    report_cmd->add_option("--run", report_dir, "Run directory containing manifest.json")
        ->required();
    report_cmd->callback([&] { exit_code = run_report(report_dir); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return exit_code;
}
