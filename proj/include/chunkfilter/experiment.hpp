#pragma once

#include "chunkfilter/chunking.hpp"
#include "chunkfilter/corpus.hpp"
#include "chunkfilter/embedding.hpp"
#include "chunkfilter/entities.hpp"
#include "chunkfilter/evaluation.hpp"
#include "chunkfilter/filtering.hpp"

#include <json.hpp>

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace chunkfilter {

struct ProviderConfig {
    std::string kind = "hash"; // "hash" or "remote"
    std::size_t dim = 256;
    std::uint64_t seed = 0;    // hash provider
    std::string model;         // remote provider
    std::string url;           // remote; empty falls back to CHUNKFILTER_EMBED_URL
    std::size_t batch_limit = 64;
};

std::unique_ptr<EmbeddingProvider> make_provider(const ProviderConfig& cfg);

struct CorpusSpec {
    std::string name;
    std::string path;
    CorpusFormat format = CorpusFormat::jsonl;
};

struct ChunkerGridEntry {
    ChunkerFamily family = ChunkerFamily::fixed_token;
    std::size_t chunk_size = 400;
    std::size_t overlap = 0;
};

struct StrategySpec {
    FilterStrategy strategy = FilterStrategy::none;
    std::vector<double> thresholds; // empty for threshold-free strategies
};

// Effective run configuration. Fields omitted from the JSON fall back to the
// default grid: sizes 200/0, 400/0, 400/200, 800/400 for the token chunkers
// (200/0 and 400/0 for cluster_semantic), the full strategy set with
// similarity tau 0.8, MinHash thresholds 0.6/0.7/0.8, random targets
// 0.2/0.4/0.6/0.8, and k = 5. The seed has no default.
struct ExperimentConfig {
    std::vector<CorpusSpec> corpora;
    std::string queries_path;
    std::vector<ChunkerGridEntry> chunkers;
    std::vector<StrategySpec> strategies;
    ProviderConfig provider;
    std::size_t k = 5;
    std::vector<TokenMode> modes = {TokenMode::raw};
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out_dir;
    int jobs = 1;
    std::optional<std::size_t> n_topics; // default: scale heuristic per chunk set
    EntityExtractor extractor = EntityExtractor::heuristic;
    std::string annotations_path;
    std::string stopwords_path; // empty: built-in English list
    double boundary_threshold = 0.3;
    std::size_t shingle_width = 3;
    std::size_t num_hashes = 128;
    std::size_t bands = 32;
    std::size_t rows = 4;
    bool cache_embeddings = true;

    static ExperimentConfig from_json_file(const std::string& path);
    static ExperimentConfig from_json(const nlohmann::json& j);
    void validate() const;
    nlohmann::ordered_json echo() const; // normalized config for the manifest
};

struct CellResult {
    std::string id;
    std::string corpus;
    ChunkerGridEntry chunker;
    FilterStrategy strategy = FilterStrategy::none;
    std::optional<double> threshold;
    std::string baseline_id;
    bool from_config = true; // false for an implicit baseline cell
    std::string status = "pending"; // "ok" or "failed"
    std::string error;
    std::string dir; // relative to the run root, e.g. "cells/<id>"
};

struct RunManifest {
    std::uint64_t seed = 0;
    std::string provider_name;
    nlohmann::ordered_json config_echo;
    std::vector<CellResult> cells;

    bool all_ok() const;
};

// Executes the full grid under cfg.out_dir: every cell chunk -> filter ->
// index -> evaluate, baselines first, failures isolated per cell. Writes
// manifest.json, cells/<id>/{chunks.jsonl, filter_report.json, eval.jsonl,
// aggregate.json}, then tables/ and tradeoff/ from the completed cells.
RunManifest run_grid(const ExperimentConfig& cfg);

void write_manifest(const std::string& path, const RunManifest& manifest);
RunManifest load_manifest(const std::string& path);

// One CSV per (corpus, chunker, size, overlap) under <root>/tables, rows in
// the fixed strategy order, metrics from the first configured eval mode.
// Missing cells are skipped with a note on stderr. Returns written paths.
std::vector<std::string> emit_tables(const RunManifest& manifest, const std::string& root_dir);

// One CSV per (corpus, chunker config, strategy) under <root>/tradeoff with
// threshold-sorted rows, ready to plot. Returns written paths.
std::vector<std::string> emit_tradeoff_data(const RunManifest& manifest,
                                            const std::string& root_dir);

} // namespace chunkfilter
