#include "chunkfilter/experiment.hpp"

#include "chunkfilter/hashing.hpp"
#include "chunkfilter/topics.hpp"

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <thread>

namespace chunkfilter {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string sanitize_component(std::string_view raw) {
    std::string out;
    out.reserve(raw.size());
    for (char c : raw) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                        (c >= '0' && c <= '9') || c == '-' || c == '_' || c == '.';
        out.push_back(ok ? c : '_');
    }
    return out.empty() ? std::string("unnamed") : out;
}

std::string number_token(double v) {
    json j = v;
    std::string s = j.dump();
    for (char& c : s)
        if (c == '.') c = 'p';
    return s;
}

std::string threshold_text(const std::optional<double>& t) {
    if (!t) return "";
    json j = *t;
    return j.dump();
}

std::string cell_id(const std::string& corpus, const ChunkerGridEntry& chunker,
                    FilterStrategy strategy, const std::optional<double>& threshold) {
    std::string id = sanitize_component(corpus) + "--" + chunker_family_name(chunker.family) +
                     "-" + std::to_string(chunker.chunk_size) + "-" +
                     std::to_string(chunker.overlap) + "--" + strategy_name(strategy);
    if (threshold) id += "-t" + number_token(*threshold);
    return id;
}

std::vector<ChunkerGridEntry> default_chunker_grid() {
    std::vector<ChunkerGridEntry> grid;
    const std::pair<std::size_t, std::size_t> token_sizes[] = {
        {200, 0}, {400, 0}, {400, 200}, {800, 400}};
    for (auto family : {ChunkerFamily::fixed_token, ChunkerFamily::recursive_token})
        for (auto [s, o] : token_sizes) grid.push_back({family, s, o});
    grid.push_back({ChunkerFamily::cluster_semantic, 200, 0});
    grid.push_back({ChunkerFamily::cluster_semantic, 400, 0});
    return grid;
}

std::vector<double> default_thresholds(FilterStrategy s) {
    switch (s) {
    case FilterStrategy::minhash_lsh: return {0.6, 0.7, 0.8};
    case FilterStrategy::random: return {0.2, 0.4, 0.6, 0.8};
    case FilterStrategy::similarity:
    case FilterStrategy::similarity_topics:
    case FilterStrategy::similarity_ner:
    case FilterStrategy::similarity_topics_ner: return {0.8};
    default: return {};
    }
}

std::vector<StrategySpec> default_strategy_grid() {
    std::vector<StrategySpec> grid;
    for (auto s : {FilterStrategy::none, FilterStrategy::exact_norm, FilterStrategy::minhash_lsh,
                   FilterStrategy::ner_exact, FilterStrategy::ner_half, FilterStrategy::similarity,
                   FilterStrategy::similarity_topics, FilterStrategy::similarity_ner,
                   FilterStrategy::similarity_topics_ner, FilterStrategy::random})
        grid.push_back({s, default_thresholds(s)});
    return grid;
}

// Row rank inside a table: baseline, ExactNorm, MinHash-LSH, the NER pair,
// the similarity family, Random last.
int strategy_rank(FilterStrategy s) {
    switch (s) {
    case FilterStrategy::none: return 0;
    case FilterStrategy::exact_norm: return 1;
    case FilterStrategy::minhash_lsh: return 2;
    case FilterStrategy::ner_exact: return 3;
    case FilterStrategy::ner_half: return 4;
    case FilterStrategy::similarity: return 5;
    case FilterStrategy::similarity_topics: return 6;
    case FilterStrategy::similarity_ner: return 7;
    case FilterStrategy::similarity_topics_ner: return 8;
    case FilterStrategy::random: return 9;
    }
    return 99;
}

bool strategy_needs_entities(FilterStrategy s) {
    return s == FilterStrategy::similarity_ner || s == FilterStrategy::similarity_topics_ner ||
           s == FilterStrategy::ner_exact || s == FilterStrategy::ner_half;
}

bool strategy_needs_topics(FilterStrategy s) {
    return s == FilterStrategy::similarity_topics || s == FilterStrategy::similarity_topics_ner;
}

void require_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    for (const auto& [key, value] : j.items())
        if (!allowed.count(key))
            throw std::invalid_argument("config: unknown key \"" + key + "\" in " + where);
}

} // namespace

std::unique_ptr<EmbeddingProvider> make_provider(const ProviderConfig& cfg) {
    if (cfg.kind == "hash")
        return std::make_unique<HashEmbeddingProvider>(HashProviderConfig{cfg.dim, cfg.seed});
    if (cfg.kind == "remote") {
        auto rc = RemoteEmbeddingProvider::config_from_env(cfg.model, cfg.dim);
        if (!cfg.url.empty()) rc.url = cfg.url;
        rc.batch_limit = cfg.batch_limit;
        return std::make_unique<RemoteEmbeddingProvider>(std::move(rc));
    }
    throw std::invalid_argument("unknown provider kind: " + cfg.kind);
}

ExperimentConfig ExperimentConfig::from_json_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open config: " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw std::runtime_error("malformed config " + path + ": " + e.what());
    }
    return from_json(j);
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
    require_keys(j,
                 {"corpus", "corpora", "queries", "chunkers", "strategies", "provider", "k",
                  "modes", "seed", "out", "jobs", "n_topics", "entity_extractor", "annotations",
                  "stopwords", "boundary_threshold", "minhash", "cache_embeddings"},
                 "top level");
    ExperimentConfig cfg;

    auto corpus_spec = [](const json& c) {
        CorpusSpec spec;
        if (c.is_string()) {
            spec.path = c.get<std::string>();
        } else {
            require_keys(c, {"name", "path", "format"}, "corpus entry");
            spec.path = c.at("path").get<std::string>();
            if (c.contains("name")) spec.name = c.at("name").get<std::string>();
            if (c.contains("format"))
                spec.format = corpus_format_from_name(c.at("format").get<std::string>());
        }
        if (spec.name.empty()) spec.name = fs::path(spec.path).stem().string();
        return spec;
    };
    if (j.contains("corpora"))
        for (const auto& c : j.at("corpora")) cfg.corpora.push_back(corpus_spec(c));
    else if (j.contains("corpus"))
        cfg.corpora.push_back(corpus_spec(j.at("corpus")));

    if (j.contains("queries")) cfg.queries_path = j.at("queries").get<std::string>();

    if (j.contains("chunkers")) {
        for (const auto& c : j.at("chunkers")) {
            require_keys(c, {"family", "configs", "size", "overlap"}, "chunker entry");
            const auto family = chunker_family_from_name(c.at("family").get<std::string>());
            if (c.contains("configs")) {
                for (const auto& pair : c.at("configs")) {
                    if (!pair.is_array() || pair.size() != 2)
                        throw std::invalid_argument(
                            "config: chunker configs must be [size, overlap] pairs");
                    cfg.chunkers.push_back(
                        {family, pair.at(0).get<std::size_t>(), pair.at(1).get<std::size_t>()});
                }
            } else if (c.contains("size")) {
                cfg.chunkers.push_back({family, c.at("size").get<std::size_t>(),
                                        c.contains("overlap")
                                            ? c.at("overlap").get<std::size_t>()
                                            : 0});
            } else {
                for (const auto& entry : default_chunker_grid())
                    if (entry.family == family) cfg.chunkers.push_back(entry);
            }
        }
    } else {
        cfg.chunkers = default_chunker_grid();
    }

    if (j.contains("strategies")) {
        for (const auto& s : j.at("strategies")) {
            StrategySpec spec;
            if (s.is_string()) {
                spec.strategy = strategy_from_name(s.get<std::string>());
                spec.thresholds = default_thresholds(spec.strategy);
            } else {
                require_keys(s, {"name", "threshold", "thresholds"}, "strategy entry");
                spec.strategy = strategy_from_name(s.at("name").get<std::string>());
                if (s.contains("thresholds"))
                    spec.thresholds = s.at("thresholds").get<std::vector<double>>();
                else if (s.contains("threshold"))
                    spec.thresholds = {s.at("threshold").get<double>()};
                else
                    spec.thresholds = default_thresholds(spec.strategy);
            }
            cfg.strategies.push_back(std::move(spec));
        }
    } else {
        cfg.strategies = default_strategy_grid();
    }

    if (j.contains("provider")) {
        const auto& p = j.at("provider");
        require_keys(p, {"kind", "dim", "seed", "model", "url", "batch_limit"}, "provider");
        if (p.contains("kind")) cfg.provider.kind = p.at("kind").get<std::string>();
        if (p.contains("dim")) cfg.provider.dim = p.at("dim").get<std::size_t>();
        if (p.contains("seed")) cfg.provider.seed = p.at("seed").get<std::uint64_t>();
        if (p.contains("model")) cfg.provider.model = p.at("model").get<std::string>();
        if (p.contains("url")) cfg.provider.url = p.at("url").get<std::string>();
        if (p.contains("batch_limit"))
            cfg.provider.batch_limit = p.at("batch_limit").get<std::size_t>();
    }

    if (j.contains("k")) cfg.k = j.at("k").get<std::size_t>();
    if (j.contains("modes")) {
        cfg.modes.clear();
        for (const auto& m : j.at("modes"))
            cfg.modes.push_back(token_mode_from_name(m.get<std::string>()));
    }
    if (j.contains("seed")) {
        cfg.seed = j.at("seed").get<std::uint64_t>();
        cfg.seed_set = true;
    }
    if (j.contains("out")) cfg.out_dir = j.at("out").get<std::string>();
    if (j.contains("jobs")) cfg.jobs = j.at("jobs").get<int>();
    if (j.contains("n_topics")) cfg.n_topics = j.at("n_topics").get<std::size_t>();
    if (j.contains("entity_extractor"))
        cfg.extractor = entity_extractor_from_name(j.at("entity_extractor").get<std::string>());
    if (j.contains("annotations")) cfg.annotations_path = j.at("annotations").get<std::string>();
    if (j.contains("stopwords")) cfg.stopwords_path = j.at("stopwords").get<std::string>();
    if (j.contains("boundary_threshold"))
        cfg.boundary_threshold = j.at("boundary_threshold").get<double>();
    if (j.contains("minhash")) {
        const auto& m = j.at("minhash");
        require_keys(m, {"shingle_width", "num_hashes", "bands", "rows"}, "minhash");
        if (m.contains("shingle_width"))
            cfg.shingle_width = m.at("shingle_width").get<std::size_t>();
        if (m.contains("num_hashes")) cfg.num_hashes = m.at("num_hashes").get<std::size_t>();
        if (m.contains("bands")) cfg.bands = m.at("bands").get<std::size_t>();
        if (m.contains("rows")) cfg.rows = m.at("rows").get<std::size_t>();
    }
    if (j.contains("cache_embeddings")) cfg.cache_embeddings = j.at("cache_embeddings").get<bool>();
    return cfg;
}

void ExperimentConfig::validate() const {
    if (corpora.empty()) throw std::invalid_argument("config: at least one corpus is required");
    std::set<std::string> names;
    for (const auto& c : corpora) {
        if (c.name.empty() || c.path.empty())
            throw std::invalid_argument("config: corpus entries need a name and a path");
        if (!names.insert(c.name).second)
            throw std::invalid_argument("config: duplicate corpus name \"" + c.name + "\"");
    }
    if (queries_path.empty()) throw std::invalid_argument("config: queries path is required");
    if (chunkers.empty()) throw std::invalid_argument("config: at least one chunker is required");
    for (const auto& entry : chunkers) {
        ChunkerConfig cc;
        cc.family = entry.family;
        cc.chunk_size = entry.chunk_size;
        cc.overlap = entry.overlap;
        cc.boundary_threshold = boundary_threshold;
        cc.validate();
    }
    for (const auto& spec : strategies) {
        switch (spec.strategy) {
        case FilterStrategy::none:
        case FilterStrategy::exact_norm:
        case FilterStrategy::ner_exact:
        case FilterStrategy::ner_half:
            if (!spec.thresholds.empty())
                throw std::invalid_argument("config: strategy " + strategy_name(spec.strategy) +
                                            " takes no thresholds");
            break;
        case FilterStrategy::minhash_lsh:
        case FilterStrategy::similarity:
        case FilterStrategy::similarity_topics:
        case FilterStrategy::similarity_ner:
        case FilterStrategy::similarity_topics_ner:
            if (spec.thresholds.empty())
                throw std::invalid_argument("config: strategy " + strategy_name(spec.strategy) +
                                            " needs at least one threshold");
            for (double t : spec.thresholds)
                if (!(t > 0.0 && t <= 1.0))
                    throw std::invalid_argument("config: threshold " + std::to_string(t) +
                                                " for " + strategy_name(spec.strategy) +
                                                " must lie in (0, 1]");
            break;
        case FilterStrategy::random:
            if (spec.thresholds.empty())
                throw std::invalid_argument("config: random filtering needs reduction targets");
            for (double t : spec.thresholds)
                if (!(t >= 0.0 && t < 1.0))
                    throw std::invalid_argument("config: random target " + std::to_string(t) +
                                                " must lie in [0, 1)");
            break;
        }
    }
    if (k == 0) throw std::invalid_argument("config: k must be positive");
    if (modes.empty()) throw std::invalid_argument("config: at least one eval mode is required");
    std::set<TokenMode> mode_set(modes.begin(), modes.end());
    if (mode_set.size() != modes.size())
        throw std::invalid_argument("config: duplicate eval modes");
    if (!seed_set) throw std::invalid_argument("config: seed is required");
    if (out_dir.empty()) throw std::invalid_argument("config: output directory is required");
    if (jobs < 1) throw std::invalid_argument("config: jobs must be at least 1");
    if (provider.kind != "hash" && provider.kind != "remote")
        throw std::invalid_argument("config: provider kind must be \"hash\" or \"remote\"");
    if (provider.dim == 0) throw std::invalid_argument("config: provider dim must be positive");
    if (provider.kind == "remote" && provider.model.empty())
        throw std::invalid_argument("config: remote provider needs a model name");
    if (extractor == EntityExtractor::annotations_file && annotations_path.empty())
        throw std::invalid_argument("config: annotations_file extractor needs an annotations path");
    if (boundary_threshold < -1.0 || boundary_threshold > 1.0)
        throw std::invalid_argument("config: boundary_threshold must lie in [-1, 1]");
    MinHashConfig mh;
    mh.shingle_width = shingle_width;
    mh.num_hashes = num_hashes;
    mh.bands = bands;
    mh.rows = rows;
    mh.jaccard_threshold = 0.5; // structural check only
    mh.validate();
}

nlohmann::ordered_json ExperimentConfig::echo() const {
    nlohmann::ordered_json e;
    auto& corpora_json = e["corpora"] = nlohmann::ordered_json::array();
    for (const auto& c : corpora)
        corpora_json.push_back({{"name", c.name},
                                {"path", c.path},
                                {"format", corpus_format_name(c.format)}});
    e["queries"] = queries_path;
    auto& chunkers_json = e["chunkers"] = nlohmann::ordered_json::array();
    for (const auto& c : chunkers)
        chunkers_json.push_back({{"family", chunker_family_name(c.family)},
                                 {"chunk_size", c.chunk_size},
                                 {"overlap", c.overlap}});
    auto& strategies_json = e["strategies"] = nlohmann::ordered_json::array();
    for (const auto& s : strategies)
        strategies_json.push_back({{"name", strategy_name(s.strategy)},
                                   {"thresholds", s.thresholds}});
    e["provider"] = {{"kind", provider.kind},     {"dim", provider.dim},
                     {"seed", provider.seed},     {"model", provider.model},
                     {"url", provider.url},       {"batch_limit", provider.batch_limit}};
    e["k"] = k;
    auto& modes_json = e["modes"] = nlohmann::ordered_json::array();
    for (auto m : modes) modes_json.push_back(token_mode_name(m));
    e["seed"] = seed;
    e["out"] = out_dir;
    e["jobs"] = jobs;
    e["n_topics"] = n_topics ? json(*n_topics) : json(nullptr);
    e["entity_extractor"] = entity_extractor_name(extractor);
    e["annotations"] = annotations_path;
    e["stopwords"] = stopwords_path;
    e["boundary_threshold"] = boundary_threshold;
    e["minhash"] = {{"shingle_width", shingle_width},
                    {"num_hashes", num_hashes},
                    {"bands", bands},
                    {"rows", rows}};
    e["cache_embeddings"] = cache_embeddings;
    return e;
}

bool RunManifest::all_ok() const {
    for (const auto& cell : cells)
        if (cell.status != "ok") return false;
    return true;
}

void write_manifest(const std::string& path, const RunManifest& manifest) {
    nlohmann::ordered_json out;
    out["seed"] = manifest.seed;
    out["provider"] = manifest.provider_name;
    out["config"] = manifest.config_echo;
    auto& cells = out["cells"] = nlohmann::ordered_json::array();
    for (const auto& c : manifest.cells) {
        nlohmann::ordered_json row;
        row["id"] = c.id;
        row["corpus"] = c.corpus;
        row["chunker"] = {{"family", chunker_family_name(c.chunker.family)},
                          {"chunk_size", c.chunker.chunk_size},
                          {"overlap", c.chunker.overlap}};
        row["strategy"] = strategy_name(c.strategy);
        row["threshold"] = c.threshold ? json(*c.threshold) : json(nullptr);
        row["baseline_id"] = c.baseline_id;
        row["from_config"] = c.from_config;
        row["status"] = c.status;
        row["error"] = c.error;
        row["dir"] = c.dir;
        cells.push_back(std::move(row));
    }
    // Write next to the target, then rename, so readers never see a torn
    // manifest.
    const std::string tmp = path + ".tmp";
    {
        std::ofstream file(tmp, std::ios::binary | std::ios::trunc);
        if (!file) throw std::runtime_error("cannot open for writing: " + tmp);
        file << out.dump(2) << '\n';
        if (!file) throw std::runtime_error("write failed: " + tmp);
    }
    fs::rename(tmp, path);
}

RunManifest load_manifest(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw std::runtime_error("cannot open: " + path);
    nlohmann::ordered_json in;  // keep the echoed config's key order
    try {
        in = nlohmann::ordered_json::parse(file);
    } catch (const json::exception& e) {
        throw std::runtime_error("malformed manifest " + path + ": " + e.what());
    }
    RunManifest manifest;
    manifest.seed = in.at("seed").get<std::uint64_t>();
    manifest.provider_name = in.at("provider").get<std::string>();
    manifest.config_echo = in.at("config");
    for (const auto& row : in.at("cells")) {
        CellResult c;
        c.id = row.at("id").get<std::string>();
        c.corpus = row.at("corpus").get<std::string>();
        c.chunker.family = chunker_family_from_name(row.at("chunker").at("family").get<std::string>());
        c.chunker.chunk_size = row.at("chunker").at("chunk_size").get<std::size_t>();
        c.chunker.overlap = row.at("chunker").at("overlap").get<std::size_t>();
        c.strategy = strategy_from_name(row.at("strategy").get<std::string>());
        if (!row.at("threshold").is_null()) c.threshold = row.at("threshold").get<double>();
        c.baseline_id = row.at("baseline_id").get<std::string>();
        c.from_config = row.at("from_config").get<bool>();
        c.status = row.at("status").get<std::string>();
        c.error = row.at("error").get<std::string>();
        c.dir = row.at("dir").get<std::string>();
        manifest.cells.push_back(std::move(c));
    }
    return manifest;
}

namespace {

// Shared read-only inputs plus per-chunk-set memoized side data; the memo
// accessors are safe to call from any worker.
struct RunState {
    const ExperimentConfig* cfg = nullptr;
    std::vector<std::vector<Document>> docs;   // per corpus
    std::vector<QueryRecord> queries;
    Stopwords stopwords;
    EmbeddingProvider* provider = nullptr;
    const AnnotationStore* annotations = nullptr;
    std::vector<std::vector<Chunk>> chunk_sets; // per (corpus, chunker) cell group
    std::vector<std::size_t> corpus_of_set;

    std::vector<std::optional<std::vector<Embedding>>> embeddings_memo;
    std::vector<std::optional<std::vector<EntitySet>>> entities_memo;
    std::vector<std::optional<TopicAssignment>> topics_memo;
    std::vector<std::unique_ptr<std::mutex>> set_mutexes;

    const std::vector<Embedding>& full_embeddings(std::size_t set_idx) {
        std::lock_guard lock(*set_mutexes[set_idx]);
        if (!embeddings_memo[set_idx]) {
            std::vector<std::string> texts;
            texts.reserve(chunk_sets[set_idx].size());
            for (const auto& c : chunk_sets[set_idx]) texts.push_back(c.text);
            embeddings_memo[set_idx] = provider->embed(texts);
        }
        return *embeddings_memo[set_idx];
    }

    const std::vector<EntitySet>& entities(std::size_t set_idx) {
        std::lock_guard lock(*set_mutexes[set_idx]);
        if (!entities_memo[set_idx]) {
            if (cfg->extractor == EntityExtractor::annotations_file)
                entities_memo[set_idx] =
                    annotations->entities_for(chunk_sets[set_idx], docs[corpus_of_set[set_idx]]);
            else
                entities_memo[set_idx] = extract_entities_heuristic(chunk_sets[set_idx]);
        }
        return *entities_memo[set_idx];
    }

    const TopicAssignment& topics(std::size_t set_idx, std::uint64_t topic_seed) {
        const auto& embeddings = full_embeddings(set_idx);
        std::lock_guard lock(*set_mutexes[set_idx]);
        if (!topics_memo[set_idx]) {
            const auto& chunks = chunk_sets[set_idx];
            const std::size_t n_topics =
                cfg->n_topics ? *cfg->n_topics : default_topic_count(chunks.size());
            topics_memo[set_idx] = assign_topics(chunks, embeddings, n_topics, topic_seed);
        }
        return *topics_memo[set_idx];
    }
};

FilterReport run_filter(RunState& state, const CellResult& cell, std::size_t set_idx) {
    const auto& cfg = *state.cfg;
    const auto& chunks = state.chunk_sets[set_idx];
    const std::uint64_t cell_seed = splitmix64(cfg.seed ^ fnv1a64(cell.id));
    const std::uint64_t topic_seed =
        splitmix64(cfg.seed ^ fnv1a64(cell.corpus + "|" + chunker_family_name(cell.chunker.family) +
                                      "-" + std::to_string(cell.chunker.chunk_size) + "-" +
                                      std::to_string(cell.chunker.overlap) + "|topics"));

    switch (cell.strategy) {
    case FilterStrategy::none: return filter_none(chunks);
    case FilterStrategy::exact_norm: return filter_exact_norm(chunks);
    case FilterStrategy::minhash_lsh: {
        MinHashConfig mh;
        mh.shingle_width = cfg.shingle_width;
        mh.num_hashes = cfg.num_hashes;
        mh.bands = cfg.bands;
        mh.rows = cfg.rows;
        mh.jaccard_threshold = *cell.threshold;
        mh.seed = splitmix64(cfg.seed ^ fnv1a64("minhash"));
        return filter_minhash_lsh(chunks, mh);
    }
    case FilterStrategy::random: return filter_random(chunks, *cell.threshold, cell_seed);
    case FilterStrategy::ner_exact: return filter_ner_exact(chunks, state.entities(set_idx));
    case FilterStrategy::ner_half: return filter_ner_half(chunks, state.entities(set_idx));
    case FilterStrategy::similarity:
    case FilterStrategy::similarity_topics:
    case FilterStrategy::similarity_ner:
    case FilterStrategy::similarity_topics_ner: {
        SimilarityOptions options;
        options.tau = *cell.threshold;
        if (strategy_needs_topics(cell.strategy))
            options.topics = &state.topics(set_idx, topic_seed);
        if (cell.strategy == FilterStrategy::similarity_ner ||
            cell.strategy == FilterStrategy::similarity_topics_ner) {
            options.entities = &state.entities(set_idx);
            options.entity_mode = EntityMode::overlap_nonempty;
        }
        return filter_similarity(chunks, state.full_embeddings(set_idx), options);
    }
    }
    throw std::logic_error("unknown filter strategy");
}

void run_cell(RunState& state, CellResult& cell, std::size_t set_idx) {
    const auto& cfg = *state.cfg;
    try {
        const fs::path dir = fs::path(cfg.out_dir) / cell.dir;
        fs::create_directories(dir);

        const auto report = run_filter(state, cell, set_idx);
        write_filter_report((dir / "filter_report.json").string(), report);

        const auto& chunks = state.chunk_sets[set_idx];
        std::set<std::string> kept(report.kept.begin(), report.kept.end());
        std::vector<Chunk> surviving;
        surviving.reserve(report.kept.size());
        for (const auto& c : chunks)
            if (kept.count(c.chunk_id)) surviving.push_back(c);
        write_chunks_jsonl((dir / "chunks.jsonl").string(), surviving);

        const auto index = VectorIndex::build(surviving, *state.provider, state.stopwords);
        RetrievalConfig rc;
        rc.k = cfg.k;
        std::vector<EvalRecord> records;
        records.reserve(cfg.modes.size() * state.queries.size());
        std::vector<AggregateReport> aggregates;
        AggregateMeta meta;
        meta.corpus = cell.corpus;
        meta.chunker = chunker_family_name(cell.chunker.family);
        meta.chunk_size = cell.chunker.chunk_size;
        meta.overlap = cell.chunker.overlap;
        for (auto mode : cfg.modes) {
            std::vector<EvalRecord> mode_records;
            mode_records.reserve(state.queries.size());
            for (const auto& q : state.queries)
                mode_records.push_back(
                    evaluate_query(index, q, *state.provider, rc, mode, state.stopwords));
            aggregates.push_back(aggregate(mode_records, report, meta));
            records.insert(records.end(), std::make_move_iterator(mode_records.begin()),
                           std::make_move_iterator(mode_records.end()));
        }
        write_eval_jsonl((dir / "eval.jsonl").string(), records);
        write_aggregates_json((dir / "aggregate.json").string(), aggregates);
        cell.status = "ok";
    } catch (const std::exception& e) {
        cell.status = "failed";
        cell.error = e.what();
    }
}

void run_pool(RunState& state, std::vector<CellResult>& cells,
              const std::vector<std::pair<std::size_t, std::size_t>>& work, int jobs) {
    if (work.empty()) return;
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= work.size()) return;
            run_cell(state, cells[work[i].first], work[i].second);
        }
    };
    const int width = std::max(1, std::min<int>(jobs, int(work.size())));
    std::vector<std::thread> threads;
    threads.reserve(std::size_t(width - 1));
    for (int t = 0; t + 1 < width; ++t) threads.emplace_back(worker);
    worker();
    for (auto& t : threads) t.join();
}

} // namespace

RunManifest run_grid(const ExperimentConfig& cfg) {
    cfg.validate();
    fs::create_directories(cfg.out_dir);

    RunState state;
    state.cfg = &cfg;
    for (const auto& spec : cfg.corpora) state.docs.push_back(load_corpus(spec.path, spec.format));
    state.queries = load_queries(cfg.queries_path);
    state.stopwords = cfg.stopwords_path.empty() ? Stopwords::builtin_english()
                                                 : Stopwords::from_file(cfg.stopwords_path);

    auto provider_impl = make_provider(cfg.provider);
    std::optional<EmbeddingCache> cache;
    std::unique_ptr<CachingProvider> caching;
    state.provider = provider_impl.get();
    if (cfg.cache_embeddings) {
        cache.emplace(provider_impl->name(), provider_impl->dim());
        caching = std::make_unique<CachingProvider>(*provider_impl, *cache);
        state.provider = caching.get();
    }

    std::optional<AnnotationStore> annotations;
    const bool needs_entities =
        std::any_of(cfg.strategies.begin(), cfg.strategies.end(),
                    [](const StrategySpec& s) { return strategy_needs_entities(s.strategy); });
    if (cfg.extractor == EntityExtractor::annotations_file && needs_entities) {
        annotations.emplace(AnnotationStore::load(cfg.annotations_path));
        state.annotations = &*annotations;
    }

    // Chunk every (corpus, chunker) group once; cells share these sets.
    for (std::size_t ci = 0; ci < cfg.corpora.size(); ++ci) {
        for (const auto& entry : cfg.chunkers) {
            ChunkerConfig cc;
            cc.family = entry.family;
            cc.chunk_size = entry.chunk_size;
            cc.overlap = entry.overlap;
            cc.boundary_threshold = cfg.boundary_threshold;
            state.chunk_sets.push_back(chunk_corpus(state.docs[ci], cc, state.provider));
            state.corpus_of_set.push_back(ci);
        }
    }
    state.embeddings_memo.resize(state.chunk_sets.size());
    state.entities_memo.resize(state.chunk_sets.size());
    state.topics_memo.resize(state.chunk_sets.size());
    for (std::size_t i = 0; i < state.chunk_sets.size(); ++i)
        state.set_mutexes.push_back(std::make_unique<std::mutex>());

    RunManifest manifest;
    manifest.seed = cfg.seed;
    manifest.provider_name = provider_impl->name();
    manifest.config_echo = cfg.echo();

    // Cell list in grid order, the implicit or explicit baseline first
    // within each (corpus, chunker) group.
    std::vector<std::size_t> cell_set_idx;
    std::set<std::string> ids;
    auto add_cell = [&](const std::string& corpus, const ChunkerGridEntry& chunker,
                        FilterStrategy strategy, std::optional<double> threshold,
                        const std::string& baseline_id, bool from_config, std::size_t set_idx) {
        CellResult cell;
        cell.id = cell_id(corpus, chunker, strategy, threshold);
        if (!ids.insert(cell.id).second)
            throw std::invalid_argument("config: duplicate grid cell " + cell.id);
        cell.corpus = corpus;
        cell.chunker = chunker;
        cell.strategy = strategy;
        cell.threshold = threshold;
        cell.baseline_id = baseline_id;
        cell.from_config = from_config;
        cell.dir = "cells/" + cell.id;
        manifest.cells.push_back(std::move(cell));
        cell_set_idx.push_back(set_idx);
    };

    std::size_t set_idx = 0;
    for (std::size_t ci = 0; ci < cfg.corpora.size(); ++ci) {
        for (const auto& entry : cfg.chunkers) {
            const auto& corpus = cfg.corpora[ci].name;
            const auto baseline_id = cell_id(corpus, entry, FilterStrategy::none, std::nullopt);
            const bool none_in_config =
                std::any_of(cfg.strategies.begin(), cfg.strategies.end(),
                            [](const StrategySpec& s) {
                                return s.strategy == FilterStrategy::none;
                            });
            add_cell(corpus, entry, FilterStrategy::none, std::nullopt, baseline_id,
                     none_in_config, set_idx);
            for (const auto& spec : cfg.strategies) {
                if (spec.strategy == FilterStrategy::none) continue;
                if (spec.thresholds.empty()) {
                    add_cell(corpus, entry, spec.strategy, std::nullopt, baseline_id, true,
                             set_idx);
                } else {
                    for (double t : spec.thresholds)
                        add_cell(corpus, entry, spec.strategy, t, baseline_id, true, set_idx);
                }
            }
            ++set_idx;
        }
    }

    std::vector<std::pair<std::size_t, std::size_t>> baseline_work, other_work;
    for (std::size_t i = 0; i < manifest.cells.size(); ++i) {
        auto& bucket =
            manifest.cells[i].strategy == FilterStrategy::none ? baseline_work : other_work;
        bucket.emplace_back(i, cell_set_idx[i]);
    }
    run_pool(state, manifest.cells, baseline_work, cfg.jobs);
    run_pool(state, manifest.cells, other_work, cfg.jobs);

    write_manifest((fs::path(cfg.out_dir) / "manifest.json").string(), manifest);
    emit_tables(manifest, cfg.out_dir);
    emit_tradeoff_data(manifest, cfg.out_dir);
    return manifest;
}

namespace {

struct UnitKey {
    std::string corpus;
    ChunkerGridEntry chunker;

    std::string text() const {
        return corpus + "--" + chunker_family_name(chunker.family) + "-" +
               std::to_string(chunker.chunk_size) + "-" + std::to_string(chunker.overlap);
    }
};

// Cells grouped by (corpus, chunker config) in first-appearance order.
std::vector<std::pair<UnitKey, std::vector<const CellResult*>>>
group_units(const RunManifest& manifest) {
    std::vector<std::pair<UnitKey, std::vector<const CellResult*>>> units;
    std::map<std::string, std::size_t> position;
    for (const auto& cell : manifest.cells) {
        UnitKey key{cell.corpus, cell.chunker};
        auto [it, inserted] = position.emplace(key.text(), units.size());
        if (inserted) units.push_back({key, {}});
        units[it->second].second.push_back(&cell);
    }
    return units;
}

std::optional<AggregateReport> load_cell_aggregate(const std::string& root,
                                                   const CellResult& cell, TokenMode mode) {
    const auto path = (fs::path(root) / cell.dir / "aggregate.json").string();
    for (const auto& agg : load_aggregates_json(path))
        if (agg.mode == mode) return agg;
    return std::nullopt;
}

TokenMode first_mode(const RunManifest& manifest) {
    const auto& modes = manifest.config_echo.at("modes");
    if (modes.empty()) throw std::runtime_error("manifest lists no eval modes");
    return token_mode_from_name(modes.at(0).get<std::string>());
}

} // namespace

std::vector<std::string> emit_tables(const RunManifest& manifest, const std::string& root_dir) {
    if (std::none_of(manifest.cells.begin(), manifest.cells.end(),
                     [](const CellResult& c) { return c.status == "ok"; }))
        throw std::runtime_error("emit_tables: no completed cells");
    const TokenMode mode = first_mode(manifest);
    fs::create_directories(fs::path(root_dir) / "tables");

    std::vector<std::string> written;
    for (const auto& [unit, cells] : group_units(manifest)) {
        // Fixed row order: rank, then threshold ascending.
        std::vector<const CellResult*> ordered(cells.begin(), cells.end());
        std::stable_sort(ordered.begin(), ordered.end(),
                         [](const CellResult* a, const CellResult* b) {
                             const int ra = strategy_rank(a->strategy);
                             const int rb = strategy_rank(b->strategy);
                             if (ra != rb) return ra < rb;
                             return a->threshold.value_or(-1.0) < b->threshold.value_or(-1.0);
                         });
        std::vector<AggregateReport> rows;
        for (const auto* cell : ordered) {
            if (cell->status != "ok") {
                std::cerr << "tables: skipping cell " << cell->id << " (" << cell->status
                          << (cell->error.empty() ? "" : ": " + cell->error) << ")\n";
                continue;
            }
            if (auto agg = load_cell_aggregate(root_dir, *cell, mode))
                rows.push_back(std::move(*agg));
            else
                std::cerr << "tables: cell " << cell->id << " has no aggregate for mode "
                          << token_mode_name(mode) << "\n";
        }
        if (rows.empty()) continue;
        const auto path = (fs::path(root_dir) / "tables" /
                           (sanitize_component(unit.corpus) + "__" +
                            chunker_display_name(unit.chunker.family) + "_" +
                            std::to_string(unit.chunker.chunk_size) + "_" +
                            std::to_string(unit.chunker.overlap) + ".csv"))
                              .string();
        write_aggregate_csv(path, rows);
        written.push_back(path);
    }
    return written;
}

std::vector<std::string> emit_tradeoff_data(const RunManifest& manifest,
                                            const std::string& root_dir) {
    const auto& strategies = manifest.config_echo.at("strategies");
    if (strategies.empty()) {
        std::cerr << "tradeoff: no strategies configured, nothing to emit\n";
        return {};
    }
    const TokenMode mode = first_mode(manifest);
    fs::create_directories(fs::path(root_dir) / "tradeoff");

    std::vector<std::string> written;
    for (const auto& [unit, cells] : group_units(manifest)) {
        for (const auto& strategy_entry : strategies) {
            const auto strategy =
                strategy_from_name(strategy_entry.at("name").get<std::string>());
            std::vector<const CellResult*> series;
            for (const auto* cell : cells)
                if (cell->strategy == strategy && cell->status == "ok")
                    series.push_back(cell);
            if (series.empty()) continue;
            std::stable_sort(series.begin(), series.end(),
                             [](const CellResult* a, const CellResult* b) {
                                 return a->threshold.value_or(-1.0) <
                                        b->threshold.value_or(-1.0);
                             });
            std::vector<AggregateReport> rows;
            for (const auto* cell : series)
                if (auto agg = load_cell_aggregate(root_dir, *cell, mode))
                    rows.push_back(std::move(*agg));
            if (rows.empty()) continue;

            const auto path =
                (fs::path(root_dir) / "tradeoff" /
                 (sanitize_component(unit.corpus) + "__" +
                  chunker_family_name(unit.chunker.family) + "_" +
                  std::to_string(unit.chunker.chunk_size) + "_" +
                  std::to_string(unit.chunker.overlap) + "__" + strategy_name(strategy) + ".csv"))
                    .string();
            std::ofstream out(path, std::ios::binary | std::ios::trunc);
            if (!out) throw std::runtime_error("cannot open for writing: " + path);
            out << "threshold,reduction_percent,precision,recall,iou,oracle\n";
            for (const auto& a : rows) {
                out << threshold_text(a.threshold) << ',' << format_fixed3(a.reduction_percent)
                    << ',' << format_fixed3(a.precision) << ',' << format_fixed3(a.recall) << ','
                    << format_fixed3(a.iou) << ',' << format_fixed3(a.oracle_recall) << '\n';
            }
            if (!out) throw std::runtime_error("write failed: " + path);
            written.push_back(path);
        }
    }
    return written;
}

} // namespace chunkfilter
