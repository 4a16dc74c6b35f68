#include "chunkfilter/filtering.hpp"

#include "chunkfilter/random.hpp"
#include "chunkfilter/text.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace chunkfilter {

namespace {

using nlohmann::json;

// Indices of chunks in canonical order; rejects duplicate ids up front so
// every report partitions a well-formed input.
std::vector<std::size_t> canonical_order(const std::vector<Chunk>& chunks) {
    std::unordered_set<std::string> seen;
    seen.reserve(chunks.size());
    for (const auto& c : chunks)
        if (!seen.insert(c.chunk_id).second)
            throw std::invalid_argument("duplicate chunk_id: " + c.chunk_id);
    std::vector<std::size_t> order(chunks.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return chunk_order_less(chunks[a], chunks[b]);
    });
    return order;
}

double reduction_of(std::size_t removed, std::size_t total) {
    return total == 0 ? 0.0 : double(removed) / double(total);
}

bool sets_intersect(const std::set<std::string>& a, const std::set<std::string>& b) {
    auto i = a.begin();
    auto j = b.begin();
    while (i != a.end() && j != b.end()) {
        if (*i == *j) return true;
        if (*i < *j)
            ++i;
        else
            ++j;
    }
    return false;
}

std::size_t intersection_size(const std::set<std::string>& a, const std::set<std::string>& b) {
    std::size_t n = 0;
    auto i = a.begin();
    auto j = b.begin();
    while (i != a.end() && j != b.end()) {
        if (*i == *j) {
            ++n;
            ++i;
            ++j;
        } else if (*i < *j) {
            ++i;
        } else {
            ++j;
        }
    }
    return n;
}

std::string format_double(double v) {
    json j = v;
    return j.dump();
}

} // namespace

std::string strategy_name(FilterStrategy strategy) {
    switch (strategy) {
    case FilterStrategy::none: return "none";
    case FilterStrategy::exact_norm: return "exact_norm";
    case FilterStrategy::minhash_lsh: return "minhash_lsh";
    case FilterStrategy::random: return "random";
    case FilterStrategy::similarity: return "similarity";
    case FilterStrategy::similarity_topics: return "similarity_topics";
    case FilterStrategy::similarity_ner: return "similarity_ner";
    case FilterStrategy::similarity_topics_ner: return "similarity_topics_ner";
    case FilterStrategy::ner_exact: return "ner_exact";
    case FilterStrategy::ner_half: return "ner_half";
    }
    throw std::logic_error("unknown filter strategy");
}

FilterStrategy strategy_from_name(const std::string& name) {
    static const std::map<std::string, FilterStrategy> table = {
        {"none", FilterStrategy::none},
        {"exact_norm", FilterStrategy::exact_norm},
        {"minhash_lsh", FilterStrategy::minhash_lsh},
        {"random", FilterStrategy::random},
        {"similarity", FilterStrategy::similarity},
        {"similarity_topics", FilterStrategy::similarity_topics},
        {"similarity_ner", FilterStrategy::similarity_ner},
        {"similarity_topics_ner", FilterStrategy::similarity_topics_ner},
        {"ner_exact", FilterStrategy::ner_exact},
        {"ner_half", FilterStrategy::ner_half},
    };
    auto it = table.find(name);
    if (it == table.end()) throw std::invalid_argument("unknown filter strategy: " + name);
    return it->second;
}

std::string similarity_scope_name(SimilarityScope scope) {
    return scope == SimilarityScope::document ? "document" : "corpus";
}

SimilarityScope similarity_scope_from_name(const std::string& name) {
    if (name == "corpus") return SimilarityScope::corpus;
    if (name == "document") return SimilarityScope::document;
    throw std::invalid_argument("unknown similarity scope: " + name);
}

std::string strategy_label(FilterStrategy strategy) {
    switch (strategy) {
    case FilterStrategy::none: return "No filtering";
    case FilterStrategy::exact_norm: return "ExactNorm";
    case FilterStrategy::minhash_lsh: return "MinHash-LSH";
    case FilterStrategy::random: return "Random";
    case FilterStrategy::similarity: return "Similarity";
    case FilterStrategy::similarity_topics: return "Similarity + Topics";
    case FilterStrategy::similarity_ner: return "Similarity + NER";
    case FilterStrategy::similarity_topics_ner: return "Similarity + Topics + NER";
    case FilterStrategy::ner_exact: return "NER Exact";
    case FilterStrategy::ner_half: return "NER Half";
    }
    throw std::logic_error("unknown filter strategy");
}

void write_filter_report(const std::string& path, const FilterReport& report) {
    nlohmann::ordered_json out;
    out["strategy"] = strategy_name(report.strategy);
    out["threshold"] = report.threshold ? json(*report.threshold) : json(nullptr);
    out["sweep_mode"] = report.sweep_mode;
    out["config"] = report.config_echo;
    out["input_count"] = report.input_count();
    out["reduction"] = report.reduction;
    out["kept"] = report.kept;
    auto& removed = out["removed"] = json::array();
    for (const auto& r : report.removed)
        removed.push_back({{"chunk_id", r.chunk_id}, {"witness", r.witness}});

    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw std::runtime_error("cannot open for writing: " + path);
    file << out.dump(2) << '\n';
    if (!file) throw std::runtime_error("write failed: " + path);
}

FilterReport load_filter_report(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw std::runtime_error("cannot open: " + path);
    json in;
    try {
        in = json::parse(file);
    } catch (const json::exception& e) {
        throw std::runtime_error("malformed filter report " + path + ": " + e.what());
    }
    FilterReport report;
    report.strategy = strategy_from_name(in.at("strategy").get<std::string>());
    if (!in.at("threshold").is_null()) report.threshold = in.at("threshold").get<double>();
    report.sweep_mode = in.at("sweep_mode").get<std::string>();
    for (const auto& [k, v] : in.at("config").items())
        report.config_echo[k] = v.get<std::string>();
    report.reduction = in.at("reduction").get<double>();
    report.kept = in.at("kept").get<std::vector<std::string>>();
    for (const auto& r : in.at("removed"))
        report.removed.push_back(
            {r.at("chunk_id").get<std::string>(), r.at("witness").get<std::string>()});
    return report;
}

FilterReport filter_none(const std::vector<Chunk>& chunks) {
    const auto order = canonical_order(chunks);
    FilterReport report;
    report.strategy = FilterStrategy::none;
    report.kept.reserve(chunks.size());
    for (auto i : order) report.kept.push_back(chunks[i].chunk_id);
    report.reduction = 0.0;
    return report;
}

FilterReport filter_exact_norm(const std::vector<Chunk>& chunks) {
    const auto order = canonical_order(chunks);
    FilterReport report;
    report.strategy = FilterStrategy::exact_norm;
    std::unordered_map<std::string, std::size_t> first_by_form;
    first_by_form.reserve(chunks.size());
    for (auto i : order) {
        auto [it, inserted] = first_by_form.emplace(canonical_form(chunks[i].text), i);
        if (inserted)
            report.kept.push_back(chunks[i].chunk_id);
        else
            report.removed.push_back({chunks[i].chunk_id, chunks[it->second].chunk_id});
    }
    report.reduction = reduction_of(report.removed.size(), chunks.size());
    return report;
}

FilterReport filter_minhash_lsh(const std::vector<Chunk>& chunks, const MinHashConfig& cfg) {
    cfg.validate();
    const auto order = canonical_order(chunks);

    std::vector<std::vector<std::uint64_t>> shingles(order.size());
    for (std::size_t pos = 0; pos < order.size(); ++pos)
        shingles[pos] = shingle_hashes(tokenize(chunks[order[pos]].text), cfg.shingle_width);

    const MinHasher hasher(cfg.num_hashes, cfg.seed);
    std::vector<std::vector<std::uint64_t>> signatures(order.size());
    for (std::size_t pos = 0; pos < order.size(); ++pos)
        signatures[pos] = hasher.signature(shingles[pos]);

    // neighbors[pos] holds earlier canonical positions that share an LSH
    // bucket; only those are candidates for the sweep.
    const auto pairs = lsh_candidate_pairs(signatures, cfg.bands, cfg.rows);
    std::vector<std::vector<std::size_t>> neighbors(order.size());
    for (const auto& [a, b] : pairs) neighbors[b].push_back(a);
    for (auto& list : neighbors) std::sort(list.begin(), list.end());

    FilterReport report;
    report.strategy = FilterStrategy::minhash_lsh;
    report.threshold = cfg.jaccard_threshold;
    report.config_echo = {{"shingle_width", std::to_string(cfg.shingle_width)},
                          {"num_hashes", std::to_string(cfg.num_hashes)},
                          {"bands", std::to_string(cfg.bands)},
                          {"rows", std::to_string(cfg.rows)},
                          {"seed", std::to_string(cfg.seed)}};
    std::vector<bool> kept_flag(order.size(), false);
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
        const Chunk& c = chunks[order[pos]];
        std::size_t witness = order.size();
        for (std::size_t prev : neighbors[pos]) {
            if (!kept_flag[prev]) continue;
            if (exact_jaccard(shingles[pos], shingles[prev]) >= cfg.jaccard_threshold) {
                witness = prev;
                break;
            }
        }
        if (witness == order.size()) {
            kept_flag[pos] = true;
            report.kept.push_back(c.chunk_id);
        } else {
            report.removed.push_back({c.chunk_id, chunks[order[witness]].chunk_id});
        }
    }
    report.reduction = reduction_of(report.removed.size(), chunks.size());
    return report;
}

FilterReport filter_random(const std::vector<Chunk>& chunks, double reduction_target,
                           std::uint64_t seed) {
    if (reduction_target < 0.0 || reduction_target >= 1.0)
        throw std::invalid_argument("filter_random: reduction_target must lie in [0, 1)");
    const auto order = canonical_order(chunks);

    // Nudge before flooring so decimal targets hit their exact count
    // (0.6 * 5 computes to fractionally below 3 in binary).
    const auto remove_count =
        std::size_t(std::floor(reduction_target * double(chunks.size()) + 1e-9));

    std::vector<std::size_t> positions(order.size());
    std::iota(positions.begin(), positions.end(), 0);
    std::mt19937_64 rng(seed);
    fisher_yates_shuffle(positions, rng);
    std::vector<bool> removed_flag(order.size(), false);
    for (std::size_t i = 0; i < remove_count; ++i) removed_flag[positions[i]] = true;

    FilterReport report;
    report.strategy = FilterStrategy::random;
    report.threshold = reduction_target;
    report.config_echo = {{"reduction_target", format_double(reduction_target)},
                          {"seed", std::to_string(seed)}};
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
        if (removed_flag[pos])
            report.removed.push_back({chunks[order[pos]].chunk_id, "random"});
        else
            report.kept.push_back(chunks[order[pos]].chunk_id);
    }
    report.reduction = reduction_of(report.removed.size(), chunks.size());
    return report;
}

FilterReport filter_similarity(const std::vector<Chunk>& chunks,
                               const std::vector<Embedding>& embeddings,
                               const SimilarityOptions& options) {
    if (!(options.tau > 0.0 && options.tau <= 1.0))
        throw std::invalid_argument("filter_similarity: tau must lie in (0, 1]");
    if (embeddings.size() != chunks.size())
        throw std::invalid_argument("filter_similarity: " + std::to_string(chunks.size()) +
                                    " chunks but " + std::to_string(embeddings.size()) +
                                    " embeddings");
    const bool use_topics = options.topics != nullptr;
    const bool use_entities = options.entity_mode == EntityMode::overlap_nonempty;
    if (use_entities && options.entities == nullptr)
        throw std::invalid_argument(
            "filter_similarity: entity condition enabled but no entity sets given");
    if (use_entities && options.entities->size() != chunks.size())
        throw std::invalid_argument("filter_similarity: entity set count mismatch");
    if (options.sweep == SimilaritySweep::topic_blocked && !use_topics)
        throw std::invalid_argument(
            "filter_similarity: topic_blocked sweep requires the topic condition");

    const auto order = canonical_order(chunks);

    // Precompute each norm once; the per-pair similarity below then matches
    // cosine_similarity bit for bit, so threshold decisions here and any
    // post-hoc cosine check can never disagree on exact-boundary pairs.
    std::vector<double> root_norm(order.size());
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
        const auto& v = embeddings[order[pos]].values;
        double norm = 0.0;
        for (float x : v) norm += double(x) * x;
        if (norm == 0.0)
            throw std::invalid_argument("filter_similarity: zero-norm embedding for chunk " +
                                        chunks[order[pos]].chunk_id);
        root_norm[pos] = std::sqrt(norm);
    }
    std::vector<int> topic(order.size(), 0);
    if (use_topics)
        for (std::size_t pos = 0; pos < order.size(); ++pos)
            topic[pos] = options.topics->topic_of(chunks[order[pos]].chunk_id);

    FilterStrategy strategy = FilterStrategy::similarity;
    if (use_topics && use_entities)
        strategy = FilterStrategy::similarity_topics_ner;
    else if (use_topics)
        strategy = FilterStrategy::similarity_topics;
    else if (use_entities)
        strategy = FilterStrategy::similarity_ner;

    FilterReport report;
    report.strategy = strategy;
    report.threshold = options.tau;
    report.sweep_mode =
        options.sweep == SimilaritySweep::topic_blocked ? "topic_blocked" : "exhaustive";
    report.config_echo = {{"tau", format_double(options.tau)}};
    if (use_topics)
        report.config_echo["n_topics"] = std::to_string(options.topics->n_topics);
    report.config_echo["entity_mode"] = use_entities ? "overlap_nonempty" : "off";
    report.config_echo["scope"] = similarity_scope_name(options.scope);

    // kept positions, also bucketed by topic for the blocked sweep.
    std::vector<std::size_t> kept_positions;
    std::vector<std::vector<std::size_t>> kept_by_topic(
        use_topics ? std::size_t(options.topics->n_topics) : 0);
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
        const Chunk& c = chunks[order[pos]];
        const auto* my_entities = use_entities ? &(*options.entities)[order[pos]] : nullptr;
        std::size_t witness = order.size();

        const auto& candidates = options.sweep == SimilaritySweep::topic_blocked
                                     ? kept_by_topic[std::size_t(topic[pos])]
                                     : kept_positions;
        for (std::size_t prev : candidates) {
            if (options.scope == SimilarityScope::document &&
                chunks[order[prev]].doc_id != c.doc_id)
                continue;
            if (use_topics && topic[prev] != topic[pos]) continue;
            if (use_entities &&
                !sets_intersect(my_entities->entities, (*options.entities)[order[prev]].entities))
                continue;
            const auto& va = embeddings[order[pos]].values;
            const auto& vb = embeddings[order[prev]].values;
            double dot = 0.0;
            for (std::size_t d = 0; d < va.size(); ++d) dot += double(va[d]) * vb[d];
            double sim = dot / (root_norm[pos] * root_norm[prev]);
            if (sim > 1.0) sim = 1.0;
            if (sim >= options.tau) {
                witness = prev;
                break;
            }
        }
        if (witness == order.size()) {
            kept_positions.push_back(pos);
            if (use_topics) kept_by_topic[std::size_t(topic[pos])].push_back(pos);
            report.kept.push_back(c.chunk_id);
        } else {
            report.removed.push_back({c.chunk_id, chunks[order[witness]].chunk_id});
        }
    }
    report.reduction = reduction_of(report.removed.size(), chunks.size());
    return report;
}

FilterReport filter_ner_exact(const std::vector<Chunk>& chunks,
                              const std::vector<EntitySet>& entities) {
    if (entities.size() != chunks.size())
        throw std::invalid_argument("filter_ner_exact: entity set count mismatch");
    const auto order = canonical_order(chunks);
    FilterReport report;
    report.strategy = FilterStrategy::ner_exact;
    std::map<std::set<std::string>, std::size_t> first_by_set;
    for (auto i : order) {
        const auto& set = entities[i].entities;
        if (set.empty()) {
            report.kept.push_back(chunks[i].chunk_id);
            continue;
        }
        auto [it, inserted] = first_by_set.emplace(set, i);
        if (inserted)
            report.kept.push_back(chunks[i].chunk_id);
        else
            report.removed.push_back({chunks[i].chunk_id, chunks[it->second].chunk_id});
    }
    report.reduction = reduction_of(report.removed.size(), chunks.size());
    return report;
}

FilterReport filter_ner_half(const std::vector<Chunk>& chunks,
                             const std::vector<EntitySet>& entities) {
    if (entities.size() != chunks.size())
        throw std::invalid_argument("filter_ner_half: entity set count mismatch");
    const auto order = canonical_order(chunks);
    FilterReport report;
    report.strategy = FilterStrategy::ner_half;
    std::vector<std::size_t> kept_indices;
    for (auto i : order) {
        const auto& mine = entities[i].entities;
        std::size_t witness = chunks.size();
        if (!mine.empty()) {
            // Ratio denominator is the candidate's own entity count.
            for (std::size_t k : kept_indices) {
                const std::size_t overlap = intersection_size(mine, entities[k].entities);
                if (2 * overlap >= mine.size()) {
                    witness = k;
                    break;
                }
            }
        }
        if (witness == chunks.size()) {
            kept_indices.push_back(i);
            report.kept.push_back(chunks[i].chunk_id);
        } else {
            report.removed.push_back({chunks[i].chunk_id, chunks[witness].chunk_id});
        }
    }
    report.reduction = reduction_of(report.removed.size(), chunks.size());
    return report;
}

} // namespace chunkfilter
