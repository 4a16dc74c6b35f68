#include "chunkfilter/topics.hpp"

#include "chunkfilter/random.hpp"

#include <cmath>
#include <stdexcept>

namespace chunkfilter {

namespace {

std::vector<std::vector<double>> normalize_all(const std::vector<Embedding>& embeddings) {
    std::vector<std::vector<double>> unit(embeddings.size());
    for (std::size_t i = 0; i < embeddings.size(); ++i) {
        const auto& v = embeddings[i].values;
        double norm = 0.0;
        for (float x : v) norm += double(x) * x;
        if (norm == 0.0)
            throw std::invalid_argument("assign_topics: zero-norm embedding at index " +
                                        std::to_string(i));
        const double inv = 1.0 / std::sqrt(norm);
        unit[i].resize(v.size());
        for (std::size_t d = 0; d < v.size(); ++d) unit[i][d] = v[d] * inv;
    }
    return unit;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t d = 0; d < a.size(); ++d) s += a[d] * b[d];
    return s;
}

} // namespace

int TopicAssignment::topic_of(const std::string& chunk_id) const {
    auto it = topic_by_chunk.find(chunk_id);
    if (it == topic_by_chunk.end())
        throw std::out_of_range("no topic assigned to chunk " + chunk_id);
    return it->second;
}

std::size_t default_topic_count(std::size_t n_chunks) {
    if (n_chunks == 0) throw std::invalid_argument("default_topic_count: empty chunk set");
    const auto scaled = std::size_t(std::llround(std::sqrt(double(n_chunks) / 2.0)));
    return std::min(std::max<std::size_t>(2, scaled), n_chunks);
}

TopicAssignment assign_topics(const std::vector<Chunk>& chunks,
                              const std::vector<Embedding>& embeddings, std::size_t n_topics,
                              std::uint64_t seed) {
    const std::size_t n = chunks.size();
    if (embeddings.size() != n)
        throw std::invalid_argument("assign_topics: " + std::to_string(n) + " chunks but " +
                                    std::to_string(embeddings.size()) + " embeddings");
    if (n_topics == 0) throw std::invalid_argument("assign_topics: n_topics must be positive");
    if (n_topics > n)
        throw std::invalid_argument("assign_topics: n_topics " + std::to_string(n_topics) +
                                    " exceeds chunk count " + std::to_string(n));

    const auto unit = normalize_all(embeddings);
    const std::size_t dim = unit[0].size();
    const std::size_t k = n_topics;

    // Farthest-point seeding. min_sim[i] tracks the best cosine between point
    // i and any chosen center; the next center is the least-covered point.
    std::mt19937_64 rng(seed);
    std::vector<std::vector<double>> centroids;
    centroids.reserve(k);
    std::vector<bool> chosen(n, false);
    std::vector<double> min_sim(n, -2.0);
    std::size_t first = std::size_t(uniform_index(rng, n));
    centroids.push_back(unit[first]);
    chosen[first] = true;
    for (std::size_t c = 1; c < k; ++c) {
        for (std::size_t i = 0; i < n; ++i)
            if (!chosen[i]) min_sim[i] = std::max(min_sim[i], dot(unit[i], centroids.back()));
        std::size_t best = n;
        double best_sim = 2.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (chosen[i]) continue;
            if (min_sim[i] < best_sim) {
                best_sim = min_sim[i];
                best = i;
            }
        }
        centroids.push_back(unit[best]);
        chosen[best] = true;
    }

    std::vector<int> assignment(n, 0);
    for (int iter = 0; iter < 50; ++iter) {
        for (std::size_t i = 0; i < n; ++i) {
            int best_topic = 0;
            double best_sim = dot(unit[i], centroids[0]);
            for (std::size_t c = 1; c < k; ++c) {
                const double sim = dot(unit[i], centroids[c]);
                if (sim > best_sim) {
                    best_sim = sim;
                    best_topic = int(c);
                }
            }
            assignment[i] = best_topic;
        }

        std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t d = 0; d < dim; ++d) sums[assignment[i]][d] += unit[i][d];
            ++counts[assignment[i]];
        }
        // An emptied cluster restarts at the point least similar to its own
        // centroid; lowest index wins ties so reruns agree.
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] > 0) continue;
            std::size_t worst = 0;
            double worst_sim = 2.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (counts[assignment[i]] <= 1) continue;
                const double sim = dot(unit[i], centroids[assignment[i]]);
                if (sim < worst_sim) {
                    worst_sim = sim;
                    worst = i;
                }
            }
            const int old = assignment[worst];
            --counts[old];
            for (std::size_t d = 0; d < dim; ++d) sums[old][d] -= unit[worst][d];
            assignment[worst] = int(c);
            counts[c] = 1;
            sums[c] = unit[worst];
        }

        double max_move = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            double norm = 0.0;
            for (double v : sums[c]) norm += v * v;
            std::vector<double> next = centroids[c];
            if (norm > 0.0) {
                const double inv = 1.0 / std::sqrt(norm);
                for (std::size_t d = 0; d < dim; ++d) next[d] = sums[c][d] * inv;
            }
            double move = 0.0;
            for (std::size_t d = 0; d < dim; ++d) {
                const double diff = next[d] - centroids[c][d];
                move += diff * diff;
            }
            max_move = std::max(max_move, std::sqrt(move));
            centroids[c] = std::move(next);
        }
        if (max_move < 1e-4) break;
    }

    // Final assignment against the converged centroids.
    TopicAssignment out;
    out.n_topics = int(k);
    for (std::size_t i = 0; i < n; ++i) {
        int best_topic = 0;
        double best_sim = dot(unit[i], centroids[0]);
        for (std::size_t c = 1; c < k; ++c) {
            const double sim = dot(unit[i], centroids[c]);
            if (sim > best_sim) {
                best_sim = sim;
                best_topic = int(c);
            }
        }
        out.topic_by_chunk[chunks[i].chunk_id] = best_topic;
    }
    return out;
}

} // namespace chunkfilter
