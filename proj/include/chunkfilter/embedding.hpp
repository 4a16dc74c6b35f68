#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace chunkfilter {

struct Embedding {
    std::vector<float> values;

    std::size_t dim() const { return values.size(); }
};

// Cosine of the angle between two vectors, clamped to [-1, 1]. Dimension
// mismatch or a zero-norm input is an error, never a silent NaN.
double cosine_similarity(const Embedding& a, const Embedding& b);

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;

    virtual const std::string& name() const = 0;
    virtual std::size_t dim() const = 0;
    virtual std::size_t batch_limit() const = 0;

    // One vector per input, order preserving. Deterministic for a fixed
    // provider configuration. Must be safe to call concurrently.
    virtual std::vector<Embedding> embed(const std::vector<std::string>& texts) = 0;

    Embedding embed_one(const std::string& text);
};

struct EmbeddingError : std::runtime_error {
    enum class Kind { transport, status, dimension };

    EmbeddingError(Kind k, const std::string& message) : std::runtime_error(message), kind(k) {}

    Kind kind;
};

struct HashProviderConfig {
    std::size_t dim = 256;
    std::uint64_t seed = 0;
};

// Signed token-hashing bag-of-words, L2-normalized. Stable across runs and
// platforms for a fixed seed; texts sharing tokens land near each other,
// which is the geometry every downstream similarity test relies on.
class HashEmbeddingProvider final : public EmbeddingProvider {
public:
    explicit HashEmbeddingProvider(HashProviderConfig config = {});

    const std::string& name() const override { return name_; }
    std::size_t dim() const override { return config_.dim; }
    std::size_t batch_limit() const override { return 1024; }
    std::vector<Embedding> embed(const std::vector<std::string>& texts) override;

    // Inputs that were empty after trimming (or whose buckets cancelled out)
    // embed to a reserved constant unit vector; this counts them.
    std::uint64_t fallback_count() const { return fallback_count_.load(); }

private:
    Embedding embed_text(const std::string& text);

    HashProviderConfig config_;
    std::string name_;
    std::atomic<std::uint64_t> fallback_count_{0};
};

struct RemoteProviderConfig {
    std::string url;        // e.g. http://host:port/embed; env CHUNKFILTER_EMBED_URL
    std::string auth_token; // optional bearer token; env CHUNKFILTER_EMBED_TOKEN
    std::string model;
    std::size_t dim = 0;
    std::size_t batch_limit = 64;
    int max_retries = 3;
    int backoff_initial_ms = 100;
    int in_flight_limit = 4;
};

// JSON-over-HTTP client: POST {"model", "inputs"} -> {"embeddings": [[f]]}.
// Batches at batch_limit, retries with exponential backoff; a batch either
// succeeds whole or fails with a typed EmbeddingError.
class RemoteEmbeddingProvider final : public EmbeddingProvider {
public:
    explicit RemoteEmbeddingProvider(RemoteProviderConfig config);
    ~RemoteEmbeddingProvider() override;

    static RemoteProviderConfig config_from_env(std::string model, std::size_t dim);

    const std::string& name() const override { return name_; }
    std::size_t dim() const override { return config_.dim; }
    std::size_t batch_limit() const override { return config_.batch_limit; }
    std::vector<Embedding> embed(const std::vector<std::string>& texts) override;

private:
    std::vector<Embedding> embed_batch(const std::vector<std::string>& batch);

    RemoteProviderConfig config_;
    std::string name_;
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// In-memory embedding cache keyed by (provider name, text hash), with an
// optional binary sidecar file: little-endian uint32 header length, JSON
// header {provider, dim, keys}, then count*dim little-endian f32 values.
class EmbeddingCache {
public:
    EmbeddingCache(std::string provider_name, std::size_t dim);
    EmbeddingCache(EmbeddingCache&& other) noexcept
        : provider_name_(std::move(other.provider_name_)), dim_(other.dim_),
          entries_(std::move(other.entries_)),
          insertion_order_(std::move(other.insertion_order_)) {}

    static EmbeddingCache load(const std::string& path);
    void save(const std::string& path) const;

    const std::string& provider_name() const { return provider_name_; }
    std::size_t dim() const { return dim_; }
    std::size_t size() const;

    std::optional<Embedding> find(const std::string& text) const;
    void put(const std::string& text, Embedding embedding);

    static std::string key_for(const std::string& text);

private:
    std::string provider_name_;
    std::size_t dim_;
    mutable std::mutex mutex_;
    std::unordered_map<std::string, Embedding> entries_; // key -> vector
    std::vector<std::string> insertion_order_;
};

// Wraps a provider with a shared cache. Lookups and the inner provider are
// both safe under concurrency.
class CachingProvider final : public EmbeddingProvider {
public:
    CachingProvider(EmbeddingProvider& inner, EmbeddingCache& cache);

    const std::string& name() const override { return inner_.name(); }
    std::size_t dim() const override { return inner_.dim(); }
    std::size_t batch_limit() const override { return inner_.batch_limit(); }
    std::vector<Embedding> embed(const std::vector<std::string>& texts) override;

private:
    EmbeddingProvider& inner_;
    EmbeddingCache& cache_;
};

} // namespace chunkfilter
