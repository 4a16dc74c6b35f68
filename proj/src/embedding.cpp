#include "chunkfilter/embedding.hpp"

#include "chunkfilter/hashing.hpp"
#include "chunkfilter/text.hpp"

#include <httplib.h>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <semaphore>
#include <thread>

namespace chunkfilter {

namespace {

using nlohmann::json;

float read_le_f32(const unsigned char* p) {
    std::uint32_t bits = std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 |
                         std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
    float out;
    std::memcpy(&out, &bits, sizeof out);
    return out;
}

void write_le_f32(std::string& out, float value) {
    std::uint32_t bits;
    std::memcpy(&bits, &value, sizeof bits);
    out.push_back(char(bits & 0xff));
    out.push_back(char(bits >> 8 & 0xff));
    out.push_back(char(bits >> 16 & 0xff));
    out.push_back(char(bits >> 24 & 0xff));
}

} // namespace

double cosine_similarity(const Embedding& a, const Embedding& b) {
    if (a.dim() != b.dim())
        throw std::invalid_argument("cosine_similarity: dimension mismatch " +
                                    std::to_string(a.dim()) + " vs " + std::to_string(b.dim()));
    if (a.dim() == 0)
        throw std::invalid_argument("cosine_similarity: empty vectors");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        dot += double(a.values[i]) * b.values[i];
        na += double(a.values[i]) * a.values[i];
        nb += double(b.values[i]) * b.values[i];
    }
    if (na == 0.0 || nb == 0.0)
        throw std::invalid_argument("cosine_similarity: zero-norm vector");
    double sim = dot / (std::sqrt(na) * std::sqrt(nb));
    if (sim > 1.0) sim = 1.0;
    if (sim < -1.0) sim = -1.0;
    return sim;
}

Embedding EmbeddingProvider::embed_one(const std::string& text) {
    auto out = embed({text});
    if (out.size() != 1)
        throw EmbeddingError(EmbeddingError::Kind::dimension,
                             "provider returned " + std::to_string(out.size()) +
                                 " vectors for a single input");
    return std::move(out.front());
}

HashEmbeddingProvider::HashEmbeddingProvider(HashProviderConfig config) : config_(config) {
    if (config_.dim == 0)
        throw std::invalid_argument("hash provider: dim must be positive");
    name_ = "hash-" + std::to_string(config_.dim) + "-s" + std::to_string(config_.seed);
}

std::vector<Embedding> HashEmbeddingProvider::embed(const std::vector<std::string>& texts) {
    std::vector<Embedding> out;
    out.reserve(texts.size());
    for (const auto& text : texts) out.push_back(embed_text(text));
    return out;
}

Embedding HashEmbeddingProvider::embed_text(const std::string& text) {
    std::vector<float> acc(config_.dim, 0.0f);
    const std::uint64_t salt = splitmix64(config_.seed ^ 0x5eedba5eull);
    for (const auto& token : tokenize(text)) {
        const std::uint64_t h = splitmix64(fnv1a64(token) ^ salt);
        const std::size_t bucket = std::size_t(h % config_.dim);
        acc[bucket] += (h >> 63) ? 1.0f : -1.0f;
    }
    double norm = 0.0;
    for (float v : acc) norm += double(v) * v;
    if (norm == 0.0) {
        // No tokens, or all buckets cancelled: pin to a reserved direction so
        // downstream cosine never sees a zero vector.
        fallback_count_.fetch_add(1);
        acc.assign(config_.dim, 0.0f);
        acc[0] = 1.0f;
        return Embedding{std::move(acc)};
    }
    const float inv = float(1.0 / std::sqrt(norm));
    for (float& v : acc) v *= inv;
    return Embedding{std::move(acc)};
}

struct RemoteEmbeddingProvider::Impl {
    explicit Impl(int in_flight) : gate(in_flight) {}

    std::counting_semaphore<1 << 16> gate;
    std::string scheme_host_port;
    std::string path;
};

RemoteEmbeddingProvider::RemoteEmbeddingProvider(RemoteProviderConfig config)
    : config_(std::move(config)) {
    if (config_.url.empty())
        throw std::invalid_argument("remote provider: url is required");
    if (config_.dim == 0)
        throw std::invalid_argument("remote provider: dim must be positive");
    if (config_.batch_limit == 0)
        throw std::invalid_argument("remote provider: batch_limit must be positive");
    if (config_.in_flight_limit <= 0)
        throw std::invalid_argument("remote provider: in_flight_limit must be positive");
    name_ = "remote-" + config_.model;
    impl_ = std::make_unique<Impl>(config_.in_flight_limit);

    // Split the URL into base (scheme://host:port) and request path.
    const auto scheme_end = config_.url.find("://");
    const std::size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
    const auto path_start = config_.url.find('/', host_start);
    if (path_start == std::string::npos) {
        impl_->scheme_host_port = config_.url;
        impl_->path = "/";
    } else {
        impl_->scheme_host_port = config_.url.substr(0, path_start);
        impl_->path = config_.url.substr(path_start);
    }
}

RemoteEmbeddingProvider::~RemoteEmbeddingProvider() = default;

RemoteProviderConfig RemoteEmbeddingProvider::config_from_env(std::string model, std::size_t dim) {
    RemoteProviderConfig cfg;
    if (const char* url = std::getenv("CHUNKFILTER_EMBED_URL")) cfg.url = url;
    if (const char* token = std::getenv("CHUNKFILTER_EMBED_TOKEN")) cfg.auth_token = token;
    cfg.model = std::move(model);
    cfg.dim = dim;
    return cfg;
}

std::vector<Embedding> RemoteEmbeddingProvider::embed(const std::vector<std::string>& texts) {
    std::vector<Embedding> out;
    out.reserve(texts.size());
    for (std::size_t start = 0; start < texts.size(); start += config_.batch_limit) {
        const std::size_t stop = std::min(texts.size(), start + config_.batch_limit);
        std::vector<std::string> batch(texts.begin() + long(start), texts.begin() + long(stop));
        auto vectors = embed_batch(batch);
        for (auto& v : vectors) out.push_back(std::move(v));
    }
    return out;
}

std::vector<Embedding> RemoteEmbeddingProvider::embed_batch(const std::vector<std::string>& batch) {
    if (batch.empty()) return {};

    json body;
    body["model"] = config_.model;
    body["inputs"] = batch;
    const std::string payload = body.dump();

    httplib::Headers headers;
    if (!config_.auth_token.empty())
        headers.emplace("Authorization", "Bearer " + config_.auth_token);

    impl_->gate.acquire();
    struct Release {
        std::counting_semaphore<1 << 16>& gate;
        ~Release() { gate.release(); }
    } release{impl_->gate};

    std::string last_error;
    auto last_kind = EmbeddingError::Kind::transport;
    int backoff_ms = config_.backoff_initial_ms;
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
            backoff_ms *= 2;
        }

        httplib::Client client(impl_->scheme_host_port);
        client.set_connection_timeout(10, 0);
        client.set_read_timeout(60, 0);
        auto res = client.Post(impl_->path, headers, payload, "application/json");
        if (!res) {
            last_error = "transport failure: " + httplib::to_string(res.error());
            last_kind = EmbeddingError::Kind::transport;
            continue;
        }
        if (res->status == 429 || res->status >= 500) {
            last_error = "server status " + std::to_string(res->status);
            last_kind = EmbeddingError::Kind::status;
            continue;
        }
        if (res->status != 200)
            throw EmbeddingError(EmbeddingError::Kind::status,
                                 "embedding request rejected with status " +
                                     std::to_string(res->status));

        json reply;
        try {
            reply = json::parse(res->body);
        } catch (const json::exception& e) {
            throw EmbeddingError(EmbeddingError::Kind::status,
                                 std::string("embedding response is not valid JSON: ") + e.what());
        }
        if (!reply.contains("embeddings") || !reply["embeddings"].is_array())
            throw EmbeddingError(EmbeddingError::Kind::status,
                                 "embedding response missing \"embeddings\" array");
        const auto& rows = reply["embeddings"];
        if (rows.size() != batch.size())
            throw EmbeddingError(EmbeddingError::Kind::dimension,
                                 "expected " + std::to_string(batch.size()) + " vectors, got " +
                                     std::to_string(rows.size()));
        std::vector<Embedding> out;
        out.reserve(rows.size());
        for (const auto& row : rows) {
            if (!row.is_array() || row.size() != config_.dim)
                throw EmbeddingError(EmbeddingError::Kind::dimension,
                                     "expected dimension " + std::to_string(config_.dim) +
                                         ", got " + std::to_string(row.size()));
            Embedding e;
            e.values.reserve(config_.dim);
            for (const auto& v : row) e.values.push_back(v.get<float>());
            out.push_back(std::move(e));
        }
        return out;
    }
    throw EmbeddingError(last_kind, "embedding request failed after " +
                                        std::to_string(config_.max_retries + 1) +
                                        " attempts: " + last_error);
}

EmbeddingCache::EmbeddingCache(std::string provider_name, std::size_t dim)
    : provider_name_(std::move(provider_name)), dim_(dim) {
    if (dim_ == 0) throw std::invalid_argument("embedding cache: dim must be positive");
}

std::string EmbeddingCache::key_for(const std::string& text) {
    // Length is mixed in so "ab"+"c" and "a"+"bc" style collisions across
    // key construction cannot arise from concatenation elsewhere.
    const std::uint64_t h1 = fnv1a64(text);
    const std::uint64_t h2 = splitmix64(h1 ^ splitmix64(text.size()));
    char buf[33];
    std::snprintf(buf, sizeof buf, "%016llx%016llx", (unsigned long long)h1,
                  (unsigned long long)h2);
    return std::string(buf, 32);
}

std::size_t EmbeddingCache::size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
}

std::optional<Embedding> EmbeddingCache::find(const std::string& text) const {
    std::lock_guard lock(mutex_);
    auto it = entries_.find(key_for(text));
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

void EmbeddingCache::put(const std::string& text, Embedding embedding) {
    if (embedding.dim() != dim_)
        throw std::invalid_argument("embedding cache: expected dim " + std::to_string(dim_) +
                                    ", got " + std::to_string(embedding.dim()));
    std::lock_guard lock(mutex_);
    auto key = key_for(text);
    auto [it, inserted] = entries_.emplace(std::move(key), std::move(embedding));
    if (inserted) insertion_order_.push_back(it->first);
}

void EmbeddingCache::save(const std::string& path) const {
    std::lock_guard lock(mutex_);
    json header;
    header["provider"] = provider_name_;
    header["dim"] = dim_;
    header["keys"] = insertion_order_;
    const std::string header_text = header.dump();
    if (header_text.size() > 0xffffffffull)
        throw std::runtime_error("embedding cache: header too large");

    std::string blob;
    blob.reserve(4 + header_text.size() + insertion_order_.size() * dim_ * 4);
    const std::uint32_t len = std::uint32_t(header_text.size());
    blob.push_back(char(len & 0xff));
    blob.push_back(char(len >> 8 & 0xff));
    blob.push_back(char(len >> 16 & 0xff));
    blob.push_back(char(len >> 24 & 0xff));
    blob += header_text;
    for (const auto& key : insertion_order_) {
        const auto& values = entries_.at(key).values;
        for (float v : values) write_le_f32(blob, v);
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out.write(blob.data(), std::streamsize(blob.size()));
    if (!out) throw std::runtime_error("write failed: " + path);
}

EmbeddingCache EmbeddingCache::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (blob.size() < 4) throw std::runtime_error("embedding cache truncated: " + path);

    const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data());
    const std::uint32_t len = std::uint32_t(bytes[0]) | std::uint32_t(bytes[1]) << 8 |
                              std::uint32_t(bytes[2]) << 16 | std::uint32_t(bytes[3]) << 24;
    if (blob.size() < 4 + std::size_t(len))
        throw std::runtime_error("embedding cache truncated: " + path);

    json header;
    try {
        header = json::parse(blob.substr(4, len));
    } catch (const json::exception& e) {
        throw std::runtime_error("embedding cache header corrupt: " + path + ": " + e.what());
    }
    const auto provider = header.at("provider").get<std::string>();
    const auto dim = header.at("dim").get<std::size_t>();
    const auto keys = header.at("keys").get<std::vector<std::string>>();

    const std::size_t need = 4 + std::size_t(len) + keys.size() * dim * 4;
    if (blob.size() != need)
        throw std::runtime_error("embedding cache size mismatch: " + path + ": expected " +
                                 std::to_string(need) + " bytes, found " +
                                 std::to_string(blob.size()));

    EmbeddingCache cache(provider, dim);
    const unsigned char* cursor = bytes + 4 + len;
    for (const auto& key : keys) {
        Embedding e;
        e.values.reserve(dim);
        for (std::size_t i = 0; i < dim; ++i, cursor += 4) e.values.push_back(read_le_f32(cursor));
        auto [it, inserted] = cache.entries_.emplace(key, std::move(e));
        if (inserted) cache.insertion_order_.push_back(it->first);
    }
    return cache;
}

CachingProvider::CachingProvider(EmbeddingProvider& inner, EmbeddingCache& cache)
    : inner_(inner), cache_(cache) {
    if (inner.name() != cache.provider_name())
        throw std::invalid_argument("cache built for provider \"" + cache.provider_name() +
                                    "\" cannot serve \"" + inner.name() + "\"");
    if (inner.dim() != cache.dim())
        throw std::invalid_argument("cache dim " + std::to_string(cache.dim()) +
                                    " does not match provider dim " + std::to_string(inner.dim()));
}

std::vector<Embedding> CachingProvider::embed(const std::vector<std::string>& texts) {
    std::vector<Embedding> out(texts.size());
    std::vector<std::size_t> missing;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        if (auto hit = cache_.find(texts[i]))
            out[i] = std::move(*hit);
        else
            missing.push_back(i);
    }
    if (!missing.empty()) {
        std::vector<std::string> need;
        need.reserve(missing.size());
        for (auto i : missing) need.push_back(texts[i]);
        auto fresh = inner_.embed(need);
        if (fresh.size() != need.size())
            throw EmbeddingError(EmbeddingError::Kind::dimension,
                                 "provider returned " + std::to_string(fresh.size()) +
                                     " vectors for " + std::to_string(need.size()) + " inputs");
        for (std::size_t j = 0; j < missing.size(); ++j) {
            cache_.put(need[j], fresh[j]);
            out[missing[j]] = std::move(fresh[j]);
        }
    }
    return out;
}

} // namespace chunkfilter
