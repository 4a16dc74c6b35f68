#include "chunkfilter/minhash.hpp"

#include "chunkfilter/hashing.hpp"
#include "chunkfilter/random.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_map>

namespace chunkfilter {

namespace {

// Mersenne prime field keeps (a*x + b) mod p exact in 128-bit arithmetic.
constexpr std::uint64_t kPrime = (1ull << 61) - 1;

std::uint64_t mod_p(unsigned __int128 x) { return std::uint64_t(x % kPrime); }

} // namespace

void MinHashConfig::validate() const {
    if (shingle_width == 0) throw std::invalid_argument("minhash: shingle_width must be positive");
    if (num_hashes == 0) throw std::invalid_argument("minhash: num_hashes must be positive");
    if (bands == 0 || rows == 0)
        throw std::invalid_argument("minhash: bands and rows must be positive");
    if (bands * rows != num_hashes)
        throw std::invalid_argument("minhash: bands (" + std::to_string(bands) + ") * rows (" +
                                    std::to_string(rows) + ") must equal num_hashes (" +
                                    std::to_string(num_hashes) + ")");
    if (!(jaccard_threshold > 0.0 && jaccard_threshold <= 1.0))
        throw std::invalid_argument("minhash: jaccard_threshold must lie in (0, 1]");
}

std::vector<std::uint64_t> shingle_hashes(const std::vector<std::string>& tokens,
                                          std::size_t width) {
    if (width == 0) throw std::invalid_argument("shingle_hashes: width must be positive");
    std::vector<std::uint64_t> out;
    if (tokens.empty()) return out;
    const std::size_t w = std::min(width, tokens.size());
    out.reserve(tokens.size() - w + 1);
    for (std::size_t i = 0; i + w <= tokens.size(); ++i) {
        // Unit separator between tokens keeps ["ab","c"] and ["a","bc"] apart.
        std::uint64_t h = 0xcbf29ce484222325ull;
        for (std::size_t j = i; j < i + w; ++j) {
            for (unsigned char c : tokens[j]) {
                h ^= c;
                h *= 0x100000001b3ull;
            }
            h ^= 0x1f;
            h *= 0x100000001b3ull;
        }
        out.push_back(splitmix64(h));
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

double exact_jaccard(const std::vector<std::uint64_t>& a, const std::vector<std::uint64_t>& b) {
    if (a.empty() && b.empty()) return 1.0;
    std::size_t inter = 0, i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i] == b[j]) {
            ++inter;
            ++i;
            ++j;
        } else if (a[i] < b[j]) {
            ++i;
        } else {
            ++j;
        }
    }
    const std::size_t uni = a.size() + b.size() - inter;
    return double(inter) / double(uni);
}

MinHasher::MinHasher(std::size_t num_hashes, std::uint64_t seed) {
    if (num_hashes == 0) throw std::invalid_argument("MinHasher: num_hashes must be positive");
    std::mt19937_64 rng(splitmix64(seed ^ 0x6d696e68ull));
    a_.reserve(num_hashes);
    b_.reserve(num_hashes);
    for (std::size_t i = 0; i < num_hashes; ++i) {
        a_.push_back(1 + uniform_index(rng, kPrime - 1)); // a in [1, p-1]
        b_.push_back(uniform_index(rng, kPrime));         // b in [0, p-1]
    }
}

std::vector<std::uint64_t> MinHasher::signature(const std::vector<std::uint64_t>& shingles) const {
    std::vector<std::uint64_t> sig(a_.size(), kPrime);
    for (std::uint64_t raw : shingles) {
        const std::uint64_t x = raw % kPrime;
        for (std::size_t i = 0; i < a_.size(); ++i) {
            const std::uint64_t h = mod_p((unsigned __int128)a_[i] * x + b_[i]);
            if (h < sig[i]) sig[i] = h;
        }
    }
    return sig;
}

double MinHasher::estimate(const std::vector<std::uint64_t>& sig_a,
                           const std::vector<std::uint64_t>& sig_b) {
    if (sig_a.size() != sig_b.size() || sig_a.empty())
        throw std::invalid_argument("minhash estimate: signature size mismatch");
    std::size_t equal = 0;
    for (std::size_t i = 0; i < sig_a.size(); ++i)
        if (sig_a[i] == sig_b[i]) ++equal;
    return double(equal) / double(sig_a.size());
}

std::vector<std::pair<std::size_t, std::size_t>>
lsh_candidate_pairs(const std::vector<std::vector<std::uint64_t>>& signatures, std::size_t bands,
                    std::size_t rows) {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    if (signatures.empty()) return pairs;
    for (const auto& sig : signatures)
        if (sig.size() != bands * rows)
            throw std::invalid_argument("lsh: signature length does not match bands * rows");

    for (std::size_t band = 0; band < bands; ++band) {
        std::unordered_map<std::uint64_t, std::vector<std::size_t>> buckets;
        buckets.reserve(signatures.size() * 2);
        for (std::size_t item = 0; item < signatures.size(); ++item) {
            std::uint64_t key = splitmix64(band + 0x9e37ull);
            for (std::size_t r = 0; r < rows; ++r)
                key = splitmix64(key ^ signatures[item][band * rows + r]);
            buckets[key].push_back(item);
        }
        for (const auto& [key, members] : buckets) {
            for (std::size_t x = 0; x + 1 < members.size(); ++x)
                for (std::size_t y = x + 1; y < members.size(); ++y)
                    pairs.emplace_back(members[x], members[y]);
        }
    }
    std::sort(pairs.begin(), pairs.end());
    pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
    return pairs;
}

} // namespace chunkfilter
