#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace chunkfilter {

struct MinHashConfig {
    std::size_t shingle_width = 3; // tokens per shingle
    std::size_t num_hashes = 128;
    std::size_t bands = 32;
    std::size_t rows = 4;
    double jaccard_threshold = 0.8;
    std::uint64_t seed = 0;

    void validate() const; // bands * rows must equal num_hashes
};

// Hashes of the width-w token windows of a sequence, sorted and deduplicated.
// A sequence shorter than the width collapses to one shingle over the whole
// sequence, so every non-empty chunk has a non-empty shingle set.
std::vector<std::uint64_t> shingle_hashes(const std::vector<std::string>& tokens,
                                          std::size_t width);

// Jaccard over sorted unique hash sets; two empty sets count as identical.
double exact_jaccard(const std::vector<std::uint64_t>& a, const std::vector<std::uint64_t>& b);

// num_hashes independent permutations h(x) = (a*x + b) mod (2^61 - 1), drawn
// from the seed. The fraction of matching signature slots estimates Jaccard.
class MinHasher {
public:
    MinHasher(std::size_t num_hashes, std::uint64_t seed);

    std::size_t num_hashes() const { return a_.size(); }
    std::vector<std::uint64_t> signature(const std::vector<std::uint64_t>& shingles) const;
    static double estimate(const std::vector<std::uint64_t>& sig_a,
                           const std::vector<std::uint64_t>& sig_b);

private:
    std::vector<std::uint64_t> a_;
    std::vector<std::uint64_t> b_;
};

// Banded LSH over signatures: items sharing all rows of any band are
// candidates. Pairs come out sorted and unique, (i, j) with i < j.
std::vector<std::pair<std::size_t, std::size_t>>
lsh_candidate_pairs(const std::vector<std::vector<std::uint64_t>>& signatures, std::size_t bands,
                    std::size_t rows);

} // namespace chunkfilter
