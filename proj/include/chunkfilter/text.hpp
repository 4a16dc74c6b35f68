#pragma once

#include <cstddef>
#include <set>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace chunkfilter {

enum class TokenMode { raw, preprocessed };

std::string token_mode_name(TokenMode mode);
TokenMode token_mode_from_name(const std::string& name);

// A token with its byte span in the source text. `text` is the lowercased
// form; the span addresses the original (unmodified) bytes.
struct TokenSpan {
    std::size_t byte_start = 0;
    std::size_t byte_end = 0; // exclusive
    std::string text;
};

// Tokens are maximal runs of Unicode letters/digits, lowercased. This single
// rule is used everywhere a token count or token set is needed: chunk sizes,
// shingles, hash embeddings, and the coverage metrics. Deterministic and
// language-agnostic; invalid UTF-8 bytes act as separators.
std::vector<std::string> tokenize(std::string_view text);
std::vector<TokenSpan> tokenize_spans(std::string_view text);

// Fixed English stopword list. The built-in list is the versioned default;
// a list can also be loaded from a file (one token per line, '#' comments).
class Stopwords {
public:
    static const Stopwords& builtin_english();
    static Stopwords from_file(const std::string& path);

    bool contains(const std::string& token) const { return words_.count(token) > 0; }
    std::size_t size() const { return words_.size(); }

private:
    std::unordered_set<std::string> words_;
};

// Deterministic English suffix lemmatizer: irregular-plural exceptions, then
// plural -s/-es/-ies and -ing/-ed stripping with doubled-consonant repair.
// Applied to a fixed point, so lemmatize(lemmatize(w)) == lemmatize(w).
std::string lemmatize(const std::string& token);

struct TokenSet {
    std::set<std::string> tokens;
    TokenMode mode = TokenMode::raw;

    bool empty() const { return tokens.empty(); }
    std::size_t size() const { return tokens.size(); }
};

// raw: set of lowercased word tokens. preprocessed: stopwords removed, then
// every token lemmatized (and any token that lemmatizes into a stopword is
// dropped, keeping the result stopword-free).
TokenSet token_set(std::string_view text, TokenMode mode);
TokenSet token_set(std::string_view text, TokenMode mode, const Stopwords& stopwords);

// NFKC, lowercase, whitespace runs collapsed to one space, trimmed. The
// "normalized textual form" used for exact deduplication.
std::string canonical_form(std::string_view text);

// Lowercase + whitespace collapse + trim, without compatibility decomposition.
std::string fold_whitespace_lower(std::string_view text);

} // namespace chunkfilter
