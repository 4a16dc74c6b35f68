#include "chunkfilter/text.hpp"

#include <fstream>
#include <stdexcept>
#include <unordered_map>

#include <unicode/uchar.h>
#include <unicode/unorm2.h>
#include <unicode/ustring.h>
#include <unicode/utf8.h>

namespace chunkfilter {

std::string token_mode_name(TokenMode mode) {
    return mode == TokenMode::raw ? "raw" : "preprocessed";
}

TokenMode token_mode_from_name(const std::string& name) {
    if (name == "raw") return TokenMode::raw;
    if (name == "preprocessed") return TokenMode::preprocessed;
    throw std::invalid_argument("unknown token mode: " + name);
}

namespace {

void append_lower_utf8(UChar32 cp, std::string& out) {
    UChar32 lc = u_tolower(cp);
    char buf[U8_MAX_LENGTH];
    int32_t len = 0;
    U8_APPEND_UNSAFE(buf, len, lc);
    out.append(buf, static_cast<std::size_t>(len));
}

bool is_word_cp(UChar32 cp) {
    return cp >= 0 && u_isalnum(cp);
}

} // namespace

std::vector<TokenSpan> tokenize_spans(std::string_view text) {
    std::vector<TokenSpan> out;
    const auto* s = reinterpret_cast<const uint8_t*>(text.data());
    const auto n = static_cast<int32_t>(text.size());

    TokenSpan current;
    bool in_token = false;
    int32_t i = 0;
    while (i < n) {
        int32_t start = i;
        UChar32 cp;
        U8_NEXT(s, i, n, cp); // invalid sequences yield cp < 0, length >= 1
        if (is_word_cp(cp)) {
            if (!in_token) {
                in_token = true;
                current.byte_start = static_cast<std::size_t>(start);
                current.text.clear();
            }
            append_lower_utf8(cp, current.text);
        } else if (in_token) {
            current.byte_end = static_cast<std::size_t>(start);
            out.push_back(current);
            in_token = false;
        }
    }
    if (in_token) {
        current.byte_end = text.size();
        out.push_back(current);
    }
    return out;
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    for (auto& span : tokenize_spans(text)) out.push_back(std::move(span.text));
    return out;
}

namespace {

// Tokenizer-compatible forms only (no apostrophes: "aren't" tokenizes to
// "aren","t", so both pieces are listed). Version 1.
const char* const kBuiltinStopwords[] = {
    "i", "me", "my", "myself", "we", "our", "ours", "ourselves", "you", "your", "yours",
    "yourself", "yourselves", "he", "him", "his", "himself", "she", "her", "hers", "herself",
    "it", "its", "itself", "they", "them", "their", "theirs", "themselves", "what", "which",
    "who", "whom", "this", "that", "these", "those", "am", "is", "are", "was", "were", "be",
    "been", "being", "have", "has", "had", "having", "do", "does", "did", "doing", "a", "an",
    "the", "and", "but", "if", "or", "because", "as", "until", "while", "of", "at", "by",
    "for", "with", "about", "against", "between", "into", "through", "during", "before",
    "after", "above", "below", "to", "from", "up", "down", "in", "out", "on", "off", "over",
    "under", "again", "further", "then", "once", "here", "there", "when", "where", "why",
    "how", "all", "any", "both", "each", "few", "more", "most", "other", "some", "such",
    "no", "nor", "not", "only", "own", "same", "so", "than", "too", "very", "s", "t", "can",
    "will", "just", "don", "should", "now", "d", "ll", "m", "o", "re", "ve", "y", "ain",
    "aren", "couldn", "didn", "doesn", "hadn", "hasn", "haven", "isn", "ma", "mightn",
    "mustn", "needn", "shan", "shouldn", "wasn", "weren", "won", "wouldn",
};

} // namespace

const Stopwords& Stopwords::builtin_english() {
    static const Stopwords instance = [] {
        Stopwords sw;
        for (const char* w : kBuiltinStopwords) sw.words_.insert(w);
        return sw;
    }();
    return instance;
}

Stopwords Stopwords::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open stopword file: " + path);
    Stopwords sw;
    std::string line;
    while (std::getline(in, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::size_t b = line.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) continue;
        std::size_t e = line.find_last_not_of(" \t\r\n");
        std::string word = line.substr(b, e - b + 1);
        std::string lowered;
        for (auto& t : tokenize(word)) {
            if (!lowered.empty()) lowered += ' ';
            lowered += t;
        }
        if (!lowered.empty()) sw.words_.insert(lowered);
    }
    return sw;
}

namespace {

bool ends_with(const std::string& w, std::string_view suffix) {
    return w.size() >= suffix.size() &&
           w.compare(w.size() - suffix.size(), suffix.size(), suffix) == 0;
}

bool ascii_vowel(char c) {
    return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u';
}

bool has_ascii_vowel(std::string_view s) {
    for (char c : s)
        if (ascii_vowel(c) || c == 'y') return true;
    return false;
}

bool all_ascii_lower_alpha(const std::string& w) {
    for (char c : w)
        if (c < 'a' || c > 'z') return false;
    return true;
}

std::string undouble(std::string stem) {
    if (stem.size() >= 3) {
        char last = stem.back();
        if (last == stem[stem.size() - 2] && !ascii_vowel(last) && last != 'l' && last != 's' &&
            last != 'z') {
            stem.pop_back();
        }
    }
    return stem;
}

const std::unordered_map<std::string, std::string>& irregular_plurals() {
    static const std::unordered_map<std::string, std::string> table = {
        {"men", "man"},     {"women", "woman"}, {"children", "child"}, {"feet", "foot"},
        {"teeth", "tooth"}, {"geese", "goose"}, {"mice", "mouse"},
    };
    return table;
}

std::string lemma_step(const std::string& w) {
    auto it = irregular_plurals().find(w);
    if (it != irregular_plurals().end()) return it->second;
    if (w.size() <= 3 || !all_ascii_lower_alpha(w)) return w;

    if (ends_with(w, "ies") && w.size() > 4) return w.substr(0, w.size() - 3) + "y";
    if (ends_with(w, "es")) {
        std::string stem = w.substr(0, w.size() - 2);
        if (ends_with(stem, "s") || ends_with(stem, "x") || ends_with(stem, "z") ||
            ends_with(stem, "ch") || ends_with(stem, "sh"))
            return stem;
    }
    if (ends_with(w, "s") && !ends_with(w, "ss") && !ends_with(w, "us") && !ends_with(w, "is"))
        return w.substr(0, w.size() - 1);
    if (ends_with(w, "ing")) {
        std::string stem = w.substr(0, w.size() - 3);
        if (stem.size() >= 3 && has_ascii_vowel(stem)) return undouble(std::move(stem));
    }
    if (ends_with(w, "ed")) {
        std::string stem = w.substr(0, w.size() - 2);
        if (stem.size() >= 3 && has_ascii_vowel(stem)) return undouble(std::move(stem));
    }
    return w;
}

} // namespace

std::string lemmatize(const std::string& token) {
    std::string current = token;
    for (int i = 0; i < 8; ++i) {
        std::string next = lemma_step(current);
        if (next == current) return current;
        current = std::move(next);
    }
    return current;
}

TokenSet token_set(std::string_view text, TokenMode mode) {
    return token_set(text, mode, Stopwords::builtin_english());
}

TokenSet token_set(std::string_view text, TokenMode mode, const Stopwords& stopwords) {
    TokenSet result;
    result.mode = mode;
    for (auto& tok : tokenize(text)) {
        if (mode == TokenMode::raw) {
            result.tokens.insert(std::move(tok));
            continue;
        }
        if (stopwords.contains(tok)) continue;
        std::string lemma = lemmatize(tok);
        if (stopwords.contains(lemma)) continue;
        result.tokens.insert(std::move(lemma));
    }
    return result;
}

namespace {

std::string nfkc(std::string_view text) {
    UErrorCode ec = U_ZERO_ERROR;
    const UNormalizer2* norm = unorm2_getNFKCInstance(&ec);
    if (U_FAILURE(ec)) return std::string(text);

    const auto src_len = static_cast<int32_t>(text.size());
    int32_t u16_len = 0;
    ec = U_ZERO_ERROR;
    u_strFromUTF8WithSub(nullptr, 0, &u16_len, text.data(), src_len, 0xFFFD, nullptr, &ec);
    if (ec != U_BUFFER_OVERFLOW_ERROR && U_FAILURE(ec)) return std::string(text);
    std::vector<UChar> u16(static_cast<std::size_t>(u16_len) + 1);
    ec = U_ZERO_ERROR;
    u_strFromUTF8WithSub(u16.data(), u16_len + 1, nullptr, text.data(), src_len, 0xFFFD, nullptr,
                         &ec);
    if (U_FAILURE(ec)) return std::string(text);

    ec = U_ZERO_ERROR;
    int32_t norm_len = unorm2_normalize(norm, u16.data(), u16_len, nullptr, 0, &ec);
    if (ec != U_BUFFER_OVERFLOW_ERROR && U_FAILURE(ec)) return std::string(text);
    std::vector<UChar> normalized(static_cast<std::size_t>(norm_len) + 1);
    ec = U_ZERO_ERROR;
    unorm2_normalize(norm, u16.data(), u16_len, normalized.data(), norm_len + 1, &ec);
    if (U_FAILURE(ec)) return std::string(text);

    int32_t out_len = 0;
    ec = U_ZERO_ERROR;
    u_strToUTF8(nullptr, 0, &out_len, normalized.data(), norm_len, &ec);
    if (ec != U_BUFFER_OVERFLOW_ERROR && U_FAILURE(ec)) return std::string(text);
    std::string out(static_cast<std::size_t>(out_len), '\0');
    ec = U_ZERO_ERROR;
    u_strToUTF8(out.data(), out_len, nullptr, normalized.data(), norm_len, &ec);
    if (U_FAILURE(ec)) return std::string(text);
    return out;
}

std::string lower_collapse(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    const auto* s = reinterpret_cast<const uint8_t*>(text.data());
    const auto n = static_cast<int32_t>(text.size());
    bool pending_space = false;
    int32_t i = 0;
    while (i < n) {
        UChar32 cp;
        U8_NEXT(s, i, n, cp);
        if (cp < 0) cp = 0xFFFD;
        if (u_isUWhiteSpace(cp)) {
            pending_space = true;
            continue;
        }
        if (pending_space && !out.empty()) out += ' ';
        pending_space = false;
        append_lower_utf8(cp, out);
    }
    return out;
}

} // namespace

std::string canonical_form(std::string_view text) {
    return lower_collapse(nfkc(text));
}

std::string fold_whitespace_lower(std::string_view text) {
    return lower_collapse(text);
}

} // namespace chunkfilter
