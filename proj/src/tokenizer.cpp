#include "reqrag/tokenizer.hpp"

#include "reqrag/error.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <unordered_set>

namespace reqrag {

namespace {

const std::unordered_set<std::string_view>& stopwords() {
    static const std::unordered_set<std::string_view> words = {
        "a",    "an",   "and",  "are",  "as",   "at",    "be",   "by",   "for",  "from",
        "has",  "have", "in",   "is",   "it",   "its",   "of",   "on",   "or",   "shall",
        "that", "the",  "this", "to",   "was",  "were",  "will", "with", "which", "must"};
    return words;
}

// Harman's S-stemmer: only plural suffixes, never touches technical stems.
std::string s_stem(std::string word) {
    auto ends_with = [&](std::string_view suffix) {
        return word.size() > suffix.size() &&
               std::string_view(word).substr(word.size() - suffix.size()) == suffix;
    };
    if (ends_with("ies") && !ends_with("eies") && !ends_with("aies")) {
        word.replace(word.size() - 3, 3, "y");
    } else if (ends_with("es") && !ends_with("aes") && !ends_with("ees") && !ends_with("oes")) {
        word.pop_back();
    } else if (ends_with("s") && !ends_with("us") && !ends_with("ss")) {
        word.pop_back();
    }
    return word;
}

std::vector<std::string> split_words(std::string_view s) {
    std::vector<std::string> parts;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
        std::size_t j = i;
        while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
        if (j > i) parts.push_back(to_lower(s.substr(i, j - i)));
        i = j;
    }
    return parts;
}

unsigned char lower_byte(char c) {
    return static_cast<unsigned char>(std::tolower(static_cast<unsigned char>(c)));
}

// Length consumed by matching `e` at `pos`, or 0.
std::size_t match_entry(std::string_view text, std::size_t pos, const DomainDictionary::Entry& e) {
    std::size_t i = pos;
    for (std::size_t p = 0; p < e.parts.size(); ++p) {
        if (p > 0) {
            std::size_t sep = i;
            while (sep < text.size() && !is_word_char(static_cast<unsigned char>(text[sep]))) ++sep;
            if (sep == i) return 0;
            i = sep;
        }
        const std::string& part = e.parts[p];
        if (text.size() - i < part.size()) return 0;
        for (std::size_t k = 0; k < part.size(); ++k) {
            if (lower_byte(text[i + k]) != static_cast<unsigned char>(part[k])) return 0;
        }
        i += part.size();
    }
    if (i < text.size() && is_word_char(static_cast<unsigned char>(text[i])) &&
        is_word_char(static_cast<unsigned char>(text[i - 1]))) {
        return 0;
    }
    return i - pos;
}

}  // namespace

bool is_word_char(unsigned char c) noexcept { return std::isalnum(c) != 0 || c >= 0x80; }

std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

void DomainDictionary::add_multiword_term(std::string_view term) {
    auto parts = split_words(term);
    if (parts.empty()) throw ValidationError("multiword_terms", "empty entry");
    if (parts.size() < 2) {
        throw ValidationError("multiword_terms",
                              "'" + std::string(term) + "' must contain at least two words");
    }
    std::string canonical;
    for (const auto& p : parts) canonical += (canonical.empty() ? "" : " ") + p;
    multiword_.push_back(canonical);
    add_entry(std::move(parts), std::move(canonical));
}

void DomainDictionary::add_preserved_literal(std::string_view literal) {
    auto parts = split_words(literal);
    if (parts.empty()) throw ValidationError("preserved_literals", "empty entry");
    // Canonical form keeps the caller's spelling but normalizes inner whitespace.
    std::string canonical;
    std::size_t i = 0;
    while (i < literal.size()) {
        while (i < literal.size() && std::isspace(static_cast<unsigned char>(literal[i]))) ++i;
        std::size_t j = i;
        while (j < literal.size() && !std::isspace(static_cast<unsigned char>(literal[j]))) ++j;
        if (j > i) canonical += (canonical.empty() ? "" : " ") + std::string(literal.substr(i, j - i));
        i = j;
    }
    literals_.push_back(canonical);
    add_entry(std::move(parts), std::move(canonical));
}

void DomainDictionary::add_entry(std::vector<std::string> parts, std::string canonical) {
    if (canonical_.count(canonical)) return;
    const auto first = static_cast<unsigned char>(parts.front().front());
    canonical_.emplace(canonical, entries_.size());
    by_first_[first].push_back(entries_.size());
    entries_.push_back(Entry{std::move(parts), std::move(canonical)});
}

const std::vector<std::size_t>* DomainDictionary::candidates(unsigned char first) const {
    auto it = by_first_.find(first);
    return it == by_first_.end() ? nullptr : &it->second;
}

bool DomainDictionary::is_entry_token(std::string_view token) const {
    return canonical_.count(std::string(token)) > 0;
}

std::vector<std::string> tokenize(std::string_view text, const DomainDictionary& dict,
                                  const TokenizerOptions& opts) {
    std::vector<std::string> tokens;
    std::size_t i = 0;
    while (i < text.size()) {
        const bool at_boundary = i == 0 || !is_word_char(static_cast<unsigned char>(text[i - 1]));
        if (at_boundary && !dict.empty()) {
            std::size_t best_len = 0;
            const DomainDictionary::Entry* best = nullptr;
            if (const auto* cands = dict.candidates(lower_byte(text[i]))) {
                for (std::size_t idx : *cands) {
                    const auto& e = dict.entry(idx);
                    std::size_t len = match_entry(text, i, e);
                    if (len > best_len) {
                        best_len = len;
                        best = &e;
                    }
                }
            }
            if (best) {
                tokens.push_back(best->canonical);
                i += best_len;
                continue;
            }
        }
        if (!is_word_char(static_cast<unsigned char>(text[i]))) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < text.size() && is_word_char(static_cast<unsigned char>(text[j]))) ++j;
        std::string word = to_lower(text.substr(i, j - i));
        i = j;
        if (opts.remove_stopwords && stopwords().count(word)) continue;
        if (opts.stem) word = s_stem(std::move(word));
        tokens.push_back(std::move(word));
    }
    return tokens;
}

std::size_t count_tokens(std::string_view text, const DomainDictionary& dict,
                         const TokenizerOptions& opts) {
    return tokenize(text, dict, opts).size();
}

}  // namespace reqrag
