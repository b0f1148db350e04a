#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace reqrag {

struct TokenizerOptions {
    bool remove_stopwords = false;
    bool stem = false;
};

// Domain vocabulary that must survive tokenization intact.
//
// Multi-word terms ("emergency stop") are emitted lowercased as one token.
// Preserved literals ("MBN 9666-1", "ABS") are emitted in their canonical
// spelling. Matching is case-insensitive; whitespace inside an entry matches
// any run of non-alphanumeric characters in the text, every other character
// must match exactly.
class DomainDictionary {
public:
    DomainDictionary() = default;

    // Throws ValidationError on empty entries or multi-word terms with < 2 words.
    void add_multiword_term(std::string_view term);
    void add_preserved_literal(std::string_view literal);

    const std::vector<std::string>& multiword_terms() const noexcept { return multiword_; }
    const std::vector<std::string>& preserved_literals() const noexcept { return literals_; }
    bool empty() const noexcept { return entries_.empty(); }

    struct Entry {
        std::vector<std::string> parts;  // lowercased, split on whitespace
        std::string canonical;
    };

    // Entries whose first part starts with the given lowercased byte.
    const std::vector<std::size_t>* candidates(unsigned char first) const;
    const Entry& entry(std::size_t i) const { return entries_[i]; }

    // True if `token` is the canonical form of some entry.
    bool is_entry_token(std::string_view token) const;

private:
    void add_entry(std::vector<std::string> parts, std::string canonical);

    std::vector<std::string> multiword_;
    std::vector<std::string> literals_;
    std::vector<Entry> entries_;
    std::unordered_map<unsigned char, std::vector<std::size_t>> by_first_;
    std::unordered_map<std::string, std::size_t> canonical_;
};

// Longest-match dictionary scan followed by lowercase alphanumeric splitting.
// Bytes >= 0x80 count as word characters so UTF-8 text stays intact.
std::vector<std::string> tokenize(std::string_view text, const DomainDictionary& dict,
                                  const TokenizerOptions& opts = {});

// Convenience for callers that only need the count.
std::size_t count_tokens(std::string_view text, const DomainDictionary& dict,
                         const TokenizerOptions& opts = {});

bool is_word_char(unsigned char c) noexcept;
std::string to_lower(std::string_view s);

}  // namespace reqrag
