#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace dsisearch {

// Word-level tokenization: lowercase, split on whitespace and punctuation
// (punctuation kept as single-character tokens), identifiers split on
// underscores and camelCase humps. Total: never fails, empty text -> {}.
std::vector<std::string> tokenize(std::string_view text);

// Token ids. 0..3 are reserved; real tokens start at kFirstToken.
struct Vocabulary {
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;
    static constexpr int kBos = 2;
    static constexpr int kEos = 3;
    static constexpr int kFirstToken = 4;
    static constexpr size_t kMaxTokens = 8192;

    std::vector<std::string> id_to_token;  // includes the 4 sentinels
    std::unordered_map<std::string, int> token_to_id;

    // Top tokens of the given texts by frequency, ties broken
    // lexicographically, capped at kMaxTokens (plus the 4 reserved ids).
    static Vocabulary build(const std::vector<std::string>& texts, size_t max_tokens = kMaxTokens);

    int id(std::string_view token) const {
        auto it = token_to_id.find(std::string(token));
        return it == token_to_id.end() ? kUnk : it->second;
    }
    const std::string& token(int id) const { return id_to_token.at(static_cast<size_t>(id)); }
    size_t size() const { return id_to_token.size(); }

    uint64_t content_hash() const;
};

// tokenize + map through the vocabulary (unknowns -> UNK).
std::vector<int> tokenize_to_ids(std::string_view text, const Vocabulary& vocab);

}  // namespace dsisearch
