#include "dsisearch/text.hpp"

#include <algorithm>
#include <cctype>

#include "dsisearch/rng.hpp"

namespace dsisearch {

namespace {

struct Codepoint {
    uint32_t value;
    size_t bytes;
};

// Minimal UTF-8 decode; invalid bytes are passed through as single units so
// tokenization stays total.
Codepoint decode_utf8(std::string_view s, size_t pos) {
    unsigned char c0 = static_cast<unsigned char>(s[pos]);
    if (c0 < 0x80) return {c0, 1};
    size_t len = (c0 >= 0xf0) ? 4 : (c0 >= 0xe0) ? 3 : (c0 >= 0xc0) ? 2 : 1;
    if (len == 1 || pos + len > s.size()) return {c0, 1};
    uint32_t v = c0 & (0x7f >> len);
    for (size_t i = 1; i < len; ++i) {
        unsigned char ci = static_cast<unsigned char>(s[pos + i]);
        if ((ci & 0xc0) != 0x80) return {c0, 1};
        v = (v << 6) | (ci & 0x3f);
    }
    return {v, len};
}

bool is_space_cp(uint32_t cp) {
    if (cp < 0x80) return std::isspace(static_cast<int>(cp)) != 0;
    switch (cp) {
        case 0x00a0:
        case 0x1680:
        case 0x2028:
        case 0x2029:
        case 0x202f:
        case 0x205f:
        case 0x3000:
            return true;
        default:
            return cp >= 0x2000 && cp <= 0x200a;
    }
}

bool is_word_cp(uint32_t cp) {
    if (cp < 0x80) return std::isalnum(static_cast<int>(cp)) != 0 || cp == '_';
    return !is_space_cp(cp);  // non-ASCII, non-space stays inside words
}

bool is_upper(char c) { return c >= 'A' && c <= 'Z'; }
bool is_lower_or_digit(char c) { return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9'); }

// Splits one identifier-like run on '_' and camelCase humps, lowercased.
void split_word(const std::string& word, std::vector<std::string>& out) {
    std::string part;
    auto flush = [&]() {
        if (!part.empty()) {
            out.push_back(part);
            part.clear();
        }
    };
    for (size_t i = 0; i < word.size(); ++i) {
        char c = word[i];
        if (c == '_') {
            flush();
            continue;
        }
        if (is_upper(c)) {
            // hump start: aB | ABc
            bool prev_low = i > 0 && is_lower_or_digit(word[i - 1]);
            bool next_low = i + 1 < word.size() && is_lower_or_digit(word[i + 1]);
            bool prev_up = i > 0 && is_upper(word[i - 1]);
            if (prev_low || (prev_up && next_low)) flush();
            part.push_back(static_cast<char>(std::tolower(c)));
        } else {
            part.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        }
    }
    flush();
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string word;
    auto flush_word = [&]() {
        if (!word.empty()) {
            split_word(word, out);
            word.clear();
        }
    };
    size_t i = 0;
    while (i < text.size()) {
        Codepoint cp = decode_utf8(text, i);
        if (is_space_cp(cp.value)) {
            flush_word();
        } else if (is_word_cp(cp.value)) {
            word.append(text.substr(i, cp.bytes));
        } else {
            // punctuation: single-character token
            flush_word();
            out.emplace_back(text.substr(i, cp.bytes));
        }
        i += cp.bytes;
    }
    flush_word();
    return out;
}

Vocabulary Vocabulary::build(const std::vector<std::string>& texts, size_t max_tokens) {
    std::unordered_map<std::string, int64_t> counts;
    for (const auto& t : texts) {
        for (auto& tok : tokenize(t)) counts[tok] += 1;
    }
    std::vector<std::pair<std::string, int64_t>> ranked(counts.begin(), counts.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (ranked.size() > max_tokens) ranked.resize(max_tokens);

    Vocabulary v;
    v.id_to_token = {"<pad>", "<unk>", "<bos>", "<eos>"};
    for (auto& [tok, _] : ranked) {
        v.token_to_id.emplace(tok, static_cast<int>(v.id_to_token.size()));
        v.id_to_token.push_back(tok);
    }
    return v;
}

uint64_t Vocabulary::content_hash() const {
    uint64_t h = 14695981039346656037ull;
    for (const auto& tok : id_to_token) {
        h = splitmix64(h ^ fnv1a64(tok));
    }
    return h;
}

std::vector<int> tokenize_to_ids(std::string_view text, const Vocabulary& vocab) {
    std::vector<int> ids;
    for (auto& tok : tokenize(text)) ids.push_back(vocab.id(tok));
    return ids;
}

}  // namespace dsisearch
