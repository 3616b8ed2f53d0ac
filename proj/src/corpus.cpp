#include "dsisearch/corpus.hpp"

#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "dsisearch/rng.hpp"

namespace dsisearch {

using nlohmann::json;

Language language_from_string(std::string_view name) {
    if (name == "go") return Language::kGo;
    if (name == "java") return Language::kJava;
    if (name == "javascript") return Language::kJavascript;
    if (name == "php") return Language::kPhp;
    if (name == "python") return Language::kPython;
    if (name == "ruby") return Language::kRuby;
    return Language::kOther;
}

std::string_view language_to_string(Language lang) {
    switch (lang) {
        case Language::kGo: return "go";
        case Language::kJava: return "java";
        case Language::kJavascript: return "javascript";
        case Language::kPhp: return "php";
        case Language::kPython: return "python";
        case Language::kRuby: return "ruby";
        case Language::kOther: return "other";
    }
    return "other";
}

namespace {

// Comment syntax knobs per language family.
struct CommentRules {
    bool slash_line = false;    // //
    bool hash_line = false;     // #
    bool c_block = false;       // /* ... */
    bool python_docstrings = false;
    bool ruby_block = false;    // =begin ... =end
};

CommentRules rules_for(Language lang) {
    switch (lang) {
        case Language::kPython: return {.hash_line = true, .python_docstrings = true};
        case Language::kRuby: return {.hash_line = true, .ruby_block = true};
        case Language::kPhp: return {.slash_line = true, .hash_line = true, .c_block = true};
        case Language::kGo:
        case Language::kJava:
        case Language::kJavascript:
        case Language::kOther:
        default:
            return {.slash_line = true, .c_block = true};
    }
}

bool line_is_blank(std::string_view line) {
    for (char c : line) {
        if (c != ' ' && c != '\t' && c != '\r') return false;
    }
    return true;
}

// Drops blank lines and trailing whitespace; the fixed point of stripping.
std::string normalize_lines(std::string_view text) {
    std::string out;
    size_t start = 0;
    while (start <= text.size()) {
        size_t end = text.find('\n', start);
        bool last = end == std::string_view::npos;
        std::string_view line = text.substr(start, last ? text.size() - start : end - start);
        size_t stop = line.size();
        while (stop > 0 && (line[stop - 1] == ' ' || line[stop - 1] == '\t' || line[stop - 1] == '\r')) --stop;
        line = line.substr(0, stop);
        if (!line_is_blank(line)) {
            if (!out.empty()) out.push_back('\n');
            out.append(line);
        }
        if (last) break;
        start = end + 1;
    }
    return out;
}

bool at_line_start(std::string_view s, size_t pos) {
    while (pos > 0) {
        char c = s[pos - 1];
        if (c == '\n') return true;
        if (c != ' ' && c != '\t') return false;
        --pos;
    }
    return true;
}

// Single pass over the source, copying everything except comment spans.
// String literals are honored so markers inside them survive.
StripResult strip_spans(std::string_view code, const CommentRules& rules) {
    StripResult result;
    std::string& out = result.text;
    out.reserve(code.size());
    size_t i = 0;
    const size_t n = code.size();
    while (i < n) {
        char c = code[i];

        // line comments
        if (rules.hash_line && c == '#') {
            while (i < n && code[i] != '\n') ++i;
            continue;
        }
        if (rules.slash_line && c == '/' && i + 1 < n && code[i + 1] == '/') {
            while (i < n && code[i] != '\n') ++i;
            continue;
        }

        // block comments
        if (rules.c_block && c == '/' && i + 1 < n && code[i + 1] == '*') {
            size_t close = code.find("*/", i + 2);
            if (close == std::string_view::npos) {
                result.unterminated_comment = true;
                i = n;
            } else {
                i = close + 2;
            }
            continue;
        }
        if (rules.ruby_block && c == '=' && at_line_start(code, i) &&
            code.substr(i, 6) == "=begin") {
            size_t close = i;
            bool found = false;
            while (true) {
                close = code.find("\n=end", close);
                if (close == std::string_view::npos) break;
                found = true;
                close += 5;  // past "\n=end"
                while (close < n && code[close] != '\n') ++close;
                break;
            }
            if (!found) {
                result.unterminated_comment = true;
                i = n;
            } else {
                i = close;
            }
            continue;
        }

        // triple-quoted strings: docstrings only when in statement position
        if (rules.python_docstrings && (c == '"' || c == '\'') && code.substr(i, 3) == std::string(3, c)) {
            std::string fence(3, c);
            bool statement_pos = at_line_start(code, i);
            size_t close = code.find(fence, i + 3);
            size_t end = close == std::string_view::npos ? n : close + 3;
            if (statement_pos) {
                if (close == std::string_view::npos) result.unterminated_comment = true;
                i = end;
            } else {
                out.append(code.substr(i, end - i));
                i = end;
            }
            continue;
        }

        // ordinary string literals pass through untouched
        if (c == '"' || c == '\'' || c == '`') {
            char quote = c;
            out.push_back(code[i++]);
            while (i < n) {
                if (code[i] == '\\' && i + 1 < n) {
                    out.push_back(code[i]);
                    out.push_back(code[i + 1]);
                    i += 2;
                    continue;
                }
                out.push_back(code[i]);
                if (code[i] == quote || (quote != '`' && code[i] == '\n')) {
                    ++i;
                    break;
                }
                ++i;
            }
            continue;
        }

        out.push_back(c);
        ++i;
    }
    return result;
}

}  // namespace

StripResult strip_documentation_checked(std::string_view code, Language lang) {
    StripResult r = strip_spans(code, rules_for(lang));
    r.text = normalize_lines(r.text);
    return r;
}

std::string strip_documentation(std::string_view code, Language lang) {
    return strip_documentation_checked(code, lang).text;
}

std::string query_from_docstring(std::string_view docstring) {
    // first sentence if the text has several
    std::string first;
    for (size_t i = 0; i < docstring.size(); ++i) {
        char c = docstring[i];
        if (c == '.' || c == '!' || c == '?') {
            bool boundary = i + 1 == docstring.size() ||
                            std::isspace(static_cast<unsigned char>(docstring[i + 1]));
            if (boundary && i + 1 < docstring.size()) {
                std::string_view rest = docstring.substr(i + 1);
                bool has_more = false;
                for (char rc : rest) {
                    if (!std::isspace(static_cast<unsigned char>(rc))) {
                        has_more = true;
                        break;
                    }
                }
                if (has_more) {
                    first.assign(docstring.substr(0, i + 1));
                    break;
                }
            }
        }
    }
    if (first.empty()) first.assign(docstring);

    // whitespace normalization
    std::string out;
    bool in_space = true;
    for (char c : first) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            in_space = true;
        } else {
            if (in_space && !out.empty()) out.push_back(' ');
            in_space = false;
            out.push_back(c);
        }
    }
    return out;
}

std::vector<int> Corpus::train_query_indices() const {
    std::vector<int> out;
    for (size_t i = 0; i < queries.size(); ++i) {
        if (queries[i].split == Split::kTrain) out.push_back(static_cast<int>(i));
    }
    return out;
}

std::vector<int> Corpus::test_query_indices() const {
    std::vector<int> out;
    for (size_t i = 0; i < queries.size(); ++i) {
        if (queries[i].split == Split::kTest) out.push_back(static_cast<int>(i));
    }
    return out;
}

uint64_t Corpus::content_hash() const {
    uint64_t h = 14695981039346656037ull;
    for (const auto& s : samples) {
        h = splitmix64(h ^ fnv1a64(s.source_id));
        h = splitmix64(h ^ fnv1a64(s.stripped_code));
        h = splitmix64(h ^ static_cast<uint64_t>(s.language));
    }
    for (const auto& q : queries) {
        h = splitmix64(h ^ fnv1a64(q.text));
        h = splitmix64(h ^ static_cast<uint64_t>(q.target_doc));
        h = splitmix64(h ^ (q.split == Split::kTest ? 1ull : 0ull));
    }
    return h;
}

Corpus load_corpus(const std::filesystem::path& path, std::optional<int64_t> limit,
                   uint64_t seed, LoadReport* report) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open corpus file: " + path.string());
    if (limit && *limit <= 0) throw std::invalid_argument("limit must be positive");

    Corpus corpus;
    corpus.seed = seed;
    LoadReport local;
    std::string line;
    int64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (limit && local.accepted >= *limit) break;
        if (line_is_blank(line)) continue;

        json obj = json::parse(line, nullptr, false);
        if (obj.is_discarded() || !obj.is_object() || !obj.contains("id") ||
            !obj.contains("language") || !obj.contains("code") || !obj.contains("docstring") ||
            !obj["code"].is_string() || !obj["docstring"].is_string()) {
            local.malformed += 1;
            continue;
        }

        std::string source_id = obj["id"].is_string()
                                    ? obj["id"].get<std::string>()
                                    : obj["id"].dump();
        Language lang = language_from_string(obj["language"].is_string()
                                                 ? obj["language"].get<std::string>()
                                                 : "other");
        std::string code = obj["code"].get<std::string>();
        std::string docstring = obj["docstring"].get<std::string>();

        if (code.empty() && docstring.empty()) {
            throw std::runtime_error("line " + std::to_string(line_no) +
                                     ": sample has neither code nor docstring");
        }

        StripResult stripped = strip_documentation_checked(code, lang);
        if (stripped.unterminated_comment) local.strip_warnings += 1;
        std::string query = query_from_docstring(docstring);
        if (stripped.text.empty() || query.empty()) {
            local.rejected_empty += 1;
            continue;
        }

        CodeSample sample;
        sample.doc_index = static_cast<int>(corpus.samples.size());
        sample.language = lang;
        sample.raw_code = std::move(code);
        sample.stripped_code = std::move(stripped.text);
        sample.source_id = std::move(source_id);

        QueryRecord record;
        record.query_index = static_cast<int>(corpus.queries.size());
        record.text = std::move(query);
        record.target_doc = sample.doc_index;
        record.split = Split::kTrain;

        corpus.samples.push_back(std::move(sample));
        corpus.queries.push_back(std::move(record));
        local.accepted += 1;
    }

    if (report) *report = local;
    if (corpus.samples.empty()) throw std::runtime_error("no samples accepted from " + path.string());
    return corpus;
}

Corpus split_queries(Corpus corpus, double test_fraction, uint64_t seed) {
    if (test_fraction < 0.0 || test_fraction >= 1.0) {
        throw std::invalid_argument("test_fraction must be in [0, 1)");
    }
    corpus.seed = seed;
    std::vector<std::vector<int>> by_doc(corpus.samples.size());
    for (size_t i = 0; i < corpus.queries.size(); ++i) {
        corpus.queries[i].split = Split::kTrain;
        by_doc[static_cast<size_t>(corpus.queries[i].target_doc)].push_back(static_cast<int>(i));
    }
    for (size_t d = 0; d < by_doc.size(); ++d) {
        auto& qs = by_doc[d];
        if (qs.size() < 2) continue;  // a lone query always trains
        auto n = static_cast<int64_t>(qs.size());
        auto n_test = static_cast<int64_t>(std::llround(static_cast<double>(n) * test_fraction));
        n_test = std::min(n_test, n - 1);
        if (n_test <= 0) continue;
        Rng rng(mix_seed(seed, static_cast<uint64_t>(d) + 0x51ed2701ull));
        std::vector<int> order = qs;
        rng.shuffle(order);
        for (int64_t i = 0; i < n_test; ++i) {
            corpus.queries[static_cast<size_t>(order[static_cast<size_t>(i)])].split = Split::kTest;
        }
    }
    return corpus;
}

void save_snapshot(const Corpus& corpus, const std::filesystem::path& samples_path,
                   const std::filesystem::path& queries_path) {
    std::ofstream samples_out(samples_path, std::ios::binary | std::ios::trunc);
    if (!samples_out) throw std::runtime_error("cannot write " + samples_path.string());
    for (const auto& s : corpus.samples) {
        json obj{{"doc_index", s.doc_index},
                 {"language", language_to_string(s.language)},
                 {"raw_code", s.raw_code},
                 {"stripped_code", s.stripped_code},
                 {"source_id", s.source_id}};
        samples_out << obj.dump() << '\n';
    }
    std::ofstream queries_out(queries_path, std::ios::binary | std::ios::trunc);
    if (!queries_out) throw std::runtime_error("cannot write " + queries_path.string());
    for (const auto& q : corpus.queries) {
        json obj{{"query_index", q.query_index},
                 {"text", q.text},
                 {"target_doc", q.target_doc},
                 {"split", q.split == Split::kTest ? "test" : "train"}};
        queries_out << obj.dump() << '\n';
    }
}

Corpus load_snapshot(const std::filesystem::path& samples_path,
                     const std::filesystem::path& queries_path) {
    std::ifstream samples_in(samples_path, std::ios::binary);
    if (!samples_in) throw std::runtime_error("cannot open " + samples_path.string());
    std::ifstream queries_in(queries_path, std::ios::binary);
    if (!queries_in) throw std::runtime_error("cannot open " + queries_path.string());

    Corpus corpus;
    std::string line;
    while (std::getline(samples_in, line)) {
        if (line_is_blank(line)) continue;
        json obj = json::parse(line);
        CodeSample s;
        s.doc_index = obj.at("doc_index").get<int>();
        s.language = language_from_string(obj.at("language").get<std::string>());
        s.raw_code = obj.at("raw_code").get<std::string>();
        s.stripped_code = obj.at("stripped_code").get<std::string>();
        s.source_id = obj.at("source_id").get<std::string>();
        if (s.doc_index != static_cast<int>(corpus.samples.size())) {
            throw std::runtime_error("snapshot doc_index not dense at " +
                                     std::to_string(s.doc_index));
        }
        if (s.stripped_code.empty()) {
            throw std::runtime_error("snapshot sample " + std::to_string(s.doc_index) +
                                     " has empty stripped_code");
        }
        corpus.samples.push_back(std::move(s));
    }
    while (std::getline(queries_in, line)) {
        if (line_is_blank(line)) continue;
        json obj = json::parse(line);
        QueryRecord q;
        q.query_index = obj.at("query_index").get<int>();
        q.text = obj.at("text").get<std::string>();
        q.target_doc = obj.at("target_doc").get<int>();
        q.split = obj.at("split").get<std::string>() == "test" ? Split::kTest : Split::kTrain;
        if (q.target_doc < 0 || q.target_doc >= static_cast<int>(corpus.samples.size())) {
            throw std::runtime_error("query " + std::to_string(q.query_index) +
                                     " targets missing doc " + std::to_string(q.target_doc));
        }
        if (q.text.empty()) {
            throw std::runtime_error("query " + std::to_string(q.query_index) + " has empty text");
        }
        corpus.queries.push_back(std::move(q));
    }
    if (corpus.samples.empty()) throw std::runtime_error("snapshot has no samples");

    std::vector<bool> has_train(corpus.samples.size(), false);
    for (const auto& q : corpus.queries) {
        if (q.split == Split::kTrain) has_train[static_cast<size_t>(q.target_doc)] = true;
    }
    for (size_t d = 0; d < has_train.size(); ++d) {
        if (!has_train[d]) {
            throw std::runtime_error("doc " + std::to_string(d) + " has no train query");
        }
    }
    return corpus;
}

void save_load_report(const LoadReport& report, const std::filesystem::path& path) {
    json obj{{"accepted", report.accepted},
             {"malformed", report.malformed},
             {"rejected_empty", report.rejected_empty},
             {"strip_warnings", report.strip_warnings}};
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << obj.dump(2) << '\n';
}

Corpus prefix_subset(const Corpus& corpus, size_t n_docs) {
    if (n_docs == 0 || n_docs > corpus.samples.size()) {
        throw std::invalid_argument("subset size out of range");
    }
    Corpus out;
    out.seed = corpus.seed;
    out.samples.assign(corpus.samples.begin(),
                       corpus.samples.begin() + static_cast<std::ptrdiff_t>(n_docs));
    for (const auto& q : corpus.queries) {
        if (q.target_doc < static_cast<int>(n_docs)) {
            QueryRecord copy = q;
            copy.query_index = static_cast<int>(out.queries.size());
            out.queries.push_back(std::move(copy));
        }
    }
    return out;
}

}  // namespace dsisearch
