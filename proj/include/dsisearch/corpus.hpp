#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dsisearch {

enum class Language { kGo, kJava, kJavascript, kPhp, kPython, kRuby, kOther };

Language language_from_string(std::string_view name);       // unknown -> kOther
std::string_view language_to_string(Language lang);

enum class Split { kTrain, kTest };

struct CodeSample {
    int doc_index = 0;           // dense 0..N-1 in corpus order
    Language language = Language::kOther;
    std::string raw_code;
    std::string stripped_code;   // documentation removed, non-empty
    std::string source_id;       // opaque upstream key
};

struct QueryRecord {
    int query_index = 0;
    std::string text;
    int target_doc = 0;
    Split split = Split::kTrain;
};

struct LoadReport {
    int64_t accepted = 0;
    int64_t malformed = 0;        // unparseable / missing-field lines
    int64_t rejected_empty = 0;   // empty after stripping, or no usable query
    int64_t strip_warnings = 0;   // e.g. unterminated block comments
};

struct Corpus {
    std::vector<CodeSample> samples;
    std::vector<QueryRecord> queries;
    uint64_t seed = 0;

    size_t size() const { return samples.size(); }
    std::vector<int> train_query_indices() const;
    std::vector<int> test_query_indices() const;
    // Digest of the canonical serialization; keys checkpoints to their corpus.
    uint64_t content_hash() const;
};

struct StripResult {
    std::string text;
    bool unterminated_comment = false;
};

// Removes line comments, block comments and (for Python) docstrings per the
// language's comment syntax; non-docstring string literals survive. Lines
// left blank are dropped and trailing whitespace is trimmed, which makes the
// operation idempotent.
std::string strip_documentation(std::string_view code, Language lang);
StripResult strip_documentation_checked(std::string_view code, Language lang);

// Derives the query text from a docstring: first sentence when the text has
// several, whole text otherwise; whitespace-normalized.
std::string query_from_docstring(std::string_view docstring);

// Reads a query-code pairs file: one JSON object per line with fields
// {id, language, code, docstring}. Accepts samples in file order up to
// `limit`; the docstring becomes that sample's train query. Malformed lines
// are counted in the report. Throws on unreadable files, zero accepted
// samples, or a sample with both code and docstring empty.
Corpus load_corpus(const std::filesystem::path& path, std::optional<int64_t> limit,
                   uint64_t seed, LoadReport* report = nullptr);

// Moves ~test_fraction of each document's queries to the test split,
// deterministically under the seed. A document's last train query never
// moves, so every document keeps at least one train query.
Corpus split_queries(Corpus corpus, double test_fraction, uint64_t seed);

// Canonical snapshot: samples and queries as JSONL, bit-reproducible.
void save_snapshot(const Corpus& corpus, const std::filesystem::path& samples_path,
                   const std::filesystem::path& queries_path);
Corpus load_snapshot(const std::filesystem::path& samples_path,
                     const std::filesystem::path& queries_path);

void save_load_report(const LoadReport& report, const std::filesystem::path& path);

// First n documents and the queries targeting them (a file-order prefix).
Corpus prefix_subset(const Corpus& corpus, size_t n_docs);

}  // namespace dsisearch
