#pragma once

// Synthetic fixtures shared across the test suites. All generation is
// seed-deterministic so expected values can be frozen.

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dsisearch/corpus.hpp"
#include "dsisearch/embedding.hpp"
#include "dsisearch/rng.hpp"

namespace fixtures {

inline const std::vector<std::string>& content_words() {
    static const std::vector<std::string> words = {
        "median",  "window",   "matrix",  "digits",  "vowels",  "primes",  "branch",
        "bucket",  "cursor",   "offset",  "palette", "quorum",  "raster",  "signal",
        "tensor",  "uptime",   "vector",  "weights", "anchor",  "beacon",  "carbon",
        "donor",   "ember",    "fabric",  "garnet",  "harbor",  "indigo",  "jigsaw",
        "kernel",  "lattice",  "magnet",  "nectar",  "october", "pigment", "quartz",
        "ribbon",  "saffron",  "timber",  "umbra",   "velvet"};
    return words;
}

// Code bodies use deliberately opaque identifiers so document tokens share
// nothing with query words; comments echo the query text so only stripping
// keeps the corpora honest.
inline std::string make_code(int doc, const std::string& query_sentinel,
                             dsisearch::Language lang) {
    std::string v1 = "zq" + std::to_string(doc * 7 + 1);
    std::string v2 = "xk" + std::to_string(doc * 13 + 5);
    std::string fn = "fj" + std::to_string(doc);
    if (lang == dsisearch::Language::kPython) {
        return "def " + fn + "(" + v1 + ", " + v2 + "):\n    \"\"\"" + query_sentinel +
               "\"\"\"\n    # " + query_sentinel + "\n    " + v1 + " = " + v1 + " + " + v2 +
               "\n    return " + v1 + "\n";
    }
    return "int " + fn + "(int " + v1 + ", int " + v2 + ") { // " + query_sentinel + "\n  /* " +
           query_sentinel + " */\n  return " + v1 + " * " + v2 + "; }\n";
}

// Two distinct content words per document, unique pair per doc.
inline std::pair<std::string, std::string> content_pair(int doc) {
    const auto& words = content_words();
    size_t a = static_cast<size_t>(doc) % words.size();
    size_t b = (a + 1 + static_cast<size_t>(doc) / words.size()) % words.size();
    return {words[a], words[b]};
}

inline std::string train_query(int doc) {
    auto [w1, w2] = content_pair(doc);
    return "find the " + w1 + " of the " + w2 + " values";
}

inline std::string test_query(int doc) {
    auto [w1, w2] = content_pair(doc);
    return "how to compute " + w1 + " for " + w2 + " entries";
}

// Raw pairs file: docstring == train query, comments echo it.
inline std::filesystem::path write_pairs_jsonl(const std::filesystem::path& dir, int n_docs) {
    std::filesystem::create_directories(dir);
    auto path = dir / "pairs.jsonl";
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    for (int d = 0; d < n_docs; ++d) {
        auto lang = d % 2 == 0 ? dsisearch::Language::kPython : dsisearch::Language::kJava;
        std::string q = train_query(d);
        std::string code = make_code(d, q, lang);
        nlohmann::json obj{{"id", "doc-" + std::to_string(d)},
                           {"language", std::string(dsisearch::language_to_string(lang))},
                           {"code", code},
                           {"docstring", q}};
        out << obj.dump() << '\n';
    }
    return path;
}

// In-memory corpus: one train query plus one held-out paraphrase per doc.
inline dsisearch::Corpus make_paraphrase_corpus(int n_docs) {
    dsisearch::Corpus corpus;
    corpus.seed = 0;
    for (int d = 0; d < n_docs; ++d) {
        auto lang = d % 2 == 0 ? dsisearch::Language::kPython : dsisearch::Language::kJava;
        std::string q = train_query(d);
        dsisearch::CodeSample s;
        s.doc_index = d;
        s.language = lang;
        s.raw_code = make_code(d, q, lang);
        s.stripped_code = dsisearch::strip_documentation(s.raw_code, lang);
        s.source_id = "doc-" + std::to_string(d);
        corpus.samples.push_back(std::move(s));

        dsisearch::QueryRecord train_q;
        train_q.query_index = static_cast<int>(corpus.queries.size());
        train_q.text = q;
        train_q.target_doc = d;
        train_q.split = dsisearch::Split::kTrain;
        corpus.queries.push_back(std::move(train_q));

        dsisearch::QueryRecord test_q;
        test_q.query_index = static_cast<int>(corpus.queries.size());
        test_q.text = test_query(d);
        test_q.target_doc = d;
        test_q.split = dsisearch::Split::kTest;
        corpus.queries.push_back(std::move(test_q));
    }
    return corpus;
}

// Ten well-separated gaussian blobs of `per_blob` points each; centers sit
// 100 sigma apart along distinct axes.
inline dsisearch::EmbeddingMatrix make_blob_embeddings(int per_blob, uint64_t seed, int dim = 16) {
    dsisearch::EmbeddingMatrix emb;
    emb.provider_tag = "blobs";
    emb.vectors.resize(10 * per_blob, dim);
    dsisearch::Rng rng(seed);
    for (int b = 0; b < 10; ++b) {
        for (int i = 0; i < per_blob; ++i) {
            int64_t row = b * per_blob + i;
            for (int j = 0; j < dim; ++j) emb.vectors(row, j) = rng.normal();
            emb.vectors(row, b % dim) += 100.0 * (1 + b / dim);
        }
    }
    return emb;
}

inline std::filesystem::path fresh_temp_dir(const std::string& tag) {
    auto base = std::filesystem::temp_directory_path() /
                ("dsisearch_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(base);
    std::filesystem::create_directories(base);
    return base;
}

}  // namespace fixtures
