#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "dsisearch/corpus.hpp"
#include "dsisearch/embedding.hpp"

namespace dsisearch {

// Bag-of-words statistics over tokenized stripped code.
struct TfidfIndex {
    std::vector<std::unordered_map<std::string, int64_t>> doc_term_freq;
    std::vector<int64_t> doc_lengths;
    std::unordered_map<std::string, int64_t> doc_freq;
    int64_t n_docs = 0;
};

TfidfIndex build_tfidf_index(const Corpus& corpus);

// TF = count(term in doc) / len(doc); 0 when absent.
double tf(const TfidfIndex& index, const std::string& term, int doc);

// IDF = ln(1 + n_docs / doc_freq); 0 for terms no document contains.
double idf(const TfidfIndex& index, const std::string& term);

// score(doc) = sum over query tokens (with multiplicity) of tf*idf.
// Top-k by descending score, ties by ascending doc_index.
std::vector<std::pair<int, double>> tfidf_retrieve(const TfidfIndex& index,
                                                   std::string_view query, int k);

// Dual-encoder baseline: hash the query with the document-side idf and rank
// documents by inner product. Throws when the query embeds to a zero vector.
std::vector<std::pair<int, double>> dual_encoder_retrieve(const EmbeddingMatrix& emb,
                                                          const TfidfIndex& index,
                                                          std::string_view query, int k);

}  // namespace dsisearch
