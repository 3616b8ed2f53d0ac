#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <string>
#include <vector>

#include "dsisearch/corpus.hpp"

namespace dsisearch {

struct TfidfIndex;  // tfidf.hpp

// Per-document dense vectors; row i belongs to doc_index i.
struct EmbeddingMatrix {
    Eigen::MatrixXd vectors;  // N x D
    std::string provider_tag;

    int64_t doc_count() const { return vectors.rows(); }
    int64_t dim() const { return vectors.cols(); }
};

// Built-in embedder: hashed tf-idf over tokenized stripped code. Each token
// lands in bucket fnv1a64(token) % dim with a sign from bit 63 of the hash,
// accumulating its tf-idf weight; rows are L2-normalized.
EmbeddingMatrix embed_hashed_tfidf(const Corpus& corpus, int dim = 256);

// Query-side vector under the same hashing scheme, idf taken from the
// document-side index. Throws if nothing embeddable remains (no tokens, or
// every token idf-zero).
Eigen::VectorXd embed_query_hashed(std::string_view query, const TfidfIndex& index, int dim);

// JSONL of {id, vector}; ids must cover the corpus source_ids exactly.
EmbeddingMatrix load_external_embeddings(const std::filesystem::path& path, const Corpus& corpus);

// Exhaustive maximal-inner-product search: top-k (doc_index, score),
// descending score, ties by ascending doc_index.
std::vector<std::pair<int, double>> nearest_doc(const Eigen::VectorXd& query_vec,
                                                const EmbeddingMatrix& emb, int k);

// Binary snapshot: 8-byte magic, u32 N, u32 D (little-endian), N*D f32 values.
void save_embedding_matrix(const EmbeddingMatrix& emb, const std::filesystem::path& path);
EmbeddingMatrix load_embedding_matrix(const std::filesystem::path& path);

}  // namespace dsisearch
