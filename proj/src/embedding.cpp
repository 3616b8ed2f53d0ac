#include "dsisearch/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <unordered_set>

#include <json.hpp>

#include "dsisearch/rng.hpp"
#include "dsisearch/text.hpp"
#include "dsisearch/tfidf.hpp"

namespace dsisearch {

using nlohmann::json;

namespace {

struct Bucket {
    int64_t index;
    double sign;
};

Bucket hash_bucket(const std::string& token, int dim) {
    uint64_t h = fnv1a64(token);
    double sign = (h >> 63) == 0 ? 1.0 : -1.0;
    return {static_cast<int64_t>(h % static_cast<uint64_t>(dim)), sign};
}

// Common path for documents and queries: token counts -> signed tf-idf
// buckets -> L2-normalized vector. Zero vectors are the caller's error.
Eigen::VectorXd hashed_vector(const std::vector<std::string>& tokens, const TfidfIndex& index,
                              int dim) {
    Eigen::VectorXd vec = Eigen::VectorXd::Zero(dim);
    if (tokens.empty()) return vec;
    std::unordered_map<std::string, int64_t> counts;
    for (const auto& t : tokens) counts[t] += 1;
    double len = static_cast<double>(tokens.size());
    for (const auto& [term, count] : counts) {
        double w = idf(index, term);
        if (w == 0.0) continue;
        Bucket b = hash_bucket(term, dim);
        vec[b.index] += b.sign * (static_cast<double>(count) / len) * w;
    }
    double norm = vec.norm();
    if (norm > 0.0) vec /= norm;
    return vec;
}

}  // namespace

EmbeddingMatrix embed_hashed_tfidf(const Corpus& corpus, int dim) {
    if (dim < 2) throw std::invalid_argument("dim must be >= 2");
    if (corpus.samples.empty()) throw std::invalid_argument("corpus is empty");
    TfidfIndex index = build_tfidf_index(corpus);

    EmbeddingMatrix emb;
    emb.provider_tag = "hashed_tfidf";
    emb.vectors.resize(static_cast<int64_t>(corpus.samples.size()), dim);
    for (const auto& sample : corpus.samples) {
        auto tokens = tokenize(sample.stripped_code);
        if (tokens.empty()) {
            throw std::runtime_error("document " + std::to_string(sample.doc_index) +
                                     " has zero tokens");
        }
        Eigen::VectorXd row = hashed_vector(tokens, index, dim);
        if (row.norm() == 0.0) {
            throw std::runtime_error("document " + std::to_string(sample.doc_index) +
                                     " embeds to the zero vector");
        }
        emb.vectors.row(sample.doc_index) = row.transpose();
    }
    return emb;
}

Eigen::VectorXd embed_query_hashed(std::string_view query, const TfidfIndex& index, int dim) {
    Eigen::VectorXd vec = hashed_vector(tokenize(query), index, dim);
    if (vec.norm() == 0.0) {
        throw std::runtime_error("unembeddable query: no token overlaps the corpus vocabulary");
    }
    return vec;
}

EmbeddingMatrix load_external_embeddings(const std::filesystem::path& path, const Corpus& corpus) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open embeddings file: " + path.string());

    std::unordered_map<std::string, int> id_to_doc;
    for (const auto& s : corpus.samples) id_to_doc.emplace(s.source_id, s.doc_index);

    EmbeddingMatrix emb;
    emb.provider_tag = "external";
    std::vector<bool> seen(corpus.samples.size(), false);
    int64_t dim = -1;
    std::string line;
    int64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json obj = json::parse(line);
        std::string id = obj.at("id").get<std::string>();
        auto it = id_to_doc.find(id);
        if (it == id_to_doc.end()) {
            throw std::runtime_error("embeddings line " + std::to_string(line_no) +
                                     ": unknown id '" + id + "'");
        }
        if (seen[static_cast<size_t>(it->second)]) {
            throw std::runtime_error("duplicate embedding for id '" + id + "'");
        }
        seen[static_cast<size_t>(it->second)] = true;
        const auto& arr = obj.at("vector");
        if (!arr.is_array() || arr.empty()) {
            throw std::runtime_error("embeddings line " + std::to_string(line_no) +
                                     ": vector must be a non-empty array");
        }
        if (dim < 0) {
            dim = static_cast<int64_t>(arr.size());
            emb.vectors.resize(static_cast<int64_t>(corpus.samples.size()), dim);
        } else if (static_cast<int64_t>(arr.size()) != dim) {
            throw std::runtime_error("embeddings line " + std::to_string(line_no) +
                                     ": dimension " + std::to_string(arr.size()) +
                                     " != " + std::to_string(dim));
        }
        for (int64_t j = 0; j < dim; ++j) {
            double v = arr[static_cast<size_t>(j)].get<double>();
            if (!std::isfinite(v)) {
                throw std::runtime_error("non-finite value for id '" + id + "' at component " +
                                         std::to_string(j));
            }
            emb.vectors(it->second, j) = v;
        }
    }
    for (size_t d = 0; d < seen.size(); ++d) {
        if (!seen[d]) {
            throw std::runtime_error("missing embedding for id '" + corpus.samples[d].source_id +
                                     "'");
        }
    }
    return emb;
}

std::vector<std::pair<int, double>> nearest_doc(const Eigen::VectorXd& query_vec,
                                                const EmbeddingMatrix& emb, int k) {
    if (query_vec.size() != emb.dim()) {
        throw std::invalid_argument("query dimension " + std::to_string(query_vec.size()) +
                                    " != matrix dimension " + std::to_string(emb.dim()));
    }
    if (k < 1 || k > static_cast<int>(emb.doc_count())) {
        throw std::invalid_argument("k out of range");
    }
    Eigen::VectorXd scores = emb.vectors * query_vec;
    std::vector<int> order(static_cast<size_t>(emb.doc_count()));
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });
    std::vector<std::pair<int, double>> out;
    out.reserve(static_cast<size_t>(k));
    for (int i = 0; i < k; ++i) out.emplace_back(order[static_cast<size_t>(i)], scores[order[static_cast<size_t>(i)]]);
    return out;
}

void save_embedding_matrix(const EmbeddingMatrix& emb, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write("DSIEMB\x01\n", 8);
    auto n = static_cast<uint32_t>(emb.doc_count());
    auto d = static_cast<uint32_t>(emb.dim());
    out.write(reinterpret_cast<const char*>(&n), 4);
    out.write(reinterpret_cast<const char*>(&d), 4);
    for (int64_t i = 0; i < emb.doc_count(); ++i) {
        for (int64_t j = 0; j < emb.dim(); ++j) {
            auto v = static_cast<float>(emb.vectors(i, j));
            out.write(reinterpret_cast<const char*>(&v), 4);
        }
    }
}

EmbeddingMatrix load_embedding_matrix(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, "DSIEMB\x01\n", 8) != 0) {
        throw std::runtime_error("bad embedding snapshot magic in " + path.string());
    }
    uint32_t n = 0, d = 0;
    in.read(reinterpret_cast<char*>(&n), 4);
    in.read(reinterpret_cast<char*>(&d), 4);
    if (!in || n == 0 || d == 0) throw std::runtime_error("bad embedding snapshot header");
    EmbeddingMatrix emb;
    emb.provider_tag = "snapshot";
    emb.vectors.resize(n, d);
    for (uint32_t i = 0; i < n; ++i) {
        for (uint32_t j = 0; j < d; ++j) {
            float v = 0.0f;
            in.read(reinterpret_cast<char*>(&v), 4);
            if (!in) throw std::runtime_error("truncated embedding snapshot");
            emb.vectors(i, j) = static_cast<double>(v);
        }
    }
    return emb;
}

}  // namespace dsisearch
