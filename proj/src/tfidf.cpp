#include "dsisearch/tfidf.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dsisearch/text.hpp"

namespace dsisearch {

TfidfIndex build_tfidf_index(const Corpus& corpus) {
    if (corpus.samples.empty()) throw std::invalid_argument("corpus is empty");
    TfidfIndex index;
    index.n_docs = static_cast<int64_t>(corpus.samples.size());
    index.doc_term_freq.resize(corpus.samples.size());
    index.doc_lengths.resize(corpus.samples.size(), 0);
    for (const auto& sample : corpus.samples) {
        auto tokens = tokenize(sample.stripped_code);
        auto d = static_cast<size_t>(sample.doc_index);
        index.doc_lengths[d] = static_cast<int64_t>(tokens.size());
        auto& freqs = index.doc_term_freq[d];
        for (auto& t : tokens) freqs[t] += 1;
        for (auto& [term, _] : freqs) index.doc_freq[term] += 1;
    }
    return index;
}

double tf(const TfidfIndex& index, const std::string& term, int doc) {
    const auto& freqs = index.doc_term_freq.at(static_cast<size_t>(doc));
    auto it = freqs.find(term);
    if (it == freqs.end()) return 0.0;
    return static_cast<double>(it->second) /
           static_cast<double>(index.doc_lengths[static_cast<size_t>(doc)]);
}

double idf(const TfidfIndex& index, const std::string& term) {
    auto it = index.doc_freq.find(term);
    if (it == index.doc_freq.end()) return 0.0;
    return std::log(1.0 + static_cast<double>(index.n_docs) / static_cast<double>(it->second));
}

namespace {

std::vector<std::pair<int, double>> top_k(std::vector<double> scores, int k) {
    std::vector<int> order(scores.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (scores[static_cast<size_t>(a)] != scores[static_cast<size_t>(b)]) {
            return scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(b)];
        }
        return a < b;
    });
    std::vector<std::pair<int, double>> out;
    out.reserve(static_cast<size_t>(k));
    for (int i = 0; i < k && i < static_cast<int>(order.size()); ++i) {
        out.emplace_back(order[static_cast<size_t>(i)], scores[static_cast<size_t>(order[static_cast<size_t>(i)])]);
    }
    return out;
}

}  // namespace

std::vector<std::pair<int, double>> tfidf_retrieve(const TfidfIndex& index,
                                                   std::string_view query, int k) {
    if (k < 1 || k > static_cast<int>(index.n_docs)) {
        throw std::invalid_argument("k out of range");
    }
    std::vector<double> scores(static_cast<size_t>(index.n_docs), 0.0);
    for (auto& term : tokenize(query)) {
        double w = idf(index, term);
        if (w == 0.0) continue;
        for (int64_t d = 0; d < index.n_docs; ++d) {
            double t = tf(index, term, static_cast<int>(d));
            if (t != 0.0) scores[static_cast<size_t>(d)] += t * w;
        }
    }
    return top_k(std::move(scores), k);
}

std::vector<std::pair<int, double>> dual_encoder_retrieve(const EmbeddingMatrix& emb,
                                                          const TfidfIndex& index,
                                                          std::string_view query, int k) {
    Eigen::VectorXd q = embed_query_hashed(query, index, static_cast<int>(emb.dim()));
    return nearest_doc(q, emb, k);
}

}  // namespace dsisearch
