#include "dsisearch/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "dsisearch/embedding.hpp"
#include "dsisearch/rng.hpp"
#include "dsisearch/tfidf.hpp"

namespace dsisearch {

using nlohmann::json;

double accuracy(const std::vector<int>& predictions, const std::vector<int>& gold) {
    if (predictions.size() != gold.size()) {
        throw std::invalid_argument("predictions and gold have different lengths");
    }
    if (predictions.empty()) throw std::invalid_argument("nothing to score");
    int64_t hits = 0;
    for (size_t i = 0; i < predictions.size(); ++i) {
        if (predictions[i] == gold[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

namespace {

struct Timer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

struct EvalQueries {
    std::vector<std::string> texts;
    std::vector<int> gold;
    std::string mode;  // held_out | memorization
};

EvalQueries pick_eval_queries(const Corpus& corpus) {
    EvalQueries out;
    auto test = corpus.test_query_indices();
    if (!test.empty()) {
        out.mode = "held_out";
        for (int qi : test) {
            out.texts.push_back(corpus.queries[static_cast<size_t>(qi)].text);
            out.gold.push_back(corpus.queries[static_cast<size_t>(qi)].target_doc);
        }
    } else {
        out.mode = "memorization";
        for (int qi : corpus.train_query_indices()) {
            out.texts.push_back(corpus.queries[static_cast<size_t>(qi)].text);
            out.gold.push_back(corpus.queries[static_cast<size_t>(qi)].target_doc);
        }
    }
    return out;
}

// top-1 accuracy and hits@k from ranked (doc, score) lists; an empty ranking
// counts as a miss.
std::pair<double, double> score_rankings(const std::vector<std::vector<int>>& rankings,
                                         const std::vector<int>& gold, int k) {
    int64_t top1 = 0, hits = 0;
    for (size_t i = 0; i < rankings.size(); ++i) {
        const auto& r = rankings[i];
        if (!r.empty() && r.front() == gold[i]) ++top1;
        auto limit = std::min<size_t>(r.size(), static_cast<size_t>(k));
        for (size_t j = 0; j < limit; ++j) {
            if (r[j] == gold[i]) {
                ++hits;
                break;
            }
        }
    }
    auto n = static_cast<double>(rankings.size());
    return {static_cast<double>(top1) / n, static_cast<double>(hits) / n};
}

}  // namespace

std::vector<ReportRow> run_matrix(
    const Corpus& corpus, const std::vector<int64_t>& sizes,
    const std::vector<std::pair<DocIdStrategy, DocIdStructure>>& strategies, uint64_t seed,
    const MatrixConfig& config) {
    for (int64_t s : sizes) {
        if (s < 1 || s > static_cast<int64_t>(corpus.size())) {
            throw std::invalid_argument("matrix size " + std::to_string(s) +
                                        " exceeds corpus size " + std::to_string(corpus.size()));
        }
    }

    std::vector<ReportRow> rows;
    for (int64_t size : sizes) {
        Corpus sub = prefix_subset(corpus, static_cast<size_t>(size));
        EvalQueries eval = pick_eval_queries(sub);
        const int k = static_cast<int>(std::min<int64_t>(10, size));

        TfidfIndex index = build_tfidf_index(sub);
        EmbeddingMatrix emb = embed_hashed_tfidf(sub, config.embed_dim);

        {  // TF-IDF baseline
            Timer timer;
            std::vector<std::vector<int>> rankings;
            for (const auto& q : eval.texts) {
                std::vector<int> docs;
                for (auto& [d, score] : tfidf_retrieve(index, q, k)) docs.push_back(d);
                rankings.push_back(std::move(docs));
            }
            auto [top1, hits] = score_rankings(rankings, eval.gold, k);
            rows.push_back({"tfidf", std::nullopt, std::nullopt, size, top1, hits, seed,
                            timer.seconds(), eval.mode});
        }

        {  // dual-encoder baseline
            Timer timer;
            std::vector<std::vector<int>> rankings;
            for (const auto& q : eval.texts) {
                std::vector<int> docs;
                try {
                    for (auto& [d, score] : dual_encoder_retrieve(emb, index, q, k)) {
                        docs.push_back(d);
                    }
                } catch (const std::runtime_error&) {
                    // unembeddable query: scored as a miss
                }
                rankings.push_back(std::move(docs));
            }
            auto [top1, hits] = score_rankings(rankings, eval.gold, k);
            rows.push_back({"dual_encoder", std::nullopt, std::nullopt, size, top1, hits, seed,
                            timer.seconds(), eval.mode});
        }

        for (const auto& [strategy, structure] : strategies) {
            Timer timer;
            uint64_t cell_seed = mix_seed(mix_seed(seed, static_cast<uint64_t>(size)),
                                          (static_cast<uint64_t>(strategy) << 8) |
                                              (static_cast<uint64_t>(structure) << 4) |
                                              static_cast<uint64_t>(config.mode));

            DocIdAssignment assignment =
                strategy == DocIdStrategy::kDirect
                    ? assign_direct(size, structure)
                    : assign_clustered(emb, cell_seed, structure);
            OutputVocab ovocab = OutputVocab::build(assignment, config.mode);

            std::vector<std::string> vocab_texts;
            for (const auto& s : sub.samples) vocab_texts.push_back(s.stripped_code);
            for (int qi : sub.train_query_indices()) {
                vocab_texts.push_back(sub.queries[static_cast<size_t>(qi)].text);
            }
            Vocabulary vocab = Vocabulary::build(vocab_texts);

            TrainConfig train_config = config.train;
            train_config.seed = cell_seed;
            auto examples = build_training_set(sub, assignment, vocab, ovocab, train_config);
            ModelParams params =
                ModelParams::init(static_cast<int>(vocab.size()), ovocab.size(),
                                  train_config.e_dim, train_config.f_dim, cell_seed);

            ReportRow row{"dsi",     strategy, structure, size, std::nullopt,
                          std::nullopt, seed,  0.0,       eval.mode};
            try {
                train(params, examples, train_config);
                TargetTrie trie = build_target_trie(assignment, config.mode, ovocab);
                int beam = std::max(config.beam, k);
                std::vector<std::vector<int>> rankings;
                for (const auto& q : eval.texts) {
                    std::vector<int> ids = tokenize_to_ids(q, vocab);
                    if (static_cast<int>(ids.size()) > train_config.l_in) {
                        ids.resize(static_cast<size_t>(train_config.l_in));
                    }
                    if (ids.empty()) ids.push_back(Vocabulary::kUnk);
                    std::vector<int> docs;
                    for (const auto& r : decode_constrained(params, ids, trie, beam)) {
                        docs.push_back(r.doc_index);
                    }
                    rankings.push_back(std::move(docs));
                }
                auto [top1, hits] = score_rankings(rankings, eval.gold, k);
                row.accuracy = top1;
                row.hits_at_10 = hits;
            } catch (const TrainingDiverged&) {
                // accuracy stays absent
            }
            row.wall_time_s = timer.seconds();
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

namespace {

std::string format_ratio(const std::optional<double>& v) {
    if (!v) return "";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", *v);
    return buf;
}

}  // namespace

void write_report_csv(const std::vector<ReportRow>& rows, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "method,strategy,structure,corpus_size,accuracy,hits_at_10,seed,wall_time_s,eval_mode\n";
    for (const auto& r : rows) {
        char time_buf[32];
        std::snprintf(time_buf, sizeof(time_buf), "%.3f", r.wall_time_s);
        out << r.method << ','
            << (r.strategy ? strategy_to_string(*r.strategy) : std::string_view{}) << ','
            << (r.structure ? structure_to_string(*r.structure) : std::string_view{}) << ','
            << r.corpus_size << ',' << format_ratio(r.accuracy) << ','
            << format_ratio(r.hits_at_10) << ',' << r.seed << ',' << time_buf << ','
            << r.eval_mode << '\n';
    }
}

void write_report_json(const std::vector<ReportRow>& rows, const std::filesystem::path& path) {
    json arr = json::array();
    for (const auto& r : rows) {
        json obj;
        obj["method"] = r.method;
        obj["strategy"] = r.strategy ? json(std::string(strategy_to_string(*r.strategy))) : json();
        obj["structure"] =
            r.structure ? json(std::string(structure_to_string(*r.structure))) : json();
        obj["corpus_size"] = r.corpus_size;
        obj["accuracy"] = r.accuracy ? json(*r.accuracy) : json();
        obj["hits_at_10"] = r.hits_at_10 ? json(*r.hits_at_10) : json();
        obj["seed"] = r.seed;
        obj["wall_time_s"] = r.wall_time_s;
        obj["eval_mode"] = r.eval_mode;
        arr.push_back(std::move(obj));
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << arr.dump(2) << '\n';
}

}  // namespace dsisearch
