#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dsisearch/corpus.hpp"
#include "dsisearch/docid.hpp"
#include "dsisearch/model.hpp"

namespace dsisearch {

// One experiment cell. Accuracy stays absent when training diverged.
struct ReportRow {
    std::string method;  // tfidf | dual_encoder | dsi
    std::optional<DocIdStrategy> strategy;
    std::optional<DocIdStructure> structure;
    int64_t corpus_size = 0;
    std::optional<double> accuracy;
    std::optional<double> hits_at_10;
    uint64_t seed = 0;
    double wall_time_s = 0.0;
    std::string eval_mode;  // held_out | memorization
};

// Fraction of exact top-1 matches.
double accuracy(const std::vector<int>& predictions, const std::vector<int>& gold);

struct MatrixConfig {
    TrainConfig train;
    int beam = 10;
    int embed_dim = 256;
    TargetMode mode = TargetMode::kPerSymbol;
};

// The experiment grid: for every size, a file-order document prefix is
// scored with the TF-IDF baseline, the dual-encoder baseline, and one
// trained model per (strategy, structure). Cells evaluate on the prefix's
// test queries, falling back to train-query memorization (flagged per row)
// when it has none.
std::vector<ReportRow> run_matrix(
    const Corpus& corpus, const std::vector<int64_t>& sizes,
    const std::vector<std::pair<DocIdStrategy, DocIdStructure>>& strategies, uint64_t seed,
    const MatrixConfig& config);

void write_report_csv(const std::vector<ReportRow>& rows, const std::filesystem::path& path);
void write_report_json(const std::vector<ReportRow>& rows, const std::filesystem::path& path);

}  // namespace dsisearch
