#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "dsisearch/corpus.hpp"
#include "dsisearch/docid.hpp"
#include "dsisearch/embedding.hpp"
#include "dsisearch/eval.hpp"
#include "dsisearch/model.hpp"
#include "dsisearch/rng.hpp"
#include "dsisearch/tfidf.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dsisearch;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IngestOptions {
    std::string input;
    std::string out = "run";
    int64_t limit = -1;
    double test_fraction = 0.0;
    uint64_t seed = 0;
};

struct AssignOptions {
    std::string run = "run";
    std::string strategy = "direct";
    std::string structure = "int";
    std::string embeddings;
    int dim = 256;
    uint64_t seed = 0;
};

struct TrainOptions {
    std::string run = "run";
    std::string mode = "per_symbol";
    TrainConfig config;
};

struct EvalOptions {
    std::string run = "run";
    std::vector<int64_t> sizes;
    std::string strategies = "all";
    std::string mode = "per_symbol";
    int beam = 10;
    int dim = 256;
    TrainConfig train;
};

struct QueryOptions {
    std::string run = "run";
    std::string method = "dsi";
    std::string query;
    int k = 5;
    int beam = 10;
    int dim = 256;
};

fs::path require_file(const fs::path& p, const char* what) {
    if (!fs::exists(p)) {
        throw UsageError(std::string(what) + " not found: " + p.string());
    }
    return p;
}

Corpus load_run_corpus(const fs::path& run) {
    return load_snapshot(require_file(run / "corpus.jsonl", "corpus snapshot"),
                         require_file(run / "queries.jsonl", "query snapshot"));
}

Vocabulary build_run_vocabulary(const Corpus& corpus) {
    std::vector<std::string> texts;
    for (const auto& s : corpus.samples) texts.push_back(s.stripped_code);
    for (int qi : corpus.train_query_indices()) {
        texts.push_back(corpus.queries[static_cast<size_t>(qi)].text);
    }
    return Vocabulary::build(texts);
}

std::vector<int> query_input_ids(const std::string& text, const Vocabulary& vocab, int l_in) {
    std::vector<int> ids = tokenize_to_ids(text, vocab);
    if (static_cast<int>(ids.size()) > l_in) ids.resize(static_cast<size_t>(l_in));
    if (ids.empty()) ids.push_back(Vocabulary::kUnk);
    return ids;
}

int cmd_ingest(const IngestOptions& opt) {
    require_file(opt.input, "input file");
    if (opt.limit == 0) throw UsageError("empty corpus requested (--limit 0)");
    if (opt.test_fraction < 0.0 || opt.test_fraction >= 1.0) {
        throw UsageError("--test-fraction must be in [0, 1)");
    }
    std::optional<int64_t> limit;
    if (opt.limit > 0) limit = opt.limit;

    LoadReport report;
    Corpus corpus = load_corpus(opt.input, limit, opt.seed, &report);
    corpus = split_queries(std::move(corpus), opt.test_fraction, opt.seed);

    fs::create_directories(opt.out);
    save_snapshot(corpus, fs::path(opt.out) / "corpus.jsonl", fs::path(opt.out) / "queries.jsonl");
    save_load_report(report, fs::path(opt.out) / "report.json");

    std::cout << "ingested " << report.accepted << " samples (" << report.malformed
              << " malformed, " << report.rejected_empty << " rejected empty, "
              << report.strip_warnings << " strip warnings)\n"
              << "train queries: " << corpus.train_query_indices().size()
              << ", test queries: " << corpus.test_query_indices().size() << '\n';
    return 0;
}

int cmd_assign(const AssignOptions& opt) {
    Corpus corpus = load_run_corpus(opt.run);
    DocIdStrategy strategy;
    DocIdStructure structure;
    try {
        strategy = strategy_from_string(opt.strategy);
        structure = structure_from_string(opt.structure);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }

    DocIdAssignment assignment;
    if (strategy == DocIdStrategy::kDirect) {
        assignment = assign_direct(static_cast<int64_t>(corpus.size()), structure);
    } else {
        EmbeddingMatrix emb;
        if (!opt.embeddings.empty()) {
            emb = load_external_embeddings(require_file(opt.embeddings, "embeddings file"),
                                           corpus);
        } else {
            emb = embed_hashed_tfidf(corpus, opt.dim);
        }
        save_embedding_matrix(emb, fs::path(opt.run) / "embeddings.bin");
        assignment = assign_clustered(emb, opt.seed, structure);
    }
    assignment.validate_bijection();
    save_assignment(assignment, fs::path(opt.run) / "docids.jsonl");
    std::cout << "assigned " << assignment.size() << " docids (" << opt.strategy << '-'
              << opt.structure << ")\n";
    return 0;
}

int cmd_train(const TrainOptions& opt) {
    Corpus corpus = load_run_corpus(opt.run);
    DocIdAssignment assignment =
        load_assignment(require_file(fs::path(opt.run) / "docids.jsonl", "assignment"));
    if (assignment.size() != corpus.size()) {
        throw UsageError("assignment covers " + std::to_string(assignment.size()) +
                         " docs but corpus has " + std::to_string(corpus.size()));
    }
    TargetMode mode;
    try {
        mode = target_mode_from_string(opt.mode);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    try {
        opt.config.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }

    Vocabulary vocab = build_run_vocabulary(corpus);
    OutputVocab ovocab = OutputVocab::build(assignment, mode);
    auto examples = build_training_set(corpus, assignment, vocab, ovocab, opt.config);
    ModelParams params = ModelParams::init(static_cast<int>(vocab.size()), ovocab.size(),
                                           opt.config.e_dim, opt.config.f_dim, opt.config.seed);
    TrainResult result = train(params, examples, opt.config);

    Checkpoint ckpt{std::move(params), opt.config,          vocab,
                    ovocab,            assignment.structure, mode,
                    corpus.content_hash(), assignment.content_hash()};
    save_checkpoint(ckpt, fs::path(opt.run) / "checkpoint.bin");

    std::ofstream curve(fs::path(opt.run) / "loss.csv", std::ios::binary | std::ios::trunc);
    curve << "epoch,loss\n";
    for (size_t e = 0; e < result.epoch_losses.size(); ++e) {
        char buf[40];
        std::snprintf(buf, sizeof(buf), "%.17g", result.epoch_losses[e]);
        curve << e << ',' << buf << '\n';
    }
    std::cout << "trained " << result.epochs_run << " epochs on " << examples.size()
              << " examples; final loss " << result.epoch_losses.back() << '\n';
    return 0;
}

std::vector<std::pair<DocIdStrategy, DocIdStructure>> parse_strategies(const std::string& spec) {
    std::vector<std::pair<DocIdStrategy, DocIdStructure>> out;
    if (spec == "all") {
        return {{DocIdStrategy::kDirect, DocIdStructure::kInt},
                {DocIdStrategy::kDirect, DocIdStructure::kChar},
                {DocIdStrategy::kClustered, DocIdStructure::kInt},
                {DocIdStrategy::kClustered, DocIdStructure::kChar}};
    }
    size_t start = 0;
    while (start <= spec.size()) {
        size_t comma = spec.find(',', start);
        std::string item = spec.substr(start, comma == std::string::npos ? spec.size() - start
                                                                         : comma - start);
        size_t dash = item.find('-');
        if (dash == std::string::npos) {
            throw UsageError("bad strategy cell '" + item +
                             "' (expected strategy-structure, e.g. direct-int)");
        }
        try {
            out.emplace_back(strategy_from_string(item.substr(0, dash)),
                             structure_from_string(item.substr(dash + 1)));
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    if (out.empty()) throw UsageError("no strategies given");
    return out;
}

int cmd_eval(const EvalOptions& opt) {
    Corpus corpus = load_run_corpus(opt.run);
    if (opt.sizes.empty()) throw UsageError("--sizes is required (e.g. --sizes 100,200)");
    for (int64_t s : opt.sizes) {
        if (s < 1 || s > static_cast<int64_t>(corpus.size())) {
            throw UsageError("size " + std::to_string(s) + " out of range (corpus has " +
                             std::to_string(corpus.size()) + " docs)");
        }
    }
    MatrixConfig config;
    config.train = opt.train;
    config.beam = opt.beam;
    config.embed_dim = opt.dim;
    try {
        config.mode = target_mode_from_string(opt.mode);
        config.train.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }

    auto rows = run_matrix(corpus, opt.sizes, parse_strategies(opt.strategies), opt.train.seed,
                           config);
    write_report_csv(rows, fs::path(opt.run) / "report.csv");
    write_report_json(rows, fs::path(opt.run) / "report.json");

    std::printf("%-14s %-10s %-6s %8s %10s %10s %6s %-12s\n", "method", "strategy", "struct",
                "size", "accuracy", "hits@10", "time", "mode");
    for (const auto& r : rows) {
        std::printf("%-14s %-10s %-6s %8lld %10s %10s %5.1fs %-12s\n", r.method.c_str(),
                    r.strategy ? std::string(strategy_to_string(*r.strategy)).c_str() : "-",
                    r.structure ? std::string(structure_to_string(*r.structure)).c_str() : "-",
                    static_cast<long long>(r.corpus_size),
                    r.accuracy ? std::to_string(*r.accuracy).substr(0, 6).c_str() : "-",
                    r.hits_at_10 ? std::to_string(*r.hits_at_10).substr(0, 6).c_str() : "-",
                    r.wall_time_s, r.eval_mode.c_str());
    }
    return 0;
}

int cmd_query(const QueryOptions& opt) {
    if (opt.query.empty()) throw UsageError("--q is required");
    if (opt.k < 1) throw UsageError("--k must be >= 1");
    Corpus corpus = load_run_corpus(opt.run);
    if (opt.k > static_cast<int>(corpus.size())) {
        throw UsageError("--k exceeds corpus size");
    }

    // docids for display, when assigned
    std::optional<DocIdAssignment> assignment;
    if (fs::exists(fs::path(opt.run) / "docids.jsonl")) {
        assignment = load_assignment(fs::path(opt.run) / "docids.jsonl");
    }
    auto docid_label = [&](int doc) -> std::string {
        if (assignment && doc < static_cast<int>(assignment->size())) {
            return render(assignment->at(doc));
        }
        return "-";
    };

    auto print_scored = [&](const std::vector<std::pair<int, double>>& ranked) {
        for (size_t i = 0; i < ranked.size(); ++i) {
            std::printf("%zu %s %s %.6f\n", i + 1, docid_label(ranked[i].first).c_str(),
                        corpus.samples[static_cast<size_t>(ranked[i].first)].source_id.c_str(),
                        ranked[i].second);
        }
    };

    if (opt.method == "tfidf") {
        TfidfIndex index = build_tfidf_index(corpus);
        print_scored(tfidf_retrieve(index, opt.query, opt.k));
        return 0;
    }
    if (opt.method == "de") {
        TfidfIndex index = build_tfidf_index(corpus);
        EmbeddingMatrix emb = embed_hashed_tfidf(corpus, opt.dim);
        print_scored(dual_encoder_retrieve(emb, index, opt.query, opt.k));
        return 0;
    }
    if (opt.method != "dsi") {
        throw UsageError("unknown method '" + opt.method + "' (valid: tfidf, de, dsi)");
    }

    if (!assignment) throw UsageError("docids.jsonl not found; run `assign` first");
    Checkpoint ckpt =
        load_checkpoint(require_file(fs::path(opt.run) / "checkpoint.bin", "checkpoint"));
    if (ckpt.corpus_hash != corpus.content_hash()) {
        throw UsageError("checkpoint was trained on a different corpus (hash mismatch)");
    }
    if (ckpt.assignment_hash != assignment->content_hash()) {
        throw UsageError("checkpoint was trained on a different assignment (hash mismatch)");
    }

    TargetTrie trie = build_target_trie(*assignment, ckpt.mode, ckpt.ovocab);
    auto ids = query_input_ids(opt.query, ckpt.vocab, ckpt.config.l_in);
    auto results = decode_constrained(ckpt.params, ids, trie, std::max(opt.beam, opt.k));
    for (size_t i = 0; i < results.size() && i < static_cast<size_t>(opt.k); ++i) {
        std::printf("%zu %s %s %.6f\n", i + 1, render(results[i].docid).c_str(),
                    corpus.samples[static_cast<size_t>(results[i].doc_index)].source_id.c_str(),
                    results[i].log_prob);
    }
    return 0;
}

// --config file.json supplies defaults for long flags; explicit flags win.
std::vector<std::string> expand_config_args(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    std::string config_path;
    for (size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            config_path = args[i + 1];
        } else if (args[i].rfind("--config=", 0) == 0) {
            config_path = args[i].substr(9);
        }
    }
    if (config_path.empty()) return args;
    if (!fs::exists(config_path)) throw UsageError("config file not found: " + config_path);

    std::ifstream in(config_path);
    json obj = json::parse(in, nullptr, false);
    if (obj.is_discarded() || !obj.is_object()) {
        throw UsageError("config file must contain a JSON object: " + config_path);
    }
    std::vector<std::string> expanded;
    if (!args.empty()) expanded.push_back(args[0]);  // subcommand first
    for (const auto& [key, value] : obj.items()) {
        expanded.push_back("--" + key);
        if (value.is_string()) {
            expanded.push_back(value.get<std::string>());
        } else {
            expanded.push_back(value.dump());
        }
    }
    for (size_t i = args.empty() ? 0 : 1; i < args.size(); ++i) expanded.push_back(args[i]);
    return expanded;
}

void add_train_config_flags(CLI::App* sub, TrainConfig& config) {
    sub->add_option("--e-dim", config.e_dim, "embedding width");
    sub->add_option("--f-dim", config.f_dim, "feed-forward width");
    sub->add_option("--l-in", config.l_in, "max input tokens");
    sub->add_option("--l-out", config.l_out, "max target ids");
    sub->add_option("--lr", config.learning_rate, "Adam learning rate");
    sub->add_option("--beta1", config.beta1, "Adam beta1");
    sub->add_option("--beta2", config.beta2, "Adam beta2");
    sub->add_option("--eps", config.eps, "Adam epsilon");
    sub->add_option("--batch-size", config.batch_size, "examples per step");
    sub->add_option("--epochs", config.epochs, "training epochs");
    sub->add_option("--mix-ratio", config.mix_ratio, "indexing examples per retrieval example");
    sub->add_option("--chunks-per-doc", config.chunks_per_doc, "indexing chunks per document");
    sub->add_option("--seed", config.seed, "run seed");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"query-to-docid code search: generative retrieval with classical baselines"};
    app.require_subcommand(1);

    std::string config_file;  // consumed by expand_config_args
    IngestOptions ingest_opt;
    auto* ingest = app.add_subcommand("ingest", "load a query-code pairs file into a run directory");
    ingest->add_option("--input", ingest_opt.input, "JSONL pairs file")->required();
    ingest->add_option("--out", ingest_opt.out, "run directory");
    ingest->add_option("--limit", ingest_opt.limit, "max samples to accept");
    ingest->add_option("--test-fraction", ingest_opt.test_fraction,
                       "fraction of each doc's queries held out");
    ingest->add_option("--seed", ingest_opt.seed, "run seed");
    ingest->add_option("--config", config_file, "JSON config file (flags win)");

    AssignOptions assign_opt;
    auto* assign = app.add_subcommand("assign", "assign docids to the ingested corpus");
    assign->add_option("--run", assign_opt.run, "run directory");
    assign->add_option("--strategy", assign_opt.strategy, "direct | clustered");
    assign->add_option("--structure", assign_opt.structure, "int | char");
    assign->add_option("--embeddings", assign_opt.embeddings, "external embeddings JSONL");
    assign->add_option("--dim", assign_opt.dim, "built-in embedder width");
    assign->add_option("--seed", assign_opt.seed, "run seed");
    assign->add_option("--config", config_file, "JSON config file (flags win)");

    TrainOptions train_opt;
    auto* train_cmd = app.add_subcommand("train", "train the retrieval model");
    train_cmd->add_option("--run", train_opt.run, "run directory");
    train_cmd->add_option("--mode", train_opt.mode, "per_symbol | merged");
    add_train_config_flags(train_cmd, train_opt.config);
    train_cmd->add_option("--config", config_file, "JSON config file (flags win)");

    EvalOptions eval_opt;
    auto* eval_cmd = app.add_subcommand("eval", "run the experiment matrix");
    eval_cmd->add_option("--run", eval_opt.run, "run directory");
    eval_cmd->add_option("--sizes", eval_opt.sizes, "corpus prefixes, e.g. 100,200")
        ->delimiter(',');
    eval_cmd->add_option("--strategies", eval_opt.strategies,
                         "all or list like direct-int,clustered-char");
    eval_cmd->add_option("--mode", eval_opt.mode, "per_symbol | merged");
    eval_cmd->add_option("--beam", eval_opt.beam, "decode beam width");
    eval_cmd->add_option("--dim", eval_opt.dim, "embedder width");
    add_train_config_flags(eval_cmd, eval_opt.train);
    eval_cmd->add_option("--config", config_file, "JSON config file (flags win)");

    QueryOptions query_opt;
    auto* query = app.add_subcommand("query", "retrieve documents for one query");
    query->add_option("--run", query_opt.run, "run directory");
    query->add_option("--method", query_opt.method, "tfidf | de | dsi");
    query->add_option("--q", query_opt.query, "query text")->required();
    query->add_option("--k", query_opt.k, "results to print");
    query->add_option("--beam", query_opt.beam, "decode beam width (dsi)");
    query->add_option("--dim", query_opt.dim, "embedder width (de)");
    query->add_option("--config", config_file, "JSON config file (flags win)");

    for (auto* sub : {ingest, assign, train_cmd, eval_cmd, query}) {
        for (auto* o : sub->get_options()) {
            o->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
        }
    }

    std::vector<std::string> args;
    try {
        args = expand_config_args(argc, argv);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }

    try {
        std::vector<const char*> cargs{argv[0]};
        for (const auto& a : args) cargs.push_back(a.c_str());
        app.parse(static_cast<int>(cargs.size()), cargs.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }

    try {
        if (ingest->parsed()) return cmd_ingest(ingest_opt);
        if (assign->parsed()) return cmd_assign(assign_opt);
        if (train_cmd->parsed()) return cmd_train(train_opt);
        if (eval_cmd->parsed()) return cmd_eval(eval_opt);
        if (query->parsed()) return cmd_query(query_opt);
        std::cerr << "error: no subcommand given\n";
        return 2;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return 1;
    }
}
