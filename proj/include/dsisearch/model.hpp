#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dsisearch/corpus.hpp"
#include "dsisearch/docid.hpp"
#include "dsisearch/text.hpp"

namespace dsisearch {

// How docid symbols become decoder targets. Per-symbol gives every digit its
// own token; merged packs runs of up to four letters of the char rendering
// into single opaque tokens, the failure mode coarse tokenizers exhibit on
// letter identifiers.
enum class TargetMode { kPerSymbol, kMerged };

TargetMode target_mode_from_string(std::string_view s);
std::string_view target_mode_to_string(TargetMode mode);

// Decoder-side id space: 14 fixed ids, then one id per distinct merged chunk
// (merged mode only), chunks interned in sorted order.
struct OutputVocab {
    static constexpr int kPad = 0;
    static constexpr int kBos = 1;
    static constexpr int kEos = 2;
    static constexpr int kSymBase = 3;  // sym0..sym9 = 3..12
    static constexpr int kEnd = 13;
    static constexpr int kFixed = 14;

    std::vector<std::string> merged_chunks;      // sorted
    std::map<std::string, int> chunk_to_id;

    static int sym_id(uint8_t symbol) { return kSymBase + symbol; }
    int size() const { return kFixed + static_cast<int>(merged_chunks.size()); }
    int chunk_id(const std::string& chunk) const;

    static OutputVocab build(const DocIdAssignment& assignment, TargetMode mode);
    uint64_t content_hash() const;
};

// Target id sequence for one docid, END-terminated. Merged mode requires
// char structure.
std::vector<int> docid_target_ids(const DocId& docid, DocIdStructure structure, TargetMode mode,
                                  const OutputVocab& ovocab);

enum class Task { kIndexing, kRetrieval };

struct TrainingExample {
    std::vector<int> input_ids;   // text-vocabulary ids, <= l_in
    std::vector<int> target_ids;  // output ids ending in kEnd, <= l_out
    Task task = Task::kIndexing;
};

struct TrainConfig {
    int e_dim = 64;
    int f_dim = 256;
    int l_in = 128;
    int l_out = 16;
    double learning_rate = 2e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int batch_size = 16;
    int epochs = 200;
    double mix_ratio = 1.0;   // indexing examples per retrieval example
    int chunks_per_doc = 1;   // l_in-token slices used as indexing inputs
    uint64_t seed = 0;

    void validate() const;
};

struct AttentionWeights {
    Eigen::MatrixXd wq, wk, wv, wo;  // E x E, no biases
};

struct FeedForwardWeights {
    Eigen::MatrixXd w1, w2;  // E x F, F x E
};

struct LayerNormWeights {
    Eigen::MatrixXd gain, bias;  // E x 1
};

// One pre-norm encoder block, one pre-norm decoder block, single-head
// attention, tied embedding table covering text ids and (offset by v_text)
// the output-side ids. The trained weights are the search index.
struct ModelParams {
    int v_text = 0;  // text-vocabulary rows
    int v_out = 0;   // output-side rows / logit width
    int e_dim = 0;
    int f_dim = 0;

    Eigen::MatrixXd embed;  // (v_text + v_out) x E
    AttentionWeights enc_attn;
    FeedForwardWeights enc_ff;
    LayerNormWeights enc_ln1, enc_ln2;
    AttentionWeights dec_self, dec_cross;
    FeedForwardWeights dec_ff;
    LayerNormWeights dec_ln1, dec_ln2, dec_ln3;
    Eigen::MatrixXd w_out;  // E x v_out
    Eigen::MatrixXd b_out;  // v_out x 1

    // Output projection starts at zero, so the first predicted distribution
    // is exactly uniform over v_out.
    static ModelParams init(int v_text, int v_out, int e_dim, int f_dim, uint64_t seed);
    static ModelParams zeros_like(const ModelParams& other);

    bool all_finite() const;
    int64_t parameter_count() const;
};

// Tensors in declared order; the order fixes checkpoint layout and
// gradient-check traversal.
template <typename Params, typename Fn>
void for_each_tensor(Params& p, Fn&& fn) {
    fn("embed", p.embed);
    fn("enc_attn.wq", p.enc_attn.wq);
    fn("enc_attn.wk", p.enc_attn.wk);
    fn("enc_attn.wv", p.enc_attn.wv);
    fn("enc_attn.wo", p.enc_attn.wo);
    fn("enc_ff.w1", p.enc_ff.w1);
    fn("enc_ff.w2", p.enc_ff.w2);
    fn("enc_ln1.gain", p.enc_ln1.gain);
    fn("enc_ln1.bias", p.enc_ln1.bias);
    fn("enc_ln2.gain", p.enc_ln2.gain);
    fn("enc_ln2.bias", p.enc_ln2.bias);
    fn("dec_self.wq", p.dec_self.wq);
    fn("dec_self.wk", p.dec_self.wk);
    fn("dec_self.wv", p.dec_self.wv);
    fn("dec_self.wo", p.dec_self.wo);
    fn("dec_cross.wq", p.dec_cross.wq);
    fn("dec_cross.wk", p.dec_cross.wk);
    fn("dec_cross.wv", p.dec_cross.wv);
    fn("dec_cross.wo", p.dec_cross.wo);
    fn("dec_ff.w1", p.dec_ff.w1);
    fn("dec_ff.w2", p.dec_ff.w2);
    fn("dec_ln1.gain", p.dec_ln1.gain);
    fn("dec_ln1.bias", p.dec_ln1.bias);
    fn("dec_ln2.gain", p.dec_ln2.gain);
    fn("dec_ln2.bias", p.dec_ln2.bias);
    fn("dec_ln3.gain", p.dec_ln3.gain);
    fn("dec_ln3.bias", p.dec_ln3.bias);
    fn("w_out", p.w_out);
    fn("b_out", p.b_out);
}

std::vector<Eigen::MatrixXd*> tensor_list(ModelParams& p);
std::vector<const Eigen::MatrixXd*> tensor_list(const ModelParams& p);

// One indexing example per document chunk plus one retrieval example per
// train query, interleaved at mix_ratio (indexing : retrieval) after a
// seeded within-task shuffle. mix_ratio 0 keeps retrieval examples only.
std::vector<TrainingExample> build_training_set(const Corpus& corpus,
                                                const DocIdAssignment& assignment,
                                                const Vocabulary& vocab,
                                                const OutputVocab& ovocab,
                                                const TrainConfig& config);

// Teacher-forced distributions: row t is the next-output distribution given
// the first t target ids (row 0 conditions on BOS alone). Rows sum to 1.
Eigen::MatrixXd forward(const ModelParams& params, const std::vector<int>& input_ids,
                        const std::vector<int>& target_prefix_ids);

struct LossAndGrad {
    double loss = 0.0;        // mean cross-entropy per target token
    int64_t token_count = 0;  // target tokens in the batch
    ModelParams grads;
};

LossAndGrad loss_and_grad(const ModelParams& params, const std::vector<TrainingExample>& batch);

struct TrainResult {
    std::vector<double> epoch_losses;
    int epochs_run = 0;
};

// Raised when a run produces non-finite losses or parameters.
struct TrainingDiverged : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Adam over the examples for config.epochs epochs (batch order reshuffled
// per epoch under the config seed). Optional stop(epoch, loss) callback ends
// training early. Throws on a non-finite loss.
TrainResult train(ModelParams& params, const std::vector<TrainingExample>& examples,
                  const TrainConfig& config,
                  const std::function<bool(int, double)>& stop = nullptr);

// Trie over target-id sequences (per-symbol or merged), terminals annotated
// with doc_index and the docid symbols.
class TargetTrie {
public:
    struct Node {
        std::map<int, int> children;  // output id -> node
        int doc_index = -1;
        std::vector<uint8_t> symbols;  // set on terminals
    };

    TargetTrie() : nodes_(1) {}
    void insert(const std::vector<int>& target_ids, int doc_index,
                const std::vector<uint8_t>& symbols);
    const Node& node(int index) const { return nodes_[static_cast<size_t>(index)]; }
    int root() const { return 0; }
    size_t terminal_count() const { return terminals_; }
    DocIdStructure structure = DocIdStructure::kInt;

private:
    std::vector<Node> nodes_;
    size_t terminals_ = 0;
};

TargetTrie build_target_trie(const DocIdAssignment& assignment, TargetMode mode,
                             const OutputVocab& ovocab);
// Per-symbol view of a symbol trie (spec-level constrained decoding).
TargetTrie target_trie_from_docid_trie(const DocIdTrie& trie, DocIdStructure structure);

struct DecodeResult {
    DocId docid;
    int doc_index = -1;
    double log_prob = 0.0;
};

// Beam search restricted to trie children at every step; END is offered only
// at terminals, so every emitted id is a valid assigned docid. Results are
// sorted by descending log-probability, ties by rendered id.
std::vector<DecodeResult> decode_constrained(const ModelParams& params,
                                             const std::vector<int>& input_ids,
                                             const TargetTrie& trie, int beam);
std::vector<DecodeResult> decode_constrained(const ModelParams& params,
                                             const std::vector<int>& input_ids,
                                             const DocIdTrie& trie, DocIdStructure structure,
                                             int beam);

// Checkpoint: one-line JSON header (config, vocabularies, shapes, content
// hashes, format version), then each tensor's doubles in declared order.
struct Checkpoint {
    ModelParams params;
    TrainConfig config;
    Vocabulary vocab;
    OutputVocab ovocab;
    DocIdStructure structure = DocIdStructure::kInt;
    TargetMode mode = TargetMode::kPerSymbol;
    uint64_t corpus_hash = 0;
    uint64_t assignment_hash = 0;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace dsisearch
