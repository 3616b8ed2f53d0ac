#include "dsisearch/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <set>

#include <json.hpp>

#include "dsisearch/rng.hpp"

namespace dsisearch {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

TargetMode target_mode_from_string(std::string_view s) {
    if (s == "per_symbol") return TargetMode::kPerSymbol;
    if (s == "merged") return TargetMode::kMerged;
    throw std::invalid_argument("unknown target mode '" + std::string(s) +
                                "' (valid: per_symbol, merged)");
}

std::string_view target_mode_to_string(TargetMode mode) {
    return mode == TargetMode::kPerSymbol ? "per_symbol" : "merged";
}

int OutputVocab::chunk_id(const std::string& chunk) const {
    auto it = chunk_to_id.find(chunk);
    if (it == chunk_to_id.end()) {
        throw std::invalid_argument("chunk '" + chunk + "' is not in the output vocabulary");
    }
    return it->second;
}

OutputVocab OutputVocab::build(const DocIdAssignment& assignment, TargetMode mode) {
    OutputVocab v;
    if (mode == TargetMode::kMerged) {
        if (assignment.structure != DocIdStructure::kChar) {
            throw std::invalid_argument("merged targets require char structure");
        }
        std::set<std::string> chunks;
        for (const auto& id : assignment.mapping) {
            std::string rendered = render(id);
            for (size_t i = 0; i < rendered.size(); i += 4) {
                chunks.insert(rendered.substr(i, 4));
            }
        }
        v.merged_chunks.assign(chunks.begin(), chunks.end());
        for (size_t i = 0; i < v.merged_chunks.size(); ++i) {
            v.chunk_to_id.emplace(v.merged_chunks[i], kFixed + static_cast<int>(i));
        }
    }
    return v;
}

uint64_t OutputVocab::content_hash() const {
    uint64_t h = 14695981039346656037ull;
    for (const auto& c : merged_chunks) h = splitmix64(h ^ fnv1a64(c));
    return h;
}

std::vector<int> docid_target_ids(const DocId& docid, DocIdStructure structure, TargetMode mode,
                                  const OutputVocab& ovocab) {
    std::vector<int> ids;
    if (mode == TargetMode::kPerSymbol) {
        ids.reserve(docid.symbols.size() + 1);
        for (uint8_t sym : docid.symbols) ids.push_back(OutputVocab::sym_id(sym));
    } else {
        if (structure != DocIdStructure::kChar) {
            throw std::invalid_argument("merged targets require char structure");
        }
        DocId as_char = docid;
        as_char.structure = DocIdStructure::kChar;
        std::string rendered = render(as_char);
        for (size_t i = 0; i < rendered.size(); i += 4) {
            ids.push_back(ovocab.chunk_id(rendered.substr(i, 4)));
        }
    }
    ids.push_back(OutputVocab::kEnd);
    return ids;
}

void TrainConfig::validate() const {
    if (e_dim < 1 || f_dim < 1 || l_in < 1 || l_out < 2) {
        throw std::invalid_argument("model dimensions must be positive (l_out >= 2)");
    }
    if (learning_rate < 0.0 || eps <= 0.0) throw std::invalid_argument("bad optimizer scalars");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
        throw std::invalid_argument("betas must lie in [0, 1)");
    }
    if (batch_size < 1 || epochs < 1 || chunks_per_doc < 1) {
        throw std::invalid_argument("batch_size, epochs and chunks_per_doc must be positive");
    }
    if (mix_ratio < 0.0) throw std::invalid_argument("mix_ratio must be >= 0");
}

// ---------------------------------------------------------------------------
// parameters

ModelParams ModelParams::init(int v_text, int v_out, int e_dim, int f_dim, uint64_t seed) {
    if (v_text < 1 || v_out < 1 || e_dim < 1 || f_dim < 1) {
        throw std::invalid_argument("all model dimensions must be positive");
    }
    ModelParams p;
    p.v_text = v_text;
    p.v_out = v_out;
    p.e_dim = e_dim;
    p.f_dim = f_dim;
    p.embed.resize(v_text + v_out, e_dim);
    for (auto* attn : {&p.enc_attn, &p.dec_self, &p.dec_cross}) {
        attn->wq.resize(e_dim, e_dim);
        attn->wk.resize(e_dim, e_dim);
        attn->wv.resize(e_dim, e_dim);
        attn->wo.resize(e_dim, e_dim);
    }
    for (auto* ff : {&p.enc_ff, &p.dec_ff}) {
        ff->w1.resize(e_dim, f_dim);
        ff->w2.resize(f_dim, e_dim);
    }
    for (auto* ln : {&p.enc_ln1, &p.enc_ln2, &p.dec_ln1, &p.dec_ln2, &p.dec_ln3}) {
        ln->gain.resize(e_dim, 1);
        ln->bias.resize(e_dim, 1);
    }
    p.w_out.resize(e_dim, v_out);
    p.b_out.resize(v_out, 1);

    Rng rng(mix_seed(seed, 0x6d6f64656cull));
    for_each_tensor(p, [&](const char* name, MatrixXd& m) {
        std::string_view n(name);
        if (n == "w_out" || n == "b_out") {
            m.setZero();
        } else if (n.find("gain") != std::string_view::npos) {
            m.setOnes();
        } else if (n.find("bias") != std::string_view::npos) {
            m.setZero();
        } else if (n == "embed") {
            for (int64_t i = 0; i < m.size(); ++i) m.data()[i] = 0.1 * rng.normal();
        } else {
            double std_dev = std::sqrt(2.0 / static_cast<double>(m.rows() + m.cols()));
            for (int64_t i = 0; i < m.size(); ++i) m.data()[i] = std_dev * rng.normal();
        }
    });
    return p;
}

ModelParams ModelParams::zeros_like(const ModelParams& other) {
    ModelParams p = other;
    for_each_tensor(p, [](const char*, MatrixXd& m) { m.setZero(); });
    return p;
}

bool ModelParams::all_finite() const {
    bool ok = true;
    for_each_tensor(*this, [&](const char*, const MatrixXd& m) { ok = ok && m.allFinite(); });
    return ok;
}

int64_t ModelParams::parameter_count() const {
    int64_t total = 0;
    for_each_tensor(*this, [&](const char*, const MatrixXd& m) { total += m.size(); });
    return total;
}

std::vector<MatrixXd*> tensor_list(ModelParams& p) {
    std::vector<MatrixXd*> out;
    for_each_tensor(p, [&](const char*, MatrixXd& m) { out.push_back(&m); });
    return out;
}

std::vector<const MatrixXd*> tensor_list(const ModelParams& p) {
    std::vector<const MatrixXd*> out;
    for_each_tensor(p, [&](const char*, const MatrixXd& m) { out.push_back(&m); });
    return out;
}

// ---------------------------------------------------------------------------
// forward / backward machinery

namespace {

constexpr double kLnEps = 1e-5;

// Fixed sinusoidal position signal; carries order without adding parameters.
MatrixXd positional_encoding(int64_t length, int e_dim) {
    MatrixXd pe(length, e_dim);
    for (int64_t pos = 0; pos < length; ++pos) {
        for (int i = 0; i < e_dim; ++i) {
            double exponent = static_cast<double>(2 * (i / 2)) / static_cast<double>(e_dim);
            double angle = static_cast<double>(pos) / std::pow(10000.0, exponent);
            pe(pos, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    }
    return pe;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

double gelu_grad(double x) {
    constexpr double inv_sqrt_2pi = 0.3989422804014326779;
    return 0.5 * (1.0 + std::erf(x * M_SQRT1_2)) + x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

struct LayerNormCache {
    MatrixXd xhat;
    VectorXd inv_std;
};

MatrixXd layer_norm_fwd(const MatrixXd& x, const LayerNormWeights& w, LayerNormCache& cache) {
    const auto rows = x.rows();
    const auto cols = x.cols();
    cache.xhat.resize(rows, cols);
    cache.inv_std.resize(rows);
    MatrixXd out(rows, cols);
    for (int64_t r = 0; r < rows; ++r) {
        double mean = x.row(r).mean();
        double var = (x.row(r).array() - mean).square().mean();
        double inv = 1.0 / std::sqrt(var + kLnEps);
        cache.inv_std[r] = inv;
        cache.xhat.row(r) = ((x.row(r).array() - mean) * inv).matrix();
        out.row(r) = cache.xhat.row(r).cwiseProduct(w.gain.col(0).transpose()) +
                     w.bias.col(0).transpose();
    }
    return out;
}

MatrixXd layer_norm_bwd(const MatrixXd& dout, const LayerNormWeights& w,
                        const LayerNormCache& cache, LayerNormWeights& grad) {
    const auto rows = dout.rows();
    const auto cols = dout.cols();
    MatrixXd dx(rows, cols);
    for (int64_t r = 0; r < rows; ++r) {
        auto xhat = cache.xhat.row(r);
        grad.gain.col(0) += dout.row(r).cwiseProduct(xhat).transpose();
        grad.bias.col(0) += dout.row(r).transpose();
        Eigen::RowVectorXd dxhat = dout.row(r).cwiseProduct(w.gain.col(0).transpose());
        double m1 = dxhat.mean();
        double m2 = dxhat.cwiseProduct(xhat).mean();
        dx.row(r) = (cache.inv_std[r] * (dxhat.array() - m1 - xhat.array() * m2)).matrix();
    }
    return dx;
}

struct AttnCache {
    MatrixXd q_in, kv_in;  // layer inputs
    MatrixXd q, k, v;
    MatrixXd probs;  // softmax(QK^T * scale), masked entries exactly zero
    MatrixXd ctx;    // probs * V
    bool causal = false;
};

void softmax_rows_inplace(MatrixXd& m) {
    for (int64_t r = 0; r < m.rows(); ++r) {
        double mx = m.row(r).maxCoeff();
        m.row(r) = (m.row(r).array() - mx).exp().matrix();
        m.row(r) /= m.row(r).sum();
    }
}

MatrixXd attention_fwd(const MatrixXd& q_in, const MatrixXd& kv_in, const AttentionWeights& w,
                       bool causal, AttnCache& cache) {
    cache.q_in = q_in;
    cache.kv_in = kv_in;
    cache.causal = causal;
    cache.q.noalias() = q_in * w.wq;
    cache.k.noalias() = kv_in * w.wk;
    cache.v.noalias() = kv_in * w.wv;
    double scale = 1.0 / std::sqrt(static_cast<double>(q_in.cols()));
    MatrixXd scores = cache.q * cache.k.transpose() * scale;
    if (causal) {
        for (int64_t i = 0; i < scores.rows(); ++i) {
            for (int64_t j = i + 1; j < scores.cols(); ++j) {
                scores(i, j) = -std::numeric_limits<double>::infinity();
            }
        }
    }
    softmax_rows_inplace(scores);
    cache.probs = std::move(scores);
    cache.ctx.noalias() = cache.probs * cache.v;
    return cache.ctx * w.wo;
}

// Returns d(q_in); adds d(kv_in) into dkv_in (shared inputs accumulate).
MatrixXd attention_bwd(const MatrixXd& dout, const AttentionWeights& w, const AttnCache& cache,
                       AttentionWeights& grad, MatrixXd& dkv_in) {
    double scale = 1.0 / std::sqrt(static_cast<double>(cache.q_in.cols()));
    MatrixXd dctx = dout * w.wo.transpose();
    grad.wo.noalias() += cache.ctx.transpose() * dout;

    MatrixXd dprobs = dctx * cache.v.transpose();
    MatrixXd dv = cache.probs.transpose() * dctx;

    MatrixXd dscores(dprobs.rows(), dprobs.cols());
    for (int64_t r = 0; r < dprobs.rows(); ++r) {
        double dot = dprobs.row(r).dot(cache.probs.row(r));
        dscores.row(r) = (cache.probs.row(r).array() * (dprobs.row(r).array() - dot)).matrix();
    }

    MatrixXd dq = dscores * cache.k * scale;
    MatrixXd dk = dscores.transpose() * cache.q * scale;

    grad.wq.noalias() += cache.q_in.transpose() * dq;
    grad.wk.noalias() += cache.kv_in.transpose() * dk;
    grad.wv.noalias() += cache.kv_in.transpose() * dv;

    dkv_in.noalias() += dk * w.wk.transpose();
    dkv_in.noalias() += dv * w.wv.transpose();
    return dq * w.wq.transpose();
}

struct FFCache {
    MatrixXd x_in, pre, act;
};

MatrixXd feed_forward_fwd(const MatrixXd& x, const FeedForwardWeights& w, FFCache& cache) {
    cache.x_in = x;
    cache.pre.noalias() = x * w.w1;
    cache.act = cache.pre.unaryExpr([](double v) { return gelu(v); });
    return cache.act * w.w2;
}

MatrixXd feed_forward_bwd(const MatrixXd& dout, const FeedForwardWeights& w, const FFCache& cache,
                          FeedForwardWeights& grad) {
    grad.w2.noalias() += cache.act.transpose() * dout;
    MatrixXd dact = dout * w.w2.transpose();
    MatrixXd dpre = dact.cwiseProduct(cache.pre.unaryExpr([](double v) { return gelu_grad(v); }));
    grad.w1.noalias() += cache.x_in.transpose() * dpre;
    return dpre * w.w1.transpose();
}

struct ForwardCache {
    std::vector<int> input_ids;
    std::vector<int> dec_ids;  // BOS-prefixed output-side ids
    MatrixXd enc_x0, enc_a, enc_out;
    LayerNormCache enc_ln1, enc_ln2;
    AttnCache enc_attn;
    FFCache enc_ff;
    MatrixXd dec_y0, dec_b, dec_c, dec_d;
    LayerNormCache dec_ln1, dec_ln2, dec_ln3;
    AttnCache dec_self, dec_cross;
    FFCache dec_ff;
    MatrixXd logits, log_probs;
};

void check_input_ids(const ModelParams& p, const std::vector<int>& input_ids) {
    if (input_ids.empty()) throw std::invalid_argument("empty input sequence");
    for (int id : input_ids) {
        if (id < 0 || id >= p.v_text) {
            throw std::out_of_range("input id " + std::to_string(id) + " outside vocabulary");
        }
    }
}

MatrixXd embed_rows(const ModelParams& p, const std::vector<int>& ids, int offset) {
    MatrixXd x(static_cast<int64_t>(ids.size()), p.e_dim);
    for (size_t t = 0; t < ids.size(); ++t) {
        x.row(static_cast<int64_t>(t)) = p.embed.row(offset + ids[t]);
    }
    x += positional_encoding(static_cast<int64_t>(ids.size()), p.e_dim);
    return x;
}

MatrixXd encode(const ModelParams& p, const std::vector<int>& input_ids, ForwardCache& cache) {
    cache.input_ids = input_ids;
    cache.enc_x0 = embed_rows(p, input_ids, 0);
    MatrixXd n1 = layer_norm_fwd(cache.enc_x0, p.enc_ln1, cache.enc_ln1);
    cache.enc_a = cache.enc_x0 + attention_fwd(n1, n1, p.enc_attn, false, cache.enc_attn);
    MatrixXd n2 = layer_norm_fwd(cache.enc_a, p.enc_ln2, cache.enc_ln2);
    cache.enc_out = cache.enc_a + feed_forward_fwd(n2, p.enc_ff, cache.enc_ff);
    return cache.enc_out;
}

// Decoder over BOS + target_prefix against precomputed encoder states.
// Produces per-position logits and log-probabilities over v_out.
void decode_forward(const ModelParams& p, const MatrixXd& enc_out,
                    const std::vector<int>& target_prefix, ForwardCache& cache) {
    cache.dec_ids.clear();
    cache.dec_ids.push_back(OutputVocab::kBos);
    for (int id : target_prefix) {
        if (id < 0 || id >= p.v_out) {
            throw std::out_of_range("target id " + std::to_string(id) +
                                    " outside output vocabulary");
        }
        cache.dec_ids.push_back(id);
    }
    cache.dec_y0 = embed_rows(p, cache.dec_ids, p.v_text);
    MatrixXd m1 = layer_norm_fwd(cache.dec_y0, p.dec_ln1, cache.dec_ln1);
    cache.dec_b = cache.dec_y0 + attention_fwd(m1, m1, p.dec_self, true, cache.dec_self);
    MatrixXd m2 = layer_norm_fwd(cache.dec_b, p.dec_ln2, cache.dec_ln2);
    cache.dec_c = cache.dec_b + attention_fwd(m2, enc_out, p.dec_cross, false, cache.dec_cross);
    MatrixXd m3 = layer_norm_fwd(cache.dec_c, p.dec_ln3, cache.dec_ln3);
    cache.dec_d = cache.dec_c + feed_forward_fwd(m3, p.dec_ff, cache.dec_ff);

    cache.logits.noalias() = cache.dec_d * p.w_out;
    cache.logits.rowwise() += p.b_out.col(0).transpose();
    cache.log_probs = cache.logits;
    for (int64_t r = 0; r < cache.log_probs.rows(); ++r) {
        double mx = cache.log_probs.row(r).maxCoeff();
        double lse = mx + std::log((cache.log_probs.row(r).array() - mx).exp().sum());
        cache.log_probs.row(r).array() -= lse;
    }
}

// Backward through decoder and encoder given d(logits); accumulates into
// `grads`.
void backward(const ModelParams& p, const ForwardCache& cache, const MatrixXd& dlogits,
              ModelParams& grads) {
    grads.w_out.noalias() += cache.dec_d.transpose() * dlogits;
    grads.b_out.col(0) += dlogits.colwise().sum().transpose();
    MatrixXd dd = dlogits * p.w_out.transpose();

    // dec: D = C + FF(LN3(C))
    MatrixXd dm3 = feed_forward_bwd(dd, p.dec_ff, cache.dec_ff, grads.dec_ff);
    MatrixXd dc = dd + layer_norm_bwd(dm3, p.dec_ln3, cache.dec_ln3, grads.dec_ln3);

    // dec: C = B + Cross(LN2(B), enc_out)
    MatrixXd denc_out = MatrixXd::Zero(cache.enc_out.rows(), cache.enc_out.cols());
    MatrixXd dm2 = attention_bwd(dc, p.dec_cross, cache.dec_cross, grads.dec_cross, denc_out);
    MatrixXd db = dc + layer_norm_bwd(dm2, p.dec_ln2, cache.dec_ln2, grads.dec_ln2);

    // dec: B = Y0 + Self(LN1(Y0))
    MatrixXd dm1 = MatrixXd::Zero(db.rows(), db.cols());
    MatrixXd dm1_q = attention_bwd(db, p.dec_self, cache.dec_self, grads.dec_self, dm1);
    dm1 += dm1_q;
    MatrixXd dy0 = db + layer_norm_bwd(dm1, p.dec_ln1, cache.dec_ln1, grads.dec_ln1);
    for (size_t t = 0; t < cache.dec_ids.size(); ++t) {
        grads.embed.row(p.v_text + cache.dec_ids[t]) += dy0.row(static_cast<int64_t>(t));
    }

    // enc: out = A + FF(LN2(A))
    MatrixXd dn2 = feed_forward_bwd(denc_out, p.enc_ff, cache.enc_ff, grads.enc_ff);
    MatrixXd da = denc_out + layer_norm_bwd(dn2, p.enc_ln2, cache.enc_ln2, grads.enc_ln2);

    // enc: A = X0 + Self(LN1(X0))
    MatrixXd dn1 = MatrixXd::Zero(da.rows(), da.cols());
    MatrixXd dn1_q = attention_bwd(da, p.enc_attn, cache.enc_attn, grads.enc_attn, dn1);
    dn1 += dn1_q;
    MatrixXd dx0 = da + layer_norm_bwd(dn1, p.enc_ln1, cache.enc_ln1, grads.enc_ln1);
    for (size_t t = 0; t < cache.input_ids.size(); ++t) {
        grads.embed.row(cache.input_ids[t]) += dx0.row(static_cast<int64_t>(t));
    }
}

}  // namespace

Eigen::MatrixXd forward(const ModelParams& params, const std::vector<int>& input_ids,
                        const std::vector<int>& target_prefix_ids) {
    check_input_ids(params, input_ids);
    ForwardCache cache;
    encode(params, input_ids, cache);
    decode_forward(params, cache.enc_out, target_prefix_ids, cache);
    return cache.log_probs.array().exp().matrix();
}

LossAndGrad loss_and_grad(const ModelParams& params, const std::vector<TrainingExample>& batch) {
    if (batch.empty()) throw std::invalid_argument("empty batch");
    int64_t total_tokens = 0;
    for (const auto& ex : batch) {
        if (ex.target_ids.empty()) throw std::invalid_argument("example with empty target");
        for (int id : ex.target_ids) {
            if (id != OutputVocab::kPad) total_tokens += 1;
        }
    }
    if (total_tokens == 0) throw std::invalid_argument("batch has no unmasked target tokens");

    LossAndGrad result;
    result.token_count = total_tokens;
    result.grads = ModelParams::zeros_like(params);
    double weight = 1.0 / static_cast<double>(total_tokens);
    double loss_sum = 0.0;

    for (const auto& ex : batch) {
        check_input_ids(params, ex.input_ids);
        ForwardCache cache;
        encode(params, ex.input_ids, cache);
        std::vector<int> prefix(ex.target_ids.begin(), ex.target_ids.end() - 1);
        decode_forward(params, cache.enc_out, prefix, cache);

        MatrixXd dlogits = cache.log_probs.array().exp().matrix();
        for (size_t t = 0; t < ex.target_ids.size(); ++t) {
            int gold = ex.target_ids[t];
            if (gold == OutputVocab::kPad) {  // padded positions carry no loss
                dlogits.row(static_cast<int64_t>(t)).setZero();
                continue;
            }
            loss_sum -= cache.log_probs(static_cast<int64_t>(t), gold);
            dlogits(static_cast<int64_t>(t), gold) -= 1.0;
        }
        dlogits *= weight;
        backward(params, cache, dlogits, result.grads);
    }

    result.loss = loss_sum * weight;
    if (!std::isfinite(result.loss)) throw std::runtime_error("non-finite training loss");
    return result;
}

std::vector<TrainingExample> build_training_set(const Corpus& corpus,
                                                const DocIdAssignment& assignment,
                                                const Vocabulary& vocab,
                                                const OutputVocab& ovocab,
                                                const TrainConfig& config) {
    config.validate();
    if (assignment.size() != corpus.size()) {
        throw std::invalid_argument("assignment size does not match corpus");
    }

    std::vector<TrainingExample> indexing;
    for (const auto& sample : corpus.samples) {
        auto target = docid_target_ids(assignment.at(sample.doc_index), assignment.structure,
                                       ovocab.merged_chunks.empty() ? TargetMode::kPerSymbol
                                                                    : TargetMode::kMerged,
                                       ovocab);
        if (static_cast<int>(target.size()) > config.l_out) {
            throw std::invalid_argument("docid target longer than l_out");
        }
        auto ids = tokenize_to_ids(sample.stripped_code, vocab);
        for (int chunk = 0; chunk < config.chunks_per_doc; ++chunk) {
            size_t begin = static_cast<size_t>(chunk) * static_cast<size_t>(config.l_in);
            if (begin >= ids.size() && chunk > 0) break;
            size_t end = std::min(ids.size(), begin + static_cast<size_t>(config.l_in));
            TrainingExample ex;
            ex.input_ids.assign(ids.begin() + static_cast<std::ptrdiff_t>(begin),
                                ids.begin() + static_cast<std::ptrdiff_t>(end));
            if (ex.input_ids.empty()) ex.input_ids.push_back(Vocabulary::kUnk);
            ex.target_ids = target;
            ex.task = Task::kIndexing;
            indexing.push_back(std::move(ex));
        }
    }

    std::vector<TrainingExample> retrieval;
    for (const auto& q : corpus.queries) {
        if (q.split != Split::kTrain) continue;
        TrainingExample ex;
        ex.input_ids = tokenize_to_ids(q.text, vocab);
        if (static_cast<int>(ex.input_ids.size()) > config.l_in) {
            ex.input_ids.resize(static_cast<size_t>(config.l_in));
        }
        if (ex.input_ids.empty()) ex.input_ids.push_back(Vocabulary::kUnk);
        ex.target_ids = docid_target_ids(assignment.at(q.target_doc), assignment.structure,
                                         ovocab.merged_chunks.empty() ? TargetMode::kPerSymbol
                                                                      : TargetMode::kMerged,
                                         ovocab);
        ex.task = Task::kRetrieval;
        retrieval.push_back(std::move(ex));
    }

    Rng idx_rng(mix_seed(config.seed, 0x696e646578ull));
    Rng ret_rng(mix_seed(config.seed, 0x7265747269ull));
    idx_rng.shuffle(indexing);
    ret_rng.shuffle(retrieval);

    std::vector<TrainingExample> out;
    out.reserve(indexing.size() + retrieval.size());
    if (config.mix_ratio == 0.0) return retrieval;

    size_t i = 0, r = 0;
    double credit = 0.0;
    while (i < indexing.size() || r < retrieval.size()) {
        credit += config.mix_ratio;
        while (credit >= 1.0 && i < indexing.size()) {
            out.push_back(std::move(indexing[i++]));
            credit -= 1.0;
        }
        if (r < retrieval.size()) {
            out.push_back(std::move(retrieval[r++]));
        } else if (i < indexing.size() && credit < 1.0) {
            credit = 1.0;  // retrieval exhausted: drain indexing
        }
    }
    return out;
}

TrainResult train(ModelParams& params, const std::vector<TrainingExample>& examples,
                  const TrainConfig& config, const std::function<bool(int, double)>& stop) {
    config.validate();
    if (examples.empty()) throw std::invalid_argument("no training examples");

    ModelParams m = ModelParams::zeros_like(params);
    ModelParams v = ModelParams::zeros_like(params);
    auto p_tensors = tensor_list(params);
    auto m_tensors = tensor_list(m);
    auto v_tensors = tensor_list(v);

    const auto n = static_cast<int64_t>(examples.size());
    const int64_t n_batches = (n + config.batch_size - 1) / config.batch_size;
    int64_t step = 0;

    TrainResult result;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::vector<int64_t> batch_order(static_cast<size_t>(n_batches));
        for (size_t b = 0; b < batch_order.size(); ++b) batch_order[b] = static_cast<int64_t>(b);
        Rng rng(mix_seed(config.seed, 0xe0000000ull + static_cast<uint64_t>(epoch)));
        rng.shuffle(batch_order);

        double epoch_loss_sum = 0.0;
        int64_t epoch_tokens = 0;
        for (int64_t b : batch_order) {
            int64_t begin = b * config.batch_size;
            int64_t end = std::min(n, begin + config.batch_size);
            std::vector<TrainingExample> batch(examples.begin() + begin, examples.begin() + end);

            LossAndGrad lg;
            try {
                lg = loss_and_grad(params, batch);
            } catch (const std::runtime_error& e) {
                throw TrainingDiverged("training diverged at epoch " + std::to_string(epoch) +
                                       ", batch " + std::to_string(b) + ": " + e.what());
            }
            epoch_loss_sum += lg.loss * static_cast<double>(lg.token_count);
            epoch_tokens += lg.token_count;

            ++step;
            double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
            double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
            auto g_tensors = tensor_list(lg.grads);
            for (size_t t = 0; t < p_tensors.size(); ++t) {
                auto& g = *g_tensors[t];
                auto& mt = *m_tensors[t];
                auto& vt = *v_tensors[t];
                mt = config.beta1 * mt + (1.0 - config.beta1) * g;
                vt.array() = config.beta2 * vt.array() + (1.0 - config.beta2) * g.array().square();
                p_tensors[t]->array() -=
                    config.learning_rate * (mt.array() / bc1) /
                    ((vt.array() / bc2).sqrt() + config.eps);
            }
        }
        if (!params.all_finite()) {
            throw TrainingDiverged("training diverged at epoch " + std::to_string(epoch) +
                                   ": non-finite parameters");
        }
        double epoch_loss = epoch_loss_sum / static_cast<double>(epoch_tokens);
        result.epoch_losses.push_back(epoch_loss);
        result.epochs_run = epoch + 1;
        if (stop && stop(epoch, epoch_loss)) break;
    }
    return result;
}

// ---------------------------------------------------------------------------
// constrained decoding

void TargetTrie::insert(const std::vector<int>& target_ids, int doc_index,
                        const std::vector<uint8_t>& symbols) {
    if (target_ids.empty()) throw std::invalid_argument("empty target sequence");
    int cur = 0;
    for (size_t i = 0; i + 1 < target_ids.size(); ++i) {  // last id is END
        int id = target_ids[i];
        auto it = nodes_[static_cast<size_t>(cur)].children.find(id);
        if (it == nodes_[static_cast<size_t>(cur)].children.end()) {
            int next = static_cast<int>(nodes_.size());
            nodes_[static_cast<size_t>(cur)].children.emplace(id, next);
            nodes_.emplace_back();
            cur = next;
        } else {
            cur = it->second;
        }
    }
    if (target_ids.back() != OutputVocab::kEnd) {
        throw std::invalid_argument("target sequence must end with END");
    }
    if (nodes_[static_cast<size_t>(cur)].doc_index != -1) {
        throw std::runtime_error("duplicate target sequence in trie");
    }
    nodes_[static_cast<size_t>(cur)].doc_index = doc_index;
    nodes_[static_cast<size_t>(cur)].symbols = symbols;
    ++terminals_;
}

TargetTrie build_target_trie(const DocIdAssignment& assignment, TargetMode mode,
                             const OutputVocab& ovocab) {
    TargetTrie trie;
    trie.structure = assignment.structure;
    for (size_t d = 0; d < assignment.size(); ++d) {
        const DocId& id = assignment.mapping[d];
        trie.insert(docid_target_ids(id, assignment.structure, mode, ovocab),
                    static_cast<int>(d), id.symbols);
    }
    return trie;
}

TargetTrie target_trie_from_docid_trie(const DocIdTrie& trie, DocIdStructure structure) {
    TargetTrie out;
    out.structure = structure;
    for (const auto& [symbols, doc] : trie.enumerate()) {
        std::vector<int> ids;
        ids.reserve(symbols.size() + 1);
        for (uint8_t s : symbols) ids.push_back(OutputVocab::sym_id(s));
        ids.push_back(OutputVocab::kEnd);
        out.insert(ids, doc, symbols);
    }
    return out;
}

std::vector<DecodeResult> decode_constrained(const ModelParams& params,
                                             const std::vector<int>& input_ids,
                                             const TargetTrie& trie, int beam) {
    if (beam < 1) throw std::invalid_argument("beam must be >= 1");
    if (trie.terminal_count() == 0) throw std::invalid_argument("empty trie");
    check_input_ids(params, input_ids);

    ForwardCache enc_cache;
    const MatrixXd enc_out = encode(params, input_ids, enc_cache);

    struct Item {
        int node;
        std::vector<int> ids;
        double logp;
    };
    std::vector<Item> live{{trie.root(), {}, 0.0}};
    std::vector<DecodeResult> finished;

    while (!live.empty()) {
        std::vector<Item> next;
        for (const auto& item : live) {
            ForwardCache cache;
            decode_forward(params, enc_out, item.ids, cache);
            const auto last = cache.log_probs.rows() - 1;
            const auto& node = trie.node(item.node);
            if (node.doc_index >= 0) {
                DecodeResult r;
                r.doc_index = node.doc_index;
                r.docid.symbols = node.symbols;
                r.docid.structure = trie.structure;
                r.log_prob = item.logp + cache.log_probs(last, OutputVocab::kEnd);
                finished.push_back(std::move(r));
            }
            for (const auto& [id, child] : node.children) {
                Item n;
                n.node = child;
                n.ids = item.ids;
                n.ids.push_back(id);
                n.logp = item.logp + cache.log_probs(last, id);
                next.push_back(std::move(n));
            }
        }
        std::sort(next.begin(), next.end(), [](const Item& a, const Item& b) {
            if (a.logp != b.logp) return a.logp > b.logp;
            return a.ids < b.ids;
        });
        if (static_cast<int>(next.size()) > beam) next.resize(static_cast<size_t>(beam));
        live = std::move(next);
    }

    std::sort(finished.begin(), finished.end(), [](const DecodeResult& a, const DecodeResult& b) {
        if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
        DocId ia = a.docid, ib = b.docid;
        ia.structure = ib.structure = DocIdStructure::kInt;
        return render(ia) < render(ib);
    });
    if (static_cast<int>(finished.size()) > beam) finished.resize(static_cast<size_t>(beam));
    return finished;
}

std::vector<DecodeResult> decode_constrained(const ModelParams& params,
                                             const std::vector<int>& input_ids,
                                             const DocIdTrie& trie, DocIdStructure structure,
                                             int beam) {
    return decode_constrained(params, input_ids, target_trie_from_docid_trie(trie, structure),
                              beam);
}

// ---------------------------------------------------------------------------
// checkpoints

namespace {

std::string hash_to_hex(uint64_t h) {
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

uint64_t hex_to_hash(const std::string& s) { return std::stoull(s, nullptr, 16); }

json config_to_json(const TrainConfig& c) {
    return json{{"e_dim", c.e_dim},
                {"f_dim", c.f_dim},
                {"l_in", c.l_in},
                {"l_out", c.l_out},
                {"learning_rate", c.learning_rate},
                {"beta1", c.beta1},
                {"beta2", c.beta2},
                {"eps", c.eps},
                {"batch_size", c.batch_size},
                {"epochs", c.epochs},
                {"mix_ratio", c.mix_ratio},
                {"chunks_per_doc", c.chunks_per_doc},
                {"seed", c.seed}};
}

TrainConfig config_from_json(const json& j) {
    TrainConfig c;
    c.e_dim = j.at("e_dim").get<int>();
    c.f_dim = j.at("f_dim").get<int>();
    c.l_in = j.at("l_in").get<int>();
    c.l_out = j.at("l_out").get<int>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.beta1 = j.at("beta1").get<double>();
    c.beta2 = j.at("beta2").get<double>();
    c.eps = j.at("eps").get<double>();
    c.batch_size = j.at("batch_size").get<int>();
    c.epochs = j.at("epochs").get<int>();
    c.mix_ratio = j.at("mix_ratio").get<double>();
    c.chunks_per_doc = j.at("chunks_per_doc").get<int>();
    c.seed = j.at("seed").get<uint64_t>();
    return c;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    json tensors = json::array();
    for_each_tensor(ckpt.params, [&](const char* name, const MatrixXd& m) {
        tensors.push_back(json{{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
    });
    std::vector<std::string> vocab_tokens(ckpt.vocab.id_to_token.begin() + Vocabulary::kFirstToken,
                                          ckpt.vocab.id_to_token.end());
    json header{{"format_version", 1},
                {"config", config_to_json(ckpt.config)},
                {"structure", structure_to_string(ckpt.structure)},
                {"mode", target_mode_to_string(ckpt.mode)},
                {"v_text", ckpt.params.v_text},
                {"v_out", ckpt.params.v_out},
                {"e_dim", ckpt.params.e_dim},
                {"f_dim", ckpt.params.f_dim},
                {"corpus_hash", hash_to_hex(ckpt.corpus_hash)},
                {"assignment_hash", hash_to_hex(ckpt.assignment_hash)},
                {"vocab_hash", hash_to_hex(ckpt.vocab.content_hash())},
                {"vocab", vocab_tokens},
                {"merged", ckpt.ovocab.merged_chunks},
                {"tensors", tensors}};

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << header.dump() << '\n';
    for_each_tensor(ckpt.params, [&](const char*, const MatrixXd& m) {
        out.write(reinterpret_cast<const char*>(m.data()),
                  static_cast<std::streamsize>(sizeof(double) * static_cast<size_t>(m.size())));
    });
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string header_line;
    if (!std::getline(in, header_line)) throw std::runtime_error("missing checkpoint header");
    json header = json::parse(header_line);
    if (header.at("format_version").get<int>() != 1) {
        throw std::runtime_error("unsupported checkpoint format version");
    }

    Checkpoint ckpt;
    ckpt.config = config_from_json(header.at("config"));
    ckpt.structure = structure_from_string(header.at("structure").get<std::string>());
    ckpt.mode = target_mode_from_string(header.at("mode").get<std::string>());
    ckpt.corpus_hash = hex_to_hash(header.at("corpus_hash").get<std::string>());
    ckpt.assignment_hash = hex_to_hash(header.at("assignment_hash").get<std::string>());

    ckpt.vocab.id_to_token = {"<pad>", "<unk>", "<bos>", "<eos>"};
    for (const auto& tok : header.at("vocab")) {
        ckpt.vocab.token_to_id.emplace(tok.get<std::string>(),
                                       static_cast<int>(ckpt.vocab.id_to_token.size()));
        ckpt.vocab.id_to_token.push_back(tok.get<std::string>());
    }
    for (const auto& chunk : header.at("merged")) {
        ckpt.ovocab.merged_chunks.push_back(chunk.get<std::string>());
    }
    for (size_t i = 0; i < ckpt.ovocab.merged_chunks.size(); ++i) {
        ckpt.ovocab.chunk_to_id.emplace(ckpt.ovocab.merged_chunks[i],
                                        OutputVocab::kFixed + static_cast<int>(i));
    }

    ckpt.params = ModelParams::init(header.at("v_text").get<int>(), header.at("v_out").get<int>(),
                                    header.at("e_dim").get<int>(), header.at("f_dim").get<int>(),
                                    0);
    size_t tensor_idx = 0;
    const auto& shapes = header.at("tensors");
    for_each_tensor(ckpt.params, [&](const char* name, MatrixXd& m) {
        const auto& meta = shapes.at(tensor_idx++);
        if (meta.at("name").get<std::string>() != name ||
            meta.at("rows").get<int64_t>() != m.rows() ||
            meta.at("cols").get<int64_t>() != m.cols()) {
            throw std::runtime_error("checkpoint tensor mismatch at " + std::string(name));
        }
        in.read(reinterpret_cast<char*>(m.data()),
                static_cast<std::streamsize>(sizeof(double) * static_cast<size_t>(m.size())));
        if (!in) throw std::runtime_error("truncated checkpoint at tensor " + std::string(name));
    });
    return ckpt;
}

}  // namespace dsisearch
