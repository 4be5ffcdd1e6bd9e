#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "wmlm/common.hpp"
#include "wmlm/io_util.hpp"
#include "wmlm/masking.hpp"
#include "wmlm/matrix.hpp"
#include "wmlm/rng.hpp"
#include "wmlm/tokenizer.hpp"
#include "wmlm/vocab.hpp"

namespace wmlm {

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t d_model = 64;
  std::size_t n_blocks = 2;
  std::size_t max_len = 128;
  std::size_t ffn_hidden = 0;  // 0 -> 4 * d_model

  std::size_t ffn() const { return ffn_hidden ? ffn_hidden : 4 * d_model; }
};

struct Tensor {
  std::string name;
  Matrix value;
  Matrix grad;
  bool decay = false;  // weight decay applies to 2-D weights only

  Tensor(std::string n, std::size_t r, std::size_t c, bool d)
      : name(std::move(n)), value(r, c), grad(r, c), decay(d) {}
};

namespace detail {

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * 0.7071067811865476)); }

inline double gelu_grad(double x) {
  return 0.5 * (1.0 + std::erf(x * 0.7071067811865476)) +
         x * 0.3989422804014327 * std::exp(-0.5 * x * x);
}

struct LayerNormCache {
  Matrix xhat;
  std::vector<double> rstd;
};

inline void layer_norm_forward(const Matrix& x, const Matrix& gain, const Matrix& bias,
                               Matrix& y, LayerNormCache& cache) {
  constexpr double kEps = 1e-5;
  const std::size_t d = x.cols;
  cache.xhat = Matrix(x.rows, d);
  cache.rstd.resize(x.rows);
  for (std::size_t r = 0; r < x.rows; ++r) {
    const double* xr = x.row(r);
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += xr[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<double>(d);
    const double rstd = 1.0 / std::sqrt(var + kEps);
    cache.rstd[r] = rstd;
    double* hr = cache.xhat.row(r);
    double* yr = y.row(r);
    for (std::size_t j = 0; j < d; ++j) {
      hr[j] = (xr[j] - mean) * rstd;
      yr[j] = hr[j] * gain.data[j] + bias.data[j];
    }
  }
}

inline void layer_norm_backward(const Matrix& dy, const LayerNormCache& cache,
                                const Matrix& gain, Matrix& dx, Matrix& dgain, Matrix& dbias) {
  const std::size_t d = dy.cols;
  for (std::size_t r = 0; r < dy.rows; ++r) {
    const double* dyr = dy.row(r);
    const double* hr = cache.xhat.row(r);
    double* dxr = dx.row(r);
    double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double dxhat = dyr[j] * gain.data[j];
      sum_dxhat += dxhat;
      sum_dxhat_xhat += dxhat * hr[j];
      dgain.data[j] += dyr[j] * hr[j];
      dbias.data[j] += dyr[j];
    }
    const double inv_d = 1.0 / static_cast<double>(d);
    for (std::size_t j = 0; j < d; ++j) {
      const double dxhat = dyr[j] * gain.data[j];
      dxr[j] = cache.rstd[r] * (dxhat - sum_dxhat * inv_d - hr[j] * (sum_dxhat_xhat * inv_d));
    }
  }
}

}  // namespace detail

// Desk-scale MLM encoder: token + learned position embeddings, K blocks of
// single-head self-attention and a two-layer GELU feed-forward with residual
// connections and layer normalization, output projection tied to the token
// embeddings plus a bias. Double precision throughout; forward and backward
// are hand-rolled so gradients can be checked against finite differences.
class TinyMlmModel {
 public:
  explicit TinyMlmModel(ModelConfig cfg) : cfg_(cfg) {
    if (cfg.vocab_size == 0) throw Error("model needs a vocabulary size");
    const std::size_t d = cfg.d_model, h = cfg.ffn(), v = cfg.vocab_size;
    add("tok_emb", v, d, true);
    add("pos_emb", cfg.max_len, d, true);
    add("emb_ln.gain", 1, d, false);
    add("emb_ln.bias", 1, d, false);
    for (std::size_t k = 0; k < cfg.n_blocks; ++k) {
      const std::string p = "block" + std::to_string(k) + ".";
      add(p + "attn.wq", d, d, true);
      add(p + "attn.bq", 1, d, false);
      add(p + "attn.wk", d, d, true);
      add(p + "attn.bk", 1, d, false);
      add(p + "attn.wv", d, d, true);
      add(p + "attn.bv", 1, d, false);
      add(p + "attn.wo", d, d, true);
      add(p + "attn.bo", 1, d, false);
      add(p + "ln1.gain", 1, d, false);
      add(p + "ln1.bias", 1, d, false);
      add(p + "ffn.w1", d, h, true);
      add(p + "ffn.b1", 1, h, false);
      add(p + "ffn.w2", h, d, true);
      add(p + "ffn.b2", 1, d, false);
      add(p + "ln2.gain", 1, d, false);
      add(p + "ln2.bias", 1, d, false);
    }
    add("out_bias", 1, v, false);
  }

  const ModelConfig& config() const { return cfg_; }

  void init_params(std::uint64_t seed) {
    for (std::size_t i = 0; i < tensors_.size(); ++i) {
      Tensor& t = tensors_[i];
      CounterStream rng(seed, i);
      if (t.name.ends_with(".gain")) {
        std::fill(t.value.data.begin(), t.value.data.end(), 1.0);
      } else if (t.value.rows == 1) {
        t.value.zero();  // biases
      } else {
        for (double& x : t.value.data) x = rng.next_normal(0.0, 0.02);
      }
    }
  }

  std::vector<Tensor>& tensors() { return tensors_; }
  const std::vector<Tensor>& tensors() const { return tensors_; }

  Tensor& tensor(const std::string& name) {
    for (auto& t : tensors_)
      if (t.name == name) return t;
    throw Error("no tensor named " + name);
  }

  void zero_grad() {
    for (auto& t : tensors_) t.grad.zero();
  }

  struct ForwardResult {
    Matrix logits;  // N labeled positions x V
    std::vector<std::pair<std::size_t, std::size_t>> slots;  // (example, position)
    std::vector<std::int32_t> labels;
    std::vector<double> weights;

    // caches for backward
    struct BlockCache {
      Matrix input;               // X into the block
      Matrix q, k, v;             // projections
      std::vector<Matrix> attn;   // per-example softmax rows
      Matrix ctx;                 // attention-weighted values
      detail::LayerNormCache ln1, ln2;
      Matrix h1;                  // post-LN1
      Matrix f1;                  // pre-GELU
      Matrix g;                   // post-GELU
    };
    Matrix embedded;  // X0 before emb layer norm
    detail::LayerNormCache emb_ln;
    std::vector<BlockCache> blocks;
    Matrix hidden;    // final hidden states, R x d
    Matrix h_lab;     // gathered labeled rows, N x d
    std::size_t batch = 0, seq = 0;
  };

  // Logits only at positions whose label is not IGNORE.
  ForwardResult forward(const Batch& batch) const {
    const std::size_t bsz = batch.size();
    const std::size_t seq = batch.seq_len();
    if (seq > cfg_.max_len)
      throw Error("sequence length " + std::to_string(seq) + " exceeds max_len " +
                  std::to_string(cfg_.max_len));
    const std::size_t d = cfg_.d_model;
    const std::size_t rows = bsz * seq;

    ForwardResult fr;
    fr.batch = bsz;
    fr.seq = seq;

    const Matrix& emb = tensors_[kTokEmb].value;
    const Matrix& pos = tensors_[kPosEmb].value;
    fr.embedded = Matrix(rows, d);
    for (std::size_t b = 0; b < bsz; ++b) {
      const auto& ex = batch.examples[b];
      for (std::size_t t = 0; t < seq; ++t) {
        const auto id = static_cast<std::size_t>(ex.input_ids[t]);
        if (id >= cfg_.vocab_size) throw Error("token id out of range for model");
        double* out = fr.embedded.row(b * seq + t);
        const double* e = emb.row(id);
        const double* p = pos.row(t);
        for (std::size_t j = 0; j < d; ++j) out[j] = e[j] + p[j];
      }
    }

    Matrix h(rows, d);
    detail::layer_norm_forward(fr.embedded, tensors_[kEmbLnGain].value,
                               tensors_[kEmbLnBias].value, h, fr.emb_ln);

    fr.blocks.resize(cfg_.n_blocks);
    for (std::size_t k = 0; k < cfg_.n_blocks; ++k)
      h = run_block(k, std::move(h), batch, fr.blocks[k]);
    fr.hidden = std::move(h);

    for (std::size_t b = 0; b < bsz; ++b) {
      const auto& ex = batch.examples[b];
      for (std::size_t t = 0; t < seq; ++t) {
        if (ex.label_ids[t] == kIgnoreLabel) continue;
        fr.slots.emplace_back(b, t);
        fr.labels.push_back(ex.label_ids[t]);
        fr.weights.push_back(ex.label_weights[t]);
      }
    }
    const std::size_t n = fr.slots.size();
    fr.h_lab = Matrix(n, d);
    for (std::size_t i = 0; i < n; ++i) {
      const auto [b, t] = fr.slots[i];
      const double* src = fr.hidden.row(b * seq + t);
      std::copy(src, src + d, fr.h_lab.row(i));
    }
    fr.logits = Matrix(n, cfg_.vocab_size);
    matmul_nt_acc(fr.h_lab, emb, fr.logits);  // tied projection
    const double* ob = tensors_[out_bias_index()].value.data.data();
    for (std::size_t i = 0; i < n; ++i) {
      double* row = fr.logits.row(i);
      for (std::size_t j = 0; j < cfg_.vocab_size; ++j) row[j] += ob[j];
    }
    return fr;
  }

  // Accumulates parameter gradients for d loss / d logits.
  void backward(const Batch& batch, const ForwardResult& fr, const Matrix& dlogits) {
    const std::size_t d = cfg_.d_model;
    const std::size_t seq = fr.seq;
    const std::size_t rows = fr.batch * seq;
    const std::size_t n = fr.slots.size();

    // output head: logits = h_lab * tok_emb^T + out_bias
    Matrix& d_emb = tensors_[kTokEmb].grad;
    matmul_tn_acc(dlogits, fr.h_lab, d_emb);  // V x d
    double* d_ob = tensors_[out_bias_index()].grad.data.data();
    for (std::size_t i = 0; i < n; ++i) {
      const double* row = dlogits.row(i);
      for (std::size_t j = 0; j < cfg_.vocab_size; ++j) d_ob[j] += row[j];
    }
    Matrix dh(rows, d);
    {
      Matrix dh_lab(n, d);
      matmul_acc(dlogits, tensors_[kTokEmb].value, dh_lab);
      for (std::size_t i = 0; i < n; ++i) {
        const auto [b, t] = fr.slots[i];
        double* dst = dh.row(b * seq + t);
        const double* src = dh_lab.row(i);
        for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
      }
    }

    for (std::size_t k = cfg_.n_blocks; k-- > 0;)
      dh = backward_block(k, std::move(dh), fr.blocks[k]);

    // embedding layer norm, then scatter into token/position tables
    Matrix dx0(rows, d);
    detail::layer_norm_backward(dh, fr.emb_ln, tensors_[kEmbLnGain].value, dx0,
                                tensors_[kEmbLnGain].grad, tensors_[kEmbLnBias].grad);
    Matrix& d_pos = tensors_[kPosEmb].grad;
    for (std::size_t b = 0; b < fr.batch; ++b) {
      const auto& ex = batch.examples[b];
      for (std::size_t t = 0; t < seq; ++t) {
        const double* src = dx0.row(b * seq + t);
        double* de = d_emb.row(static_cast<std::size_t>(ex.input_ids[t]));
        double* dp = d_pos.row(t);
        for (std::size_t j = 0; j < d; ++j) {
          de[j] += src[j];
          dp[j] += src[j];
        }
      }
    }
  }

  // Softmax distribution over the vocabulary at the single MASK position.
  std::vector<double> mask_probabilities(const TokenizedDoc& prompt,
                                         const Vocabulary& vocab) const {
    std::size_t mask_pos = 0, mask_count = 0;
    for (std::size_t i = 0; i < prompt.size(); ++i)
      if (prompt.token_ids[i] == vocab.mask_id()) {
        mask_pos = i;
        ++mask_count;
      }
    if (mask_count != 1)
      throw UsageError("prompt must contain exactly one " + std::string(kMaskToken) +
                       " (found " + std::to_string(mask_count) + ")");
    Batch batch;
    MaskedExample ex;
    ex.input_ids = prompt.token_ids;
    ex.label_ids.assign(prompt.size(), kIgnoreLabel);
    ex.label_weights.assign(prompt.size(), 0.0);
    ex.attention_mask.assign(prompt.size(), 1);
    ex.label_ids[mask_pos] = 0;  // marks the slot to gather
    ex.label_weights[mask_pos] = 1.0;
    batch.examples.push_back(std::move(ex));

    ForwardResult fr = forward(batch);
    const double* x = fr.logits.row(0);
    const std::size_t v = cfg_.vocab_size;
    double max = x[0];
    for (std::size_t j = 1; j < v; ++j) max = std::max(max, x[j]);
    std::vector<double> probs(v);
    double z = 0.0;
    for (std::size_t j = 0; j < v; ++j) {
      probs[j] = std::exp(x[j] - max);
      z += probs[j];
    }
    for (double& p : probs) p /= z;
    return probs;
  }

  // Top-k (token, probability), ties broken by token id.
  std::vector<std::pair<TokenId, double>> predict_topk(const TokenizedDoc& prompt,
                                                       const Vocabulary& vocab,
                                                       std::size_t k) const {
    std::vector<double> probs = mask_probabilities(prompt, vocab);
    std::vector<TokenId> ids(probs.size());
    std::iota(ids.begin(), ids.end(), 0);
    std::partial_sort(ids.begin(), ids.begin() + std::min(k, ids.size()), ids.end(),
                      [&](TokenId a, TokenId b) {
                        const double pa = probs[static_cast<std::size_t>(a)];
                        const double pb = probs[static_cast<std::size_t>(b)];
                        return pa > pb || (pa == pb && a < b);
                      });
    std::vector<std::pair<TokenId, double>> out;
    for (std::size_t i = 0; i < std::min(k, ids.size()); ++i)
      out.emplace_back(ids[i], probs[static_cast<std::size_t>(ids[i])]);
    return out;
  }

  std::uint64_t vocab_hash() const { return vocab_hash_; }
  std::uint64_t input_hash() const { return input_hash_; }
  void set_hashes(std::uint64_t vocab_hash, std::uint64_t input_hash) {
    vocab_hash_ = vocab_hash;
    input_hash_ = input_hash;
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write checkpoint: " + path);
    out.write("WMLM", 4);
    write_u16(out, kVersion);
    write_u32(out, static_cast<std::uint32_t>(cfg_.vocab_size));
    write_u32(out, static_cast<std::uint32_t>(cfg_.d_model));
    write_u32(out, static_cast<std::uint32_t>(cfg_.n_blocks));
    write_u32(out, static_cast<std::uint32_t>(cfg_.max_len));
    write_u32(out, static_cast<std::uint32_t>(cfg_.ffn()));
    write_u64(out, vocab_hash_);
    write_u64(out, input_hash_);
    write_u32(out, static_cast<std::uint32_t>(tensors_.size()));
    for (const auto& t : tensors_) {
      write_u16(out, static_cast<std::uint16_t>(t.name.size()));
      out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
      write_u64(out, t.value.rows);
      write_u64(out, t.value.cols);
      for (double x : t.value.data) write_f64(out, x);
    }
    if (!out) throw Error("write failed: " + path);
  }

  static TinyMlmModel load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ArtifactError("cannot open checkpoint: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::string_view(magic, 4) != "WMLM")
      throw ArtifactError("not a model checkpoint: " + path);
    if (read_u16(in) != kVersion) throw ArtifactError("unsupported checkpoint version");
    ModelConfig cfg;
    cfg.vocab_size = read_u32(in);
    cfg.d_model = read_u32(in);
    cfg.n_blocks = read_u32(in);
    cfg.max_len = read_u32(in);
    cfg.ffn_hidden = read_u32(in);
    TinyMlmModel model(cfg);
    model.vocab_hash_ = read_u64(in);
    model.input_hash_ = read_u64(in);
    const std::uint32_t n_tensors = read_u32(in);
    if (n_tensors != model.tensors_.size())
      throw ArtifactError("checkpoint tensor count mismatch");
    for (std::uint32_t i = 0; i < n_tensors; ++i) {
      const std::uint16_t len = read_u16(in);
      std::string name(len, '\0');
      in.read(name.data(), len);
      Tensor& t = model.tensor(name);
      if (read_u64(in) != t.value.rows || read_u64(in) != t.value.cols)
        throw ArtifactError("checkpoint tensor shape mismatch: " + name);
      for (double& x : t.value.data) x = read_f64(in);
    }
    return model;
  }

  bool same_parameters(const TinyMlmModel& other) const {
    if (tensors_.size() != other.tensors_.size()) return false;
    for (std::size_t i = 0; i < tensors_.size(); ++i)
      if (tensors_[i].value.data != other.tensors_[i].value.data) return false;
    return true;
  }

 private:
  static constexpr std::uint16_t kVersion = 1;
  // fixed tensor indices for the hot path; out_bias sits after the blocks
  static constexpr std::size_t kTokEmb = 0, kPosEmb = 1, kEmbLnGain = 2, kEmbLnBias = 3;

  std::size_t out_bias_index() const { return 4 + cfg_.n_blocks * 16; }

  void add(std::string name, std::size_t r, std::size_t c, bool decay) {
    tensors_.emplace_back(std::move(name), r, c, decay);
  }

  std::size_t block_base(std::size_t k) const { return 4 + k * 16; }

  Matrix run_block(std::size_t k, Matrix x, const Batch& batch,
                   ForwardResult::BlockCache& cache) const {
    const std::size_t d = cfg_.d_model;
    const std::size_t seq = batch.seq_len();
    const std::size_t bsz = batch.size();
    const std::size_t rows = x.rows;
    const std::size_t base = block_base(k);
    const Matrix& wq = tensors_[base + 0].value;
    const Matrix& bq = tensors_[base + 1].value;
    const Matrix& wk = tensors_[base + 2].value;
    const Matrix& bk = tensors_[base + 3].value;
    const Matrix& wv = tensors_[base + 4].value;
    const Matrix& bv = tensors_[base + 5].value;
    const Matrix& wo = tensors_[base + 6].value;
    const Matrix& bo = tensors_[base + 7].value;

    cache.input = std::move(x);
    const Matrix& h = cache.input;

    cache.q = Matrix(rows, d);
    cache.k = Matrix(rows, d);
    cache.v = Matrix(rows, d);
    matmul_acc(h, wq, cache.q);
    matmul_acc(h, wk, cache.k);
    matmul_acc(h, wv, cache.v);
    add_bias(cache.q, bq);
    add_bias(cache.k, bk);
    add_bias(cache.v, bv);

    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    cache.attn.assign(bsz, Matrix());
    cache.ctx = Matrix(rows, d);
    for (std::size_t b = 0; b < bsz; ++b) {
      const auto& mask = batch.examples[b].attention_mask;
      Matrix& a = cache.attn[b];
      a = Matrix(seq, seq);
      for (std::size_t i = 0; i < seq; ++i) {
        double* arow = a.row(i);
        const double* qrow = cache.q.row(b * seq + i);
        double max = -1e300;
        for (std::size_t j = 0; j < seq; ++j) {
          const double* krow = cache.k.row(b * seq + j);
          double dot = 0.0;
          for (std::size_t c = 0; c < d; ++c) dot += qrow[c] * krow[c];
          dot = dot * scale + (mask[j] ? 0.0 : -1e9);
          arow[j] = dot;
          max = std::max(max, dot);
        }
        double z = 0.0;
        for (std::size_t j = 0; j < seq; ++j) {
          arow[j] = std::exp(arow[j] - max);
          z += arow[j];
        }
        double* crow = cache.ctx.row(b * seq + i);
        for (std::size_t j = 0; j < seq; ++j) {
          arow[j] /= z;
          const double* vrow = cache.v.row(b * seq + j);
          for (std::size_t c = 0; c < d; ++c) crow[c] += arow[j] * vrow[c];
        }
      }
    }

    Matrix u1(rows, d);
    matmul_acc(cache.ctx, wo, u1);
    add_bias(u1, bo);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* hr = h.row(r);
      double* ur = u1.row(r);
      for (std::size_t j = 0; j < d; ++j) ur[j] += hr[j];
    }
    cache.h1 = Matrix(rows, d);
    detail::layer_norm_forward(u1, tensors_[base + 8].value, tensors_[base + 9].value,
                               cache.h1, cache.ln1);

    const std::size_t hid = cfg_.ffn();
    cache.f1 = Matrix(rows, hid);
    matmul_acc(cache.h1, tensors_[base + 10].value, cache.f1);
    add_bias(cache.f1, tensors_[base + 11].value);
    cache.g = Matrix(rows, hid);
    for (std::size_t i = 0; i < cache.f1.data.size(); ++i)
      cache.g.data[i] = detail::gelu(cache.f1.data[i]);

    Matrix u2(rows, d);
    matmul_acc(cache.g, tensors_[base + 12].value, u2);
    add_bias(u2, tensors_[base + 13].value);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* hr = cache.h1.row(r);
      double* ur = u2.row(r);
      for (std::size_t j = 0; j < d; ++j) ur[j] += hr[j];
    }
    Matrix out(rows, d);
    detail::layer_norm_forward(u2, tensors_[base + 14].value, tensors_[base + 15].value,
                               out, cache.ln2);
    return out;
  }

  Matrix backward_block(std::size_t k, Matrix dout, const ForwardResult::BlockCache& cache) {
    const std::size_t d = cfg_.d_model;
    const std::size_t rows = dout.rows;
    const std::size_t hid = cfg_.ffn();
    const std::size_t bsz = cache.attn.size();
    const std::size_t seq = bsz ? rows / bsz : 0;
    const std::size_t base = block_base(k);

    // LN2
    Matrix du2(rows, d);
    detail::layer_norm_backward(dout, cache.ln2, tensors_[base + 14].value, du2,
                                tensors_[base + 14].grad, tensors_[base + 15].grad);
    // residual: u2 = h1 + ffn(h1)
    Matrix dh1 = du2;  // direct path
    // ffn: f2 = gelu(h1 w1 + b1) w2 + b2
    matmul_tn_acc(cache.g, du2, tensors_[base + 12].grad);
    add_bias_grad(du2, tensors_[base + 13].grad);
    Matrix dg(rows, hid);
    matmul_nt_acc(du2, tensors_[base + 12].value, dg);
    for (std::size_t i = 0; i < dg.data.size(); ++i)
      dg.data[i] *= detail::gelu_grad(cache.f1.data[i]);
    matmul_tn_acc(cache.h1, dg, tensors_[base + 10].grad);
    add_bias_grad(dg, tensors_[base + 11].grad);
    matmul_nt_acc(dg, tensors_[base + 10].value, dh1);

    // LN1
    Matrix du1(rows, d);
    detail::layer_norm_backward(dh1, cache.ln1, tensors_[base + 8].value, du1,
                                tensors_[base + 8].grad, tensors_[base + 9].grad);
    // residual: u1 = x + attn(x)
    Matrix dx = du1;

    // attn output projection
    matmul_tn_acc(cache.ctx, du1, tensors_[base + 6].grad);
    add_bias_grad(du1, tensors_[base + 7].grad);
    Matrix dctx(rows, d);
    matmul_nt_acc(du1, tensors_[base + 6].value, dctx);

    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    Matrix dq(rows, d), dk(rows, d), dv(rows, d);
    for (std::size_t b = 0; b < bsz; ++b) {
      const Matrix& a = cache.attn[b];
      for (std::size_t i = 0; i < seq; ++i) {
        const double* arow = a.row(i);
        const double* dcrow = dctx.row(b * seq + i);
        // dA[i][j] = dctx_i . v_j ; dV_j += a_ij dctx_i
        std::vector<double> da(seq);
        double dot_aa = 0.0;
        for (std::size_t j = 0; j < seq; ++j) {
          const double* vrow = cache.v.row(b * seq + j);
          double dot = 0.0;
          for (std::size_t c = 0; c < d; ++c) dot += dcrow[c] * vrow[c];
          da[j] = dot;
          dot_aa += dot * arow[j];
          double* dvrow = dv.row(b * seq + j);
          for (std::size_t c = 0; c < d; ++c) dvrow[c] += arow[j] * dcrow[c];
        }
        // softmax backward then score -> q, k
        const double* qrow = cache.q.row(b * seq + i);
        double* dqrow = dq.row(b * seq + i);
        for (std::size_t j = 0; j < seq; ++j) {
          const double ds = arow[j] * (da[j] - dot_aa) * scale;
          if (ds == 0.0) continue;
          const double* krow = cache.k.row(b * seq + j);
          double* dkrow = dk.row(b * seq + j);
          for (std::size_t c = 0; c < d; ++c) {
            dqrow[c] += ds * krow[c];
            dkrow[c] += ds * qrow[c];
          }
        }
      }
    }

    matmul_tn_acc(cache.input, dq, tensors_[base + 0].grad);
    add_bias_grad(dq, tensors_[base + 1].grad);
    matmul_tn_acc(cache.input, dk, tensors_[base + 2].grad);
    add_bias_grad(dk, tensors_[base + 3].grad);
    matmul_tn_acc(cache.input, dv, tensors_[base + 4].grad);
    add_bias_grad(dv, tensors_[base + 5].grad);
    matmul_nt_acc(dq, tensors_[base + 0].value, dx);
    matmul_nt_acc(dk, tensors_[base + 2].value, dx);
    matmul_nt_acc(dv, tensors_[base + 4].value, dx);
    return dx;
  }

  static void add_bias(Matrix& m, const Matrix& bias) {
    for (std::size_t r = 0; r < m.rows; ++r) {
      double* row = m.row(r);
      for (std::size_t j = 0; j < m.cols; ++j) row[j] += bias.data[j];
    }
  }

  static void add_bias_grad(const Matrix& d, Matrix& dbias) {
    for (std::size_t r = 0; r < d.rows; ++r) {
      const double* row = d.row(r);
      for (std::size_t j = 0; j < d.cols; ++j) dbias.data[j] += row[j];
    }
  }

  ModelConfig cfg_;
  std::vector<Tensor> tensors_;
  std::uint64_t vocab_hash_ = 0;
  std::uint64_t input_hash_ = 0;
};

}  // namespace wmlm
