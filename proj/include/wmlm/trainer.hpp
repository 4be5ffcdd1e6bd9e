#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "wmlm/common.hpp"
#include "wmlm/io_util.hpp"
#include "wmlm/loss.hpp"
#include "wmlm/masking.hpp"
#include "wmlm/model.hpp"
#include "wmlm/schedule.hpp"
#include "wmlm/tokenizer.hpp"
#include "wmlm/vocab.hpp"

namespace wmlm {

// Ablation grid: first letter picks the masking rates, second the loss
// weights; 'u' pins the floor value everywhere, 'v' uses the schedule.
enum class Variant { uu, uw, vu, vw };

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::uu: return "uu";
    case Variant::uw: return "uw";
    case Variant::vu: return "vu";
    case Variant::vw: return "vw";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  if (s == "uu") return Variant::uu;
  if (s == "uw") return Variant::uw;
  if (s == "vu") return Variant::vu;
  if (s == "vw") return Variant::vw;
  throw UsageError("unknown variant '" + s + "' (expected uu, uw, vu, or vw)");
}

inline MaskingSchedule apply_variant(const MaskingSchedule& schedule, Variant v) {
  MaskingSchedule out = schedule;
  const ScheduleConfig& cfg = schedule.config();
  const bool uniform_rate = (v == Variant::uu || v == Variant::uw);
  const bool uniform_weight = (v == Variant::uu || v == Variant::vu);
  for (std::size_t t = 0; t < out.size(); ++t) {
    if (uniform_rate) out.set_rate(static_cast<TokenId>(t), cfg.rate_min);
    if (uniform_weight) out.set_weight(static_cast<TokenId>(t), cfg.weight_min);
  }
  return out;
}

struct TrainConfig {
  Variant variant = Variant::vw;
  std::uint64_t steps = 200;
  std::size_t batch_size = 16;
  std::size_t max_len = 128;
  double lr = 1e-3;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  bool mean_reduction = true;  // scale gradients by 1 / weight_sum per batch
};

struct LossPoint {
  std::uint64_t step = 0;
  double mean_loss = 0.0;  // loss_sum / weight_sum
  double loss_sum = 0.0;
  double weight_sum = 0.0;
};

struct TrainResult {
  std::vector<LossPoint> curve;
};

class AdamW {
 public:
  AdamW(TinyMlmModel& model, const TrainConfig& cfg) : model_(model), cfg_(cfg) {
    for (const auto& t : model.tensors()) {
      m_.emplace_back(t.value.rows, t.value.cols);
      v_.emplace_back(t.value.rows, t.value.cols);
    }
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    auto& tensors = model_.tensors();
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      auto& p = tensors[i].value.data;
      const auto& g = tensors[i].grad.data;
      auto& m = m_[i].data;
      auto& v = v_[i].data;
      for (std::size_t j = 0; j < p.size(); ++j) {
        m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
        v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
        p[j] -= cfg_.lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + cfg_.eps);
      }
      if (tensors[i].decay && cfg_.weight_decay != 0.0)
        for (double& x : p) x -= cfg_.lr * cfg_.weight_decay * x;
    }
  }

 private:
  TinyMlmModel& model_;
  TrainConfig cfg_;
  std::uint64_t t_ = 0;
  std::vector<Matrix> m_, v_;
};

namespace detail {

inline void pad_batch(Batch& batch, const Vocabulary& vocab) {
  std::size_t max_seq = 0;
  for (const auto& ex : batch.examples) max_seq = std::max(max_seq, ex.size());
  for (auto& ex : batch.examples) {
    while (ex.size() < max_seq) {
      ex.input_ids.push_back(vocab.pad_id());
      ex.label_ids.push_back(kIgnoreLabel);
      ex.label_weights.push_back(0.0);
      ex.attention_mask.push_back(0);
    }
  }
}

}  // namespace detail

// Runs the MLM objective over the corpus in a fixed cyclic order. Example j
// of step s is document (s * batch_size + j) mod N, and the wrap count is the
// epoch fed to the masking RNG, so every pass corrupts differently while the
// whole run stays a pure function of config + seed.
inline TrainResult train(TinyMlmModel& model, const std::vector<TokenizedDoc>& corpus,
                         const MaskingSchedule& schedule, const Vocabulary& vocab,
                         const TrainConfig& cfg) {
  if (cfg.batch_size == 0) throw UsageError("batch_size must be positive");
  if (cfg.max_len > model.config().max_len)
    throw UsageError("max_len exceeds the model's position table");
  std::vector<const TokenizedDoc*> docs;
  docs.reserve(corpus.size());
  for (const auto& d : corpus)
    if (!d.empty()) docs.push_back(&d);
  if (docs.empty()) throw Error("training corpus has no non-empty documents");

  const MaskingSchedule effective = apply_variant(schedule, cfg.variant);
  AdamW opt(model, cfg);
  TrainResult result;
  result.curve.reserve(cfg.steps);
  const std::uint64_t n = docs.size();

  for (std::uint64_t step = 0; step < cfg.steps; ++step) {
    Batch batch;
    batch.examples.reserve(cfg.batch_size);
    for (std::size_t j = 0; j < cfg.batch_size; ++j) {
      const std::uint64_t pos = step * cfg.batch_size + j;
      const std::uint64_t idx = pos % n;
      const std::uint64_t epoch = pos / n;
      TokenizedDoc doc = *docs[idx];
      doc.truncate(cfg.max_len);
      batch.examples.push_back(mask_example(doc, effective, vocab, cfg.seed, idx, epoch));
    }
    detail::pad_batch(batch, vocab);

    model.zero_grad();
    TinyMlmModel::ForwardResult fr = model.forward(batch);
    LossResult loss;
    try {
      loss = weighted_ce(fr.logits, fr.labels, fr.weights);
    } catch (const NumericError& e) {
      throw NumericError("training diverged at step " + std::to_string(step) + ": " + e.what());
    }
    if (!std::isfinite(loss.loss_sum))
      throw NumericError("training diverged at step " + std::to_string(step) +
                         ": loss is not finite");
    if (cfg.mean_reduction) {
      const double inv = 1.0 / loss.weight_sum;
      for (double& g : loss.grad.data) g *= inv;
    }
    model.backward(batch, fr, loss.grad);
    opt.step();
    result.curve.push_back({step, loss.loss_sum / loss.weight_sum, loss.loss_sum,
                            loss.weight_sum});
  }
  return result;
}

inline void write_loss_curve(const std::string& path, const std::vector<LossPoint>& curve) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write loss curve: " + path);
  for (const auto& p : curve)
    out << p.step << '\t' << format_double(p.mean_loss) << '\n';
  if (!out) throw Error("write failed: " + path);
}

}  // namespace wmlm
