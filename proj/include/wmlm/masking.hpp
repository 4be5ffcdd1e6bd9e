#pragma once

#include <algorithm>
#include <ostream>
#include <span>
#include <vector>

#include <json.hpp>

#include "wmlm/common.hpp"
#include "wmlm/rng.hpp"
#include "wmlm/schedule.hpp"
#include "wmlm/tokenizer.hpp"
#include "wmlm/vocab.hpp"

namespace wmlm {

struct MaskedExample {
  std::vector<TokenId> input_ids;          // corrupted sequence
  std::vector<std::int32_t> label_ids;     // original id at selected positions, else IGNORE
  std::vector<double> label_weights;       // w(original) at selected positions, else 0
  std::vector<std::uint8_t> attention_mask;  // false at PAD

  std::size_t size() const { return input_ids.size(); }
};

namespace detail {

// Draw purposes; each (position, purpose) pair gets an independent stream.
enum MaskDraw : std::uint64_t { kSelect = 0, kCorrupt = 1, kReplace = 2 };

inline TokenId random_replacement(const Vocabulary& vocab, TokenId original, std::uint64_t h) {
  const auto& candidates = vocab.non_special_ids();
  // Exclude the original so "randomized" and "kept" stay distinguishable.
  if (!vocab.is_special(original)) {
    std::size_t slot = static_cast<std::size_t>(h % (candidates.size() - 1));
    auto orig_it = std::lower_bound(candidates.begin(), candidates.end(), original);
    std::size_t orig_slot = static_cast<std::size_t>(orig_it - candidates.begin());
    if (slot >= orig_slot) ++slot;
    return candidates[slot];
  }
  return candidates[static_cast<std::size_t>(h % candidates.size())];
}

}  // namespace detail

// Dynamic masking: each position is selected independently with probability
// m(token); selected positions are corrupted 80/10/10. The randomness is a
// pure function of (seed, example index, epoch, position), so masks change
// across epochs but never depend on batching order.
inline MaskedExample mask_example(const TokenizedDoc& doc, const MaskingSchedule& schedule,
                                  const Vocabulary& vocab, std::uint64_t seed,
                                  std::uint64_t index, std::uint64_t epoch) {
  const std::size_t n = doc.size();
  MaskedExample ex;
  ex.input_ids = doc.token_ids;
  ex.label_ids.assign(n, kIgnoreLabel);
  ex.label_weights.assign(n, 0.0);
  ex.attention_mask.assign(n, 1);
  if (n == 0) return ex;

  std::vector<std::size_t> selected;
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng_unit(seed, index, epoch, i, detail::kSelect);
    if (u < schedule.rate(doc.token_ids[i])) selected.push_back(i);
  }
  if (selected.empty()) {
    // Guarantee a non-empty loss: force the highest-rate position.
    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i)
      if (schedule.rate(doc.token_ids[i]) > schedule.rate(doc.token_ids[best])) best = i;
    selected.push_back(best);
  }

  for (std::size_t i : selected) {
    const TokenId original = doc.token_ids[i];
    ex.label_ids[i] = original;
    ex.label_weights[i] = schedule.weight(original);
    const double c = rng_unit(seed, index, epoch, i, detail::kCorrupt);
    if (c < 0.8) {
      ex.input_ids[i] = vocab.mask_id();
    } else if (c < 0.9) {
      ex.input_ids[i] = detail::random_replacement(
          vocab, original, rng_u64(seed, index, epoch, i, detail::kReplace));
    }
    // else: input left unchanged; still labeled and weighted
  }
  return ex;
}

struct Batch {
  std::vector<MaskedExample> examples;  // all padded to a common length

  std::size_t size() const { return examples.size(); }
  std::size_t seq_len() const { return examples.empty() ? 0 : examples[0].size(); }
};

// Masks and pads up to batch_size docs to the longest sequence in the batch
// (at most max_len). Deterministic under (seed, base_index, epoch).
inline Batch make_batch(std::span<const TokenizedDoc> docs, const MaskingSchedule& schedule,
                        const Vocabulary& vocab, std::uint64_t seed, std::size_t max_len,
                        std::size_t batch_size, std::uint64_t epoch = 0,
                        std::uint64_t base_index = 0) {
  Batch batch;
  const std::size_t count = std::min(batch_size, docs.size());
  std::size_t target = 0;
  for (std::size_t j = 0; j < count; ++j) {
    TokenizedDoc doc = docs[j];
    doc.truncate(max_len);
    batch.examples.push_back(mask_example(doc, schedule, vocab, seed, base_index + j, epoch));
    target = std::max(target, batch.examples.back().size());
  }
  for (auto& ex : batch.examples) {
    while (ex.size() < target) {
      ex.input_ids.push_back(vocab.pad_id());
      ex.label_ids.push_back(kIgnoreLabel);
      ex.label_weights.push_back(0.0);
      ex.attention_mask.push_back(0);
    }
  }
  return batch;
}

struct CorruptionCensus {
  std::uint64_t masked = 0;
  std::uint64_t randomized = 0;
  std::uint64_t kept = 0;

  std::uint64_t total() const { return masked + randomized + kept; }
};

inline CorruptionCensus corruption_census(std::span<const MaskedExample> examples,
                                          const Vocabulary& vocab) {
  CorruptionCensus census;
  for (const auto& ex : examples) {
    for (std::size_t i = 0; i < ex.size(); ++i) {
      if (ex.label_ids[i] == kIgnoreLabel) continue;
      if (ex.input_ids[i] == vocab.mask_id()) ++census.masked;
      else if (ex.input_ids[i] == ex.label_ids[i]) ++census.kept;
      else ++census.randomized;
    }
  }
  return census;
}

// Line-delimited self-describing dump for cross-implementation checks.
inline void dump_examples(std::ostream& out, std::span<const MaskedExample> examples) {
  for (const auto& ex : examples) {
    nlohmann::json rec;
    rec["input_ids"] = ex.input_ids;
    rec["label_ids"] = ex.label_ids;
    rec["label_weights"] = ex.label_weights;
    rec["attention_mask"] = std::vector<int>(ex.attention_mask.begin(), ex.attention_mask.end());
    out << rec.dump() << '\n';
  }
}

}  // namespace wmlm
