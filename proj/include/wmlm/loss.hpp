#pragma once

#include <cmath>
#include <span>

#include "wmlm/common.hpp"
#include "wmlm/matrix.hpp"

namespace wmlm {

struct LossResult {
  double loss_sum = 0.0;    // -sum_i w_i log softmax(x_i)[y_i]
  double weight_sum = 0.0;  // sum_i w_i
  Matrix grad;              // d loss_sum / d logits; row i = w_i (softmax(x_i) - onehot(y_i))
};

// Weighted cross entropy over N labeled positions with per-position penalty
// weights. Uniform weights reduce it to the standard MLM loss. Softmax uses
// max-subtraction; sums are compensated.
inline LossResult weighted_ce(const Matrix& logits, std::span<const std::int32_t> labels,
                              std::span<const double> weights) {
  const std::size_t n = logits.rows;
  const std::size_t v = logits.cols;
  if (n == 0 || labels.size() != n || weights.size() != n)
    throw Error("weighted_ce: shape mismatch");

  LossResult result;
  result.grad = Matrix(n, v);
  double loss = 0.0, loss_comp = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* x = logits.row(i);
    const auto y = static_cast<std::size_t>(labels[i]);
    const double w = weights[i];
    if (labels[i] < 0 || y >= v) throw Error("weighted_ce: label out of range");
    if (w < 0.0) throw Error("weighted_ce: negative weight");
    double max = x[0];
    for (std::size_t j = 1; j < v; ++j) max = std::max(max, x[j]);
    if (!std::isfinite(max)) throw NumericError("weighted_ce: non-finite logits");
    double z = 0.0;
    for (std::size_t j = 0; j < v; ++j) z += std::exp(x[j] - max);
    const double log_z = std::log(z) + max;
    const double term = w * (log_z - x[y]);
    // NaN rides through std::max above without tripping the isfinite check.
    if (!std::isfinite(term)) throw NumericError("weighted_ce: non-finite logits");
    const double t = term - loss_comp;
    const double s = loss + t;
    loss_comp = (s - loss) - t;
    loss = s;
    double* g = result.grad.row(i);
    for (std::size_t j = 0; j < v; ++j) g[j] = w * (std::exp(x[j] - max) / z);
    g[y] -= w;
    result.weight_sum += w;
  }
  result.loss_sum = loss;
  return result;
}

}  // namespace wmlm
