#pragma once

#include <cmath>
#include <optional>

#include "wmlm/common.hpp"
#include "wmlm/cooccur.hpp"

namespace wmlm {

// Read-only PMI lookups over a co-occurrence table, natural log. The pair
// event distribution is the ordered-pair one: p(a,b) uses count/(2 total),
// p(a) = marginal(a)/(2 total), which reduces to the closed form below.
class PmiView {
 public:
  explicit PmiView(const CooccurrenceTable& table) : table_(&table) {
    if (table.total_pairs() == 0) throw NumericError("empty statistics");
  }

  // Absent (nullopt) for unseen pairs, never a numeric value.
  std::optional<double> lookup(TokenId a, TokenId b) const {
    const std::uint64_t count = table_->pair_count(a, b);
    if (count == 0) return std::nullopt;
    const double num = static_cast<double>(count) * 2.0 *
                       static_cast<double>(table_->total_pairs());
    const double den = static_cast<double>(table_->marginal(a)) *
                       static_cast<double>(table_->marginal(b));
    return std::log(num / den);
  }

  const CooccurrenceTable& table() const { return *table_; }

 private:
  const CooccurrenceTable* table_;
};

inline std::optional<double> pmi(const CooccurrenceTable& table, TokenId a, TokenId b) {
  return PmiView(table).lookup(a, b);
}

}  // namespace wmlm
