#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>

#include "helpers.hpp"
#include "oracles.hpp"
#include "wmlm/loss.hpp"
#include "wmlm/rng.hpp"

using namespace wmlm;
using Catch::Approx;

namespace {

Matrix random_logits(std::size_t rows, std::size_t cols, std::uint64_t seed, double scale) {
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      m.at(i, j) = (rng_unit(seed, i, j, 0, 0) - 0.5) * 2.0 * scale;
  return m;
}

}  // namespace

TEST_CASE("two-way logits at zero give the closed-form loss and gradient") {
  Matrix logits(1, 2);
  const std::vector<std::int32_t> labels = {0};
  const std::vector<double> weights = {5.0};
  const auto r = weighted_ce(logits, labels, weights);
  REQUIRE(r.loss_sum == Approx(5.0 * std::log(2.0)).epsilon(1e-15));
  REQUIRE(r.weight_sum == 5.0);
  REQUIRE(r.grad.at(0, 0) == Approx(-2.5).epsilon(1e-15));
  REQUIRE(r.grad.at(0, 1) == Approx(2.5).epsilon(1e-15));
}

TEST_CASE("unit weights reduce to the plain cross entropy") {
  for (std::uint64_t trial = 0; trial < 10; ++trial) {
    const std::size_t rows = 3 + trial % 5;
    const std::size_t cols = 7 + trial % 9;
    const Matrix logits = random_logits(rows, cols, 100 + trial, 6.0);
    std::vector<std::int32_t> labels;
    std::vector<double> weights(rows, 1.0);
    for (std::size_t i = 0; i < rows; ++i)
      labels.push_back(static_cast<std::int32_t>(rng_u64(7, trial, i, 0, 0) % cols));

    const auto r = weighted_ce(logits, labels, weights);
    const long double naive = oracle::naive_unweighted_ce(logits, labels);
    REQUIRE(oracle::rel_err(r.loss_sum, static_cast<double>(naive)) <= 1e-9);
    REQUIRE(r.weight_sum == Approx(static_cast<double>(rows)));
  }
}

TEST_CASE("loss and gradient are linear in the weights") {
  const Matrix logits = random_logits(6, 11, 55, 4.0);
  std::vector<std::int32_t> labels;
  std::vector<double> weights;
  for (std::size_t i = 0; i < 6; ++i) {
    labels.push_back(static_cast<std::int32_t>(rng_u64(8, i, 0, 0, 0) % 11));
    weights.push_back(0.5 + static_cast<double>(i));
  }
  const auto base = weighted_ce(logits, labels, weights);

  std::vector<double> doubled = weights;
  for (auto& w : doubled) w *= 2.0;
  const auto twice = weighted_ce(logits, labels, doubled);

  REQUIRE(oracle::rel_err(twice.loss_sum, 2.0 * base.loss_sum) < 1e-12);
  REQUIRE(twice.weight_sum == Approx(2.0 * base.weight_sum));
  for (std::size_t i = 0; i < base.grad.data.size(); ++i)
    REQUIRE(oracle::rel_err(twice.grad.data[i], 2.0 * base.grad.data[i], 1e-12) < 1e-12);
}

TEST_CASE("each gradient row sums to zero") {
  const Matrix logits = random_logits(8, 13, 77, 8.0);
  std::vector<std::int32_t> labels;
  std::vector<double> weights;
  for (std::size_t i = 0; i < 8; ++i) {
    labels.push_back(static_cast<std::int32_t>(i % 13));
    weights.push_back(1.0 + 0.37 * static_cast<double>(i));
  }
  const auto r = weighted_ce(logits, labels, weights);
  for (std::size_t i = 0; i < 8; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < 13; ++j) sum += r.grad.at(i, j);
    REQUIRE(std::abs(sum) <= 1e-9 * weights[i]);
  }
}

TEST_CASE("analytic gradients match central differences") {
  for (std::uint64_t trial = 0; trial < 4; ++trial) {
    const std::size_t rows = 2 + trial;
    const std::size_t cols = 5 + 2 * trial;
    Matrix logits = random_logits(rows, cols, 200 + trial, 3.0);
    std::vector<std::int32_t> labels;
    std::vector<double> weights;
    for (std::size_t i = 0; i < rows; ++i) {
      labels.push_back(static_cast<std::int32_t>(rng_u64(9, trial, i, 0, 0) % cols));
      weights.push_back(1.0 + static_cast<double>(rng_u64(9, trial, i, 1, 0) % 5));
    }
    const auto analytic = weighted_ce(logits, labels, weights);

    for (int probe = 0; probe < 10; ++probe) {
      const std::size_t i = rng_u64(10, trial, probe, 0, 0) % rows;
      const std::size_t j = rng_u64(10, trial, probe, 1, 0) % cols;
      const double x0 = logits.at(i, j);
      const double fd = oracle::central_diff(
          [&](double x) {
            logits.at(i, j) = x;
            const double f = weighted_ce(logits, labels, weights).loss_sum;
            logits.at(i, j) = x0;
            return f;
          },
          x0, 1e-5);
      INFO("trial " << trial << " element (" << i << "," << j << ")");
      REQUIRE(oracle::rel_err(analytic.grad.at(i, j), fd, 1e-8) < 1e-4);
    }
  }
}

TEST_CASE("invalid labels, weights, and shapes are rejected") {
  Matrix logits(2, 4);
  const std::vector<std::int32_t> labels = {0, 1};
  const std::vector<double> weights = {1.0, 1.0};

  const std::vector<std::int32_t> big = {0, 4};
  REQUIRE_THROWS_AS(weighted_ce(logits, big, weights), Error);

  const std::vector<std::int32_t> negative = {0, -1};
  REQUIRE_THROWS_AS(weighted_ce(logits, negative, weights), Error);

  const std::vector<double> bad_weight = {1.0, -0.5};
  REQUIRE_THROWS_AS(weighted_ce(logits, labels, bad_weight), Error);

  const std::vector<std::int32_t> short_labels = {0};
  REQUIRE_THROWS_AS(weighted_ce(logits, short_labels, weights), Error);
}

TEST_CASE("non-finite logits fail numerically instead of propagating") {
  Matrix logits(1, 3);
  logits.at(0, 1) = std::numeric_limits<double>::quiet_NaN();
  const std::vector<std::int32_t> labels = {0};
  const std::vector<double> weights = {1.0};
  REQUIRE_THROWS_AS(weighted_ce(logits, labels, weights), NumericError);

  logits.at(0, 1) = std::numeric_limits<double>::infinity();
  REQUIRE_THROWS_AS(weighted_ce(logits, labels, weights), NumericError);
}

TEST_CASE("descending the gradient drives the labeled class to the argmax") {
  Matrix logits = random_logits(3, 6, 321, 1.0);
  const std::vector<std::int32_t> labels = {4, 0, 2};
  const std::vector<double> weights = {1.0, 3.0, 5.0};

  double prev = std::numeric_limits<double>::infinity();
  for (int step = 0; step < 200; ++step) {
    const auto r = weighted_ce(logits, labels, weights);
    REQUIRE(r.loss_sum < prev + 1e-12);
    prev = r.loss_sum;
    for (std::size_t i = 0; i < logits.data.size(); ++i)
      logits.data[i] -= 0.5 * r.grad.data[i];
  }
  for (std::size_t i = 0; i < 3; ++i) {
    std::size_t argmax = 0;
    for (std::size_t j = 1; j < 6; ++j)
      if (logits.at(i, j) > logits.at(i, argmax)) argmax = j;
    REQUIRE(argmax == static_cast<std::size_t>(labels[i]));
  }
}
