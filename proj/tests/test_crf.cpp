#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "piie/crf.hpp"
#include "piie/layer_checks.hpp"

using namespace piie;

namespace {

struct Instance {
  Tensor e, t, start, end;
};

Instance random_instance(std::size_t n, std::size_t k, Rng& rng, double scale = 2.0) {
  Instance in{checks::random_matrix(n, k, rng, scale), checks::random_matrix(k, k, rng, scale), Tensor(Shape{k}),
              Tensor(Shape{k})};
  checks::randomize(in.start, rng, scale);
  checks::randomize(in.end, rng, scale);
  return in;
}

Instance zeros(std::size_t n, std::size_t k) {
  return {Tensor::matrix(n, k), Tensor::matrix(k, k), Tensor(Shape{k}), Tensor(Shape{k})};
}

double log_z(const Instance& in, const TransitionMask* mask = nullptr) {
  return log_partition(Value::constant(in.e), Value::constant(in.t), Value::constant(in.start),
                       Value::constant(in.end), mask)
      .item();
}

}  // namespace

TEST(LogPartition, TwoByTwoZerosIsLogFour) { EXPECT_NEAR(log_z(zeros(2, 2)), std::log(4.0), 1e-15); }

TEST(LogPartition, SinglePositionClosedForm) {
  Rng rng(1);
  const auto in = random_instance(1, 3, rng);
  double want = 0.0;
  std::vector<double> terms;
  for (std::size_t j = 0; j < 3; ++j) terms.push_back(in.start[j] + in.e(0, j) + in.end[j]);
  want = logsumexp(terms);
  EXPECT_NEAR(log_z(in), want, 1e-12);
}

TEST(LogPartition, MatchesEnumeration) {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + static_cast<std::size_t>(trial % 5);
    const std::size_t k = 1 + static_cast<std::size_t>((trial / 5) % 4);
    const auto in = random_instance(n, k, rng);
    const auto brute = fixtures::enumerate(in.e, in.t, in.start, in.end);
    EXPECT_NEAR(log_z(in), brute.log_partition, 1e-8) << "n " << n << " k " << k;
  }
}

TEST(LogPartition, EmissionGradientIsMarginals) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + static_cast<std::size_t>(trial % 5);
    const std::size_t k = 1 + static_cast<std::size_t>((trial / 5) % 4);
    const auto in = random_instance(n, k, rng);
    auto e = Value::leaf(in.e);
    backward(log_partition(e, Value::constant(in.t), Value::constant(in.start), Value::constant(in.end)));
    const auto brute = fixtures::enumerate(in.e, in.t, in.start, in.end);
    EXPECT_LE(max_abs_diff(e.grad(), brute.marginals), 1e-8);
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < k; ++j) s += e.grad()(i, j);
      EXPECT_NEAR(s, 1.0, 1e-10);
    }
  }
}

TEST(LogPartition, PathProbabilitiesSumToOne) {
  Rng rng(4);
  const auto in = random_instance(4, 3, rng);
  const double z = log_z(in);
  double total = 0.0;
  std::vector<int> path(4, 0);
  for (int code = 0; code < 81; ++code) {
    for (int i = 0, c = code; i < 4; ++i, c /= 3) path[static_cast<std::size_t>(i)] = c % 3;
    total += std::exp(fixtures::path_score_of(in.e, in.t, in.start, in.end, path) - z);
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(LogPartition, NonFiniteEmissionsIsNumericError) {
  auto in = zeros(2, 2);
  in.e(1, 1) = std::nan("");
  EXPECT_THROW(log_z(in), NumericError);
}

TEST(LogPartition, EmissionShiftInvariance) {
  Rng rng(5);
  auto in = random_instance(4, 3, rng);
  ParameterStore store;
  Crf crf(store, "crf", 3);
  store.at("crf.transitions").value.mutable_data() = in.t;
  const std::vector<TagId> gold = {0, 2, 1, 1};
  const double before = crf.nll(Value::constant(in.e), gold).item();
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 3; ++j) in.e(i, j) += 5.0 + static_cast<double>(i);
  EXPECT_NEAR(crf.nll(Value::constant(in.e), gold).item(), before, 1e-9);
}

TEST(Nll, SingleTagIsZero) {
  ParameterStore store;
  Crf crf(store, "crf", 1);
  Rng rng(6);
  const std::vector<TagId> gold = {0, 0, 0};
  EXPECT_EQ(crf.nll(Value::constant(checks::random_matrix(3, 1, rng)), gold).item(), 0.0);
}

TEST(Nll, MatchesEnumeration) {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const auto in = random_instance(3, 2, rng);
    ParameterStore store;
    Crf crf(store, "crf", 2);
    store.at("crf.transitions").value.mutable_data() = in.t;
    store.at("crf.start").value.mutable_data() = in.start;
    store.at("crf.end").value.mutable_data() = in.end;
    const std::vector<int> gold = {trial % 2, (trial / 2) % 2, 1};
    const auto brute = fixtures::enumerate(in.e, in.t, in.start, in.end);
    const double want = brute.log_partition - fixtures::path_score_of(in.e, in.t, in.start, in.end, gold);
    EXPECT_NEAR(crf.nll(Value::constant(in.e), gold).item(), want, 1e-8);
  }
}

TEST(Nll, GradCheck) {
  for (const char* layer : {"crf-log-partition", "crf-nll"}) {
    const auto r = check_layer(layer, 5);
    EXPECT_TRUE(r.passed) << layer << " " << r.max_rel_error;
  }
}

TEST(Viterbi, DiagonalDominant) {
  auto in = zeros(4, 4);
  for (std::size_t i = 0; i < 4; ++i) in.e(i, i) = 10.0;
  EXPECT_EQ(viterbi(in.e, in.t, in.start, in.end).tags, (std::vector<TagId>{0, 1, 2, 3}));
}

TEST(Viterbi, TiesGoToTagZero) {
  const auto in = zeros(5, 4);
  EXPECT_EQ(viterbi(in.e, in.t, in.start, in.end).tags, std::vector<TagId>(5, 0));
}

TEST(Viterbi, MatchesEnumeratedArgmax) {
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + static_cast<std::size_t>(trial % 5);
    const std::size_t k = 1 + static_cast<std::size_t>((trial / 5) % 4);
    const auto in = random_instance(n, k, rng);
    const auto brute = fixtures::enumerate(in.e, in.t, in.start, in.end);
    const auto path = viterbi(in.e, in.t, in.start, in.end);
    EXPECT_EQ(path.tags, brute.argmax) << "trial " << trial;
    EXPECT_NEAR(path.score, fixtures::path_score_of(in.e, in.t, in.start, in.end, brute.argmax), 1e-10);
  }
}

TEST(Viterbi, ConstrainedNeverEmitsForbiddenTransition) {
  Rng rng(9);
  const auto mask = TransitionMask::iob();
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + static_cast<std::size_t>(trial % 8);
    auto in = random_instance(n, TagScheme::size, rng, 5.0);
    const auto path = viterbi(in.e, in.t, in.start, in.end, &mask);
    ASSERT_TRUE(is_iob_valid(path.tags)) << "trial " << trial;
    ASSERT_TRUE(path_respects(mask, path.tags));
  }
}

TEST(Viterbi, SoftmaxDecodeMatchesViterbiWithoutTransitions) {
  EXPECT_EQ(softmax_decode(Tensor::matrix({{1, 0}, {0, 1}})).tags, (std::vector<TagId>{0, 1}));
  Rng rng(10);
  for (int trial = 0; trial < 50; ++trial) {
    auto in = zeros(1 + static_cast<std::size_t>(trial % 6), 5);
    in.e = checks::random_matrix(in.e.rows(), 5, rng);
    EXPECT_EQ(softmax_decode(in.e).tags, viterbi(in.e, in.t, in.start, in.end).tags);
  }
}

TEST(Mask, ForbiddenEntriesAreConstantAndGetNoGradient) {
  const auto mask = TransitionMask::iob();
  const std::size_t k = TagScheme::size;
  Rng rng(11);
  auto in = random_instance(4, k, rng);
  auto t = Value::leaf(in.t);
  auto start = Value::leaf(in.start);
  backward(log_partition(Value::constant(in.e), t, start, Value::constant(in.end), &mask));
  const auto eff = detail::effective_scores(in.e, in.t, in.start, in.end, &mask);
  for (std::size_t p = 0; p < k; ++p) {
    if (!mask.allows_start(p)) {
      EXPECT_EQ(eff.start[p], forbidden_score);
      EXPECT_EQ(start.grad()[p], 0.0);
    }
    for (std::size_t q = 0; q < k; ++q)
      if (!mask.allows(p, q)) {
        EXPECT_EQ(eff.t(p, q), forbidden_score);
        EXPECT_EQ(t.grad()(p, q), 0.0);
      } else {
        EXPECT_EQ(eff.t(p, q), in.t(p, q));
      }
  }
}

TEST(Mask, IobForbidsExactlyTheDocumentedMoves) {
  const auto mask = TransitionMask::iob();
  for (auto c : all_categories) {
    EXPECT_FALSE(mask.allows_start(static_cast<std::size_t>(TagScheme::inside(c))));
    EXPECT_TRUE(mask.allows_start(static_cast<std::size_t>(TagScheme::begin(c))));
    EXPECT_FALSE(mask.allows(TagScheme::outside, static_cast<std::size_t>(TagScheme::inside(c))));
    for (auto d : all_categories) {
      const bool same = c == d;
      EXPECT_EQ(mask.allows(static_cast<std::size_t>(TagScheme::begin(c)), static_cast<std::size_t>(TagScheme::inside(d))), same);
      EXPECT_EQ(mask.allows(static_cast<std::size_t>(TagScheme::inside(c)), static_cast<std::size_t>(TagScheme::inside(d))), same);
    }
  }
}

TEST(Crf, DimensionMismatchIsDimensionError) {
  ParameterStore store;
  Crf crf(store, "crf", 3);
  Rng rng(12);
  EXPECT_THROW(crf.log_partition(Value::constant(checks::random_matrix(2, 4, rng))), DimensionError);
}
