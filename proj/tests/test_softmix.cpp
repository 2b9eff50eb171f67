// Copyright 2026 The softaug Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "oracles.hpp"
#include "softaug/softmix.hpp"

namespace softaug {
namespace {

std::vector<std::vector<double>> rows_of(const EmbeddingMatrix& E) {
  std::vector<std::vector<double>> out;
  for (TokenId i = 0; i < E.rows(); ++i) {
    auto r = E.row(i);
    out.emplace_back(r.begin(), r.end());
  }
  return out;
}

std::vector<double> dense_of(const Distribution& d, std::size_t V) {
  std::vector<double> p(V, 0.0);
  d.for_each([&](TokenId id, double q) { p[id] = q; });
  return p;
}

TEST(Mix, PointMassEqualsRow) {
  Rng rng(1);
  auto E = EmbeddingMatrix::uniform(10, 6, 1.0, rng);
  for (TokenId i = 0; i < 10; ++i) {
    auto mixed = mix_embedding(SoftWord{Distribution::point_mass(i), i}, E);
    auto hard = mix_embedding(Position{i}, E);
    EXPECT_EQ(mixed, hard);
  }
}

TEST(Mix, EvenPairIsMidpoint) {
  EmbeddingMatrix E(3, 2);
  E.row(0)[0] = 1.0;
  E.row(0)[1] = 2.0;
  E.row(2)[0] = 3.0;
  E.row(2)[1] = -2.0;
  auto m = mix_embedding(SoftWord{Distribution::sparse({{0, 0.5}, {2, 0.5}}), 0}, E);
  EXPECT_DOUBLE_EQ(m[0], 2.0);
  EXPECT_DOUBLE_EQ(m[1], 0.0);
}

TEST(Mix, MatchesExtendedPrecisionSum) {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t V = 2 + rng.below(60), dim = 1 + rng.below(16);
    auto E = EmbeddingMatrix::uniform(V, dim, 1.0, rng);
    auto d = random_distribution(V, 1 + rng.below(V), rng);
    auto got = mix_embedding(SoftWord{d, 0}, E);
    auto want = oracle::brute_mix(dense_of(d, V), rows_of(E));
    for (std::size_t k = 0; k < dim; ++k) EXPECT_NEAR(got[k], want[k], 1e-12);
  }
}

TEST(Mix, LinearInDistribution) {
  Rng rng(3);
  const std::size_t V = 20, dim = 5;
  auto E = EmbeddingMatrix::uniform(V, dim, 1.0, rng);
  for (int trial = 0; trial < 100; ++trial) {
    auto p = dense_of(random_distribution(V, V, rng), V);
    auto q = dense_of(random_distribution(V, 1 + rng.below(V), rng), V);
    const double a = rng.uniform();
    std::vector<double> r(V);
    for (std::size_t i = 0; i < V; ++i) r[i] = a * p[i] + (1 - a) * q[i];
    auto mp = mix_embedding(SoftWord{Distribution::dense(p), 0}, E);
    auto mq = mix_embedding(SoftWord{Distribution::dense(q), 0}, E);
    auto mr = mix_embedding(SoftWord{Distribution::dense(r), 0}, E);
    for (std::size_t k = 0; k < dim; ++k) EXPECT_NEAR(mr[k], a * mp[k] + (1 - a) * mq[k], 1e-12);
  }
}

TEST(Mix, StaysInsideBoundingBoxOfSupport) {
  Rng rng(4);
  const std::size_t V = 30, dim = 4;
  auto E = EmbeddingMatrix::uniform(V, dim, 1.0, rng);
  for (int trial = 0; trial < 200; ++trial) {
    auto d = random_distribution(V, 1 + rng.below(8), rng);
    auto m = mix_embedding(SoftWord{d, 0}, E);
    for (std::size_t k = 0; k < dim; ++k) {
      double lo = INFINITY, hi = -INFINITY;
      d.for_each([&](TokenId id, double) {
        lo = std::min(lo, E.row(id)[k]);
        hi = std::max(hi, E.row(id)[k]);
      });
      EXPECT_GE(m[k], lo - 1e-12);
      EXPECT_LE(m[k], hi + 1e-12);
    }
  }
}

TEST(Mix, OutOfRangeIdIsDataError) {
  EmbeddingMatrix E(4, 2);
  EXPECT_THROW(mix_embedding(Position{TokenId{4}}, E), DataError);
  EXPECT_THROW(mix_embedding(SoftWord{Distribution::point_mass(9), 0}, E), DataError);
}

TEST(Forward, ZeroClassifierGivesLogClasses) {
  Rng rng(5);
  for (std::size_t c : {2u, 3u, 7u}) {
    ToyModel m = ToyModel::init(12, 4, c, rng);
    SoftSentence s = {TokenId{4}, TokenId{5}};
    EXPECT_NEAR(loss(m, s, 1), std::log(static_cast<double>(c)), 1e-12);
  }
}

TEST(Forward, ProbabilitiesSumToOne) {
  Rng rng(6);
  ToyModel m = random_model(25, 6, 5, rng);
  for (int i = 0; i < 200; ++i) {
    auto ex = random_example(25, 5, 8, 0.5, 6, rng);
    auto p = forward(m, ex.input);
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-12);
  }
}

TEST(Forward, EmptySentenceIsUsageError) {
  Rng rng(7);
  ToyModel m = ToyModel::init(5, 2, 2, rng);
  EXPECT_THROW(forward(m, {}), UsageError);
}

TEST(Backward, PointMassMatchesHardTokenExactly) {
  Rng rng(8);
  ToyModel m = random_model(15, 5, 4, rng);
  for (int i = 0; i < 100; ++i) {
    auto ex = random_example(15, 4, 6, 0.0, 1, rng);
    SoftSentence soft;
    for (const auto& p : ex.input) {
      TokenId id = std::get<TokenId>(p);
      soft.emplace_back(SoftWord{Distribution::point_mass(id), id});
    }
    EXPECT_EQ(forward(m, soft), forward(m, ex.input));
    auto a = backward(m, ex.input, ex.label), b = backward(m, soft, ex.label);
    EXPECT_EQ(a.embedding, b.embedding);
    EXPECT_EQ(a.weights, b.weights);
    EXPECT_EQ(a.bias, b.bias);
  }
}

TEST(Backward, UntouchedRowsHaveNoGradient) {
  Rng rng(9);
  ToyModel m = random_model(10, 3, 3, rng);
  SoftSentence s = {TokenId{4}, SoftWord{Distribution::sparse({{5, 0.7}, {6, 0.3}}), 5}};
  auto g = backward(m, s, 2);
  std::vector<TokenId> touched;
  for (const auto& [id, row] : g.embedding) touched.push_back(id);
  EXPECT_EQ(touched, (std::vector<TokenId>{4, 5, 6}));
}

TEST(Backward, SoftRowGradientScalesWithProbability) {
  Rng rng(10);
  ToyModel m = random_model(10, 3, 3, rng);
  SoftSentence s = {SoftWord{Distribution::sparse({{5, 0.75}, {6, 0.25}}), 5}};
  auto g = backward(m, s, 1);
  for (std::size_t k = 0; k < 3; ++k)
    EXPECT_NEAR(g.embedding.at(5)[k], 3.0 * g.embedding.at(6)[k], 1e-14);
}

TEST(GradCheck, AnalyticMatchesFiniteDifferences) {
  Rng rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    ToyModel m = random_model(50, 8, 3, rng);
    std::vector<Example> batch;
    for (int i = 0; i < 10; ++i) batch.push_back(random_example(50, 3, 6, 0.5, 10, rng));
    auto r = grad_check(m, batch);
    EXPECT_TRUE(r.pass) << r.max_rel();
    EXPECT_LT(r.max_rel(), GradCheckReport::kTolerance);
  }
}

TEST(GradCheck, HonorsCustomStep) {
  Rng rng(12);
  ToyModel m = random_model(20, 4, 3, rng);
  std::vector<Example> batch{random_example(20, 3, 4, 1.0, 5, rng)};
  auto r = grad_check(m, batch, 1e-6);
  EXPECT_TRUE(r.pass);
  EXPECT_EQ(r.step, 1e-6);
}

std::vector<Example> marker_task(Rng& rng, std::size_t n) {
  // Token 4 + label appears somewhere in each sentence; the rest is noise.
  std::vector<Example> out;
  for (std::size_t i = 0; i < n; ++i) {
    Example ex;
    ex.label = rng.below(3);
    const std::size_t len = 2 + rng.below(4), at = rng.below(len);
    for (std::size_t t = 0; t < len; ++t)
      ex.input.emplace_back(t == at ? static_cast<TokenId>(4 + ex.label)
                                    : static_cast<TokenId>(7 + rng.below(13)));
    out.push_back(std::move(ex));
  }
  return out;
}

TEST(Train, LossDecreases) {
  Rng rng(13);
  auto data = marker_task(rng, 300);
  ToyModel m = ToyModel::init(20, 8, 3, rng);
  auto trace = train_toy(m, data, {0.5, 200, 16}, rng);
  ASSERT_EQ(trace.size(), 200u);
  auto mean = [&](std::size_t a, std::size_t b) {
    return std::accumulate(trace.begin() + a, trace.begin() + b, 0.0) / (b - a);
  };
  EXPECT_LT(mean(180, 200), mean(0, 20));
}

TEST(Train, LearnsMarkerTask) {
  Rng rng(14);
  auto train = marker_task(rng, 500);
  auto test = marker_task(rng, 300);
  ToyModel m = ToyModel::init(20, 8, 3, rng);
  train_toy(m, train, {0.5, 2000, 16}, rng);
  EXPECT_GE(evaluate(m, test), 0.95);
}

TEST(Train, ZeroStepsLeaveModelUnchanged) {
  Rng rng(15);
  auto data = marker_task(rng, 10);
  ToyModel m = ToyModel::init(20, 4, 3, rng);
  ToyModel before = m;
  EXPECT_TRUE(train_toy(m, data, {0.5, 0, 16}, rng).empty());
  EXPECT_EQ(m, before);
}

TEST(Train, DeterministicForSeed) {
  Rng data_rng(16);
  auto data = marker_task(data_rng, 50);
  auto run = [&] {
    Rng rng(99);
    ToyModel m = ToyModel::init(20, 4, 3, rng);
    auto trace = train_toy(m, data, {0.3, 50, 8}, rng);
    return std::make_pair(m, trace);
  };
  EXPECT_EQ(run(), run());
}

TEST(Train, LabelOutOfRangeIsDataError) {
  Rng rng(17);
  ToyModel m = ToyModel::init(20, 4, 3, rng);
  std::vector<Example> data{{{TokenId{4}}, 3}};
  EXPECT_THROW(train_toy(m, data, {}, rng), DataError);
  EXPECT_THROW(evaluate(m, data), DataError);
  EXPECT_THROW(train_toy(m, data, {0.0, 1, 1}, rng), UsageError);
}

TEST(Embedding, FileRoundTripIsExact) {
  Rng rng(18);
  auto E = EmbeddingMatrix::uniform(7, 5, 0.3, rng);
  std::stringstream ss;
  E.save(ss);
  EXPECT_EQ(EmbeddingMatrix::load(ss), E);
  std::stringstream bad("2 2\n1 2 3\n");
  EXPECT_THROW(EmbeddingMatrix::load(bad), DataError);
  std::stringstream nan("1 1\nnan\n");
  EXPECT_THROW(EmbeddingMatrix::load(nan), DataError);
}

TEST(LossTrace, WritesCsv) {
  std::ostringstream out;
  std::vector<double> t = {1.5, 0.25};
  write_loss_trace(out, t);
  EXPECT_EQ(out.str(), "step,loss\n0,1.5\n1,0.25\n");
}

}  // namespace
}  // namespace softaug
