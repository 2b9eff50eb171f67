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
#include <set>
#include <sstream>

#include "softaug/augment.hpp"

namespace softaug {
namespace {

Sentence random_sentence(Rng& rng, std::size_t max_len, std::size_t vocab) {
  Sentence s(1 + rng.below(max_len));
  for (auto& t : s) t = static_cast<TokenId>(kNumSpecials + rng.below(vocab - kNumSpecials));
  return s;
}

struct Fixture {
  Vocabulary vocab;
  std::vector<Sentence> corpus;
  NGramLM lm;
};

Fixture make_fixture(std::uint64_t seed, std::size_t words = 12, std::size_t n = 60) {
  Rng rng(seed);
  std::string text;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t len = 2 + rng.below(10);
    for (std::size_t j = 0; j < len; ++j)
      text += (j ? " w" : "w") + std::to_string(rng.below(words));
    text += '\n';
  }
  Vocabulary vocab = build_vocab(text);
  std::vector<Sentence> corpus;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) corpus.push_back(encode(line, vocab));
  NGramLM lm = train_lm(vocab, corpus, {3, 0.75, 0.1});
  return {std::move(vocab), std::move(corpus), std::move(lm)};
}

TEST(Strategy, NamesRoundTrip) {
  for (Strategy s : kAllStrategies) EXPECT_EQ(parse_strategy(strategy_name(s)), s);
  EXPECT_THROW(parse_strategy("shuffle"), UsageError);
}

TEST(Swap, NoTokenMovesBeyondWindow) {
  Rng rng(1);
  for (int n = 0; n < 10000; ++n) {
    Sentence s(1 + rng.below(20));
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = static_cast<TokenId>(kNumSpecials + i);
    const int k = 1 + static_cast<int>(rng.below(4));
    Sentence out = augment_swap(s, k, rng);
    ASSERT_EQ(out.size(), s.size());
    for (std::size_t j = 0; j < out.size(); ++j) {
      auto orig = static_cast<long>(out[j] - kNumSpecials);
      ASSERT_LE(std::labs(orig - static_cast<long>(j)), k);
    }
    Sentence sorted = out;
    std::sort(sorted.begin(), sorted.end());
    ASSERT_EQ(sorted, s);
  }
}

TEST(Swap, GammaZeroIsIdentity) {
  Rng rng(2);
  for (int n = 0; n < 500; ++n) {
    Sentence s = random_sentence(rng, 15, 40);
    EXPECT_EQ(augment_swap(s, 3, rng, 0.0), s);
  }
}

TEST(Dropout, GammaZeroIsIdentity) {
  Rng rng(3);
  for (int n = 0; n < 500; ++n) {
    Sentence s = random_sentence(rng, 15, 40);
    EXPECT_EQ(augment_dropout(s, 0.0, rng), s);
  }
}

TEST(Dropout, FullDropKeepsUniformSurvivor) {
  const Sentence s = {10, 11, 12, 13, 14};
  std::vector<double> hits(5, 0.0);
  Rng rng(4);
  const int n = 50000;
  for (int i = 0; i < n; ++i) {
    Sentence out = augment_dropout(s, 1.0, rng);
    ASSERT_EQ(out.size(), 1u);
    hits[out[0] - 10] += 1.0;
  }
  double chi2 = 0.0;
  const double expect = n / 5.0;
  for (double h : hits) chi2 += (h - expect) * (h - expect) / expect;
  EXPECT_LT(chi2, 18.467);  // p = 0.001, 4 degrees of freedom
}

TEST(Dropout, KeepsOrderOfSurvivors) {
  Rng rng(5);
  Sentence s(30);
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = static_cast<TokenId>(kNumSpecials + i);
  for (int n = 0; n < 200; ++n) {
    Sentence out = augment_dropout(s, 0.5, rng);
    EXPECT_TRUE(std::is_sorted(out.begin(), out.end()));
  }
}

TEST(Blank, ReplacesOnlyWithBlank) {
  Rng rng(6);
  AugmentStats stats;
  for (int n = 0; n < 2000; ++n) {
    Sentence s = random_sentence(rng, 20, 50);
    Sentence out = augment_blank(s, 0.15, rng, &stats);
    ASSERT_EQ(out.size(), s.size());
    for (std::size_t i = 0; i < s.size(); ++i) EXPECT_TRUE(out[i] == s[i] || out[i] == kBlank);
  }
  EXPECT_GE(stats.rate(), 0.14);
  EXPECT_LE(stats.rate(), 0.16);
}

TEST(Rates, EveryStrategyNearGamma) {
  Fixture f = make_fixture(7, 20, 400);
  Distribution uni = unigram_distribution(f.vocab);
  AugmentResources res{&f.lm, &uni};
  std::vector<Sentence> big;
  for (int r = 0; r < 10; ++r) big.insert(big.end(), f.corpus.begin(), f.corpus.end());
  for (Strategy s : kAllStrategies) {
    if (s == Strategy::kBase) continue;
    AugmentStats stats;
    augment_corpus(big, {s, 0.15, 3, 32, 99}, res, 1, 0, &stats);
    EXPECT_GE(stats.rate(), 0.14) << strategy_name(s);
    EXPECT_LE(stats.rate(), 0.16) << strategy_name(s);
  }
}

TEST(Selection, SpecialsAreNeverSelected) {
  Fixture f = make_fixture(8);
  Rng rng(8);
  Sentence s = {kUnk, kBlank, 4, kUnk, 5};
  for (int n = 0; n < 1000; ++n) {
    AugmentStats st;
    Sentence b = augment_blank(s, 1.0, rng, &st);
    EXPECT_EQ(b[0], kUnk);
    EXPECT_EQ(b[3], kUnk);
    EXPECT_EQ(st.eligible, 2u);
    SoftSentence soft = augment_soft(s, 1.0, f.lm, 4, rng);
    EXPECT_EQ(std::get<TokenId>(soft[0]), kUnk);
    EXPECT_EQ(std::get<TokenId>(soft[1]), kBlank);
    EXPECT_TRUE(std::holds_alternative<SoftWord>(soft[2]));
  }
}

TEST(Selection, PositionsAreIndependent) {
  Rng rng(9);
  const Sentence s = {4, 5, 6, 7, 8, 9};
  const int n = 100000;
  std::vector<double> m(s.size(), 0.0);
  std::vector<std::vector<double>> joint(s.size(), std::vector<double>(s.size(), 0.0));
  for (int i = 0; i < n; ++i) {
    Sentence out = augment_blank(s, 0.3, rng);
    for (std::size_t a = 0; a < s.size(); ++a) {
      double xa = out[a] == kBlank;
      m[a] += xa / n;
      for (std::size_t b = a + 1; b < s.size(); ++b) joint[a][b] += xa * (out[b] == kBlank) / n;
    }
  }
  for (std::size_t a = 0; a < s.size(); ++a) {
    EXPECT_NEAR(m[a], 0.3, 0.01);
    for (std::size_t b = a + 1; b < s.size(); ++b)
      EXPECT_NEAR(joint[a][b] - m[a] * m[b], 0.0, 0.005);
  }
}

TEST(Smooth, ReplacementsFollowUnigram) {
  Vocabulary v = build_vocab("a a a a a a b b b c");
  Distribution uni = unigram_distribution(v);
  CategoricalSampler sampler(uni);
  Rng rng(10);
  const Sentence s = {kUnk};
  std::vector<double> freq(v.size(), 0.0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) freq[sampler(rng)] += 1.0 / n;
  EXPECT_NEAR(freq[v.lookup("a")], 0.6, 0.01);
  EXPECT_NEAR(freq[v.lookup("b")], 0.3, 0.01);
  EXPECT_NEAR(freq[v.lookup("c")], 0.1, 0.01);
  for (TokenId t = 0; t < kNumSpecials; ++t) EXPECT_EQ(freq[t], 0.0);
  EXPECT_EQ(augment_smooth(s, 1.0, sampler, rng), s);
}

TEST(LmSample, ReplacementsFollowOriginalPrefix) {
  Fixture f = make_fixture(11);
  const Sentence& s = f.corpus[0];
  const std::size_t pos = s.size() - 1;
  auto d = f.lm.next_dist(std::span(s).first(pos));
  std::vector<double> freq(f.vocab.size(), 0.0);
  Rng rng(12);
  const int n = 100000;
  double allowed = 0.0;
  for (TokenId w = 0; w < f.vocab.size(); ++w)
    if (!NGramLM::never_sampled(w)) allowed += d.prob(w);
  for (int i = 0; i < n; ++i) {
    Sentence out = augment_lm_sample(s, 1.0, f.lm, rng);
    freq[out[pos]] += 1.0 / n;
  }
  for (TokenId w = 0; w < f.vocab.size(); ++w) {
    double expect = NGramLM::never_sampled(w) ? 0.0 : d.prob(w) / allowed;
    EXPECT_NEAR(freq[w], expect, 0.01);
  }
}

TEST(Soft, TopOneIsArgmax) {
  Fixture f = make_fixture(13);
  Rng rng(13);
  for (const auto& s : f.corpus) {
    SoftSentence out = augment_soft(s, 1.0, f.lm, 1, rng);
    for (std::size_t t = 0; t < s.size(); ++t) {
      const auto& sw = std::get<SoftWord>(out[t]);
      auto ranked = f.lm.next_dist(std::span(s).first(t)).ranked();
      ASSERT_EQ(sw.dist.stored(), 1u);
      EXPECT_EQ(sw.dist.sparse_entries()[0].id, ranked[0].id);
      EXPECT_EQ(sw.dist.sparse_entries()[0].p, 1.0);
      EXPECT_EQ(sw.original_id, s[t]);
    }
  }
}

TEST(Soft, TopZeroKeepsFullDistribution) {
  Fixture f = make_fixture(14);
  Rng rng(14);
  for (const auto& s : f.corpus) {
    SoftSentence out = augment_soft(s, 1.0, f.lm, 0, rng);
    for (std::size_t t = 0; t < s.size(); ++t)
      EXPECT_EQ(std::get<SoftWord>(out[t]).dist, f.lm.next_dist(std::span(s).first(t)));
  }
}

TEST(Soft, SoftWordsAreDistributions) {
  Fixture f = make_fixture(15);
  Rng rng(15);
  for (std::size_t k : {1u, 3u, 8u, 32u, 0u}) {
    for (const auto& s : f.corpus) {
      for (const auto& p : augment_soft(s, 0.5, f.lm, k, rng)) {
        if (const auto* sw = std::get_if<SoftWord>(&p)) {
          EXPECT_NEAR(sw->dist.total(), 1.0, 1e-12);
          if (k) {
            EXPECT_LE(sw->dist.stored(), k);
          }
          sw->dist.for_each([](TokenId, double q) { EXPECT_GE(q, 0.0); });
        }
      }
    }
  }
}

TEST(Corpus, GammaZeroLeavesCorpusUnchanged) {
  Fixture f = make_fixture(16);
  Distribution uni = unigram_distribution(f.vocab);
  AugmentResources res{&f.lm, &uni};
  for (Strategy s : kAllStrategies) {
    auto out = augment_corpus(f.corpus, {s, 0.0, 3, 32, 5}, res);
    if (s == Strategy::kSoft) {
      const auto& soft = std::get<std::vector<SoftSentence>>(out);
      for (std::size_t i = 0; i < soft.size(); ++i) EXPECT_EQ(soft[i], to_soft(f.corpus[i]));
    } else {
      EXPECT_EQ(std::get<std::vector<Sentence>>(out), f.corpus) << strategy_name(s);
    }
  }
}

TEST(Corpus, OutputIndependentOfThreadCount) {
  Fixture f = make_fixture(17, 15, 300);
  Distribution uni = unigram_distribution(f.vocab);
  AugmentResources res{&f.lm, &uni};
  for (Strategy s : kAllStrategies) {
    AugmentConfig c{s, 0.2, 3, 8, 123};
    AugmentStats a, b;
    auto one = augment_corpus(f.corpus, c, res, 1, 0, &a);
    auto eight = augment_corpus(f.corpus, c, res, 8, 0, &b);
    EXPECT_EQ(one, eight) << strategy_name(s);
    EXPECT_EQ(a.selected, b.selected);
  }
}

TEST(Corpus, ChunkedRunMatchesWholeRun) {
  Fixture f = make_fixture(18);
  AugmentResources res{&f.lm, nullptr};
  AugmentConfig c{Strategy::kLmSample, 0.3, 3, 32, 77};
  auto whole = std::get<std::vector<Sentence>>(augment_corpus(f.corpus, c, res));
  const std::size_t cut = f.corpus.size() / 3;
  auto head = std::get<std::vector<Sentence>>(
      augment_corpus(std::span(f.corpus).first(cut), c, res, 1, 0));
  auto tail = std::get<std::vector<Sentence>>(
      augment_corpus(std::span(f.corpus).subspan(cut), c, res, 1, cut));
  head.insert(head.end(), tail.begin(), tail.end());
  EXPECT_EQ(head, whole);
}

TEST(Corpus, DifferentSeedsDiffer) {
  Fixture f = make_fixture(19);
  AugmentResources res{&f.lm, nullptr};
  auto a = augment_corpus(f.corpus, {Strategy::kBlank, 0.3, 3, 32, 1}, res);
  auto b = augment_corpus(f.corpus, {Strategy::kBlank, 0.3, 3, 32, 2}, res);
  EXPECT_NE(a, b);
}

TEST(Corpus, MissingResourcesAreUsageErrors) {
  Fixture f = make_fixture(20);
  AugmentResources none;
  EXPECT_THROW(augment_corpus(f.corpus, {Strategy::kSoft, 0.1, 3, 32, 0}, none), UsageError);
  EXPECT_THROW(augment_corpus(f.corpus, {Strategy::kLmSample, 0.1, 3, 32, 0}, none),
               UsageError);
  EXPECT_THROW(augment_corpus(f.corpus, {Strategy::kSmooth, 0.1, 3, 32, 0}, none), UsageError);
  EXPECT_THROW(augment_corpus(f.corpus, {Strategy::kBlank, 1.5, 3, 32, 0}, none), UsageError);
  EXPECT_THROW(augment_corpus(f.corpus, {Strategy::kSwap, 0.1, 0, 32, 0}, none), UsageError);
}

TEST(Jsonl, RoundTrip) {
  Fixture f = make_fixture(21);
  Rng rng(21);
  for (const auto& s : f.corpus) {
    SoftSentence soft = augment_soft(s, 0.4, f.lm, 5, rng);
    SoftSentence back = soft_from_jsonl(soft_to_jsonl(soft));
    ASSERT_EQ(back.size(), soft.size());
    for (std::size_t i = 0; i < soft.size(); ++i) {
      if (const auto* sw = std::get_if<SoftWord>(&soft[i])) {
        const auto& bw = std::get<SoftWord>(back[i]);
        EXPECT_EQ(bw.original_id, sw->original_id);
        ASSERT_EQ(bw.dist.stored(), sw->dist.stored());
        sw->dist.for_each([&](TokenId id, double p) { EXPECT_NEAR(bw.dist.prob(id), p, 1e-11); });
      } else {
        EXPECT_EQ(back[i], soft[i]);
      }
    }
  }
}

TEST(Jsonl, RejectsMalformedLines) {
  EXPECT_THROW(soft_from_jsonl("{"), DataError);
  EXPECT_THROW(soft_from_jsonl("{\"toks\":[4]}"), DataError);
  EXPECT_THROW(soft_from_jsonl("{\"toks\":[4],\"soft\":{\"3\":{\"orig\":4,\"p\":[[4,1]]}}}"),
               DataError);
  EXPECT_THROW(soft_from_jsonl("{\"toks\":[4],\"soft\":{\"x\":{\"orig\":4,\"p\":[[4,1]]}}}"),
               DataError);
}

}  // namespace
}  // namespace softaug
