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

// Token-level augmentation strategies. Each strategy visits every position
// once, drawing an independent Bernoulli(gamma) selection event from the
// sentence's own random stream; special tokens are never selected.

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"
#include "softaug/common.hpp"
#include "softaug/corpus.hpp"
#include "softaug/lm.hpp"
#include "softaug/parallel.hpp"
#include "softaug/rng.hpp"

namespace softaug {

enum class Strategy { kBase, kSwap, kDropout, kBlank, kSmooth, kLmSample, kSoft };

inline constexpr std::array<Strategy, 7> kAllStrategies = {
    Strategy::kBase,  Strategy::kSwap,     Strategy::kDropout, Strategy::kBlank,
    Strategy::kSmooth, Strategy::kLmSample, Strategy::kSoft};

// Replacement probabilities swept when comparing strategies.
inline constexpr std::array<double, 5> kGammaGrid = {0.0, 0.05, 0.1, 0.15, 0.2};

inline std::string_view strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kBase: return "base";
    case Strategy::kSwap: return "swap";
    case Strategy::kDropout: return "dropout";
    case Strategy::kBlank: return "blank";
    case Strategy::kSmooth: return "smooth";
    case Strategy::kLmSample: return "lm_sample";
    case Strategy::kSoft: return "soft";
  }
  return "?";
}

inline Strategy parse_strategy(std::string_view name) {
  for (auto s : kAllStrategies)
    if (strategy_name(s) == name) return s;
  throw UsageError("unknown strategy '" + std::string(name) + "'");
}

inline bool needs_lm(Strategy s) {
  return s == Strategy::kLmSample || s == Strategy::kSoft;
}

struct AugmentConfig {
  Strategy strategy = Strategy::kBase;
  double gamma = 0.0;
  int window_k = 3;       // swap only
  std::size_t topk = 32;  // soft only; 0 keeps the dense distribution
  std::uint64_t seed = 0;

  void validate() const {
    require(gamma >= 0.0 && gamma <= 1.0, "gamma must lie in [0, 1]");
    require(window_k >= 1, "window must be at least 1");
  }
};

struct SoftWord {
  Distribution dist;
  TokenId original_id = 0;
  bool operator==(const SoftWord&) const = default;
};

// A position of an augmented sentence: a hard token id or a soft word.
using Position = std::variant<TokenId, SoftWord>;
using SoftSentence = std::vector<Position>;

inline SoftSentence to_soft(const Sentence& s) {
  return SoftSentence(s.begin(), s.end());
}

// Selection counts. `eligible` excludes special tokens; for dropout,
// `selected` counts removed tokens.
struct AugmentStats {
  std::size_t eligible = 0;
  std::size_t selected = 0;

  double rate() const {
    return eligible == 0 ? 0.0
                         : static_cast<double>(selected) /
                               static_cast<double>(eligible);
  }
  AugmentStats& operator+=(const AugmentStats& o) {
    eligible += o.eligible;
    selected += o.selected;
    return *this;
  }
};

namespace detail {

// Draws the selection event of one position. The draw is consumed for every
// position, eligible or not, so streams stay aligned across strategies.
inline bool select(TokenId tok, double gamma, Rng& rng, AugmentStats* stats) {
  const bool hit = rng.bernoulli(gamma);
  if (is_special(tok)) return false;
  if (stats) {
    ++stats->eligible;
    if (hit) ++stats->selected;
  }
  return hit;
}

}  // namespace detail

// Local shuffle: each selected position i gets sort key i + u * (k + 1) with
// u ~ U[0, 1); unselected positions keep key i. A stable sort by key moves no
// token further than k positions. gamma = 1 noises every position.
inline Sentence augment_swap(const Sentence& s, int k, Rng& rng,
                             double gamma = 1.0, AugmentStats* stats = nullptr) {
  require(k >= 1, "window must be at least 1");
  std::vector<std::pair<double, std::size_t>> keys(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    const bool sel = detail::select(s[i], gamma, rng, stats);
    const double u = rng.uniform();
    keys[i] = {static_cast<double>(i) + (sel ? u * (k + 1) : 0.0), i};
  }
  std::stable_sort(keys.begin(), keys.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  Sentence out(s.size());
  for (std::size_t j = 0; j < s.size(); ++j) out[j] = s[keys[j].second];
  return out;
}

// Removes each token with probability gamma. When every token would go, one
// position chosen uniformly survives.
inline Sentence augment_dropout(const Sentence& s, double gamma, Rng& rng,
                                AugmentStats* stats = nullptr) {
  Sentence out;
  out.reserve(s.size());
  AugmentStats local;
  for (TokenId t : s)
    if (!detail::select(t, gamma, rng, &local)) out.push_back(t);
  if (out.empty() && !s.empty()) {
    out.push_back(s[rng.below(s.size())]);
    if (!is_special(out[0])) --local.selected;
  }
  if (stats) *stats += local;
  return out;
}

inline Sentence augment_blank(const Sentence& s, double gamma, Rng& rng,
                              AugmentStats* stats = nullptr) {
  Sentence out(s);
  for (auto& t : out)
    if (detail::select(t, gamma, rng, stats)) t = kBlank;
  return out;
}

// Inverse-CDF sampler over a fixed distribution.
class CategoricalSampler {
 public:
  explicit CategoricalSampler(const Distribution& d) {
    double acc = 0.0;
    d.for_each([&](TokenId id, double p) {
      if (p <= 0.0) return;
      acc += p;
      ids_.push_back(id);
      cdf_.push_back(acc);
    });
    if (ids_.empty()) throw UsageError("sampler: distribution has no mass");
    total_ = acc;
  }

  TokenId operator()(Rng& rng) const {
    const double u = rng.uniform() * total_;
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    if (it == cdf_.end()) --it;
    return ids_[static_cast<std::size_t>(it - cdf_.begin())];
  }

 private:
  std::vector<TokenId> ids_;
  std::vector<double> cdf_;
  double total_ = 0.0;
};

// Unigram frequency distribution over the non-special vocabulary entries.
inline Distribution unigram_distribution(const Vocabulary& vocab) {
  std::vector<double> p(vocab.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = kNumSpecials; i < vocab.size(); ++i) {
    p[i] = static_cast<double>(vocab.entries()[i].count);
    total += p[i];
  }
  if (total <= 0.0) throw UsageError("unigram distribution: no counted tokens");
  for (auto& x : p) x /= total;
  return Distribution::dense(std::move(p));
}

inline Sentence augment_smooth(const Sentence& s, double gamma,
                               const CategoricalSampler& unigram, Rng& rng,
                               AugmentStats* stats = nullptr) {
  Sentence out(s);
  for (auto& t : out)
    if (detail::select(t, gamma, rng, stats)) t = unigram(rng);
  return out;
}

// Selected positions are resampled from the LM. Prefixes always come from the
// original sentence, never from earlier replacements.
inline Sentence augment_lm_sample(const Sentence& s, double gamma,
                                  const NGramLM& lm, Rng& rng,
                                  AugmentStats* stats = nullptr) {
  Sentence out(s);
  for (std::size_t t = 0; t < s.size(); ++t) {
    if (detail::select(s[t], gamma, rng, stats))
      out[t] = lm.sample(std::span(s).first(t), rng);
  }
  return out;
}

// Selected positions become soft words: the LM's next-token distribution
// given the original prefix, kept to its topk entries and renormalized
// (topk == 0 keeps it dense).
inline SoftSentence augment_soft(const Sentence& s, double gamma,
                                 const NGramLM& lm, std::size_t topk, Rng& rng,
                                 AugmentStats* stats = nullptr) {
  SoftSentence out;
  out.reserve(s.size());
  for (std::size_t t = 0; t < s.size(); ++t) {
    if (detail::select(s[t], gamma, rng, stats)) {
      out.emplace_back(
          SoftWord{lm.next_dist(std::span(s).first(t)).top_k(topk), s[t]});
    } else {
      out.emplace_back(s[t]);
    }
  }
  return out;
}

// Model state a strategy may need.
struct AugmentResources {
  const NGramLM* lm = nullptr;
  const Distribution* unigram = nullptr;
};

using AugmentedCorpus = std::variant<std::vector<Sentence>, std::vector<SoftSentence>>;

// Applies one strategy to every sentence. Sentence i draws from the stream
// derive_seed(seed, first_index + i), so output does not depend on `threads`
// or on how a corpus is split into chunks.
inline AugmentedCorpus augment_corpus(std::span<const Sentence> corpus,
                                      const AugmentConfig& config,
                                      const AugmentResources& res,
                                      std::size_t threads = 1,
                                      std::uint64_t first_index = 0,
                                      AugmentStats* stats = nullptr) {
  config.validate();
  if (needs_lm(config.strategy) && res.lm == nullptr)
    throw UsageError(std::string("strategy '") +
                     std::string(strategy_name(config.strategy)) +
                     "' requires a language model");
  std::optional<CategoricalSampler> sampler;
  if (config.strategy == Strategy::kSmooth) {
    if (res.unigram == nullptr)
      throw UsageError("strategy 'smooth' requires a unigram distribution");
    sampler.emplace(*res.unigram);
  }

  std::vector<AugmentStats> per(corpus.size());
  auto rng_for = [&](std::size_t i) {
    return Rng(derive_seed(config.seed, first_index + i));
  };

  if (config.strategy == Strategy::kSoft) {
    std::vector<SoftSentence> out(corpus.size());
    parallel_for(corpus.size(), threads, [&](std::size_t i) {
      Rng rng = rng_for(i);
      out[i] = augment_soft(corpus[i], config.gamma, *res.lm, config.topk, rng,
                            &per[i]);
    });
    if (stats)
      for (const auto& p : per) *stats += p;
    return out;
  }

  std::vector<Sentence> out(corpus.size());
  parallel_for(corpus.size(), threads, [&](std::size_t i) {
    Rng rng = rng_for(i);
    const Sentence& s = corpus[i];
    switch (config.strategy) {
      case Strategy::kBase:
        out[i] = s;
        for (TokenId t : s)
          if (!is_special(t)) ++per[i].eligible;
        break;
      case Strategy::kSwap:
        out[i] = augment_swap(s, config.window_k, rng, config.gamma, &per[i]);
        break;
      case Strategy::kDropout:
        out[i] = augment_dropout(s, config.gamma, rng, &per[i]);
        break;
      case Strategy::kBlank:
        out[i] = augment_blank(s, config.gamma, rng, &per[i]);
        break;
      case Strategy::kSmooth:
        out[i] = augment_smooth(s, config.gamma, *sampler, rng, &per[i]);
        break;
      case Strategy::kLmSample:
        out[i] = augment_lm_sample(s, config.gamma, *res.lm, rng, &per[i]);
        break;
      case Strategy::kSoft:
        break;
    }
  });
  if (stats)
    for (const auto& p : per) *stats += p;
  return out;
}

// ---------------------------------------------------------------------------
// Soft corpus JSON Lines:
//   {"toks":[id,...],"soft":{"<pos>":{"orig":id,"p":[[id,prob],...]}}}
// "toks" holds the original id at soft positions; probabilities carry 12
// significant digits.

inline std::string soft_to_jsonl(const SoftSentence& s) {
  std::string out = "{\"toks\":[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ',';
    const auto* hard = std::get_if<TokenId>(&s[i]);
    out += std::to_string(hard ? *hard : std::get<SoftWord>(s[i]).original_id);
  }
  out += "],\"soft\":{";
  bool first = true;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto* sw = std::get_if<SoftWord>(&s[i]);
    if (!sw) continue;
    if (!first) out += ',';
    first = false;
    out += "\"" + std::to_string(i) + "\":{\"orig\":" +
           std::to_string(sw->original_id) + ",\"p\":[";
    bool first_entry = true;
    sw->dist.for_each([&](TokenId id, double p) {
      if (!first_entry) out += ',';
      first_entry = false;
      out += '[' + std::to_string(id) + ',' + strprintf("%.12g", p) + ']';
    });
    out += "]}";
  }
  out += "}}";
  return out;
}

inline SoftSentence soft_from_jsonl(std::string_view line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("soft corpus: ") + e.what());
  }
  try {
    SoftSentence out;
    for (const auto& t : j.at("toks")) out.emplace_back(t.get<TokenId>());
    for (const auto& [key, val] : j.at("soft").items()) {
      std::size_t pos = 0;
      try {
        pos = std::stoull(key);
      } catch (const std::exception&) {
        throw DataError("soft corpus: bad position key '" + key + "'");
      }
      if (pos >= out.size()) throw DataError("soft corpus: position out of range");
      SoftWord sw;
      sw.original_id = val.at("orig").get<TokenId>();
      std::vector<Distribution::Entry> entries;
      for (const auto& e : val.at("p"))
        entries.push_back({e.at(0).get<TokenId>(), e.at(1).get<double>()});
      sw.dist = Distribution::sparse(std::move(entries));
      out[pos] = std::move(sw);
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("soft corpus: ") + e.what());
  }
}

}  // namespace softaug
