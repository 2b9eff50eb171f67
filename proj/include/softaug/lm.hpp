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

// Next-token language model: interpolated absolute discounting over n-gram
// counts, grounded in an additively smoothed unigram so every vocabulary
// entry has non-zero probability.
//
//   P(w | h) = max(c(h,w) - D, 0) / c(h) + D * N1+(h) / c(h) * P(w | h')
//   P0(w)    = (c(w) + alpha) / (C + alpha * |V|)
//
// where h' drops the oldest token of h. Histories never seen fall through to
// the next shorter one.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include "softaug/common.hpp"
#include "softaug/corpus.hpp"
#include "softaug/rng.hpp"

namespace softaug {

// Probability vector over a vocabulary. Dense form stores all |V| entries;
// sparse form stores (id, p) pairs ranked by probability descending, then id
// ascending.
class Distribution {
 public:
  struct Entry {
    TokenId id;
    double p;
    bool operator==(const Entry&) const = default;
  };

  Distribution() = default;

  static Distribution dense(std::vector<double> probs) {
    Distribution d;
    d.data_ = std::move(probs);
    return d;
  }

  // Entries are re-ranked; ids must be unique.
  static Distribution sparse(std::vector<Entry> entries) {
    std::sort(entries.begin(), entries.end(), ranks_before);
    std::vector<TokenId> ids;
    ids.reserve(entries.size());
    for (const auto& e : entries) ids.push_back(e.id);
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
      throw UsageError("duplicate id in sparse distribution");
    Distribution d;
    d.data_ = std::move(entries);
    return d;
  }

  static Distribution point_mass(TokenId id) { return sparse({{id, 1.0}}); }

  bool is_dense() const {
    return std::holds_alternative<std::vector<double>>(data_);
  }
  const std::vector<double>& dense_probs() const {
    return std::get<std::vector<double>>(data_);
  }
  const std::vector<Entry>& sparse_entries() const {
    return std::get<std::vector<Entry>>(data_);
  }

  // Number of stored entries.
  std::size_t stored() const {
    return is_dense() ? dense_probs().size() : sparse_entries().size();
  }

  double prob(TokenId id) const {
    if (is_dense()) {
      const auto& v = dense_probs();
      return id < v.size() ? v[id] : 0.0;
    }
    for (const auto& e : sparse_entries())
      if (e.id == id) return e.p;
    return 0.0;
  }

  // Calls fn(id, p) for every stored entry, in id order for dense and rank
  // order for sparse.
  template <typename Fn>
  void for_each(Fn&& fn) const {
    if (is_dense()) {
      const auto& v = dense_probs();
      for (std::size_t i = 0; i < v.size(); ++i)
        fn(static_cast<TokenId>(i), v[i]);
    } else {
      for (const auto& e : sparse_entries()) fn(e.id, e.p);
    }
  }

  double total() const {
    double s = 0.0;
    for_each([&](TokenId, double p) { s += p; });
    return s;
  }

  // Largest id referenced plus one (0 when empty).
  std::size_t id_bound() const {
    if (is_dense()) return dense_probs().size();
    std::size_t b = 0;
    for (const auto& e : sparse_entries())
      b = std::max<std::size_t>(b, std::size_t{e.id} + 1);
    return b;
  }

  // All stored entries in rank order.
  std::vector<Entry> ranked() const {
    std::vector<Entry> out;
    out.reserve(stored());
    for_each([&](TokenId id, double p) { out.push_back({id, p}); });
    std::sort(out.begin(), out.end(), ranks_before);
    return out;
  }

  // The k most probable entries, renormalized. k == 0 keeps the distribution
  // as it is.
  Distribution top_k(std::size_t k) const {
    if (k == 0) return *this;
    auto entries = ranked();
    if (entries.size() > k) entries.resize(k);
    double s = 0.0;
    for (const auto& e : entries) s += e.p;
    if (s > 0)
      for (auto& e : entries) e.p /= s;
    Distribution d;
    d.data_ = std::move(entries);
    return d;
  }

  bool operator==(const Distribution&) const = default;

  static bool ranks_before(const Entry& a, const Entry& b) {
    if (a.p != b.p) return a.p > b.p;
    return a.id < b.id;
  }

 private:
  std::variant<std::vector<Entry>, std::vector<double>> data_;
};

struct LmOptions {
  int order = 3;
  double discount = 0.75;
  double alpha = 0.1;
};

namespace detail {
struct IdSeqHash {
  std::size_t operator()(const std::vector<TokenId>& v) const noexcept {
    std::uint64_t h = 0x84222325CBF29CE4ULL ^ v.size();
    for (TokenId t : v) h = splitmix64_mix(h ^ t);
    return static_cast<std::size_t>(h);
  }
};
}  // namespace detail

// Preceding-token context of a prediction. Only the last order-1 tokens are
// read; shorter contexts are padded on the left with BOS.
using Prefix = std::span<const TokenId>;

class NGramLM {
 public:
  struct Successor {
    TokenId token;
    std::uint64_t count;
  };
  struct HistoryStats {
    std::uint64_t total = 0;
    std::vector<Successor> successors;  // sorted by token
  };
  // Full-order events: (order-1 history tokens..., predicted token) -> count.
  using EventCounts = std::map<std::vector<TokenId>, std::uint64_t>;

  // Counts BOS-padded, EOS-terminated events over `corpus`. BOS, UNK and
  // BLANK are never counted as predicted tokens, so they keep only the
  // unigram floor.
  static NGramLM train(const Vocabulary& vocab, std::span<const Sentence> corpus,
                       LmOptions opt = {}) {
    if (corpus.empty()) throw UsageError("train_lm: empty corpus");
    validate(opt);
    const auto n = static_cast<std::size_t>(opt.order);
    EventCounts events;
    std::vector<TokenId> framed;
    for (const auto& s : corpus) {
      framed.assign(n - 1, kBos);
      for (TokenId t : s) {
        if (t >= vocab.size()) throw DataError("train_lm: id out of range");
        framed.push_back(t);
      }
      framed.push_back(kEos);
      for (std::size_t i = n - 1; i < framed.size(); ++i) {
        TokenId w = framed[i];
        if (w == kBos || w == kUnk || w == kBlank) continue;
        std::vector<TokenId> key(framed.begin() + static_cast<long>(i + 1 - n),
                                 framed.begin() + static_cast<long>(i + 1));
        ++events[std::move(key)];
      }
    }
    return from_events(vocab, opt, events);
  }

  static NGramLM from_events(Vocabulary vocab, LmOptions opt,
                             const EventCounts& events) {
    validate(opt);
    NGramLM lm;
    lm.vocab_ = std::move(vocab);
    lm.opt_ = opt;
    lm.events_ = events;
    lm.build();
    return lm;
  }

  int order() const { return opt_.order; }
  const LmOptions& options() const { return opt_; }
  const Vocabulary& vocab() const { return vocab_; }
  std::size_t vocab_size() const { return vocab_.size(); }
  const EventCounts& events() const { return events_; }

  // Raw count of `w` after the exact history `h` (|h| < order).
  std::uint64_t count(std::span<const TokenId> h, TokenId w) const {
    if (h.empty()) return w < unigram_.size() ? unigram_[w] : 0;
    const auto* st = stats(h);
    if (!st) return 0;
    auto it = std::lower_bound(
        st->successors.begin(), st->successors.end(), w,
        [](const Successor& s, TokenId t) { return s.token < t; });
    return it != st->successors.end() && it->token == w ? it->count : 0;
  }

  // c(h): total count of events whose history ends with `h`.
  std::uint64_t history_count(std::span<const TokenId> h) const {
    if (h.empty()) return unigram_total_;
    const auto* st = stats(h);
    return st ? st->total : 0;
  }

  double base_prob(TokenId w) const {
    return (static_cast<double>(unigram_[w]) + opt_.alpha) / base_denominator_;
  }

  // Dense next-token distribution after `prefix`.
  Distribution next_dist(Prefix prefix) const {
    std::vector<double> p(vocab_.size());
    for (std::size_t w = 0; w < p.size(); ++w)
      p[w] = base_prob(static_cast<TokenId>(w));
    auto h = history(prefix);
    for (std::size_t k = 1; k < h.size() + 1; ++k) {
      const auto* st = stats(std::span(h).last(k));
      if (!st) continue;
      const double c = static_cast<double>(st->total);
      const double lambda =
          opt_.discount * static_cast<double>(st->successors.size()) / c;
      for (auto& x : p) x = lambda * x;
      for (const auto& s : st->successors)
        p[s.token] += std::max(static_cast<double>(s.count) - opt_.discount, 0.0) / c;
    }
    return Distribution::dense(std::move(p));
  }

  double prob(Prefix prefix, TokenId w) const {
    auto h = history(prefix);
    return exact_prob(h, w);
  }

  double logprob(Prefix prefix, TokenId w) const {
    return std::log(prob(prefix, w));
  }

  // Probability at the order given by |h| exactly (no BOS padding).
  double exact_prob(std::span<const TokenId> h, TokenId w) const {
    if (w >= vocab_.size()) throw DataError("id out of range");
    double p = base_prob(w);
    for (std::size_t k = 1; k <= h.size(); ++k) {
      auto hk = h.last(k);
      const auto* st = stats(hk);
      if (!st) continue;
      const double c = static_cast<double>(st->total);
      const double lambda =
          opt_.discount * static_cast<double>(st->successors.size()) / c;
      const double disc =
          std::max(static_cast<double>(count(hk, w)) - opt_.discount, 0.0) / c;
      p = lambda * p + disc;
    }
    return p;
  }

  // Interpolation weight of the shorter history, or 1 for unseen histories.
  double backoff_weight(std::span<const TokenId> h) const {
    const auto* st = stats(h);
    if (!st) return 1.0;
    return opt_.discount * static_cast<double>(st->successors.size()) /
           static_cast<double>(st->total);
  }

  // Inverse-CDF draw over next_dist in id order. BOS, UNK and BLANK are never
  // returned.
  TokenId sample(Prefix prefix, Rng& rng) const {
    return sample_from(next_dist(prefix), rng);
  }

  static bool never_sampled(TokenId id) {
    return id == kBos || id == kUnk || id == kBlank;
  }

  static TokenId sample_from(const Distribution& d, Rng& rng) {
    const auto& p = d.dense_probs();
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i)
      if (!never_sampled(static_cast<TokenId>(i))) total += p[i];
    const double u = rng.uniform() * total;
    double acc = 0.0;
    TokenId last = kEos;
    for (std::size_t i = 0; i < p.size(); ++i) {
      auto id = static_cast<TokenId>(i);
      if (never_sampled(id) || p[i] <= 0.0) continue;
      acc += p[i];
      last = id;
      if (u < acc) return id;
    }
    return last;
  }

  // exp of the mean negative log-likelihood over every token and each EOS.
  double perplexity(std::span<const Sentence> corpus) const {
    double nll = 0.0;
    std::size_t n = 0;
    std::vector<TokenId> ctx;
    for (const auto& s : corpus) {
      ctx.clear();
      for (TokenId t : s) {
        nll -= logprob(ctx, t);
        ctx.push_back(t);
        ++n;
      }
      nll -= logprob(ctx, kEos);
      ++n;
    }
    if (n == 0) throw UsageError("perplexity: empty corpus");
    return std::exp(nll / static_cast<double>(n));
  }

  // ARPA-style text. Per-order sections carry log10 probabilities and
  // backoff weights; the vocabulary and raw event counts follow \end\ so a
  // reload rebuilds the identical model.
  void save(std::ostream& out) const {
    const std::size_t n = static_cast<std::size_t>(opt_.order);
    out << "# softaug n-gram language model\n";
    out << "# order=" << opt_.order << " discount=" << format_exact(opt_.discount)
        << " alpha=" << format_exact(opt_.alpha) << '\n';
    std::vector<std::map<std::vector<TokenId>, int>> grams(n + 1);
    for (std::size_t w = 0; w < vocab_.size(); ++w)
      grams[1][{static_cast<TokenId>(w)}] = 0;
    for (std::size_t k = 1; k < n; ++k) {
      for (const auto& [h, st] : levels_[k]) {
        // The history itself, listed so its backoff weight has a home.
        grams[k][h] = 0;
        for (const auto& s : st.successors) {
          auto g = h;
          g.push_back(s.token);
          grams[k + 1][std::move(g)] = 0;
        }
      }
    }
    out << "\\data\\\n";
    for (std::size_t k = 1; k <= n; ++k)
      out << "ngram " << k << '=' << grams[k].size() << '\n';
    for (std::size_t k = 1; k <= n; ++k) {
      out << "\n\\" << k << "-grams:\n";
      for (const auto& [g, unused] : grams[k]) {
        std::span<const TokenId> gs(g);
        double p = exact_prob(gs.first(k - 1), g.back());
        out << strprintf("%.6f", std::log10(p)) << '\t';
        for (std::size_t i = 0; i < k; ++i) {
          if (i) out << ' ';
          out << vocab_.surface(g[i]);
        }
        if (k < n)
          out << '\t' << strprintf("%.6f", std::log10(backoff_weight(gs)));
        out << '\n';
      }
    }
    out << "\n\\end\\\n";
    out << "\n\\vocab\\\n";
    for (std::size_t i = 0; i < vocab_.size(); ++i)
      out << i << '\t' << vocab_.entries()[i].surface << '\t'
          << vocab_.entries()[i].count << '\n';
    out << "\n\\counts\\\n";
    for (const auto& [g, c] : events_) {
      out << c << '\t';
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (i) out << ' ';
        out << vocab_.surface(g[i]);
      }
      out << '\n';
    }
    out << "\\end-counts\\\n";
  }

  static NGramLM load(std::istream& in) {
    std::string line;
    LmOptions opt;
    bool have_header = false;
    enum class Section { kPreamble, kArpa, kVocab, kCounts, kDone };
    Section sec = Section::kPreamble;
    std::vector<Vocabulary::Entry> entries;
    std::vector<std::pair<std::uint64_t, std::vector<std::string>>> raw_events;
    std::size_t lineno = 0;
    auto fail = [&](const std::string& what) -> DataError {
      return DataError(strprintf("lm file line %zu: ", lineno) + what);
    };
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      if (sec == Section::kPreamble && line.rfind("# order=", 0) == 0) {
        char d[64] = {0}, a[64] = {0};
        int order = 0;
        if (std::sscanf(line.c_str(), "# order=%d discount=%63s alpha=%63s",
                        &order, d, a) != 3)
          throw fail("bad header");
        opt.order = order;
        opt.discount = std::strtod(d, nullptr);
        opt.alpha = std::strtod(a, nullptr);
        have_header = true;
        continue;
      }
      if (line == "\\data\\") {
        sec = Section::kArpa;
        continue;
      }
      if (line == "\\vocab\\") {
        sec = Section::kVocab;
        continue;
      }
      if (line == "\\counts\\") {
        sec = Section::kCounts;
        continue;
      }
      if (line == "\\end-counts\\") {
        sec = Section::kDone;
        continue;
      }
      switch (sec) {
        case Section::kVocab: {
          auto f = split_tabs(line);
          if (f.size() != 3) throw fail("expected id<TAB>token<TAB>count");
          if (std::stoull(f[0]) != entries.size()) throw fail("vocab ids not dense");
          entries.push_back({f[1], std::stoull(f[2])});
          break;
        }
        case Section::kCounts: {
          auto tab = line.find('\t');
          if (tab == std::string::npos) throw fail("expected count<TAB>gram");
          std::vector<std::string> toks;
          for (auto t : split_ws(std::string_view(line).substr(tab + 1)))
            toks.emplace_back(t);
          raw_events.emplace_back(std::stoull(line.substr(0, tab)),
                                  std::move(toks));
          break;
        }
        default:
          break;
      }
    }
    if (!have_header) throw DataError("lm file: missing '# order=' header");
    if (sec != Section::kDone) throw DataError("lm file: truncated counts section");
    if (entries.size() < kNumSpecials) throw DataError("lm file: vocabulary too small");
    for (std::size_t i = 0; i < kNumSpecials; ++i)
      if (entries[i].surface != kSpecialSurfaces[i])
        throw DataError("lm file: specials missing from vocabulary");
    Vocabulary vocab = Vocabulary::from_entries(
        std::vector<Vocabulary::Entry>(entries.begin() + kNumSpecials, entries.end()));
    EventCounts events;
    for (const auto& [c, toks] : raw_events) {
      if (toks.size() != static_cast<std::size_t>(opt.order))
        throw DataError("lm file: count entry has wrong order");
      std::vector<TokenId> key;
      for (const auto& t : toks) {
        auto id = vocab.find(t);
        if (!id) throw DataError("lm file: unknown token '" + t + "' in counts");
        key.push_back(*id);
      }
      events[std::move(key)] += c;
    }
    return from_events(std::move(vocab), opt, events);
  }

 private:
  static void validate(const LmOptions& opt) {
    require(opt.order >= 1, "order must be at least 1");
    require(opt.discount > 0.0 && opt.discount < 1.0,
            "discount must lie in (0, 1)");
    require(opt.alpha >= 0.0 && std::isfinite(opt.alpha),
            "alpha must be non-negative");
  }

  static std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
      auto tab = line.find('\t', start);
      out.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    return out;
  }

  void build() {
    const auto n = static_cast<std::size_t>(opt_.order);
    unigram_.assign(vocab_.size(), 0);
    unigram_total_ = 0;
    levels_.assign(n, {});
    std::vector<std::unordered_map<std::vector<TokenId>, std::map<TokenId, std::uint64_t>,
                                   detail::IdSeqHash>>
        tmp(n);
    for (const auto& [g, c] : events_) {
      if (g.size() != n) throw DataError("event of wrong order");
      const TokenId w = g.back();
      if (w >= vocab_.size()) throw DataError("id out of range");
      for (TokenId t : g)
        if (t >= vocab_.size()) throw DataError("id out of range");
      unigram_[w] += c;
      unigram_total_ += c;
      for (std::size_t k = 1; k < n; ++k) {
        std::vector<TokenId> h(g.end() - 1 - static_cast<long>(k), g.end() - 1);
        tmp[k][std::move(h)][w] += c;
      }
    }
    for (std::size_t k = 1; k < n; ++k) {
      for (auto& [h, succ] : tmp[k]) {
        HistoryStats st;
        for (const auto& [w, c] : succ) {
          st.successors.push_back({w, c});
          st.total += c;
        }
        levels_[k].emplace(h, std::move(st));
      }
    }
    base_denominator_ = static_cast<double>(unigram_total_) +
                        opt_.alpha * static_cast<double>(vocab_.size());
  }

  // Last order-1 tokens of the BOS-padded prefix.
  std::vector<TokenId> history(Prefix prefix) const {
    const auto want = static_cast<std::size_t>(opt_.order - 1);
    std::vector<TokenId> h(want, kBos);
    const std::size_t take = std::min(want, prefix.size());
    for (std::size_t i = 0; i < take; ++i) {
      TokenId t = prefix[prefix.size() - take + i];
      // Ids outside this model's vocabulary read as UNK.
      h[want - take + i] = t < vocab_.size() ? t : kUnk;
    }
    return h;
  }

  const HistoryStats* stats(std::span<const TokenId> h) const {
    if (h.empty() || h.size() >= levels_.size()) return nullptr;
    const auto& level = levels_[h.size()];
    auto it = level.find(std::vector<TokenId>(h.begin(), h.end()));
    return it == level.end() ? nullptr : &it->second;
  }

  Vocabulary vocab_;
  LmOptions opt_;
  EventCounts events_;
  std::vector<std::uint64_t> unigram_;
  std::uint64_t unigram_total_ = 0;
  double base_denominator_ = 1.0;
  std::vector<std::unordered_map<std::vector<TokenId>, HistoryStats, detail::IdSeqHash>>
      levels_;
};

inline NGramLM train_lm(const Vocabulary& vocab, std::span<const Sentence> corpus,
                        LmOptions opt = {}) {
  return NGramLM::train(vocab, corpus, opt);
}

}  // namespace softaug
