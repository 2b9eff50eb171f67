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

// Corpus ingestion: UTF-8 checks, vocabulary construction, byte-pair-encoding
// subword segmentation, and id encoding.

#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "softaug/common.hpp"

namespace softaug {

// A sentence is the ordered list of its token ids. BOS/EOS framing is never
// stored; consumers add it.
using Sentence = std::vector<TokenId>;

// ---------------------------------------------------------------------------
// UTF-8

// Offset of the first byte that does not start a well-formed UTF-8 sequence,
// or nullopt when the whole buffer is valid.
inline std::optional<std::size_t> find_invalid_utf8(std::string_view s) {
  const auto* p = reinterpret_cast<const unsigned char*>(s.data());
  const std::size_t n = s.size();
  std::size_t i = 0;
  while (i < n) {
    unsigned c = p[i];
    std::size_t len;
    std::uint32_t cp;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else {
      return i;
    }
    if (i + len > n) return i;
    for (std::size_t k = 1; k < len; ++k) {
      if ((p[i + k] & 0xC0) != 0x80) return i;
      cp = (cp << 6) | (p[i + k] & 0x3F);
    }
    // Overlong forms, surrogates, and values past U+10FFFF.
    static constexpr std::uint32_t kMin[5] = {0, 0, 0x80, 0x800, 0x10000};
    if (cp < kMin[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF))
      return i;
    i += len;
  }
  return std::nullopt;
}

inline void check_utf8(std::string_view s, std::size_t base_offset = 0) {
  if (auto bad = find_invalid_utf8(s))
    throw DataError(
        strprintf("malformed UTF-8 at byte offset %zu", base_offset + *bad));
}

// Splits a word into code points. Bytes that do not form a valid sequence are
// emitted one per element.
inline std::vector<std::string> utf8_chars(std::string_view word) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < word.size()) {
    auto c = static_cast<unsigned char>(word[i]);
    std::size_t len = c < 0x80 ? 1 : (c & 0xE0) == 0xC0 ? 2
                                   : (c & 0xF0) == 0xE0 ? 3
                                   : (c & 0xF8) == 0xF0 ? 4
                                                        : 1;
    if (i + len > word.size() || find_invalid_utf8(word.substr(i, len)))
      len = 1;
    out.emplace_back(word.substr(i, len));
    i += len;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Files

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open input file: " + path);
  return in;
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open output file: " + path);
  return out;
}

inline std::string read_file(const std::string& path) {
  auto in = open_input(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::vector<std::string> read_lines(const std::string& path) {
  auto in = open_input(path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

// ---------------------------------------------------------------------------
// Vocabulary

class Vocabulary {
 public:
  struct Entry {
    std::string surface;
    std::uint64_t count = 0;
    bool operator==(const Entry&) const = default;
  };

  // Vocabulary holding only the four specials.
  Vocabulary() {
    for (auto s : kSpecialSurfaces) add(Entry{std::string(s), 0});
  }

  // Appends non-special entries after the specials in the given order. The
  // order must already satisfy the count-descending, surface-ascending rule.
  static Vocabulary from_entries(std::vector<Entry> entries) {
    Vocabulary v;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (i > 0 && !sorted_before(entries[i - 1], entries[i]))
        throw DataError("vocabulary entries out of order at '" +
                        entries[i].surface + "'");
      v.add(std::move(entries[i]));
    }
    return v;
  }

  std::size_t size() const { return entries_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }

  const std::string& surface(TokenId id) const {
    if (id >= entries_.size()) throw DataError("id out of range");
    return entries_[id].surface;
  }
  std::uint64_t count(TokenId id) const {
    if (id >= entries_.size()) throw DataError("id out of range");
    return entries_[id].count;
  }

  std::optional<TokenId> find(std::string_view surface) const {
    auto it = index_.find(std::string(surface));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  // Id of `surface`, or UNK when absent.
  TokenId lookup(std::string_view surface) const {
    return find(surface).value_or(kUnk);
  }

  // One "token<TAB>count" line per entry, in id order.
  void save(std::ostream& out) const {
    for (const auto& e : entries_) out << e.surface << '\t' << e.count << '\n';
  }

  static Vocabulary load(std::istream& in) {
    std::vector<Entry> rest;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      auto tab = line.find('\t');
      if (tab == std::string::npos || tab == 0)
        throw DataError(strprintf("vocab line %zu: expected token<TAB>count",
                                  lineno));
      Entry e{line.substr(0, tab), 0};
      try {
        std::size_t used = 0;
        e.count = std::stoull(line.substr(tab + 1), &used);
        if (used != line.size() - tab - 1) throw std::invalid_argument("");
      } catch (const std::exception&) {
        throw DataError(strprintf("vocab line %zu: bad count", lineno));
      }
      if (lineno <= kNumSpecials) {
        if (e.surface != kSpecialSurfaces[lineno - 1] || e.count != 0)
          throw DataError(strprintf("vocab line %zu: expected special %s",
                                    lineno,
                                    kSpecialSurfaces[lineno - 1].data()));
        continue;
      }
      rest.push_back(std::move(e));
    }
    if (lineno < kNumSpecials) throw DataError("vocab file is missing specials");
    return from_entries(std::move(rest));
  }

  bool operator==(const Vocabulary& o) const { return entries_ == o.entries_; }

  static bool sorted_before(const Entry& a, const Entry& b) {
    if (a.count != b.count) return a.count > b.count;
    return a.surface < b.surface;
  }

 private:
  void add(Entry e) {
    if (index_.count(e.surface))
      throw DataError("duplicate vocabulary surface '" + e.surface + "'");
    index_.emplace(e.surface, static_cast<TokenId>(entries_.size()));
    entries_.push_back(std::move(e));
  }

  std::vector<Entry> entries_;
  std::unordered_map<std::string, TokenId> index_;
};

// Accumulates whitespace-token counts line by line, so corpora can be
// streamed.
class VocabBuilder {
 public:
  void add_line(std::string_view line) {
    check_utf8(line, offset_);
    offset_ += line.size() + 1;
    for (auto tok : split_ws(line)) {
      // Literal special surfaces in the text are not counted as words.
      if (std::find(std::begin(kSpecialSurfaces), std::end(kSpecialSurfaces),
                    tok) != std::end(kSpecialSurfaces))
        continue;
      ++counts_[std::string(tok)];
    }
  }

  void add_text(std::string_view text) {
    check_utf8(text, offset_);
    std::size_t start = 0;
    while (start <= text.size()) {
      auto nl = text.find('\n', start);
      if (nl == std::string_view::npos) nl = text.size();
      auto line = text.substr(start, nl - start);
      for (auto tok : split_ws(line)) {
        if (std::find(std::begin(kSpecialSurfaces),
                      std::end(kSpecialSurfaces),
                      tok) != std::end(kSpecialSurfaces))
          continue;
        ++counts_[std::string(tok)];
      }
      start = nl + 1;
    }
    offset_ += text.size();
  }

  std::size_t bytes_seen() const { return offset_; }
  const std::map<std::string, std::uint64_t>& counts() const { return counts_; }

  // max_size limits the number of non-special entries; nullopt is unlimited.
  Vocabulary finish(std::optional<std::size_t> max_size = std::nullopt) const {
    std::vector<Vocabulary::Entry> entries;
    entries.reserve(counts_.size());
    for (const auto& [s, c] : counts_) entries.push_back({s, c});
    std::stable_sort(entries.begin(), entries.end(),
                     Vocabulary::sorted_before);
    if (max_size && entries.size() > *max_size) entries.resize(*max_size);
    return Vocabulary::from_entries(std::move(entries));
  }

 private:
  std::map<std::string, std::uint64_t> counts_;
  std::size_t offset_ = 0;
};

// Vocabulary of a line-separated, whitespace-tokenized corpus. Tokens ranked
// past max_size are left out and encode to UNK.
inline Vocabulary build_vocab(std::string_view corpus,
                              std::optional<std::size_t> max_size = std::nullopt) {
  if (corpus.empty()) throw DataError("empty corpus");
  if (max_size) require(*max_size > 0, "max_size must be positive");
  VocabBuilder builder;
  builder.add_text(corpus);
  return builder.finish(max_size);
}

// ---------------------------------------------------------------------------
// Byte-pair encoding

inline constexpr std::string_view kEndOfWord = "</w>";
inline constexpr std::string_view kContinuation = "@@";

using SymbolPair = std::pair<std::string, std::string>;

// Ordered merge operations; earlier merges take priority.
class MergeTable {
 public:
  MergeTable() = default;
  explicit MergeTable(std::vector<SymbolPair> merges)
      : merges_(std::move(merges)) {
    for (std::size_t i = 0; i < merges_.size(); ++i) {
      if (!rank_.emplace(merges_[i], i).second)
        throw DataError("duplicate merge '" + merges_[i].first + " " +
                        merges_[i].second + "'");
    }
  }

  std::size_t size() const { return merges_.size(); }
  bool empty() const { return merges_.empty(); }
  const std::vector<SymbolPair>& merges() const { return merges_; }

  std::optional<std::size_t> rank(const SymbolPair& p) const {
    auto it = rank_.find(p);
    if (it == rank_.end()) return std::nullopt;
    return it->second;
  }

  void save(std::ostream& out) const {
    out << "#bpe v1 " << merges_.size() << '\n';
    for (const auto& [l, r] : merges_) out << l << ' ' << r << '\n';
  }

  static MergeTable load(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw DataError("merges file is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto head = split_ws(line);
    std::size_t declared = 0;
    if (head.size() != 3 || head[0] != "#bpe" || head[1] != "v1")
      throw DataError("merges file: bad header '" + line + "'");
    try {
      declared = std::stoull(std::string(head[2]));
    } catch (const std::exception&) {
      throw DataError("merges file: bad merge count in header");
    }
    std::vector<SymbolPair> merges;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      auto parts = split_ws(line);
      if (parts.size() != 2)
        throw DataError(strprintf("merges file line %zu: expected 'left right'",
                                  lineno));
      merges.emplace_back(std::string(parts[0]), std::string(parts[1]));
    }
    if (merges.size() != declared)
      throw DataError(strprintf("merges file declares %zu merges but has %zu",
                                declared, merges.size()));
    return MergeTable(std::move(merges));
  }

  bool operator==(const MergeTable& o) const { return merges_ == o.merges_; }

 private:
  std::vector<SymbolPair> merges_;
  std::map<SymbolPair, std::size_t> rank_;
};

namespace detail {

// Code points of `word` with the end-of-word marker glued to the last one.
inline std::vector<std::string> initial_symbols(std::string_view word) {
  auto syms = utf8_chars(word);
  if (!syms.empty()) syms.back() += kEndOfWord;
  return syms;
}

// Merges every non-overlapping occurrence of `pair`, left to right.
inline void merge_pair(std::vector<std::string>& syms, const SymbolPair& pair) {
  std::vector<std::string> out;
  out.reserve(syms.size());
  for (std::size_t i = 0; i < syms.size(); ++i) {
    if (i + 1 < syms.size() && syms[i] == pair.first &&
        syms[i + 1] == pair.second) {
      out.push_back(syms[i] + syms[i + 1]);
      ++i;
    } else {
      out.push_back(std::move(syms[i]));
    }
  }
  syms = std::move(out);
}

}  // namespace detail

// Greedy most-frequent-pair merge learning. At every step the pair with the
// highest weighted count is merged; equal counts go to the lexicographically
// smallest (left, right). Learning stops early only when no adjacent pair is
// left in any word.
inline MergeTable learn_bpe(const std::map<std::string, std::uint64_t>& word_counts,
                            std::size_t num_merges) {
  require(num_merges >= 1, "num_merges must be at least 1");
  if (word_counts.empty()) throw UsageError("learn_bpe: empty word counts");

  struct Word {
    std::vector<std::string> syms;
    std::int64_t count;
  };
  std::vector<Word> words;
  words.reserve(word_counts.size());
  for (const auto& [w, c] : word_counts) {
    if (w.empty() || c == 0) continue;
    words.push_back({detail::initial_symbols(w), static_cast<std::int64_t>(c)});
  }

  std::map<SymbolPair, std::int64_t> counts;
  // Ordered by (-count, pair) so begin() is the next merge.
  std::set<std::pair<std::int64_t, SymbolPair>> queue;
  std::map<SymbolPair, std::set<std::size_t>> where;

  auto bump = [&](const SymbolPair& p, std::int64_t delta, std::size_t wi) {
    auto& c = counts[p];
    if (c > 0) queue.erase({-c, p});
    c += delta;
    if (c > 0) {
      queue.insert({-c, p});
    } else {
      counts.erase(p);
    }
    if (delta > 0) where[p].insert(wi);
  };
  auto add_word = [&](std::size_t wi, std::int64_t sign) {
    const auto& w = words[wi];
    for (std::size_t i = 0; i + 1 < w.syms.size(); ++i)
      bump({w.syms[i], w.syms[i + 1]}, sign * w.count, wi);
  };

  for (std::size_t wi = 0; wi < words.size(); ++wi) add_word(wi, +1);

  std::vector<SymbolPair> merges;
  while (merges.size() < num_merges && !queue.empty()) {
    SymbolPair best = queue.begin()->second;
    merges.push_back(best);
    auto affected = std::move(where[best]);
    where.erase(best);
    for (std::size_t wi : affected) {
      add_word(wi, -1);
      detail::merge_pair(words[wi].syms, best);
      add_word(wi, +1);
    }
  }
  return MergeTable(std::move(merges));
}

// Word counts of a whitespace-tokenized corpus, as consumed by learn_bpe.
inline std::map<std::string, std::uint64_t> word_counts(std::string_view corpus) {
  VocabBuilder b;
  b.add_text(corpus);
  return b.counts();
}

// Segments one word. Non-final subwords carry the "@@" continuation marker.
inline std::vector<std::string> bpe_word(std::string_view word,
                                         const MergeTable& merges) {
  auto syms = detail::initial_symbols(word);
  while (syms.size() > 1) {
    std::optional<std::size_t> best_rank;
    std::size_t best_at = 0;
    for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
      auto r = merges.rank({syms[i], syms[i + 1]});
      if (r && (!best_rank || *r < *best_rank)) {
        best_rank = r;
        best_at = i;
      }
    }
    if (!best_rank) break;
    SymbolPair pair{syms[best_at], syms[best_at + 1]};
    detail::merge_pair(syms, pair);
  }
  if (!syms.empty()) {
    auto& last = syms.back();
    last.resize(last.size() - kEndOfWord.size());
    for (std::size_t i = 0; i + 1 < syms.size(); ++i) syms[i] += kContinuation;
  }
  return syms;
}

// Segments every whitespace-separated word of `sentence_text`.
inline std::vector<std::string> apply_bpe(std::string_view sentence_text,
                                          const MergeTable& merges) {
  std::vector<std::string> out;
  for (auto word : split_ws(sentence_text)) {
    auto sub = bpe_word(word, merges);
    out.insert(out.end(), std::make_move_iterator(sub.begin()),
               std::make_move_iterator(sub.end()));
  }
  return out;
}

// Joins subwords back into words: every "@@ " boundary is removed.
inline std::string remove_bpe(const std::vector<std::string>& subwords) {
  std::string out;
  for (std::size_t i = 0; i < subwords.size(); ++i) {
    const auto& s = subwords[i];
    bool cont = i + 1 < subwords.size() && s.size() >= kContinuation.size() &&
                std::string_view(s).substr(s.size() - kContinuation.size()) ==
                    kContinuation;
    if (cont) {
      out.append(s, 0, s.size() - kContinuation.size());
    } else {
      out += s;
      if (i + 1 < subwords.size()) out += ' ';
    }
  }
  return out;
}

inline std::string remove_bpe(std::string_view line) {
  std::vector<std::string> parts;
  for (auto t : split_ws(line)) parts.emplace_back(t);
  return remove_bpe(parts);
}

// ---------------------------------------------------------------------------
// Encoding

// Maps already-segmented whitespace tokens to ids; unknown tokens become UNK.
inline Sentence encode(std::string_view tokens_text, const Vocabulary& vocab) {
  Sentence out;
  for (auto tok : split_ws(tokens_text)) out.push_back(vocab.lookup(tok));
  return out;
}

// Segments raw text with `merges`, then maps subwords to ids.
inline Sentence encode(std::string_view sentence_text, const MergeTable& merges,
                       const Vocabulary& vocab) {
  Sentence out;
  for (const auto& sub : apply_bpe(sentence_text, merges))
    out.push_back(vocab.lookup(sub));
  return out;
}

// Space-joined surfaces, without undoing subword segmentation.
inline std::string to_text(const Sentence& s, const Vocabulary& vocab) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ' ';
    out += vocab.surface(s[i]);
  }
  return out;
}

// Inverse of encode(text, merges, vocab) whenever no UNK was produced.
inline std::string decode(const Sentence& s, const Vocabulary& vocab) {
  std::vector<std::string> parts;
  parts.reserve(s.size());
  for (TokenId id : s) parts.push_back(vocab.surface(id));
  return remove_bpe(parts);
}

}  // namespace softaug
