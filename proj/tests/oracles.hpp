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

// Reference implementations used only by tests. They share no code with the
// library: counts are gathered from raw sentences into plain maps and the
// discounting recursion is evaluated recursively per entry.

#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

namespace oracle {

using Id = std::uint32_t;

class BruteForceLm {
 public:
  // Ids 0..3 are BOS, EOS, UNK, BLANK. Sentences hold ids only.
  BruteForceLm(const std::vector<std::vector<Id>>& corpus, std::size_t vocab_size, int order,
               double discount, double alpha)
      : v_(vocab_size), n_(order), d_(discount), alpha_(alpha) {
    for (const auto& s : corpus) {
      std::vector<Id> framed(static_cast<std::size_t>(n_ - 1), 0);
      framed.insert(framed.end(), s.begin(), s.end());
      framed.push_back(1);
      for (std::size_t i = static_cast<std::size_t>(n_ - 1); i < framed.size(); ++i) {
        const Id w = framed[i];
        if (w == 0 || w == 2 || w == 3) continue;
        for (int k = 0; k < n_; ++k) {
          std::vector<Id> gram(framed.begin() + static_cast<long>(i) - k,
                               framed.begin() + static_cast<long>(i) + 1);
          grams_[gram] += 1;
        }
        total_ += 1;
      }
    }
  }

  // P(w | preceding tokens), BOS-padded to order-1.
  double prob(const std::vector<Id>& preceding, Id w) const {
    std::vector<Id> h(static_cast<std::size_t>(n_ - 1), 0);
    for (std::size_t i = 0; i < preceding.size(); ++i) {
      h.push_back(preceding[i]);
    }
    h.erase(h.begin(), h.end() - (n_ - 1));
    return rec(h, w);
  }

 private:
  double rec(const std::vector<Id>& h, Id w) const {
    if (h.empty()) {
      std::vector<Id> g{w};
      auto it = grams_.find(g);
      double c = it == grams_.end() ? 0.0 : static_cast<double>(it->second);
      return (c + alpha_) / (static_cast<double>(total_) + alpha_ * static_cast<double>(v_));
    }
    std::vector<Id> shorter(h.begin() + 1, h.end());
    double ch = 0.0, distinct = 0.0, chw = 0.0;
    for (Id x = 0; x < v_; ++x) {
      auto g = h;
      g.push_back(x);
      auto it = grams_.find(g);
      if (it == grams_.end()) continue;
      ch += static_cast<double>(it->second);
      distinct += 1.0;
      if (x == w) chw = static_cast<double>(it->second);
    }
    if (ch == 0.0) return rec(shorter, w);
    double disc = std::max(chw - d_, 0.0) / ch;
    return d_ * distinct / ch * rec(shorter, w) + disc;
  }

  std::size_t v_;
  int n_;
  double d_;
  double alpha_;
  std::uint64_t total_ = 0;
  std::map<std::vector<Id>, std::uint64_t> grams_;
};

// sum_j p_j * E[j][k], with p given as a full-length vector.
inline std::vector<double> brute_mix(const std::vector<double>& p,
                                     const std::vector<std::vector<double>>& rows) {
  std::vector<double> out(rows.empty() ? 0 : rows[0].size(), 0.0);
  for (std::size_t k = 0; k < out.size(); ++k) {
    long double acc = 0.0L;
    for (std::size_t j = 0; j < p.size(); ++j) acc += static_cast<long double>(p[j]) * rows[j][k];
    out[k] = static_cast<double>(acc);
  }
  return out;
}

}  // namespace oracle
