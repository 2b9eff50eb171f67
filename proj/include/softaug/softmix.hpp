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

// Soft-word embeddings and a small hand-differentiated consumer model.
//
// A soft word embeds as the expectation of embedding rows under its
// distribution, e = sum_j p_j * E_j. The consumer mean-pools position
// embeddings and applies an affine layer with softmax cross-entropy.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "softaug/augment.hpp"
#include "softaug/common.hpp"
#include "softaug/rng.hpp"

namespace softaug {

// |V| x d row-major real matrix.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  EmbeddingMatrix(std::size_t rows, std::size_t dim)
      : rows_(rows), dim_(dim), data_(rows * dim, 0.0) {}

  // Entries uniform in [-scale, scale).
  static EmbeddingMatrix uniform(std::size_t rows, std::size_t dim,
                                 double scale, Rng& rng) {
    EmbeddingMatrix m(rows, dim);
    for (auto& x : m.data_) x = (2.0 * rng.uniform() - 1.0) * scale;
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t dim() const { return dim_; }

  std::span<const double> row(TokenId id) const {
    check(id);
    return {data_.data() + std::size_t{id} * dim_, dim_};
  }
  std::span<double> row(TokenId id) {
    check(id);
    return {data_.data() + std::size_t{id} * dim_, dim_};
  }
  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  // First line "rows dim", then one row per line with 17 significant digits.
  void save(std::ostream& out) const {
    out << rows_ << ' ' << dim_ << '\n';
    for (std::size_t r = 0; r < rows_; ++r) {
      for (std::size_t c = 0; c < dim_; ++c) {
        if (c) out << ' ';
        out << strprintf("%.17g", data_[r * dim_ + c]);
      }
      out << '\n';
    }
  }

  static EmbeddingMatrix load(std::istream& in) {
    std::size_t rows = 0, dim = 0;
    if (!(in >> rows >> dim)) throw DataError("embedding file: bad header");
    EmbeddingMatrix m(rows, dim);
    for (auto& x : m.data_) {
      std::string tok;
      if (!(in >> tok)) throw DataError("embedding file: truncated");
      char* end = nullptr;
      x = std::strtod(tok.c_str(), &end);
      if (*end != '\0' || !std::isfinite(x))
        throw DataError("embedding file: bad value '" + tok + "'");
    }
    return m;
  }

  bool operator==(const EmbeddingMatrix&) const = default;

 private:
  void check(TokenId id) const {
    if (id >= rows_) throw DataError("id out of range");
  }

  std::size_t rows_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> data_;
};

// Embedding of one position: the row itself for a hard token, the
// probability-weighted sum of rows for a soft word.
inline std::vector<double> mix_embedding(const Position& pos,
                                         const EmbeddingMatrix& E) {
  if (const auto* hard = std::get_if<TokenId>(&pos)) {
    auto r = E.row(*hard);
    return {r.begin(), r.end()};
  }
  const auto& sw = std::get<SoftWord>(pos);
  if (sw.dist.id_bound() > E.rows()) throw DataError("id out of range");
  std::vector<double> out(E.dim(), 0.0);
  sw.dist.for_each([&](TokenId id, double p) {
    if (p == 0.0) return;
    auto r = E.row(id);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += p * r[k];
  });
  return out;
}

struct ToyModel {
  EmbeddingMatrix embedding;
  std::vector<double> weights;  // classes x dim, row-major
  std::vector<double> bias;     // classes

  std::size_t classes() const { return bias.size(); }
  std::size_t dim() const { return embedding.dim(); }

  // Embeddings uniform in [-0.1, 0.1); classifier zero.
  static ToyModel init(std::size_t vocab_size, std::size_t dim,
                       std::size_t classes, Rng& rng) {
    require(vocab_size > 0 && dim > 0 && classes > 0,
            "model dimensions must be positive");
    ToyModel m;
    m.embedding = EmbeddingMatrix::uniform(vocab_size, dim, 0.1, rng);
    m.weights.assign(classes * dim, 0.0);
    m.bias.assign(classes, 0.0);
    return m;
  }

  bool operator==(const ToyModel&) const = default;
};

namespace detail {

inline std::vector<double> mean_pool(const ToyModel& m, const SoftSentence& s) {
  if (s.empty()) throw UsageError("empty sentence");
  std::vector<double> pooled(m.dim(), 0.0);
  for (const auto& pos : s) {
    auto e = mix_embedding(pos, m.embedding);
    for (std::size_t k = 0; k < pooled.size(); ++k) pooled[k] += e[k];
  }
  const double T = static_cast<double>(s.size());
  for (auto& x : pooled) x /= T;
  return pooled;
}

inline std::vector<double> softmax_logits(const ToyModel& m,
                                          const std::vector<double>& pooled) {
  const std::size_t c = m.classes(), d = m.dim();
  std::vector<double> z(c);
  for (std::size_t i = 0; i < c; ++i) {
    double acc = m.bias[i];
    for (std::size_t k = 0; k < d; ++k) acc += m.weights[i * d + k] * pooled[k];
    z[i] = acc;
  }
  const double zmax = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (auto& x : z) {
    x = std::exp(x - zmax);
    sum += x;
  }
  for (auto& x : z) x /= sum;
  return z;
}

inline void check_label(const ToyModel& m, std::size_t label) {
  if (label >= m.classes()) throw DataError("label out of range");
}

}  // namespace detail

// Class probabilities softmax(W * meanpool(mixed embeddings) + b).
inline std::vector<double> forward(const ToyModel& m, const SoftSentence& s) {
  return detail::softmax_logits(m, detail::mean_pool(m, s));
}

inline double loss(const ToyModel& m, const SoftSentence& s, std::size_t label) {
  detail::check_label(m, label);
  return -std::log(forward(m, s)[label]);
}

struct Gradients {
  std::map<TokenId, std::vector<double>> embedding;  // touched rows only
  std::vector<double> weights;
  std::vector<double> bias;

  void scale(double f) {
    for (auto& [id, g] : embedding)
      for (auto& x : g) x *= f;
    for (auto& x : weights) x *= f;
    for (auto& x : bias) x *= f;
  }
  void add(const Gradients& o) {
    for (const auto& [id, g] : o.embedding) {
      auto& dst = embedding[id];
      if (dst.empty()) dst.assign(g.size(), 0.0);
      for (std::size_t k = 0; k < g.size(); ++k) dst[k] += g[k];
    }
    if (weights.empty()) weights.assign(o.weights.size(), 0.0);
    if (bias.empty()) bias.assign(o.bias.size(), 0.0);
    for (std::size_t i = 0; i < o.weights.size(); ++i) weights[i] += o.weights[i];
    for (std::size_t i = 0; i < o.bias.size(); ++i) bias[i] += o.bias[i];
  }
};

// Analytic gradient of loss(m, s, label). A soft position spreads its
// embedding gradient over the support, row j receiving p_j times the
// position gradient.
inline Gradients backward(const ToyModel& m, const SoftSentence& s,
                          std::size_t label) {
  detail::check_label(m, label);
  const std::size_t c = m.classes(), d = m.dim();
  const auto pooled = detail::mean_pool(m, s);
  auto dz = detail::softmax_logits(m, pooled);
  dz[label] -= 1.0;

  Gradients g;
  g.weights.assign(c * d, 0.0);
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t k = 0; k < d; ++k) g.weights[i * d + k] = dz[i] * pooled[k];
  g.bias = dz;

  std::vector<double> de(d, 0.0);
  for (std::size_t k = 0; k < d; ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i < c; ++i) acc += m.weights[i * d + k] * dz[i];
    de[k] = acc / static_cast<double>(s.size());
  }
  auto accumulate = [&](TokenId id, double p) {
    auto& row = g.embedding[id];
    if (row.empty()) row.assign(d, 0.0);
    for (std::size_t k = 0; k < d; ++k) row[k] += p * de[k];
  };
  for (const auto& pos : s) {
    if (const auto* hard = std::get_if<TokenId>(&pos)) {
      if (*hard >= m.embedding.rows()) throw DataError("id out of range");
      auto& row = g.embedding[*hard];
      if (row.empty()) row.assign(d, 0.0);
      for (std::size_t k = 0; k < d; ++k) row[k] += de[k];
    } else {
      const auto& sw = std::get<SoftWord>(pos);
      sw.dist.for_each([&](TokenId id, double p) {
        if (p != 0.0) accumulate(id, p);
      });
    }
  }
  return g;
}

struct Example {
  SoftSentence input;
  std::size_t label = 0;
};

inline double batch_loss(const ToyModel& m, std::span<const Example> batch) {
  double total = 0.0;
  for (const auto& ex : batch) total += loss(m, ex.input, ex.label);
  return total / static_cast<double>(batch.size());
}

inline Gradients batch_backward(const ToyModel& m, std::span<const Example> batch) {
  Gradients g;
  for (const auto& ex : batch) g.add(backward(m, ex.input, ex.label));
  g.scale(1.0 / static_cast<double>(batch.size()));
  return g;
}

// Agreement between analytic and central finite-difference gradients.
// Relative error is |a - n| / max(|a|, |n|, 1e-6); the floor keeps entries
// whose true gradient is essentially zero from dividing roundoff by zero.
struct GradCheckReport {
  double max_rel_embedding = 0.0;
  double max_rel_weights = 0.0;
  double max_rel_bias = 0.0;
  double step = 1e-5;
  bool pass = false;

  static constexpr double kTolerance = 1e-4;

  double max_rel() const {
    return std::max({max_rel_embedding, max_rel_weights, max_rel_bias});
  }
};

inline GradCheckReport grad_check(const ToyModel& model,
                                  std::span<const Example> batch,
                                  double h = 1e-5) {
  require(!batch.empty(), "grad_check: empty batch");
  ToyModel m = model;
  const Gradients g = batch_backward(m, batch);
  auto rel = [](double a, double n) {
    return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6});
  };
  auto numeric = [&](double& param) {
    const double saved = param;
    param = saved + h;
    const double up = batch_loss(m, batch);
    param = saved - h;
    const double down = batch_loss(m, batch);
    param = saved;
    return (up - down) / (2.0 * h);
  };

  GradCheckReport r;
  r.step = h;
  for (const auto& [id, grow] : g.embedding) {
    auto row = m.embedding.row(id);
    for (std::size_t k = 0; k < row.size(); ++k)
      r.max_rel_embedding = std::max(r.max_rel_embedding, rel(grow[k], numeric(row[k])));
  }
  for (std::size_t i = 0; i < m.weights.size(); ++i)
    r.max_rel_weights = std::max(r.max_rel_weights, rel(g.weights[i], numeric(m.weights[i])));
  for (std::size_t i = 0; i < m.bias.size(); ++i)
    r.max_rel_bias = std::max(r.max_rel_bias, rel(g.bias[i], numeric(m.bias[i])));
  r.pass = r.max_rel() <= GradCheckReport::kTolerance;
  return r;
}

inline void apply_gradients(ToyModel& m, const Gradients& g, double lr) {
  for (const auto& [id, grow] : g.embedding) {
    auto row = m.embedding.row(id);
    for (std::size_t k = 0; k < row.size(); ++k) row[k] -= lr * grow[k];
  }
  for (std::size_t i = 0; i < m.weights.size(); ++i) m.weights[i] -= lr * g.weights[i];
  for (std::size_t i = 0; i < m.bias.size(); ++i) m.bias[i] -= lr * g.bias[i];
}

struct TrainOptions {
  double lr = 0.5;
  std::size_t steps = 100;
  std::size_t batch_size = 16;
};

// Plain SGD with a fixed learning rate. Each step averages the gradient of
// `batch_size` examples drawn with replacement from `rng`. Returns the mean
// batch loss of every step, measured before its update.
inline std::vector<double> train_toy(ToyModel& m, std::span<const Example> data,
                                     const TrainOptions& opt, Rng& rng) {
  require(opt.lr > 0.0, "learning rate must be positive");
  require(opt.batch_size > 0, "batch size must be positive");
  for (const auto& ex : data) detail::check_label(m, ex.label);
  std::vector<double> trace;
  if (data.empty() || opt.steps == 0) return trace;
  trace.reserve(opt.steps);
  for (std::size_t step = 0; step < opt.steps; ++step) {
    Gradients g;
    double total = 0.0;
    for (std::size_t b = 0; b < opt.batch_size; ++b) {
      const auto& ex = data[rng.below(data.size())];
      total += loss(m, ex.input, ex.label);
      g.add(backward(m, ex.input, ex.label));
    }
    g.scale(1.0 / static_cast<double>(opt.batch_size));
    trace.push_back(total / static_cast<double>(opt.batch_size));
    apply_gradients(m, g, opt.lr);
  }
  return trace;
}

inline std::size_t predict(const ToyModel& m, const SoftSentence& s) {
  auto p = forward(m, s);
  return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
}

// Fraction of examples whose argmax class equals the label.
inline double evaluate(const ToyModel& m, std::span<const Example> data) {
  if (data.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& ex : data) {
    detail::check_label(m, ex.label);
    if (predict(m, ex.input) == ex.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

// Random distribution over `support` distinct ids below vocab_size; the
// full vocabulary yields a dense distribution.
inline Distribution random_distribution(std::size_t vocab_size,
                                        std::size_t support, Rng& rng) {
  require(support >= 1 && support <= vocab_size, "support must lie in [1, |V|]");
  std::vector<double> w(support);
  double total = 0.0;
  for (auto& x : w) {
    x = rng.uniform() + 1e-3;
    total += x;
  }
  for (auto& x : w) x /= total;
  if (support == vocab_size) return Distribution::dense(std::move(w));
  std::vector<TokenId> ids(vocab_size);
  for (std::size_t i = 0; i < vocab_size; ++i) ids[i] = static_cast<TokenId>(i);
  for (std::size_t i = 0; i < support; ++i)
    std::swap(ids[i], ids[i + rng.below(vocab_size - i)]);
  std::vector<Distribution::Entry> entries(support);
  for (std::size_t i = 0; i < support; ++i) entries[i] = {ids[i], w[i]};
  return Distribution::sparse(std::move(entries));
}

// Model with every parameter random, for gradient checks.
inline ToyModel random_model(std::size_t vocab_size, std::size_t dim,
                             std::size_t classes, Rng& rng) {
  ToyModel m = ToyModel::init(vocab_size, dim, classes, rng);
  for (auto& x : m.weights) x = 2.0 * rng.uniform() - 1.0;
  for (auto& x : m.bias) x = 2.0 * rng.uniform() - 1.0;
  return m;
}

// Sentence of 1..max_len positions, each soft with probability soft_rate.
inline Example random_example(std::size_t vocab_size, std::size_t classes,
                              std::size_t max_len, double soft_rate,
                              std::size_t max_support, Rng& rng) {
  Example ex;
  const std::size_t len = 1 + rng.below(max_len);
  for (std::size_t t = 0; t < len; ++t) {
    const auto id = static_cast<TokenId>(rng.below(vocab_size));
    if (rng.bernoulli(soft_rate)) {
      const std::size_t k = 1 + rng.below(std::min(max_support, vocab_size));
      ex.input.emplace_back(SoftWord{random_distribution(vocab_size, k, rng), id});
    } else {
      ex.input.emplace_back(id);
    }
  }
  ex.label = rng.below(classes);
  return ex;
}

inline void write_loss_trace(std::ostream& out, std::span<const double> trace) {
  out << "step,loss\n";
  for (std::size_t i = 0; i < trace.size(); ++i)
    out << i << ',' << format_exact(trace[i]) << '\n';
}

}  // namespace softaug
