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

// Strategy x gamma comparison on a synthetic synonym-class task.

#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "softaug/augment.hpp"
#include "softaug/common.hpp"
#include "softaug/corpus.hpp"
#include "softaug/lm.hpp"
#include "softaug/parallel.hpp"
#include "softaug/rng.hpp"
#include "softaug/softmix.hpp"

namespace softaug {

// ---------------------------------------------------------------------------
// Synthetic task
//
// Tokens are partitioned into synonym classes; token "c<k>_<m>" is member m
// of class k. The first classes/5 classes are noise; the rest carry a label,
// alternating between label 0 and label 1. A sentence of label y walks the
// classes of group y in a fixed cycle, so the class at each position is
// predictable from the previous label-bearing one while the member is drawn
// from a Zipf law over the class members. Positions after the first are
// noise tokens with probability `noise`. The label is the group of any
// label-bearing token.

struct TaskParams {
  std::size_t vocab_size = 500;
  std::size_t classes = 50;
  std::size_t sentences = 2000;
  std::size_t length = 4;
  double noise = 0.6;
  double zipf = 1.0;  // member m of a class drawn with weight 1/(m+1)^zipf
  double test_fraction = 0.2;
  std::uint64_t seed = 0;
};

inline constexpr std::size_t kTaskLabels = 2;

inline std::size_t noise_classes(std::size_t classes) { return classes / 5; }

inline std::size_t class_size(const TaskParams& p, std::size_t k) {
  return p.vocab_size / p.classes + (k < p.vocab_size % p.classes ? 1 : 0);
}

inline std::string task_token(std::size_t cls, std::size_t member) {
  return "c" + std::to_string(cls) + "_" + std::to_string(member);
}

struct LabeledCorpus {
  std::vector<std::string> lines;
  std::vector<std::size_t> labels;
};

inline LabeledCorpus make_synthetic_task(const TaskParams& p, Rng& rng) {
  require(p.classes >= kTaskLabels, "need at least two synonym classes");
  if (p.vocab_size < p.classes)
    throw UsageError("vocab_size must be at least the number of classes");
  require(p.length >= 1, "sentence length must be at least 1");
  require(p.noise >= 0.0 && p.noise < 1.0, "noise must lie in [0, 1)");
  require(p.zipf >= 0.0, "zipf exponent must be non-negative");

  const std::size_t n_noise = noise_classes(p.classes);
  std::vector<std::size_t> groups[kTaskLabels];
  for (std::size_t k = n_noise; k < p.classes; ++k)
    groups[(k - n_noise) % kTaskLabels].push_back(k);

  std::vector<CategoricalSampler> members;
  for (std::size_t k = 0; k < p.classes; ++k) {
    std::vector<double> w(class_size(p, k));
    for (std::size_t m = 0; m < w.size(); ++m)
      w[m] = std::pow(static_cast<double>(m + 1), -p.zipf);
    members.emplace_back(Distribution::dense(std::move(w)));
  }

  LabeledCorpus out;
  out.lines.reserve(p.sentences);
  out.labels.reserve(p.sentences);
  for (std::size_t i = 0; i < p.sentences; ++i) {
    const std::size_t y = rng.below(kTaskLabels);
    const auto& g = groups[y];
    std::size_t at = rng.below(g.size());
    std::string line;
    for (std::size_t t = 0; t < p.length; ++t) {
      std::size_t cls;
      if (t > 0 && n_noise > 0 && rng.bernoulli(p.noise)) {
        cls = rng.below(n_noise);
      } else {
        cls = g[at];
        at = (at + 1) % g.size();
      }
      if (t) line += ' ';
      line += task_token(cls, members[cls](rng));
    }
    out.lines.push_back(std::move(line));
    out.labels.push_back(y);
  }
  return out;
}

// Encoded train/test split. The vocabulary comes from the training lines
// only, so test-only tokens read as UNK.
struct PreparedTask {
  Vocabulary vocab;
  std::vector<Sentence> train;
  std::vector<Sentence> test;
  std::vector<std::size_t> train_labels;
  std::vector<std::size_t> test_labels;
};

inline PreparedTask prepare_task(const LabeledCorpus& data, double test_fraction) {
  require(test_fraction >= 0.0 && test_fraction < 1.0,
          "test_fraction must lie in [0, 1)");
  const std::size_t n = data.lines.size();
  const auto n_test = static_cast<std::size_t>(std::floor(test_fraction * static_cast<double>(n)));
  const std::size_t n_train = n - n_test;
  require(n_train > 0, "task has no training sentences");
  VocabBuilder vb;
  for (std::size_t i = 0; i < n_train; ++i) vb.add_line(data.lines[i]);
  PreparedTask t;
  t.vocab = vb.finish();
  for (std::size_t i = 0; i < n; ++i) {
    auto s = encode(data.lines[i], t.vocab);
    if (i < n_train) {
      t.train.push_back(std::move(s));
      t.train_labels.push_back(data.labels[i]);
    } else {
      t.test.push_back(std::move(s));
      t.test_labels.push_back(data.labels[i]);
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// Sweep specification: key=value lines, '#' comments.

struct SweepSpec {
  std::vector<Strategy> strategies{kAllStrategies.begin(), kAllStrategies.end()};
  std::vector<double> gammas{kGammaGrid.begin(), kGammaGrid.end()};
  std::size_t reps = 5;
  std::uint64_t seed = 0;
  TaskParams task;
  std::size_t dim = 16;
  std::size_t epochs = 10;
  TrainOptions train{0.5, 100, 16};
  LmOptions lm;
  std::size_t topk = 32;
  int window = 3;

  void validate() const {
    require(!strategies.empty(), "sweep needs at least one strategy");
    require(!gammas.empty(), "sweep needs at least one gamma");
    for (double g : gammas) require(g >= 0.0 && g <= 1.0, "gammas must lie in [0, 1]");
    require(reps >= 1, "reps must be at least 1");
    require(dim >= 1, "dim must be at least 1");
    require(window >= 1, "window must be at least 1");
  }

  static SweepSpec parse(std::istream& in) {
    SweepSpec s;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
      auto fields = split_ws(line);
      if (fields.empty()) continue;
      auto eq = line.find('=');
      if (eq == std::string::npos)
        throw UsageError(strprintf("sweep spec line %zu: expected key=value", lineno));
      std::string key(trim(std::string_view(line).substr(0, eq)));
      std::string value(trim(std::string_view(line).substr(eq + 1)));
      s.set(key, value);
    }
    s.validate();
    return s;
  }

  void set(const std::string& key, const std::string& value) {
    auto num = [&]() -> double {
      char* end = nullptr;
      double v = std::strtod(value.c_str(), &end);
      if (value.empty() || *end != '\0')
        throw UsageError("sweep spec: bad number for " + key + ": '" + value + "'");
      return v;
    };
    auto count = [&]() -> std::size_t {
      double v = num();
      if (v < 0 || v != std::floor(v))
        throw UsageError("sweep spec: " + key + " must be a non-negative integer");
      return static_cast<std::size_t>(v);
    };
    auto list = [&]() {
      std::vector<std::string> out;
      std::string cur;
      for (char c : value + ",") {
        if (c == ',') {
          auto t = trim(cur);
          if (!t.empty()) out.emplace_back(t);
          cur.clear();
        } else {
          cur += c;
        }
      }
      return out;
    };
    if (key == "strategies") {
      strategies.clear();
      for (const auto& v : list()) strategies.push_back(parse_strategy(v));
    } else if (key == "gammas") {
      gammas.clear();
      for (const auto& v : list()) {
        char* end = nullptr;
        double g = std::strtod(v.c_str(), &end);
        if (*end != '\0') throw UsageError("sweep spec: bad gamma '" + v + "'");
        gammas.push_back(g);
      }
    } else if (key == "reps") {
      reps = count();
    } else if (key == "seed") {
      try {
        seed = std::stoull(value);
      } catch (const std::exception&) {
        throw UsageError("sweep spec: bad seed '" + value + "'");
      }
    } else if (key == "vocab_size") {
      task.vocab_size = count();
    } else if (key == "classes") {
      task.classes = count();
    } else if (key == "sentences") {
      task.sentences = count();
    } else if (key == "length") {
      task.length = count();
    } else if (key == "noise") {
      task.noise = num();
    } else if (key == "zipf") {
      task.zipf = num();
    } else if (key == "test_fraction") {
      task.test_fraction = num();
    } else if (key == "task_seed") {
      task.seed = static_cast<std::uint64_t>(count());
    } else if (key == "dim") {
      dim = count();
    } else if (key == "epochs") {
      epochs = count();
    } else if (key == "lr") {
      train.lr = num();
    } else if (key == "steps") {
      train.steps = count();
    } else if (key == "batch") {
      train.batch_size = count();
    } else if (key == "order") {
      lm.order = static_cast<int>(count());
    } else if (key == "discount") {
      lm.discount = num();
    } else if (key == "alpha") {
      lm.alpha = num();
    } else if (key == "topk") {
      topk = count();
    } else if (key == "window") {
      window = static_cast<int>(count());
    } else {
      throw UsageError("sweep spec: unknown key '" + key + "'");
    }
  }

  // Fully resolved settings, one key=value per line; parse() reads it back.
  std::string to_string() const {
    std::ostringstream o;
    std::vector<std::string> names, gs;
    for (auto s : strategies) names.emplace_back(strategy_name(s));
    for (double g : gammas) gs.push_back(format_exact(g));
    o << "strategies=" << join(names, ",") << '\n'
      << "gammas=" << join(gs, ",") << '\n'
      << "reps=" << reps << '\n'
      << "seed=" << seed << '\n'
      << "vocab_size=" << task.vocab_size << '\n'
      << "classes=" << task.classes << '\n'
      << "sentences=" << task.sentences << '\n'
      << "length=" << task.length << '\n'
      << "noise=" << format_exact(task.noise) << '\n'
      << "zipf=" << format_exact(task.zipf) << '\n'
      << "test_fraction=" << format_exact(task.test_fraction) << '\n'
      << "task_seed=" << task.seed << '\n'
      << "dim=" << dim << '\n'
      << "epochs=" << epochs << '\n'
      << "lr=" << format_exact(train.lr) << '\n'
      << "steps=" << train.steps << '\n'
      << "batch=" << train.batch_size << '\n'
      << "order=" << lm.order << '\n'
      << "discount=" << format_exact(lm.discount) << '\n'
      << "alpha=" << format_exact(lm.alpha) << '\n'
      << "topk=" << topk << '\n'
      << "window=" << window << '\n';
    return o.str();
  }

 private:
  static std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
      s.remove_suffix(1);
    return s;
  }
};

// ---------------------------------------------------------------------------
// Sweep

struct CellResult {
  Strategy strategy = Strategy::kBase;
  double gamma = 0.0;
  std::size_t rep = 0;
  double accuracy = 0.0;
  double seconds = 0.0;
};

struct CellSummary {
  Strategy strategy;
  double gamma;
  std::size_t reps;
  double mean;
  double sd;  // sample standard deviation; 0 for a single repetition
  double seconds;
};

struct SweepResult {
  std::vector<CellResult> cells;

  // One row per (strategy, gamma), in first-appearance order.
  std::vector<CellSummary> summarize() const {
    std::vector<CellSummary> out;
    std::map<std::pair<int, double>, std::vector<const CellResult*>> groups;
    std::vector<std::pair<int, double>> order;
    for (const auto& c : cells) {
      std::pair<int, double> key{static_cast<int>(c.strategy), c.gamma};
      auto& g = groups[key];
      if (g.empty()) order.push_back(key);
      g.push_back(&c);
    }
    for (const auto& key : order) {
      const auto& g = groups[key];
      double sum = 0.0, secs = 0.0;
      for (const auto* c : g) {
        sum += c->accuracy;
        secs += c->seconds;
      }
      const double mean = sum / static_cast<double>(g.size());
      double ss = 0.0;
      for (const auto* c : g) ss += (c->accuracy - mean) * (c->accuracy - mean);
      const double sd = g.size() > 1 ? std::sqrt(ss / static_cast<double>(g.size() - 1)) : 0.0;
      out.push_back({static_cast<Strategy>(key.first), key.second, g.size(), mean, sd, secs});
    }
    return out;
  }
};

// Seed of repetition `rep`. It is shared by every strategy and gamma, so all
// cells of one repetition start from the same model and draw the same
// minibatches; gamma = 0 cells therefore coincide exactly.
inline std::uint64_t rep_seed(std::uint64_t base_seed, std::size_t rep) {
  return derive_seed(base_seed, rep);
}

inline std::vector<Example> to_examples(const AugmentedCorpus& corpus,
                                        std::span<const std::size_t> labels) {
  std::vector<Example> out;
  if (const auto* hard = std::get_if<std::vector<Sentence>>(&corpus)) {
    out.reserve(hard->size());
    for (std::size_t i = 0; i < hard->size(); ++i)
      out.push_back({to_soft((*hard)[i]), labels[i]});
  } else {
    const auto& soft = std::get<std::vector<SoftSentence>>(corpus);
    out.reserve(soft.size());
    for (std::size_t i = 0; i < soft.size(); ++i) out.push_back({soft[i], labels[i]});
  }
  return out;
}

// Trains one model: every epoch re-augments the training split with a fresh
// stream, then runs `train.steps` SGD steps on it. Returns test accuracy.
inline double train_and_evaluate(const SweepSpec& spec, const PreparedTask& task,
                                 const NGramLM& lm, Strategy strategy,
                                 double gamma, std::size_t rep) {
  const std::uint64_t seed = rep_seed(spec.seed, rep);
  Rng rng(seed);
  ToyModel model = ToyModel::init(task.vocab.size(), spec.dim, kTaskLabels, rng);
  const Distribution unigram = unigram_distribution(task.vocab);
  const AugmentResources res{&lm, &unigram};
  for (std::size_t epoch = 0; epoch < spec.epochs; ++epoch) {
    AugmentConfig cfg;
    cfg.strategy = strategy;
    cfg.gamma = gamma;
    cfg.window_k = spec.window;
    cfg.topk = spec.topk;
    cfg.seed = derive_seed(seed, 0x5EED0000ULL + epoch);
    auto aug = augment_corpus(task.train, cfg, res);
    auto examples = to_examples(aug, task.train_labels);
    train_toy(model, examples, spec.train, rng);
  }
  std::vector<Example> test;
  test.reserve(task.test.size());
  for (std::size_t i = 0; i < task.test.size(); ++i)
    test.push_back({to_soft(task.test[i]), task.test_labels[i]});
  return evaluate(model, test);
}

// Runs every (strategy, gamma, rep) cell; cells are independent jobs and may
// run on any number of workers.
inline SweepResult run_sweep(const SweepSpec& spec, const PreparedTask& task,
                             const NGramLM& lm, std::size_t threads = 1) {
  spec.validate();
  SweepResult result;
  for (auto s : spec.strategies)
    for (double g : spec.gammas)
      for (std::size_t r = 0; r < spec.reps; ++r) result.cells.push_back({s, g, r, 0.0, 0.0});
  parallel_for(result.cells.size(), threads, [&](std::size_t i) {
    auto& c = result.cells[i];
    const auto t0 = std::chrono::steady_clock::now();
    c.accuracy = train_and_evaluate(spec, task, lm, c.strategy, c.gamma, c.rep);
    c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  });
  return result;
}

// ---------------------------------------------------------------------------
// Reports

inline void write_sweep_csv(std::ostream& out, const SweepResult& r) {
  out << "strategy,gamma,rep,accuracy\n";
  for (const auto& c : r.cells)
    out << strategy_name(c.strategy) << ',' << format_exact(c.gamma) << ',' << c.rep << ','
        << format_exact(c.accuracy) << '\n';
}

inline SweepResult parse_sweep_csv(std::istream& in) {
  SweepResult r;
  std::string line;
  if (!std::getline(in, line) || line != "strategy,gamma,rep,accuracy")
    throw DataError("sweep.csv: bad header");
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 4) throw DataError(strprintf("sweep.csv line %zu: expected 4 fields", lineno));
    try {
      r.cells.push_back({parse_strategy(f[0]), std::stod(f[1]),
                         static_cast<std::size_t>(std::stoull(f[2])), std::stod(f[3]), 0.0});
    } catch (const std::exception&) {
      throw DataError(strprintf("sweep.csv line %zu: bad field", lineno));
    }
  }
  return r;
}

inline void write_timing_csv(std::ostream& out, const SweepResult& r) {
  out << "strategy,gamma,rep,seconds\n";
  for (const auto& c : r.cells)
    out << strategy_name(c.strategy) << ',' << format_exact(c.gamma) << ',' << c.rep << ','
        << strprintf("%.6f", c.seconds) << '\n';
}

inline void write_summary_csv(std::ostream& out, const SweepResult& r) {
  out << "strategy,gamma,reps,mean,sd\n";
  for (const auto& s : r.summarize())
    out << strategy_name(s.strategy) << ',' << format_exact(s.gamma) << ',' << s.reps << ','
        << format_exact(s.mean) << ',' << format_exact(s.sd) << '\n';
}

// Mean accuracy per (gamma, strategy).
inline void write_accuracy_csv(std::ostream& out, const SweepResult& r) {
  out << "gamma,strategy,accuracy\n";
  for (const auto& s : r.summarize())
    out << format_exact(s.gamma) << ',' << strategy_name(s.strategy) << ','
        << format_exact(s.mean) << '\n';
}

// Strategies as rows, gammas as columns, mean accuracy in each cell.
inline void write_pivot_csv(std::ostream& out, const SweepResult& r) {
  std::vector<Strategy> rows;
  std::vector<double> cols;
  std::map<std::pair<int, double>, double> mean;
  for (const auto& s : r.summarize()) {
    if (std::find(rows.begin(), rows.end(), s.strategy) == rows.end()) rows.push_back(s.strategy);
    if (std::find(cols.begin(), cols.end(), s.gamma) == cols.end()) cols.push_back(s.gamma);
    mean[{static_cast<int>(s.strategy), s.gamma}] = s.mean;
  }
  out << "strategy";
  for (double g : cols) out << ',' << format_exact(g);
  out << '\n';
  for (auto s : rows) {
    out << strategy_name(s);
    for (double g : cols) {
      out << ',';
      auto it = mean.find({static_cast<int>(s), g});
      if (it != mean.end()) out << format_exact(it->second);
    }
    out << '\n';
  }
}

// Plain-text check of the orderings the method is expected to show: soft
// best at every gamma > 0, and other strategies falling below base at the
// largest gammas. Informational only.
inline void write_claims(std::ostream& out, const SweepResult& r) {
  std::map<double, std::map<Strategy, double>> by_gamma;
  for (const auto& s : r.summarize()) by_gamma[s.gamma][s.strategy] = s.mean;
  double base = std::nan("");
  for (const auto& [g, m] : by_gamma)
    if (auto it = m.find(Strategy::kBase); it != m.end() && g == 0.0) base = it->second;
  if (std::isnan(base))
    for (const auto& [g, m] : by_gamma)
      if (auto it = m.find(Strategy::kBase); it != m.end()) base = it->second;
  out << "base mean accuracy: " << (std::isnan(base) ? std::string("n/a") : strprintf("%.4f", base))
      << '\n';
  for (const auto& [g, m] : by_gamma) {
    if (g == 0.0) continue;
    auto soft = m.find(Strategy::kSoft);
    if (soft != m.end()) {
      bool best = true;
      for (const auto& [s, v] : m)
        if (s != Strategy::kSoft && s != Strategy::kBase && v > soft->second) best = false;
      out << "gamma=" << format_exact(g) << " soft=" << strprintf("%.4f", soft->second)
          << " best_augmenter=" << (best ? "yes" : "no") << '\n';
    }
    if (g > 0.15 && !std::isnan(base)) {
      for (const auto& [s, v] : m) {
        if (s == Strategy::kBase || s == Strategy::kSoft) continue;
        out << "gamma=" << format_exact(g) << ' ' << strategy_name(s) << '='
            << strprintf("%.4f", v) << " below_base=" << (v < base ? "yes" : "no") << '\n';
      }
    }
  }
}

// Writes sweep.csv, pivot.csv, summary.csv, accuracy.csv, claims.txt and
// timing.csv into `outdir`. Everything except timing.csv depends only on the
// sweep inputs.
inline void emit_report(const SweepResult& r, const std::filesystem::path& outdir) {
  std::error_code ec;
  std::filesystem::create_directories(outdir, ec);
  if (ec) throw DataError("cannot create output directory: " + outdir.string());
  auto write = [&](const char* name, auto&& fn) {
    auto out = open_output((outdir / name).string());
    fn(out);
    if (!out) throw DataError("write failed: " + (outdir / name).string());
  };
  write("sweep.csv", [&](std::ostream& o) { write_sweep_csv(o, r); });
  write("pivot.csv", [&](std::ostream& o) { write_pivot_csv(o, r); });
  write("summary.csv", [&](std::ostream& o) { write_summary_csv(o, r); });
  write("accuracy.csv", [&](std::ostream& o) { write_accuracy_csv(o, r); });
  write("claims.txt", [&](std::ostream& o) { write_claims(o, r); });
  write("timing.csv", [&](std::ostream& o) { write_timing_csv(o, r); });
}

}  // namespace softaug
