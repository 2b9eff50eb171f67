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

// softaug command-line interface.
//
// Exit codes: 0 success, 1 data error, 2 usage error. Every command echoes
// its resolved configuration to stderr.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "CLI11.hpp"
#include "softaug/softaug.hpp"

namespace {

using namespace softaug;

class ConfigLog {
 public:
  explicit ConfigLog(std::string command) : command_(std::move(command)) {}
  template <typename T>
  ConfigLog& add(const std::string& key, const T& value, bool defaulted = false) {
    std::ostringstream o;
    o << value;
    items_.push_back(key + "=" + o.str() + (defaulted ? " (default)" : ""));
    return *this;
  }
  ConfigLog& raw(const std::string& item) {
    items_.push_back(item);
    return *this;
  }
  void print() const {
    std::cerr << "[softaug " << command_ << "]";
    for (const auto& i : items_) std::cerr << ' ' << i;
    std::cerr << '\n';
  }

 private:
  std::string command_;
  std::vector<std::string> items_;
};

void finish(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) throw DataError("write failed: " + path);
}

// Corpus lines with UTF-8 validated and byte offsets tracked across lines.
template <typename Fn>
void for_each_line(const std::string& path, Fn&& fn) {
  auto in = open_input(path);
  std::string line;
  std::size_t offset = 0;
  while (std::getline(in, line)) {
    check_utf8(line, offset);
    offset += line.size() + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    fn(line);
  }
}

NGramLM load_lm(const std::string& path) {
  auto in = open_input(path);
  return NGramLM::load(in);
}

// ---------------------------------------------------------------------------
// Corpus commands

int train_bpe(const std::string& input, std::size_t merges, const std::string& output) {
  ConfigLog("train-bpe").add("input", input).add("merges", merges).add("output", output).print();
  std::map<std::string, std::uint64_t> counts;
  for_each_line(input, [&](const std::string& line) {
    for (auto w : split_ws(line)) ++counts[std::string(w)];
  });
  if (counts.empty()) throw DataError("empty corpus: " + input);
  MergeTable table = learn_bpe(counts, merges);
  auto out = open_output(output);
  table.save(out);
  finish(out, output);
  std::cout << "merges learned: " << table.size() << '\n';
  return 0;
}

int apply_bpe_cmd(const std::string& input, const std::string& codes, const std::string& output) {
  ConfigLog("apply-bpe").add("input", input).add("codes", codes).add("output", output).print();
  auto cin = open_input(codes);
  MergeTable table = MergeTable::load(cin);
  auto out = open_output(output);
  std::unordered_map<std::string, std::vector<std::string>> cache;
  for_each_line(input, [&](const std::string& line) {
    bool first = true;
    for (auto w : split_ws(line)) {
      auto [it, fresh] = cache.try_emplace(std::string(w));
      if (fresh) it->second = bpe_word(w, table);
      for (const auto& sub : it->second) {
        if (!first) out << ' ';
        first = false;
        out << sub;
      }
    }
    out << '\n';
  });
  finish(out, output);
  return 0;
}

int detok(const std::string& input, const std::string& output) {
  ConfigLog("detok").add("input", input).add("output", output).print();
  auto out = open_output(output);
  for_each_line(input, [&](const std::string& line) { out << remove_bpe(std::string_view(line)) << '\n'; });
  finish(out, output);
  return 0;
}

int vocab_cmd(const std::string& input, std::size_t max_size, const std::string& output) {
  ConfigLog("vocab")
      .add("input", input)
      .add("max-size", max_size == 0 ? std::string("unlimited") : std::to_string(max_size),
           max_size == 0)
      .add("output", output)
      .print();
  VocabBuilder vb;
  auto in = open_input(input);
  std::string line;
  bool any = false;
  while (std::getline(in, line)) {
    any = true;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    vb.add_line(line);
  }
  if (!any) throw DataError("empty corpus: " + input);
  Vocabulary v = vb.finish(max_size == 0 ? std::nullopt : std::optional<std::size_t>(max_size));
  auto out = open_output(output);
  v.save(out);
  finish(out, output);
  std::cout << "vocabulary size: " << v.size() << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// LM commands

int train_lm_cmd(const std::string& input, const std::string& vocab_path, const LmOptions& opt,
                 const std::string& output) {
  ConfigLog("train-lm")
      .add("input", input)
      .add("vocab", vocab_path.empty() ? std::string("<from input>") : vocab_path,
           vocab_path.empty())
      .add("order", opt.order)
      .add("discount", format_exact(opt.discount))
      .add("alpha", format_exact(opt.alpha))
      .add("output", output)
      .print();
  require(opt.discount > 0.0 && opt.discount < 1.0, "--discount must lie in (0, 1)");
  require(opt.order >= 1, "--order must be at least 1");
  require(opt.alpha >= 0.0, "--alpha must be non-negative");
  std::vector<std::string> lines;
  VocabBuilder vb;
  for_each_line(input, [&](const std::string& line) {
    if (split_ws(line).empty()) return;
    vb.add_line(line);
    lines.push_back(line);
  });
  if (lines.empty()) throw DataError("empty corpus: " + input);
  Vocabulary vocab;
  if (vocab_path.empty()) {
    vocab = vb.finish();
  } else {
    auto vin = open_input(vocab_path);
    vocab = Vocabulary::load(vin);
  }
  std::vector<Sentence> corpus;
  corpus.reserve(lines.size());
  for (const auto& l : lines) corpus.push_back(encode(l, vocab));
  NGramLM lm = train_lm(vocab, corpus, opt);
  auto out = open_output(output);
  lm.save(out);
  finish(out, output);
  std::cout << "vocabulary size: " << vocab.size() << '\n';
  std::cout << strprintf("training perplexity: %.4f", lm.perplexity(corpus)) << '\n';
  return 0;
}

int ppl_cmd(const std::string& lm_path, const std::string& input) {
  ConfigLog("ppl").add("lm", lm_path).add("input", input).print();
  NGramLM lm = load_lm(lm_path);
  std::vector<Sentence> corpus;
  for_each_line(input, [&](const std::string& line) {
    if (!split_ws(line).empty()) corpus.push_back(encode(line, lm.vocab()));
  });
  if (corpus.empty()) throw DataError("empty corpus: " + input);
  std::cout << strprintf("%.4f", lm.perplexity(corpus)) << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// augment

// Token ids for a corpus: the base vocabulary plus, for hard outputs, every
// out-of-vocabulary surface appended past its end so text passes through
// unchanged. Models read those extra ids as UNK.
class WorkingVocab {
 public:
  WorkingVocab(const Vocabulary& base, bool extend) : base_(base), extend_(extend) {}

  Sentence encode_line(std::string_view line) {
    Sentence s;
    for (auto tok : split_ws(line)) {
      if (auto id = base_.find(tok)) {
        s.push_back(*id);
      } else if (!extend_) {
        s.push_back(kUnk);
      } else {
        auto [it, fresh] = extra_.try_emplace(std::string(tok), 0);
        if (fresh) {
          it->second = static_cast<TokenId>(base_.size() + extra_surfaces_.size());
          extra_surfaces_.emplace_back(tok);
        }
        s.push_back(it->second);
      }
    }
    return s;
  }

  const std::string& surface(TokenId id) const {
    return id < base_.size() ? base_.surface(id) : extra_surfaces_.at(id - base_.size());
  }

 private:
  const Vocabulary& base_;
  bool extend_;
  std::unordered_map<std::string, TokenId> extra_;
  std::vector<std::string> extra_surfaces_;
};

struct AugmentArgs {
  std::string input, output, lm;
  std::string strategy = "base";
  double gamma = 0.0;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::size_t topk = 32;
  int window = 3;
  std::size_t threads = 0;
};

int augment_cmd(const AugmentArgs& a) {
  AugmentConfig cfg;
  cfg.strategy = parse_strategy(a.strategy);
  cfg.gamma = a.gamma;
  cfg.seed = a.seed;
  cfg.topk = a.topk;
  cfg.window_k = a.window;
  const std::size_t threads = a.threads == 0 ? default_threads() : a.threads;
  ConfigLog("augment")
      .add("input", a.input)
      .add("strategy", a.strategy)
      .add("gamma", format_exact(a.gamma))
      .add("seed", a.seed, !a.seed_given)
      .add("lm", a.lm.empty() ? std::string("<none>") : a.lm)
      .add("topk", a.topk)
      .add("window", a.window)
      .add("threads", threads, a.threads == 0)
      .add("output", a.output)
      .print();
  cfg.validate();
  if (needs_lm(cfg.strategy) && a.lm.empty())
    throw UsageError("strategy '" + a.strategy + "' requires --lm");

  std::optional<NGramLM> lm;
  if (!a.lm.empty()) lm.emplace(load_lm(a.lm));

  // Without an LM the vocabulary (and the smooth unigram) comes from the
  // input corpus itself, which needs a first pass.
  Vocabulary input_vocab;
  if (!lm) {
    VocabBuilder vb;
    for_each_line(a.input, [&](const std::string& line) { vb.add_line(line); });
    input_vocab = vb.finish();
  }
  const Vocabulary& vocab = lm ? lm->vocab() : input_vocab;
  std::optional<Distribution> unigram;
  if (cfg.strategy == Strategy::kSmooth) unigram.emplace(unigram_distribution(vocab));
  AugmentResources res{lm ? &*lm : nullptr, unigram ? &*unigram : nullptr};

  const bool soft = cfg.strategy == Strategy::kSoft;
  WorkingVocab wv(vocab, !soft);
  auto out = open_output(a.output);
  AugmentStats stats;
  std::uint64_t index = 0;
  std::vector<Sentence> chunk;
  constexpr std::size_t kChunk = 8192;

  auto flush = [&] {
    auto result = augment_corpus(chunk, cfg, res, threads, index, &stats);
    if (soft) {
      for (const auto& s : std::get<std::vector<SoftSentence>>(result))
        out << soft_to_jsonl(s) << '\n';
    } else {
      for (const auto& s : std::get<std::vector<Sentence>>(result)) {
        for (std::size_t i = 0; i < s.size(); ++i) {
          if (i) out << ' ';
          out << wv.surface(s[i]);
        }
        out << '\n';
      }
    }
    index += chunk.size();
    chunk.clear();
  };
  for_each_line(a.input, [&](const std::string& line) {
    chunk.push_back(wv.encode_line(line));
    if (chunk.size() == kChunk) flush();
  });
  if (!chunk.empty()) flush();
  finish(out, a.output);
  std::cout << "sentences: " << index << '\n';
  std::cout << "replacement rate: " << strprintf("%.6f", stats.rate()) << " (" << stats.selected
            << '/' << stats.eligible << ")\n";
  return 0;
}

// ---------------------------------------------------------------------------
// grad-check, make-task, sweep

int grad_check_cmd(std::uint64_t seed, bool seed_given, std::size_t vocab_size, std::size_t dim,
                   std::size_t classes, std::size_t instances) {
  ConfigLog("grad-check")
      .add("seed", seed, !seed_given)
      .add("vocab-size", vocab_size)
      .add("dim", dim)
      .add("classes", classes)
      .add("instances", instances)
      .print();
  require(vocab_size >= 1 && dim >= 1 && classes >= 1, "sizes must be positive");
  Rng rng(seed);
  bool ok = true;
  double worst = 0.0;
  for (std::size_t i = 0; i < instances; ++i) {
    Rng r = rng.child(i);
    ToyModel m = random_model(vocab_size, dim, classes, r);
    std::vector<Example> batch;
    for (int b = 0; b < 4; ++b) batch.push_back(random_example(vocab_size, classes, 6, 0.5, 8, r));
    auto rep = grad_check(m, batch);
    worst = std::max(worst, rep.max_rel());
    std::cout << strprintf("instance %zu: embedding %.3e weights %.3e bias %.3e %s\n", i,
                           rep.max_rel_embedding, rep.max_rel_weights, rep.max_rel_bias,
                           rep.pass ? "pass" : "FAIL");
    ok = ok && rep.pass;
  }
  std::cout << strprintf("max relative error %.3e (tolerance %.0e, h=1e-5): %s\n", worst,
                         GradCheckReport::kTolerance, ok ? "PASS" : "FAIL");
  return ok ? 0 : 1;
}

SweepSpec read_spec(const std::string& path) {
  auto in = open_input(path);
  return SweepSpec::parse(in);
}

int make_task_cmd(const std::string& spec_path, const std::string& outdir) {
  SweepSpec spec = read_spec(spec_path);
  ConfigLog log("make-task");
  log.add("spec", spec_path).add("outdir", outdir);
  std::istringstream resolved(spec.to_string());
  for (std::string kv; std::getline(resolved, kv);) log.raw(kv);
  log.print();
  Rng rng(spec.task.seed);
  LabeledCorpus data = make_synthetic_task(spec.task, rng);
  const auto n = data.lines.size();
  const auto n_test = static_cast<std::size_t>(std::floor(spec.task.test_fraction * static_cast<double>(n)));
  std::filesystem::create_directories(outdir);
  auto dump = [&](const char* stem, std::size_t begin, std::size_t end) {
    auto base = std::filesystem::path(outdir) / stem;
    auto txt = open_output(base.string() + ".txt");
    auto lab = open_output(base.string() + ".labels");
    for (std::size_t i = begin; i < end; ++i) {
      txt << data.lines[i] << '\n';
      lab << data.labels[i] << '\n';
    }
    finish(txt, base.string() + ".txt");
    finish(lab, base.string() + ".labels");
  };
  dump("train", 0, n - n_test);
  dump("test", n - n_test, n);
  std::cout << "train sentences: " << n - n_test << "\ntest sentences: " << n_test << '\n';
  return 0;
}

int sweep_cmd(const std::string& spec_path, const std::string& outdir, std::size_t threads_flag) {
  SweepSpec spec = read_spec(spec_path);
  const std::size_t threads = threads_flag == 0 ? default_threads() : threads_flag;
  ConfigLog log("sweep");
  log.add("spec", spec_path).add("outdir", outdir).add("threads", threads, threads_flag == 0);
  std::istringstream resolved(spec.to_string());
  for (std::string kv; std::getline(resolved, kv);) log.raw(kv);
  log.print();

  Rng rng(spec.task.seed);
  PreparedTask task = prepare_task(make_synthetic_task(spec.task, rng), spec.task.test_fraction);
  NGramLM lm = train_lm(task.vocab, task.train, spec.lm);
  SweepResult result = run_sweep(spec, task, lm, threads);
  emit_report(result, outdir);
  std::cout << "strategy   gamma   mean     sd\n";
  for (const auto& s : result.summarize())
    std::cout << strprintf("%-10s %-7s %.4f  %.4f\n", std::string(strategy_name(s.strategy)).c_str(),
                           format_exact(s.gamma).c_str(), s.mean, s.sd);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"softaug: soft contextual data augmentation toolkit"};
  app.require_subcommand(1);
  std::size_t threads = 0;

  std::string input, output, codes, lm_path, vocab_path, spec_path, outdir;

  auto* tb = app.add_subcommand("train-bpe", "learn a BPE merge table");
  std::size_t merges = 0;
  tb->add_option("--input", input, "corpus file")->required();
  tb->add_option("--merges", merges, "number of merges")->required();
  tb->add_option("--output", output, "merges file")->required();

  auto* ab = app.add_subcommand("apply-bpe", "segment a corpus with a merge table");
  ab->add_option("--input", input, "corpus file")->required();
  ab->add_option("--codes", codes, "merges file")->required();
  ab->add_option("--output", output, "segmented corpus")->required();

  auto* dt = app.add_subcommand("detok", "undo BPE segmentation (remove '@@ ')");
  dt->add_option("--input", input, "segmented corpus")->required();
  dt->add_option("--output", output, "output corpus")->required();

  auto* vc = app.add_subcommand("vocab", "build a vocabulary file");
  std::size_t max_size = 0;
  vc->add_option("--input", input, "corpus file")->required();
  vc->add_option("--max-size", max_size, "entries kept besides specials (0 = unlimited)");
  vc->add_option("--output", output, "vocab file")->required();

  auto* tl = app.add_subcommand("train-lm", "train an n-gram language model");
  LmOptions lm_opt;
  tl->add_option("--input", input, "segmented corpus")->required();
  tl->add_option("--vocab", vocab_path, "vocab file (default: built from input)");
  tl->add_option("--order", lm_opt.order, "n-gram order")->capture_default_str();
  tl->add_option("--discount", lm_opt.discount, "absolute discount in (0,1)")->capture_default_str();
  tl->add_option("--alpha", lm_opt.alpha, "unigram additive floor")->capture_default_str();
  tl->add_option("--output", output, "LM file")->required();

  auto* pp = app.add_subcommand("ppl", "perplexity of a corpus under an LM");
  pp->add_option("--lm", lm_path, "LM file")->required();
  pp->add_option("--input", input, "segmented corpus")->required();

  auto* au = app.add_subcommand("augment", "augment a corpus");
  AugmentArgs aa;
  au->add_option("--input", aa.input, "segmented corpus")->required();
  au->add_option("--strategy", aa.strategy, "base|swap|dropout|blank|smooth|lm_sample|soft")
      ->capture_default_str();
  au->add_option("--gamma", aa.gamma, "per-token replacement probability")->capture_default_str();
  auto* seed_opt = au->add_option("--seed", aa.seed, "random seed")->capture_default_str();
  au->add_option("--lm", aa.lm, "LM file (lm_sample, soft)");
  au->add_option("--topk", aa.topk, "soft-word support size (0 = dense)")->capture_default_str();
  au->add_option("--window", aa.window, "swap window")->capture_default_str();
  au->add_option("--threads", aa.threads, "worker cap (0 = all cores)");
  au->add_option("--output", aa.output, "output corpus")->required();

  auto* gc = app.add_subcommand("grad-check", "finite-difference check of the soft-embedding model");
  std::uint64_t gc_seed = 0;
  std::size_t gc_vocab = 50, gc_dim = 8, gc_classes = 3, gc_instances = 10;
  auto* gc_seed_opt = gc->add_option("--seed", gc_seed, "random seed")->capture_default_str();
  gc->add_option("--vocab-size", gc_vocab)->capture_default_str();
  gc->add_option("--dim", gc_dim)->capture_default_str();
  gc->add_option("--classes", gc_classes)->capture_default_str();
  gc->add_option("--instances", gc_instances)->capture_default_str();

  auto* sw = app.add_subcommand("sweep", "strategy x gamma comparison on the synthetic task");
  sw->add_option("--spec", spec_path, "sweep spec file")->required();
  sw->add_option("--outdir", outdir, "report directory")->required();
  sw->add_option("--threads", threads, "worker cap (0 = all cores)");

  auto* mt = app.add_subcommand("make-task", "write the synthetic task corpus");
  mt->add_option("--spec", spec_path, "sweep spec file")->required();
  mt->add_option("--outdir", outdir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*tb) return train_bpe(input, merges, output);
    if (*ab) return apply_bpe_cmd(input, codes, output);
    if (*dt) return detok(input, output);
    if (*vc) return vocab_cmd(input, max_size, output);
    if (*tl) return train_lm_cmd(input, vocab_path, lm_opt, output);
    if (*pp) return ppl_cmd(lm_path, input);
    if (*au) {
      aa.seed_given = seed_opt->count() > 0;
      return augment_cmd(aa);
    }
    if (*gc)
      return grad_check_cmd(gc_seed, gc_seed_opt->count() > 0, gc_vocab, gc_dim, gc_classes,
                            gc_instances);
    if (*sw) return sweep_cmd(spec_path, outdir, threads);
    if (*mt) return make_task_cmd(spec_path, outdir);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
