// Copyright 2026 The pair-toolkit Authors.
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

// `pair`: command-line driver for the retrieval toolkit.
//
// Every artifact is written under --out with a content fingerprint in its
// file name; each command prints the paths it wrote as `<kind>: <path>`.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pair/pipeline.hpp"
#include "pair/synthetic.hpp"

namespace {

using namespace pair;

// ---------------------------------------------------------------------------
// Settings

/// Everything a command may read from the config file.
struct Settings {
  PipelineConfig pipe;
  CrossTrainConfig cross;
  double dev_fraction = 0.2;
  std::string teacher = "auto";
  double teacher_sigma = 0.1;
  std::size_t audit_sample = 1000;
  std::string queries, passages, qrels, unlabeled, unlabeled_qrels;
  std::size_t synthetic_topics = 50;
  unsigned threads = 1;
  std::uint64_t seed = 1;
  std::string out = "pair-out";
};

std::vector<std::size_t> parse_ks(const std::string& key, const std::string& v) {
  std::vector<std::size_t> ks;
  for (const auto& f : split(v, ',')) {
    try {
      std::size_t used = 0;
      const auto k = std::stoull(f, &used);
      if (used != f.size() || k == 0) throw std::invalid_argument(f);
      ks.push_back(k);
    } catch (const std::exception&) {
      fail_usage(key + " expects positive integers separated by commas, got '" + v + "'");
    }
  }
  return ks;
}

void set_key(Settings& s, const std::string& key, const std::string& value) {
  auto number = [&] {
    try {
      std::size_t used = 0;
      const double v = std::stod(value, &used);
      if (used != value.size()) throw std::invalid_argument(value);
      return v;
    } catch (const std::exception&) {
      fail_usage("config key '" + key + "' expects a number, got '" + value + "'");
    }
  };
  auto count = [&]() -> std::size_t {
    const double v = number();
    if (v < 0 || v != std::floor(v)) fail_usage("config key '" + key + "' expects a non-negative integer");
    return static_cast<std::size_t>(v);
  };
  if (key == "seed") {
    s.seed = count();
  } else if (key == "threads") {
    s.threads = static_cast<unsigned>(count());
  } else if (s.pipe.train.set(key, value)) {
  } else if (key == "s_pos") s.pipe.pseudo.s_pos = number();
  else if (key == "s_neg") s.pipe.pseudo.s_neg = number();
  else if (key == "top_k") s.pipe.pseudo.top_k = count();
  else if (key == "max_negs_per_pos") s.pipe.pseudo.max_negs_per_pos = count();
  else if (key == "retriever_epochs") s.pipe.retriever_epochs = count();
  else if (key == "ks") s.pipe.ks = parse_ks(key, value);
  else if (key == "margin_top_n") s.pipe.margin_top_n = count();
  else if (key == "dev_fraction") s.dev_fraction = number();
  else if (key == "teacher") s.teacher = value;
  else if (key == "teacher_sigma") s.teacher_sigma = number();
  else if (key == "teacher_epochs") s.cross.epochs = count();
  else if (key == "teacher_lr") s.cross.lr = number();
  else if (key == "teacher_vocab") s.cross.dims.vocab = static_cast<std::uint32_t>(count());
  else if (key == "teacher_emb") s.cross.dims.emb = static_cast<std::uint32_t>(count());
  else if (key == "teacher_hidden") s.cross.dims.hidden = static_cast<std::uint32_t>(count());
  else if (key == "audit_sample") s.audit_sample = count();
  else if (key == "queries") s.queries = value;
  else if (key == "passages") s.passages = value;
  else if (key == "qrels") s.qrels = value;
  else if (key == "unlabeled") s.unlabeled = value;
  else if (key == "unlabeled_qrels") s.unlabeled_qrels = value;
  else if (key == "synthetic_topics") s.synthetic_topics = count();
  else if (key == "out") s.out = value;
  else fail_usage("unknown config key '" + key + "'");
}

/// Flags shared by all commands.
struct Globals {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<std::string> out;
};

/// Defaults, then the config file, then --set pairs, then global flags.
/// `base` supplies the defaults (used for the synthetic settings).
Settings load_settings(const Globals& g, Settings base = {}) {
  Settings s = std::move(base);
  s.threads = default_threads();
  if (!g.config.empty())
    for (const auto& [k, v] : parse_config_text(read_file(g.config), g.config)) set_key(s, k, v);
  for (const auto& kv : g.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) fail_usage("--set expects key=value, got '" + kv + "'");
    set_key(s, std::string(trim(kv.substr(0, eq))), std::string(trim(kv.substr(eq + 1))));
  }
  if (g.seed) s.seed = *g.seed;
  if (g.threads) s.threads = *g.threads;
  if (g.out) s.out = *g.out;
  if (s.threads == 0) fail_usage("threads must be positive");
  s.pipe.train.seed = s.seed;
  s.pipe.pseudo.seed = s.seed;
  s.cross.seed = s.seed;
  s.pipe.train.threads = s.threads;
  s.pipe.train.validate();
  s.pipe.pseudo.validate();
  return s;
}

// ---------------------------------------------------------------------------
// Artifacts

std::string write_artifact(const Settings& s, const std::string& kind, const std::string& ext,
                           std::string_view content) {
  std::error_code ec;
  std::filesystem::create_directories(s.out, ec);
  if (ec) fail_data("cannot create output directory '" + s.out + "': " + ec.message());
  const auto path = (std::filesystem::path(s.out) / (kind + "-" + hex64(fnv1a64(content)) + ext)).string();
  write_file(path, content);
  std::cout << kind << ": " << path << '\n';
  return path;
}

std::string require(const std::string& value, const std::string& flag) {
  if (value.empty()) fail_usage("missing " + flag);
  return value;
}

Corpus load_corpus(const Settings& s, bool need_qrels) {
  const auto q = require(s.queries, "--queries");
  const auto p = require(s.passages, "--passages");
  if (need_qrels) require(s.qrels, "--qrels");
  return ingest(q, p, s.qrels.empty() ? std::nullopt : std::optional<std::string>(s.qrels));
}

// ---------------------------------------------------------------------------
// Teachers

/// `overlap`, `oracle:QRELS`, `cross:FILE` or `file:SCORES`.
std::unique_ptr<Teacher> teacher_from_spec(const Settings& s) {
  const auto colon = s.teacher.find(':');
  const auto kind = s.teacher.substr(0, colon);
  const auto arg = colon == std::string::npos ? std::string() : s.teacher.substr(colon + 1);
  if (kind == "overlap") return std::make_unique<OverlapTeacher>();
  if (kind == "oracle" && !arg.empty())
    return std::make_unique<OracleTeacher>(parse_gold_qrels(read_file(arg), arg), s.teacher_sigma, s.seed);
  if (kind == "cross" && !arg.empty())
    return std::make_unique<MiniCrossEncoder>(parse_cross_encoder(read_file(arg)));
  if (kind == "file" && !arg.empty()) return std::make_unique<FileTeacher>(read_file(arg), arg);
  fail_usage("teacher must be overlap, oracle:QRELS, cross:FILE or file:SCORES, got '" + s.teacher + "'");
}

// ---------------------------------------------------------------------------
// Experiment data for ablate and thresholds-sweep

struct Experiment {
  Corpus labeled;
  Corpus unlabeled;
  std::optional<GoldQrels> unlabeled_truth;
};

bool uses_synthetic(const Settings& s) { return s.queries.empty() && s.passages.empty(); }

Experiment load_experiment(const Settings& s, std::uint64_t seed) {
  if (uses_synthetic(s)) {
    auto d = make_synthetic({.topics = s.synthetic_topics, .seed = seed});
    return {std::move(d.labeled), std::move(d.unlabeled), std::move(d.unlabeled_truth)};
  }
  Experiment e{load_corpus(s, true), {}, std::nullopt};
  e.unlabeled = ingest_queries(require(s.unlabeled, "unlabeled (an unlabeled query file)"), e.labeled.passage_store());
  if (!s.unlabeled_qrels.empty()) e.unlabeled_truth = parse_gold_qrels(read_file(s.unlabeled_qrels), s.unlabeled_qrels);
  return e;
}

/// Teacher for one seed of an experiment. `auto` picks the noisy oracle when
/// judgments of the unlabeled queries exist, the mini cross-encoder otherwise.
std::unique_ptr<Teacher> experiment_teacher(const Settings& s, const Experiment& e, const Corpus& train,
                                            std::uint64_t seed) {
  std::string kind = s.teacher;
  if (kind == "auto") kind = e.unlabeled_truth ? "oracle" : "cross";
  if (kind == "oracle") {
    if (!e.unlabeled_truth) fail_usage("teacher=oracle needs unlabeled_qrels");
    return std::make_unique<OracleTeacher>(merge_qrels(gold_qrels(train), *e.unlabeled_truth), s.teacher_sigma, seed);
  }
  if (kind == "cross") {
    auto cfg = s.cross;
    cfg.seed = seed;
    return std::make_unique<MiniCrossEncoder>(train_mini_cross_encoder(train, cfg));
  }
  return teacher_from_spec(s);
}

struct SeedSetup {
  Experiment data;
  PipelineInputs inputs;
  PipelineConfig cfg;
  std::unique_ptr<Teacher> teacher;
};

SeedSetup seed_setup(const Settings& s, std::uint64_t seed) {
  SeedSetup r{load_experiment(s, seed), {}, s.pipe, nullptr};
  auto sp = split(r.data.labeled, s.dev_fraction, seed);
  r.inputs = {std::move(sp.train), std::move(sp.dev), r.data.unlabeled};
  r.cfg.train.seed = seed;
  r.cfg.pseudo.seed = seed;
  r.teacher = experiment_teacher(s, r.data, r.inputs.train, seed);
  return r;
}

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

// ---------------------------------------------------------------------------
// Commands

void cmd_ingest(const Settings& s) {
  const auto c = load_corpus(s, false);
  const auto n = counts(c);
  const nlohmann::json j = {{"queries", n.queries}, {"passages", n.passages}, {"qrels", n.qrels},
                            {"unlabeled_queries", n.unlabeled_queries}};
  std::cout << j.dump() << '\n';
  write_artifact(s, "corpus", ".json",
                 nlohmann::json{{"counts", j},
                                {"fingerprint", hex64(fnv1a64(serialize_queries(c) + serialize_passages(c.passages()) +
                                                              serialize_qrels(c)))}}
                         .dump(2) +
                     "\n");
}

void cmd_teacher_train(const Settings& s) {
  const auto c = load_corpus(s, true);
  write_artifact(s, "teacher", ".bin", serialize_cross_encoder(train_mini_cross_encoder(c, s.cross)));
}

void cmd_pseudo_label(const Settings& s, const std::string& retriever_ckpt) {
  const auto c = load_corpus(s, false);
  if (s.teacher == "auto") fail_usage("pseudo-label needs --teacher");
  const auto teacher = teacher_from_spec(s);
  std::unique_ptr<Retriever> retriever;
  if (retriever_ckpt.empty()) {
    retriever = std::make_unique<OverlapRetriever>(c.passages());
  } else {
    auto enc = load_checkpoint(retriever_ckpt).encoder;
    auto store = build_index(c.passages(), enc, s.threads);
    retriever = std::make_unique<DenseRetriever>(std::move(enc), std::move(store));
  }
  // With judgments the queries are relabeled and keep their gold positives.
  const auto set = c.qrels().empty()
                       ? generate_pseudo_labels(c, *retriever, *teacher, s.pipe.pseudo, s.threads)
                       : relabel_labeled_corpus(c, *retriever, *teacher, s.pipe.pseudo, s.threads);
  const auto& st = set.stats;
  std::cout << nlohmann::json{{"queries_kept", st.n_queries_kept},
                              {"positives", st.n_pos},
                              {"negatives", st.n_neg},
                              {"queries_discarded", st.n_discarded},
                              {"candidates_discarded", st.n_discarded_candidates}}
                   .dump()
            << '\n';
  write_artifact(s, "examples", ".jsonl", serialize_examples(c, set.examples));
  write_artifact(s, "scores", ".tsv", serialize_scores(c, set.scores));
}

void cmd_train(const Settings& s, Stage stage, const std::string& examples_file, const std::string& init) {
  const auto c = load_corpus(s, false);
  const auto& cfg = s.pipe.train;
  const auto examples =
      parse_examples(c, read_file(require(examples_file, "--examples")), examples_file, cfg.hard_negs_per_pos);
  DualEncoder enc = init.empty() ? initial_encoder(cfg) : load_checkpoint(init).encoder;
  auto r = stage == Stage::pretrain ? pretrain(std::move(enc), c, examples, cfg) : finetune(std::move(enc), c, examples, cfg);
  const nlohmann::json meta = {{"stage", std::string(to_string(stage))}, {"config", cfg.to_json()}};
  write_artifact(s, "checkpoint", ".bin", serialize_checkpoint(r.encoder, meta));
  write_artifact(s, "log", ".jsonl", serialize_log(r.history));
  if (!r.history.empty()) std::cout << "final: " << r.history.back().to_json().dump() << '\n';
}

void cmd_index(const Settings& s, const std::string& ckpt) {
  const auto& file = require(s.passages, "--passages");
  const auto c = ingest_text("", read_file(file), std::nullopt, "queries", file);
  const auto enc = load_checkpoint(require(ckpt, "--checkpoint")).encoder;
  write_artifact(s, "store", ".bin", serialize_store(build_index(c.passages(), enc, s.threads)));
}

void cmd_search(const Settings& s, const std::string& ckpt, const std::string& store_file, std::size_t k) {
  const auto c = load_corpus(s, false);
  const auto enc = load_checkpoint(require(ckpt, "--checkpoint")).encoder;
  const auto store = store_file.empty() ? build_index(c.passages(), enc, s.threads) : load_store(store_file, fingerprint(enc));
  if (store.size() != c.num_passages()) fail_data("embedding store does not cover the passage collection");
  const auto hits = batch_search(store, encode_queries(c.queries(), enc, s.threads), k, s.threads);
  write_artifact(s, "run", ".trec", serialize_run(make_run(c.queries(), c.passages(), hits)));
}

void cmd_eval(const Settings& s, const std::string& run_file, const std::string& qrels_file, bool mrr) {
  const auto run = parse_run(read_file(require(run_file, "--run")), run_file);
  const auto qrels = parse_gold_qrels(read_file(require(qrels_file, "--qrels")), qrels_file);
  auto r = evaluate(run, qrels, s.pipe.ks);
  if (!mrr) r.mrr_at.clear();
  std::cout << format_metric_row(r);
  write_artifact(s, "eval", ".json", r.to_json().dump(2) + "\n");
}

void cmd_margin(const Settings& s, const std::string& ckpt) {
  const auto c = load_corpus(s, true);
  const auto enc = load_checkpoint(require(ckpt, "--checkpoint")).encoder;
  const auto store = build_index(c.passages(), enc, s.threads);
  const auto r = margin_analysis(enc, store, c, s.pipe.margin_top_n, s.threads);
  std::cout << r.to_json().dump() << '\n';
  write_artifact(s, "margin", ".json", r.to_json().dump(2) + "\n");
}

void cmd_ablate(const Settings& s, const std::vector<Variant>& variants, std::size_t seeds) {
  if (variants.empty()) fail_usage("--variants must name at least one variant");
  if (seeds == 0) fail_usage("--seeds must be positive");
  std::map<Variant, std::map<std::size_t, double>> recall;
  std::map<Variant, double> margin;
  std::string tsv = "seed\tvariant\tmetric\tvalue\n";
  for (std::size_t i = 0; i < seeds; ++i) {
    const std::uint64_t seed = s.seed + i;
    const auto setup = seed_setup(s, seed);
    const auto distilled = distill(setup.inputs, *setup.teacher, setup.cfg);
    for (auto v : variants) {
      const auto r = run_variant(v, setup.inputs, distilled, setup.cfg);
      for (auto [k, x] : r.eval.recall_at) {
        recall[v][k] += x / double(seeds);
        tsv += std::to_string(seed) + "\t" + to_string(v) + "\tR@" + std::to_string(k) + "\t" + format_double(x) + "\n";
      }
      margin[v] += r.margin.margin() / double(seeds);
      tsv += std::to_string(seed) + "\t" + to_string(v) + "\tmargin\t" + format_double(r.margin.margin()) + "\n";
      std::cerr << "seed " << seed << " " << to_string(v) << " R@5 " << fixed(100 * r.eval.recall_at.at(s.pipe.ks.front()), 1)
                << '\n';
    }
  }
  std::cout << "variant";
  for (auto k : s.pipe.ks) std::cout << "\tR@" << k;
  std::cout << "\tmargin\n";
  for (auto v : variants) {
    std::cout << to_string(v);
    for (auto k : s.pipe.ks) std::cout << '\t' << fixed(100 * recall[v][k], 1);
    std::cout << '\t' << fixed(margin[v], 4) << '\n';
  }
  write_artifact(s, "ablation", ".tsv", tsv);
}

void cmd_thresholds_sweep(const Settings& s, const std::vector<std::pair<double, double>>& pairs, std::size_t seeds) {
  if (pairs.empty()) fail_usage("--pairs must list at least one s_pos:s_neg pair");
  if (seeds == 0) fail_usage("--seeds must be positive");
  std::string tsv = "seed\ts_pos\ts_neg\tacc_pos\tacc_neg\tn_pos\tn_neg";
  for (auto k : s.pipe.ks) tsv += "\tR@" + std::to_string(k);
  tsv += "\n";
  struct Row {
    double acc_pos = 0, acc_neg = 0;
    std::map<std::size_t, double> recall;
  };
  std::vector<Row> rows(pairs.size());
  for (std::size_t i = 0; i < seeds; ++i) {
    const std::uint64_t seed = s.seed + i;
    auto setup = seed_setup(s, seed);
    for (std::size_t j = 0; j < pairs.size(); ++j) {
      auto cfg = setup.cfg;
      cfg.pseudo.s_pos = pairs[j].first;
      cfg.pseudo.s_neg = pairs[j].second;
      cfg.pseudo.validate();
      const auto d = distill(setup.inputs, *setup.teacher, cfg);
      // Audit the unlabeled pseudo labels when their truth is known, the
      // relabeled training queries otherwise.
      const auto& set = setup.data.unlabeled_truth ? d.pseudo : d.relabeled;
      const auto& corpus = setup.data.unlabeled_truth ? setup.inputs.unlabeled : setup.inputs.train;
      const auto gold = setup.data.unlabeled_truth ? *setup.data.unlabeled_truth : gold_qrels(setup.inputs.train);
      std::set<QueryId> labeled;
      for (const auto& ex : set.examples) labeled.insert(ex.query_id);
      const auto audit = audit_quality(corpus, set, gold, std::min(s.audit_sample, labeled.size()), seed);
      const auto r = run_variant(Variant::full, setup.inputs, d, cfg);
      rows[j].acc_pos += audit.acc_pos / double(seeds);
      rows[j].acc_neg += audit.acc_neg / double(seeds);
      tsv += std::to_string(seed) + "\t" + format_double(pairs[j].first) + "\t" + format_double(pairs[j].second) + "\t" +
             format_double(audit.acc_pos) + "\t" + format_double(audit.acc_neg) + "\t" + std::to_string(audit.n_pos) +
             "\t" + std::to_string(audit.n_neg);
      for (auto [k, x] : r.eval.recall_at) {
        rows[j].recall[k] += x / double(seeds);
        tsv += "\t" + format_double(x);
      }
      tsv += "\n";
    }
  }
  std::cout << "s_pos\ts_neg\tacc_pos\tacc_neg";
  for (auto k : s.pipe.ks) std::cout << "\tR@" << k;
  std::cout << '\n';
  for (std::size_t j = 0; j < pairs.size(); ++j) {
    std::cout << pairs[j].first << '\t' << pairs[j].second << '\t' << fixed(100 * rows[j].acc_pos, 1) << '\t'
              << fixed(100 * rows[j].acc_neg, 1);
    for (auto k : s.pipe.ks) std::cout << '\t' << fixed(100 * rows[j].recall[k], 1);
    std::cout << '\n';
  }
  write_artifact(s, "sweep", ".tsv", tsv);
}

std::vector<std::pair<double, double>> parse_pairs(const std::vector<std::string>& items) {
  std::vector<std::pair<double, double>> out;
  for (const auto& it : items) {
    const auto f = split(it, ':');
    try {
      if (f.size() != 2) throw std::invalid_argument(it);
      std::size_t a = 0, b = 0;
      const double pos = std::stod(f[0], &a), neg = std::stod(f[1], &b);
      if (a != f[0].size() || b != f[1].size()) throw std::invalid_argument(it);
      out.emplace_back(pos, neg);
    } catch (const std::exception&) {
      fail_usage("--pairs expects s_pos:s_neg items, got '" + it + "'");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Command line

struct CorpusFlags {
  std::string queries, passages, qrels;
};

void add_corpus_flags(CLI::App* sub, CorpusFlags& f, bool qrels) {
  sub->add_option("--queries", f.queries, "Queries TSV (<id>\\t<text>)");
  sub->add_option("--passages", f.passages, "Passages TSV (<id>\\t<text>)");
  if (qrels) sub->add_option("--qrels", f.qrels, "Relevance judgments (<qid> 0 <pid> 1)");
}

// Accepted before or after the command name.
void add_global_flags(CLI::App* app, Globals& g) {
  app->add_option("--config", g.config, "Flat key = value configuration file");
  app->add_option("--set", g.sets, "Override one configuration key (key=value); repeatable");
  app->add_option("--seed", g.seed, "Random seed for every stage");
  app->add_option("--threads", g.threads, "Worker threads (default: PAIR_THREADS or 1)");
  app->add_option("--out", g.out, "Output directory for artifacts (default: pair-out)");
}

void apply(Settings& s, const CorpusFlags& f) {
  if (!f.queries.empty()) s.queries = f.queries;
  if (!f.passages.empty()) s.passages = f.passages;
  if (!f.qrels.empty()) s.qrels = f.qrels;
}

int run(int argc, char** argv) {
  CLI::App app{"Dense passage retrieval with query- and passage-centric training.", "pair"};
  app.require_subcommand(1);
  Globals g;
  add_global_flags(&app, g);

  CorpusFlags cf;
  std::string ckpt, store, examples, init, run_file, retriever, teacher;
  std::optional<std::size_t> epochs, top_k, top_n, k_search;
  std::optional<double> lr, alpha, s_pos, s_neg;
  std::vector<std::size_t> ks;
  bool mrr = false;
  std::vector<std::string> variant_names{"full", "no_psr", "no_kd", "psr_ft", "no_sp", "no_pt"};
  std::vector<std::string> pair_items{"0.9:0.1", "0.8:0.2", "0.7:0.3", "0.6:0.4"};
  std::size_t seeds = 1;

  auto* ingest_cmd = app.add_subcommand("ingest", "Validate a corpus and report its counts");
  add_corpus_flags(ingest_cmd, cf, true);

  auto* teacher_cmd = app.add_subcommand("teacher-train", "Train the mini cross-encoder teacher on labeled data");
  add_corpus_flags(teacher_cmd, cf, true);

  auto* pseudo_cmd = app.add_subcommand(
      "pseudo-label", "Label retrieved candidates with a teacher; with --qrels, relabel labeled queries");
  add_corpus_flags(pseudo_cmd, cf, true);
  pseudo_cmd->add_option("--teacher", teacher, "overlap, oracle:QRELS, cross:FILE or file:SCORES");
  pseudo_cmd->add_option("--retriever", retriever, "Checkpoint of the candidate retriever (default: BM25)");
  pseudo_cmd->add_option("--s-pos", s_pos, "Positive threshold (score > s_pos)");
  pseudo_cmd->add_option("--s-neg", s_neg, "Negative threshold (score < s_neg)");
  pseudo_cmd->add_option("--top-k", top_k, "Candidates per query");

  CLI::App* train_cmds[2] = {app.add_subcommand("pretrain", "Pre-train with the combined loss on pseudo labels"),
                             app.add_subcommand("finetune", "Fine-tune on labeled and relabeled examples")};
  for (auto* sub : train_cmds) {
    add_corpus_flags(sub, cf, false);
    sub->add_option("--examples", examples, "Training examples (JSON lines)")->required();
    sub->add_option("--init", init, "Start from this checkpoint (default: random initialization)");
    sub->add_option("--epochs", epochs, "Epochs of this stage");
    sub->add_option("--lr", lr, "Peak learning rate");
    sub->add_option("--alpha", alpha, "Weight of the passage-centric loss");
  }

  auto* index_cmd = app.add_subcommand("index", "Encode every passage into an embedding store");
  index_cmd->add_option("--passages", cf.passages, "Passages TSV (<id>\\t<text>)");
  index_cmd->add_option("--checkpoint", ckpt, "Encoder checkpoint")->required();

  auto* search_cmd = app.add_subcommand("search", "Retrieve the top passages for every query");
  add_corpus_flags(search_cmd, cf, false);
  search_cmd->add_option("--checkpoint", ckpt, "Encoder checkpoint")->required();
  search_cmd->add_option("--store", store, "Embedding store built from the same checkpoint");
  search_cmd->add_option("--k", k_search, "Passages per query (default: 100)");

  auto* eval_cmd = app.add_subcommand("eval", "Score a run file against judgments");
  eval_cmd->add_option("--run", run_file, "Run file (TREC format)")->required();
  eval_cmd->add_option("--qrels", cf.qrels, "Relevance judgments")->required();
  eval_cmd->add_option("--k", ks, "Cut-offs, e.g. 5,20,100")->delimiter(',');
  eval_cmd->add_flag("--mrr", mrr, "Also report MRR at each cut-off");

  auto* margin_cmd = app.add_subcommand("margin", "Mean similarity of positives to queries and to negatives");
  add_corpus_flags(margin_cmd, cf, true);
  margin_cmd->add_option("--checkpoint", ckpt, "Encoder checkpoint")->required();
  margin_cmd->add_option("--top-n", top_n, "Retrieved passages per query (default: 100)");

  auto* ablate_cmd = app.add_subcommand(
      "ablate", "Train and evaluate pipeline variants; without a configured corpus, on the synthetic collection");
  ablate_cmd->add_option("--variants", variant_names, "Comma-separated variants")->delimiter(',');
  ablate_cmd->add_option("--seeds", seeds, "Number of seeds, starting at --seed");
  ablate_cmd->add_option("--k", ks, "Recall cut-offs, e.g. 5,20,100")->delimiter(',');

  auto* sweep_cmd = app.add_subcommand("thresholds-sweep", "Pseudo-label quality and retrieval per threshold pair");
  sweep_cmd->add_option("--pairs", pair_items, "Comma-separated s_pos:s_neg pairs")->delimiter(',');
  sweep_cmd->add_option("--seeds", seeds, "Number of seeds, starting at --seed");
  sweep_cmd->add_option("--k", ks, "Recall cut-offs, e.g. 5,20,100")->delimiter(',');

  for (auto* sub : app.get_subcommands({})) add_global_flags(sub, g);
  if (argc > 1 && argv[1][0] != '-' && !app.get_subcommand_no_throw(argv[1])) {
    std::cerr << "pair: error: unknown command '" << argv[1] << "' (see pair --help)\n";
    return 1;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "pair: error: " << e.what() << '\n';
    return 1;
  }

  auto* cmd = app.get_subcommands().front();
  const std::string name = cmd->get_name();
  const bool experiment = name == "ablate" || name == "thresholds-sweep";
  Settings base;
  if (experiment) base.pipe = synthetic_pipeline_config(1);
  Settings s = load_settings(g, std::move(base));
  apply(s, cf);
  if (!teacher.empty()) s.teacher = teacher;
  if (s_pos) s.pipe.pseudo.s_pos = *s_pos;
  if (s_neg) s.pipe.pseudo.s_neg = *s_neg;
  if (top_k) s.pipe.pseudo.top_k = *top_k;
  if (top_n) s.pipe.margin_top_n = *top_n;
  if (lr) s.pipe.train.lr = *lr;
  if (alpha) s.pipe.train.alpha = *alpha;
  if (epochs) (name == "pretrain" ? s.pipe.train.epochs_pretrain : s.pipe.train.epochs_finetune) = *epochs;
  if (!ks.empty()) {
    for (auto k : ks)
      if (k == 0) fail_usage("--k values must be positive");
    s.pipe.ks = ks;
  }
  s.pipe.train.validate();
  s.pipe.pseudo.validate();

  if (name == "ingest") cmd_ingest(s);
  else if (name == "teacher-train") cmd_teacher_train(s);
  else if (name == "pseudo-label") cmd_pseudo_label(s, retriever);
  else if (name == "pretrain") cmd_train(s, Stage::pretrain, examples, init);
  else if (name == "finetune") cmd_train(s, Stage::finetune, examples, init);
  else if (name == "index") cmd_index(s, ckpt);
  else if (name == "search") cmd_search(s, ckpt, store, k_search.value_or(100));
  else if (name == "eval") cmd_eval(s, run_file, cf.qrels, mrr);
  else if (name == "margin") cmd_margin(s, ckpt);
  else if (name == "ablate") {
    std::vector<Variant> vs;
    for (const auto& v : variant_names) vs.push_back(parse_variant(v));
    cmd_ablate(s, vs, seeds);
  } else if (name == "thresholds-sweep") cmd_thresholds_sweep(s, parse_pairs(pair_items), seeds);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const pair::Error& e) {
    std::cerr << "pair: error: " << e.what() << '\n';
    switch (e.kind()) {
      case pair::ErrorKind::usage: return 1;
      case pair::ErrorKind::data: return 2;
      case pair::ErrorKind::numeric: return 3;
    }
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "pair: error: " << e.what() << '\n';
    return 2;
  }
}
