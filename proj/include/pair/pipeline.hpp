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

#pragma once

/// \file pipeline.hpp
/// End-to-end pipeline variants for ablation runs.
///
/// The distillation products (warm-up retriever, pseudo labels for the
/// unlabeled queries, relabeled training queries) do not depend on the
/// variant, so they are built once and shared.

#include <string>
#include <vector>

#include "pair/distill.hpp"
#include "pair/evalkit.hpp"
#include "pair/index.hpp"
#include "pair/trainer.hpp"

namespace pair {

enum class Variant { full, no_psr, no_kd, psr_ft, no_sp, no_pt };

inline constexpr Variant kAllVariants[] = {Variant::full,   Variant::no_psr, Variant::no_kd,
                                           Variant::psr_ft, Variant::no_sp,  Variant::no_pt};

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::no_psr: return "no_psr";
    case Variant::no_kd: return "no_kd";
    case Variant::psr_ft: return "psr_ft";
    case Variant::no_sp: return "no_sp";
    case Variant::no_pt: return "no_pt";
  }
  return "?";
}

inline Variant parse_variant(std::string_view s) {
  for (auto v : kAllVariants)
    if (to_string(v) == s) return v;
  fail_usage("unknown variant '" + std::string(s) + "' (expected full, no_psr, no_kd, psr_ft, no_sp or no_pt)");
}

struct PipelineConfig {
  TrainConfig train;
  PseudoLabelConfig pseudo;
  std::size_t retriever_epochs = 5;
  std::vector<std::size_t> ks{5, 20, 100};
  std::size_t margin_top_n = 100;
};

/// Settings tuned on the default synthetic collection: a smaller hash
/// table, long pre-training and short fine-tuning.
inline PipelineConfig synthetic_pipeline_config(std::uint64_t seed) {
  PipelineConfig c;
  c.train.dims = {1u << 14, 128, 128, 128};
  c.train.epochs_pretrain = 10;
  c.train.epochs_finetune = 2;
  c.train.seed = seed;
  c.pseudo.seed = seed;
  c.retriever_epochs = 2;
  return c;
}

/// Union of two judgment sets; query order follows `a`, then new queries of `b`.
inline GoldQrels merge_qrels(GoldQrels a, const GoldQrels& b) {
  for (const auto& q : b.query_order)
    for (const auto& p : b.positives.at(q)) a.add(q, p);
  return a;
}

struct PipelineInputs {
  Corpus train;      // labeled training queries
  Corpus dev;        // held-out labeled queries
  Corpus unlabeled;  // queries without judgments
};

struct DistilledData {
  DualEncoder retriever;
  PseudoLabelSet pseudo;                 // over unlabeled queries
  PseudoLabelSet relabeled;              // over training queries
  std::vector<TrainExample> gold_mined;  // gold positives, retrieved non-gold negatives, no teacher
};

/// Gold positives paired with the top retrieved non-positive passages.
inline std::vector<TrainExample> mine_negatives(const Corpus& c, const Retriever& r, std::size_t top_k) {
  auto examples = gold_examples(c);
  for (auto& ex : examples) {
    for (const auto& h : r.retrieve(c.query(ex.query_id), top_k))
      if (!c.is_positive(ex.query_id, h.id)) ex.hard_negative_ids.push_back(h.id);
  }
  return examples;
}

/// Warm-up retriever: the dual encoder trained with the query-centric loss
/// on gold data, hard negatives from BM25.
inline DualEncoder train_warmup_retriever(const Corpus& train, const PipelineConfig& cfg) {
  auto tc = cfg.train;
  tc.seed = hash_combine({cfg.train.seed, 0x52455452ULL});
  const OverlapRetriever bm25(train.passages());
  const auto examples = mine_negatives(train, bm25, cfg.pseudo.top_k);
  return run_stage(initial_encoder(tc), train, examples, tc, Stage::finetune, LossMode::query_only,
                   cfg.retriever_epochs)
      .encoder;
}

inline DistilledData distill(const PipelineInputs& in, const Teacher& teacher, const PipelineConfig& cfg) {
  const unsigned threads = cfg.train.threads;
  DistilledData d{train_warmup_retriever(in.train, cfg), {}, {}, {}};
  const DenseRetriever retriever(d.retriever, build_index(in.train.passages(), d.retriever, threads));
  d.pseudo = generate_pseudo_labels(in.unlabeled, retriever, teacher, cfg.pseudo, threads);
  d.relabeled = relabel_labeled_corpus(in.train, retriever, teacher, cfg.pseudo, threads);
  d.gold_mined = mine_negatives(in.train, retriever, cfg.pseudo.top_k);
  return d;
}

struct VariantResult {
  Variant variant = Variant::full;
  DualEncoder encoder;
  std::vector<StepLog> history;
  EvalReport eval;
  MarginReport margin;
};

/// Training configuration of one variant.
inline TrainConfig variant_config(Variant v, TrainConfig cfg) {
  if (v == Variant::no_psr) cfg.alpha = 0.0;
  if (v == Variant::psr_ft) cfg.use_psr_in_finetune = true;
  if (v == Variant::no_sp) cfg.shared_encoder = false;
  return cfg;
}

/// Trains one variant and evaluates it on the dev queries.
inline VariantResult run_variant(Variant v, const PipelineInputs& in, const DistilledData& d,
                                 const PipelineConfig& cfg) {
  const auto tc = variant_config(v, cfg.train);
  VariantResult r;
  r.variant = v;
  DualEncoder enc = initial_encoder(tc);
  if (v != Variant::no_pt) {
    auto pre = v == Variant::no_kd ? pretrain(std::move(enc), in.train, d.gold_mined, tc)
                                   : pretrain(std::move(enc), in.unlabeled, d.pseudo.examples, tc);
    enc = std::move(pre.encoder);
    r.history = std::move(pre.history);
  }
  const auto& ft_data = v == Variant::no_kd ? d.gold_mined : d.relabeled.examples;
  auto ft = finetune(std::move(enc), in.train, ft_data, tc);
  r.encoder = std::move(ft.encoder);
  r.history.insert(r.history.end(), ft.history.begin(), ft.history.end());

  const auto store = build_index(in.dev.passages(), r.encoder, tc.threads);
  std::size_t depth = cfg.margin_top_n;
  for (auto k : cfg.ks) depth = std::max(depth, k);
  const auto hits = batch_search(store, encode_queries(in.dev.queries(), r.encoder, tc.threads), depth, tc.threads);
  const auto run = make_run(in.dev.queries(), in.dev.passages(), hits);
  r.eval = evaluate(run, gold_qrels(in.dev), cfg.ks, to_string(v));
  r.margin = margin_analysis(r.encoder, store, in.dev, cfg.margin_top_n, tc.threads);
  return r;
}

}  // namespace pair
