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

/// \file trainer.hpp
/// Batching, single optimization steps and the two training stages.
///
/// Pre-training minimizes the combined loss on pseudo-labeled data;
/// fine-tuning minimizes the query-centric loss alone (or the combined loss
/// when use_psr_in_finetune is set). Every stage starts a fresh Adam state
/// and a fresh warm-up/decay schedule.

#include <functional>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pair/corpus.hpp"
#include "pair/encoder.hpp"
#include "pair/objective.hpp"
#include "pair/optim.hpp"

namespace pair {

struct TrainConfig {
  double alpha = 0.1;
  std::size_t batch_size = 32;
  std::size_t micro_batches = 1;
  std::size_t hard_negs_per_pos = 4;
  std::size_t epochs_pretrain = 5;
  std::size_t epochs_finetune = 5;
  double lr = 1e-3;
  double warmup_ratio = 0.1;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 5.0;
  std::uint64_t seed = 1;
  bool use_psr_in_finetune = false;
  bool shared_encoder = true;
  PassagePool passage_pool = PassagePool::in_batch_and_hard;
  EncoderDims dims;
  std::uint64_t hash_seed = 0x50414952ULL;
  double init_embedding = 1.0;  // embedding rows start in U(-b, b)
  unsigned threads = 1;

  void validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) fail_usage("alpha must lie in [0, 1]");
    if (!(warmup_ratio >= 0.0 && warmup_ratio < 1.0)) fail_usage("warmup_ratio must lie in [0, 1)");
    if (batch_size < 2) fail_usage("batch_size must be at least 2");
    if (micro_batches < 1) fail_usage("micro_batches must be at least 1");
    if (!(lr >= 0.0)) fail_usage("lr must be non-negative");
    if (!(grad_clip > 0.0)) fail_usage("grad_clip must be positive");
    if (!(init_embedding > 0.0)) fail_usage("init_embedding must be positive");
    dims.validate();
  }

  /// Assigns one field from its textual form. Returns false for unknown keys.
  bool set(const std::string& key, const std::string& value) {
    auto as_double = [&] {
      try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
      } catch (const std::exception&) {
        fail_usage("config key '" + key + "' expects a number, got '" + value + "'");
      }
    };
    auto as_uint = [&]() -> std::uint64_t {
      try {
        std::size_t used = 0;
        if (!value.empty() && value[0] == '-') throw std::invalid_argument(value);
        const auto v = std::stoull(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
      } catch (const std::exception&) {
        fail_usage("config key '" + key + "' expects a non-negative integer, got '" + value + "'");
      }
    };
    auto as_bool = [&] {
      if (value == "true" || value == "1") return true;
      if (value == "false" || value == "0") return false;
      fail_usage("config key '" + key + "' expects true or false, got '" + value + "'");
    };
    if (key == "alpha") alpha = as_double();
    else if (key == "batch_size") batch_size = as_uint();
    else if (key == "micro_batches") micro_batches = as_uint();
    else if (key == "hard_negs_per_pos") hard_negs_per_pos = as_uint();
    else if (key == "epochs_pretrain") epochs_pretrain = as_uint();
    else if (key == "epochs_finetune") epochs_finetune = as_uint();
    else if (key == "lr") lr = as_double();
    else if (key == "warmup_ratio") warmup_ratio = as_double();
    else if (key == "optimizer") {
      if (value != "adam") fail_usage("only optimizer=adam is supported");
    }
    else if (key == "adam_beta1") adam_beta1 = as_double();
    else if (key == "adam_beta2") adam_beta2 = as_double();
    else if (key == "adam_eps") adam_eps = as_double();
    else if (key == "grad_clip") grad_clip = as_double();
    else if (key == "seed") seed = as_uint();
    else if (key == "use_psr_in_finetune") use_psr_in_finetune = as_bool();
    else if (key == "shared_encoder") shared_encoder = as_bool();
    else if (key == "passage_pool") {
      if (value == "in_batch_and_hard") passage_pool = PassagePool::in_batch_and_hard;
      else if (value == "hard_negatives_only") passage_pool = PassagePool::hard_negatives_only;
      else fail_usage("passage_pool must be in_batch_and_hard or hard_negatives_only");
    }
    else if (key == "vocab") dims.vocab = static_cast<std::uint32_t>(as_uint());
    else if (key == "d_emb") dims.emb = static_cast<std::uint32_t>(as_uint());
    else if (key == "d_hidden") dims.hidden = static_cast<std::uint32_t>(as_uint());
    else if (key == "d") dims.out = static_cast<std::uint32_t>(as_uint());
    else if (key == "hash_seed") hash_seed = as_uint();
    else if (key == "init_embedding") init_embedding = as_double();
    else if (key == "threads") threads = static_cast<unsigned>(as_uint());
    else return false;
    return true;
  }

  nlohmann::json to_json() const {
    return {{"alpha", alpha},
            {"batch_size", batch_size},
            {"micro_batches", micro_batches},
            {"hard_negs_per_pos", hard_negs_per_pos},
            {"epochs_pretrain", epochs_pretrain},
            {"epochs_finetune", epochs_finetune},
            {"lr", lr},
            {"warmup_ratio", warmup_ratio},
            {"optimizer", "adam"},
            {"adam_beta1", adam_beta1},
            {"adam_beta2", adam_beta2},
            {"adam_eps", adam_eps},
            {"grad_clip", grad_clip},
            {"seed", seed},
            {"use_psr_in_finetune", use_psr_in_finetune},
            {"shared_encoder", shared_encoder},
            {"passage_pool", passage_pool == PassagePool::in_batch_and_hard ? "in_batch_and_hard" : "hard_negatives_only"},
            {"vocab", dims.vocab},
            {"d_emb", dims.emb},
            {"d_hidden", dims.hidden},
            {"d", dims.out},
            {"hash_seed", hash_seed},
            {"init_embedding", init_embedding}};
  }
};

/// Flat `key = value` lines; `#` starts a comment.
inline std::map<std::string, std::string> parse_config_text(std::string_view content, const std::string& name = "config") {
  std::map<std::string, std::string> out;
  std::size_t line_no = 0, pos = 0;
  while (pos < content.size()) {
    std::size_t end = content.find('\n', pos);
    if (end == std::string_view::npos) end = content.size();
    std::string_view line = content.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) fail_usage(name + ":" + std::to_string(line_no) + ": expected 'key = value'");
    out[std::string(trim(line.substr(0, eq)))] = std::string(trim(line.substr(eq + 1)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Batches

/// Example indices of one logical batch with the hard negatives drawn for
/// each of them.
struct BatchPlan {
  std::vector<std::size_t> examples;
  std::vector<std::vector<PassageId>> negatives;
};

/// Seeded shuffle, then consecutive logical batches of
/// batch_size * micro_batches examples; the last partial batch is dropped.
inline std::vector<BatchPlan> make_batches(const std::vector<TrainExample>& examples, const TrainConfig& cfg,
                                           std::uint64_t epoch_seed) {
  const std::size_t logical = cfg.batch_size * cfg.micro_batches;
  if (examples.size() < logical)
    fail_data("need at least " + std::to_string(logical) + " training examples, got " + std::to_string(examples.size()));
  Rng rng(epoch_seed);
  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);

  std::size_t without_negs = 0;
  std::vector<BatchPlan> plans;
  for (std::size_t start = 0; start + logical <= order.size(); start += logical) {
    BatchPlan plan;
    for (std::size_t i = start; i < start + logical; ++i) {
      const auto& pool = examples[order[i]].hard_negative_ids;
      std::vector<PassageId> negs;
      if (!pool.empty()) {
        for (auto j : rng.sample_without_replacement(pool.size(), cfg.hard_negs_per_pos)) negs.push_back(pool[j]);
        while (negs.size() < cfg.hard_negs_per_pos) negs.push_back(pool[rng.below(pool.size())]);
      } else if (cfg.hard_negs_per_pos > 0) {
        ++without_negs;
      }
      plan.examples.push_back(order[i]);
      plan.negatives.push_back(std::move(negs));
    }
    plans.push_back(std::move(plan));
  }
  if (without_negs) warn(std::to_string(without_negs) + " batched examples carry no hard negatives");
  return plans;
}

// ---------------------------------------------------------------------------
// Steps

enum class Stage { pretrain, finetune };

inline std::string_view to_string(Stage s) { return s == Stage::pretrain ? "pretrain" : "finetune"; }

enum class LossMode { combined, query_only };

struct StepLog {
  std::uint64_t step = 0;
  Stage stage = Stage::pretrain;
  LossReport loss;
  double lr = 0;

  nlohmann::json to_json() const {
    return {{"step", step},
            {"stage", std::string(to_string(stage))},
            {"loss_q", loss.loss_q},
            {"loss_p", loss.loss_p},
            {"loss", loss.loss_combined},
            {"lr", lr}};
  }
};

struct TrainState {
  DualEncoder encoder;
  Adam<float> adam;
  std::uint64_t step = 0;
  std::uint64_t total_steps = 0;
  Stage stage = Stage::pretrain;
  std::vector<StepLog> history;

  TrainState(DualEncoder enc, const TrainConfig& cfg, Stage s, std::uint64_t total)
      : encoder(std::move(enc)), total_steps(total), stage(s) {
    std::vector<std::size_t> sizes;
    for (std::size_t i = 0; i < encoder.num_sets(); ++i)
      for (auto* b : encoder.set(i).blobs()) sizes.push_back(b->size());
    adam = Adam<float>(sizes, {cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps});
  }
};

/// Texts of one batch: B queries, B positives and the flattened hard
/// negatives with their owning example.
struct BatchTexts {
  std::vector<const std::string*> queries;
  std::vector<const std::string*> positives;
  std::vector<const std::string*> negatives;
  std::vector<std::size_t> neg_owner;
  std::vector<PassageId> pos_ids;
  std::vector<PassageId> neg_ids;

  std::size_t size() const { return queries.size(); }
};

inline BatchTexts batch_texts(const BatchPlan& plan, const std::vector<TrainExample>& examples, const Corpus& corpus) {
  BatchTexts t;
  for (std::size_t i = 0; i < plan.examples.size(); ++i) {
    const auto& ex = examples[plan.examples[i]];
    t.queries.push_back(&corpus.query(ex.query_id).text);
    t.positives.push_back(&corpus.passages()[ex.positive_id].text);
    t.pos_ids.push_back(ex.positive_id);
    for (auto n : plan.negatives[i]) {
      t.negatives.push_back(&corpus.passages()[n].text);
      t.neg_ids.push_back(n);
      t.neg_owner.push_back(i);
    }
  }
  return t;
}

template <class Real>
struct BatchGradient {
  LossReport report;
  std::vector<BasicParamGrads<Real>> grads;  // one per parameter set
};

namespace detail {

template <class Real>
struct EncodedText {
  std::size_t set = 0;
  FeatureBag bag;
  EncodeTrace<Real> trace;
};

}  // namespace detail

/// Loss of one batch and its gradient with respect to every parameter set.
/// Encoding fans out over `threads`; the backward pass runs serially in a
/// fixed order, so the result does not depend on the thread count.
template <class Real>
BatchGradient<Real> batch_gradient(const BasicDualEncoder<Real>& enc, const BatchTexts& t, double alpha,
                                   PassagePool pool, unsigned threads = 1, const std::string& where = "batch") {
  const std::size_t B = t.size();
  const std::size_t d = enc.dims().out;
  const std::size_t pset = enc.shared() ? 0 : 1;

  // Row order: queries, positives, negatives.
  std::vector<std::pair<const std::string*, std::size_t>> texts;
  for (auto* q : t.queries) texts.emplace_back(q, 0);
  for (auto* p : t.positives) texts.emplace_back(p, pset);
  for (auto* n : t.negatives) texts.emplace_back(n, pset);

  std::vector<detail::EncodedText<Real>> encoded(texts.size());
  parallel_for(texts.size(), threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const auto& p = enc.set(texts[i].second);
      encoded[i].set = texts[i].second;
      encoded[i].bag = featurize(*texts[i].first, p.hash_seed, p.dims.vocab);
      encoded[i].trace = encode_trace(p, encoded[i].bag);
    }
  });

  BasicTrainBatch<Real> batch;
  batch.q = Matrix<Real>(B, d);
  batch.pos = Matrix<Real>(B, d);
  batch.neg = Matrix<Real>(t.negatives.size(), d);
  batch.pos_ids = t.pos_ids;
  batch.neg_ids = t.neg_ids;
  batch.neg_owner = t.neg_owner;
  auto out_row = [&](std::size_t i) -> std::span<Real> {
    if (i < B) return batch.q.row(i);
    if (i < 2 * B) return batch.pos.row(i - B);
    return batch.neg.row(i - 2 * B);
  };
  for (std::size_t i = 0; i < encoded.size(); ++i)
    std::copy(encoded[i].trace.output.begin(), encoded[i].trace.output.end(), out_row(i).begin());

  CombinedResult<Real> res;
  try {
    res = combined_loss(batch, alpha, pool);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::numeric) throw;
    double max_abs = 0;
    for (const auto* m : {&batch.q, &batch.pos, &batch.neg})
      for (Real x : m->data) max_abs = std::max(max_abs, double(std::abs(x)));
    fail_numeric("non-finite loss in " + where + " (" + e.what() + "; max |encoding| " + std::to_string(max_abs) + ")");
  }
  if (!std::isfinite(res.report.loss_combined)) {
    double max_logit = 0;
    for (std::size_t i = 0; i < B; ++i)
      for (std::size_t j = 0; j < B; ++j)
        max_logit = std::max(max_logit, std::abs(double(similarity<Real>(batch.q.row(i), batch.pos.row(j)))));
    fail_numeric("non-finite loss in " + where + " (max |logit| " + std::to_string(max_logit) + ")");
  }

  BatchGradient<Real> out{res.report, {}};
  for (std::size_t s = 0; s < enc.num_sets(); ++s) out.grads.emplace_back(enc.dims());
  auto grad_row = [&](std::size_t i) -> std::span<const Real> {
    if (i < B) return res.grads.q.row(i);
    if (i < 2 * B) return res.grads.pos.row(i - B);
    return res.grads.neg.row(i - 2 * B);
  };
  for (std::size_t i = 0; i < encoded.size(); ++i)
    encode_backward_into(enc.set(encoded[i].set), encoded[i].bag, encoded[i].trace, grad_row(i),
                         out.grads[encoded[i].set]);
  return out;
}

/// Encodes the batch, evaluates the selected loss, backpropagates through the
/// encoder(s) and applies one clipped Adam update at the scheduled rate.
inline LossReport train_step(TrainState& state, const BatchPlan& plan, const std::vector<TrainExample>& examples,
                             const Corpus& corpus, LossMode mode, const TrainConfig& cfg) {
  auto& enc = state.encoder;
  const double alpha = mode == LossMode::combined ? cfg.alpha : 0.0;
  auto g = batch_gradient(enc, batch_texts(plan, examples, corpus), alpha, cfg.passage_pool, cfg.threads,
                          "step " + std::to_string(state.step));

  double sq = 0;
  for (const auto& gs : g.grads) sq += gs.squared_norm();
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) fail_numeric("non-finite gradient at step " + std::to_string(state.step));
  if (norm > cfg.grad_clip)
    for (auto& gs : g.grads) gs.scale(static_cast<float>(cfg.grad_clip / norm));

  const double lr = scheduled_lr(cfg.lr, state.step, state.total_steps, cfg.warmup_ratio);
  std::vector<std::vector<float>*> pblobs;
  std::vector<const std::vector<float>*> gblobs;
  for (std::size_t s = 0; s < enc.num_sets(); ++s) {
    for (auto* b : enc.set(s).blobs()) pblobs.push_back(b);
    for (auto* b : std::as_const(g.grads[s]).blobs()) gblobs.push_back(b);
  }
  state.adam.step(pblobs, gblobs, lr);

  state.history.push_back({state.step, state.stage, g.report, lr});
  ++state.step;
  return g.report;
}

// ---------------------------------------------------------------------------
// Stages

struct StageResult {
  DualEncoder encoder;
  std::vector<StepLog> history;
};

/// Runs `epochs` passes over `examples` (whose ids refer to `corpus`).
inline StageResult run_stage(DualEncoder init, const Corpus& corpus, const std::vector<TrainExample>& examples,
                             const TrainConfig& cfg, Stage stage, LossMode mode, std::size_t epochs) {
  cfg.validate();
  if (init.dims() != cfg.dims) fail_data("checkpoint dimensions do not match the training configuration");
  const std::size_t logical = cfg.batch_size * cfg.micro_batches;
  const std::uint64_t per_epoch = examples.size() / logical;
  TrainState state(std::move(init), cfg, stage, per_epoch * epochs);
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    const auto plans =
        make_batches(examples, cfg, hash_combine({cfg.seed, static_cast<std::uint64_t>(stage), epoch}));
    for (const auto& plan : plans) train_step(state, plan, examples, corpus, mode, cfg);
  }
  return {std::move(state.encoder), std::move(state.history)};
}

inline DualEncoder initial_encoder(const TrainConfig& cfg) {
  return make_dual_encoder(cfg.dims, cfg.hash_seed, hash_combine({cfg.seed, 0x494E4954ULL}), cfg.shared_encoder,
                           cfg.init_embedding);
}

/// Combined-loss training on pseudo-labeled data.
inline StageResult pretrain(DualEncoder init, const Corpus& corpus, const std::vector<TrainExample>& pseudo,
                            const TrainConfig& cfg) {
  if (pseudo.empty()) fail_data("pre-training needs a non-empty pseudo-labeled set");
  return run_stage(std::move(init), corpus, pseudo, cfg, Stage::pretrain, LossMode::combined, cfg.epochs_pretrain);
}

/// Query-centric training on gold plus relabeled data, or combined-loss
/// training when use_psr_in_finetune is set.
inline StageResult finetune(DualEncoder init, const Corpus& corpus, const std::vector<TrainExample>& examples,
                            const TrainConfig& cfg) {
  if (examples.empty()) fail_data("fine-tuning needs training examples");
  return run_stage(std::move(init), corpus, examples, cfg, Stage::finetune,
                   cfg.use_psr_in_finetune ? LossMode::combined : LossMode::query_only, cfg.epochs_finetune);
}

inline std::string serialize_log(const std::vector<StepLog>& history) {
  std::string out;
  for (const auto& h : history) out += h.to_json().dump() + "\n";
  return out;
}

}  // namespace pair
