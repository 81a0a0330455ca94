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

#include <gtest/gtest.h>

#include "fd_oracle.hpp"
#include "pair/synthetic.hpp"
#include "pair/trainer.hpp"

namespace {

using namespace pair;

std::vector<TrainExample> numbered_examples(std::size_t n, std::size_t negs_each) {
  std::vector<TrainExample> out;
  for (std::size_t i = 0; i < n; ++i) {
    TrainExample ex{static_cast<QueryId>(i), static_cast<PassageId>(i), {}, ExampleSource::gold};
    for (std::size_t k = 0; k < negs_each; ++k) ex.hard_negative_ids.push_back(static_cast<PassageId>(100 + 10 * i + k));
    out.push_back(ex);
  }
  return out;
}

TrainConfig small_config() {
  TrainConfig c;
  c.dims = {1024, 16, 16, 16};
  c.batch_size = 4;
  c.hard_negs_per_pos = 2;
  c.epochs_pretrain = 2;
  c.epochs_finetune = 2;
  c.seed = 11;
  return c;
}

SyntheticData small_data() {
  return make_synthetic({.topics = 4, .passages_per_topic = 6, .queries_per_topic = 4, .unlabeled_per_topic = 4,
                         .seed = 21});
}

/// Gold examples with two lexical-overlap hard negatives from the same topic.
std::vector<TrainExample> examples_with_negatives(const SyntheticData& d) {
  auto ex = gold_examples(d.labeled);
  for (auto& e : ex) {
    const auto topic = d.passage_topic[e.positive_id];
    for (PassageId p = 0; p < d.passage_topic.size() && e.hard_negative_ids.size() < 3; ++p)
      if (d.passage_topic[p] == topic && p != e.positive_id) e.hard_negative_ids.push_back(p);
  }
  return ex;
}

TEST(Batches, CountDropsPartialBatch) {
  TrainConfig c;
  c.batch_size = 4;
  EXPECT_EQ(make_batches(numbered_examples(10, 5), c, 1).size(), 2u);
  c.micro_batches = 2;
  const auto plans = make_batches(numbered_examples(10, 5), c, 1);
  ASSERT_EQ(plans.size(), 1u);
  EXPECT_EQ(plans[0].examples.size(), 8u);
  EXPECT_THROW(make_batches(numbered_examples(7, 5), c, 1), Error);
}

TEST(Batches, SeedDeterminesComposition) {
  TrainConfig c;
  c.batch_size = 4;
  const auto ex = numbered_examples(12, 6);
  const auto a = make_batches(ex, c, 5), b = make_batches(ex, c, 5), other = make_batches(ex, c, 6);
  ASSERT_EQ(a.size(), b.size());
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].examples, b[i].examples);
    EXPECT_EQ(a[i].negatives, b[i].negatives);
    differs |= a[i].examples != other[i].examples;
  }
  EXPECT_TRUE(differs);
}

TEST(Batches, FourDistinctNegativesFromLargePools) {
  TrainConfig c;
  c.batch_size = 4;
  const auto ex = numbered_examples(8, 9);
  for (const auto& plan : make_batches(ex, c, 2))
    for (std::size_t i = 0; i < plan.examples.size(); ++i) {
      const auto& negs = plan.negatives[i];
      ASSERT_EQ(negs.size(), 4u);
      EXPECT_EQ(std::set<PassageId>(negs.begin(), negs.end()).size(), 4u);
      const auto& pool = ex[plan.examples[i]].hard_negative_ids;
      for (auto n : negs) EXPECT_NE(std::find(pool.begin(), pool.end(), n), pool.end());
    }
}

TEST(Batches, SmallPoolsArePaddedEmptyPoolsCarryNone) {
  TrainConfig c;
  c.batch_size = 2;
  auto ex = numbered_examples(2, 2);
  ex[1].hard_negative_ids.clear();
  for (const auto& plan : make_batches(ex, c, 3))
    for (std::size_t i = 0; i < plan.examples.size(); ++i) {
      const auto& negs = plan.negatives[i];
      if (plan.examples[i] == 1) {
        EXPECT_TRUE(negs.empty());
      } else {
        ASSERT_EQ(negs.size(), 4u);
        EXPECT_EQ(std::set<PassageId>(negs.begin(), negs.end()), (std::set<PassageId>{100, 101}));
      }
    }
}

TEST(Config, ValidationAndParsing) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_DOUBLE_EQ(c.alpha, 0.1);
  EXPECT_EQ(c.hard_negs_per_pos, 4u);
  EXPECT_DOUBLE_EQ(c.warmup_ratio, 0.1);
  c.batch_size = 1;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.alpha = 1.5;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.warmup_ratio = 1.0;
  EXPECT_THROW(c.validate(), Error);

  const auto kv = parse_config_text("# comment\nalpha = 0.25\n\nbatch_size=8 # trailing\npassage_pool = hard_negatives_only\n");
  ASSERT_EQ(kv.size(), 3u);
  c = {};
  for (const auto& [k, v] : kv) EXPECT_TRUE(c.set(k, v));
  EXPECT_DOUBLE_EQ(c.alpha, 0.25);
  EXPECT_EQ(c.batch_size, 8u);
  EXPECT_EQ(c.passage_pool, PassagePool::hard_negatives_only);
  EXPECT_FALSE(c.set("no_such_key", "1"));
  EXPECT_THROW(c.set("alpha", "abc"), Error);
  EXPECT_THROW(c.set("batch_size", "-3"), Error);
  EXPECT_THROW(c.set("optimizer", "lamb"), Error);
  EXPECT_THROW(parse_config_text("alpha 0.1\n"), Error);

  // Every field printed by to_json can be set back.
  TrainConfig round;
  const auto printed = c.to_json();
  for (const auto& [k, v] : printed.items()) {
    const std::string text = v.is_string() ? v.get<std::string>() : v.dump();
    EXPECT_TRUE(round.set(k, text)) << k;
  }
  EXPECT_EQ(round.to_json(), c.to_json());
}

TEST(Step, ZeroLearningRateLeavesParametersUnchanged) {
  const auto d = small_data();
  const auto ex = examples_with_negatives(d);
  auto cfg = small_config();
  cfg.lr = 0;
  const auto init = initial_encoder(cfg);
  TrainState state(init, cfg, Stage::pretrain, 10);
  const auto plans = make_batches(ex, cfg, 1);
  const auto r = train_step(state, plans[0], ex, d.labeled, LossMode::combined, cfg);
  EXPECT_GT(r.loss_combined, 0.0);
  EXPECT_EQ(state.encoder, init);
  EXPECT_EQ(state.step, 1u);
}

TEST(Step, SmallStepDecreasesBatchLoss) {
  const auto d = small_data();
  const auto ex = examples_with_negatives(d);
  auto cfg = small_config();
  cfg.warmup_ratio = 0;
  cfg.lr = 1e-3;
  TrainState state(initial_encoder(cfg), cfg, Stage::pretrain, 1000);
  const auto plan = make_batches(ex, cfg, 1)[0];
  const auto before = train_step(state, plan, ex, d.labeled, LossMode::combined, cfg);
  auto frozen = cfg;
  frozen.lr = 0;
  const auto after = train_step(state, plan, ex, d.labeled, LossMode::combined, frozen);
  EXPECT_LT(after.loss_combined, before.loss_combined);
}

TEST(Step, QueryOnlyReportsPassageLossWithoutWeight) {
  const auto d = small_data();
  const auto ex = examples_with_negatives(d);
  const auto cfg = small_config();
  TrainState state(initial_encoder(cfg), cfg, Stage::finetune, 10);
  const auto r = train_step(state, make_batches(ex, cfg, 1)[0], ex, d.labeled, LossMode::query_only, cfg);
  EXPECT_EQ(r.alpha, 0.0);
  EXPECT_GT(r.loss_p, 0.0);
  EXPECT_EQ(r.loss_combined, r.loss_q);
}

TEST(Stage, LogInvariantsAndSchedule) {
  const auto d = small_data();
  const auto ex = examples_with_negatives(d);
  const auto cfg = small_config();
  const auto res = pretrain(initial_encoder(cfg), d.labeled, ex, cfg);
  const std::size_t per_epoch = ex.size() / cfg.batch_size;
  ASSERT_EQ(res.history.size(), per_epoch * cfg.epochs_pretrain);
  EXPECT_EQ(res.history.front().lr, 0.0);
  for (std::size_t i = 0; i < res.history.size(); ++i) {
    const auto& h = res.history[i];
    EXPECT_EQ(h.step, i);
    EXPECT_EQ(h.loss.loss_combined, (1 - cfg.alpha) * h.loss.loss_q + cfg.alpha * h.loss.loss_p);
    EXPECT_DOUBLE_EQ(h.lr, scheduled_lr(cfg.lr, i, res.history.size(), cfg.warmup_ratio));
  }
  const auto log = serialize_log(res.history);
  const auto first = nlohmann::json::parse(log.substr(0, log.find('\n')));
  for (const char* k : {"step", "stage", "loss_q", "loss_p", "loss", "lr"}) EXPECT_TRUE(first.contains(k)) << k;
  EXPECT_EQ(first["stage"], "pretrain");
}

TEST(Stage, AlphaZeroMatchesQueryOnlyTrajectory) {
  const auto d = small_data();
  const auto ex = examples_with_negatives(d);
  auto cfg = small_config();
  cfg.alpha = 0;
  const auto combined = pretrain(initial_encoder(cfg), d.labeled, ex, cfg);
  const auto query_only = run_stage(initial_encoder(cfg), d.labeled, ex, cfg, Stage::pretrain, LossMode::query_only,
                                    cfg.epochs_pretrain);
  EXPECT_EQ(combined.encoder, query_only.encoder);
  ASSERT_EQ(combined.history.size(), query_only.history.size());
  for (std::size_t i = 0; i < combined.history.size(); ++i)
    EXPECT_EQ(combined.history[i].loss.loss_combined, query_only.history[i].loss.loss_combined);
}

TEST(Stage, BitIdenticalAcrossRunsAndThreads) {
  const auto d = small_data();
  const auto ex = examples_with_negatives(d);
  auto cfg = small_config();
  const auto a = pretrain(initial_encoder(cfg), d.labeled, ex, cfg);
  const auto b = pretrain(initial_encoder(cfg), d.labeled, ex, cfg);
  cfg.threads = 4;
  const auto c = pretrain(initial_encoder(cfg), d.labeled, ex, cfg);
  EXPECT_EQ(serialize_checkpoint(a.encoder, {}), serialize_checkpoint(b.encoder, {}));
  EXPECT_EQ(serialize_checkpoint(a.encoder, {}), serialize_checkpoint(c.encoder, {}));
  EXPECT_NE(a.encoder, initial_encoder(cfg));
}

TEST(Stage, ErrorsOnMismatchAndEmptyInput) {
  const auto d = small_data();
  const auto ex = examples_with_negatives(d);
  auto cfg = small_config();
  auto other = cfg;
  other.dims.out = 8;
  EXPECT_THROW(finetune(initial_encoder(other), d.labeled, ex, cfg), Error);
  EXPECT_THROW(pretrain(initial_encoder(cfg), d.labeled, {}, cfg), Error);
  EXPECT_THROW(finetune(initial_encoder(cfg), d.labeled, {}, cfg), Error);
}

TEST(Stage, SeparateEncodersStayDistinct) {
  const auto d = small_data();
  const auto ex = examples_with_negatives(d);
  auto cfg = small_config();
  cfg.shared_encoder = false;
  const auto res = finetune(initial_encoder(cfg), d.labeled, ex, cfg);
  ASSERT_FALSE(res.encoder.shared());
  const auto& text = d.labeled.queries()[0].text;
  EXPECT_NE(res.encoder.encode_text(text, Role::query), res.encoder.encode_text(text, Role::passage));
}

TEST(Stage, FinetuneModeFollowsConfig) {
  const auto d = small_data();
  const auto ex = examples_with_negatives(d);
  auto cfg = small_config();
  const auto plain = finetune(initial_encoder(cfg), d.labeled, ex, cfg);
  for (const auto& h : plain.history) {
    EXPECT_EQ(h.stage, Stage::finetune);
    EXPECT_EQ(h.loss.alpha, 0.0);
  }
  cfg.use_psr_in_finetune = true;
  const auto psr = finetune(initial_encoder(cfg), d.labeled, ex, cfg);
  for (const auto& h : psr.history) EXPECT_EQ(h.loss.alpha, cfg.alpha);
}

// Analytic gradients of the full encoder + loss against central differences.
TEST(Gradient, FullModelMatchesFiniteDifferences) {
  const auto d = small_data();
  const auto& passages = d.labeled.passages();
  Rng rng(77);
  int configs = 0;
  for (std::size_t B : {2u, 4u})
    for (std::size_t H : {0u, 2u})
      for (bool shared : {true, false}) {
        ++configs;
        const EncoderDims dims{64, 6, 7, static_cast<std::uint32_t>(4 + rng.below(13))};
        BasicDualEncoder<double> enc{BasicEncoderParams<double>::random(dims, configs, 10 + configs, 0.4),
                                     std::nullopt};
        if (!shared) enc.passage = BasicEncoderParams<double>::random(dims, configs, 50 + configs, 0.4);
        for (std::size_t s = 0; s < enc.num_sets(); ++s)
          for (auto* b : {&enc.set(s).b1, &enc.set(s).b2})
            for (auto& x : *b) x = rng.uniform(-0.2, 0.2);

        BatchTexts t;
        const auto picks = rng.sample_without_replacement(d.labeled.num_queries(), B);
        for (std::size_t i = 0; i < B; ++i) {
          const auto& q = d.labeled.queries()[picks[i]];
          const auto pos = d.labeled.positives(q.id)[0];
          t.queries.push_back(&q.text);
          t.positives.push_back(&passages[pos].text);
          t.pos_ids.push_back(pos);
          for (std::size_t h = 0; h < H; ++h) {
            const auto n = static_cast<PassageId>(rng.below(passages.size()));
            t.negatives.push_back(&passages[n].text);
            t.neg_ids.push_back(n);
            t.neg_owner.push_back(i);
          }
        }
        for (double alpha : {0.0, 1.0, 0.1}) {
          const auto g = batch_gradient(enc, t, alpha, PassagePool::in_batch_and_hard);
          auto f = [&] { return batch_gradient(enc, t, alpha, PassagePool::in_batch_and_hard).report.loss_combined; };
          for (std::size_t s = 0; s < enc.num_sets(); ++s) {
            auto pb = enc.set(s).blobs();
            auto gb = std::as_const(g.grads[s]).blobs();
            for (std::size_t b = 0; b < pb.size(); ++b)
              EXPECT_LT(pair_test::max_rel_err(f, *pb[b], *gb[b]), 1e-5)
                  << "B=" << B << " H=" << H << " shared=" << shared << " alpha=" << alpha << " blob " << b;
          }
        }
      }
}

}  // namespace
