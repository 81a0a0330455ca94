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

#include "pair/evalkit.hpp"

namespace {

using namespace pair;

RunFile run_with_ranks(const std::vector<std::pair<std::string, std::vector<std::string>>>& lists) {
  RunFile r;
  for (const auto& [q, ps] : lists) {
    QueryRun qr{q, {}};
    for (std::size_t i = 0; i < ps.size(); ++i) qr.entries.push_back({ps[i], double(ps.size() - i), i + 1});
    r.queries.push_back(qr);
  }
  return r;
}

TEST(Metrics, HandCases) {
  GoldQrels g;
  g.add("a", "x");
  g.add("b", "y");
  const auto run = run_with_ranks({{"a", {"n1", "x", "n2"}}, {"b", {"n1", "n2", "n3", "n4", "y"}}});
  EXPECT_DOUBLE_EQ(mrr_at_k(run, g, 10), 0.35);
  EXPECT_EQ(mrr_at_k(run, g, 10), (1.0 / 2 + 1.0 / 5) / 2);
  EXPECT_EQ(recall_at_k(run, g, 1), 0.0);
  EXPECT_EQ(recall_at_k(run, g, 2), 0.5);
  EXPECT_EQ(recall_at_k(run, g, 100), 1.0);

  const auto perfect = run_with_ranks({{"a", {"x"}}, {"b", {"y", "x"}}});
  EXPECT_EQ(mrr_at_k(perfect, g, 10), 1.0);
}

TEST(Metrics, MissingQueryScoresZero) {
  GoldQrels g;
  g.add("a", "x");
  g.add("b", "y");
  const auto run = run_with_ranks({{"a", {"x"}}});
  EXPECT_EQ(recall_at_k(run, g, 5), 0.5);
  EXPECT_EQ(mrr_at_k(run, g, 5), 0.5);
}

TEST(Metrics, MultiplePositivesUseFirstAndCountOnce) {
  GoldQrels g;
  g.add("a", "x");
  g.add("a", "z");
  const auto run = run_with_ranks({{"a", {"n", "z", "x"}}});
  EXPECT_EQ(mrr_at_k(run, g, 10), 0.5);
  EXPECT_EQ(recall_at_k(run, g, 10), 1.0);
}

// Straight from the definitions, walking every list in full.
struct BruteForce {
  static double mrr(const RunFile& run, const GoldQrels& g, std::size_t k) {
    double total = 0;
    for (const auto& q : g.query_order) {
      double rr = 0;
      for (const auto& qr : run.queries)
        if (qr.query == q)
          for (std::size_t i = qr.entries.size(); i-- > 0;)
            if (qr.entries[i].rank <= k && g.positives.at(q).count(qr.entries[i].passage)) rr = 1.0 / double(qr.entries[i].rank);
      total += rr;
    }
    return total / double(g.query_order.size());
  }
  static double recall(const RunFile& run, const GoldQrels& g, std::size_t k) {
    double hit = 0;
    for (const auto& q : g.query_order) {
      bool any = false;
      for (const auto& qr : run.queries)
        if (qr.query == q)
          for (const auto& e : qr.entries) any |= e.rank <= k && g.positives.at(q).count(e.passage) > 0;
      hit += any;
    }
    return hit / double(g.query_order.size());
  }
};

TEST(Metrics, AgreeWithBruteForceOnRandomRuns) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    GoldQrels g;
    std::vector<std::pair<std::string, std::vector<std::string>>> lists;
    const auto nq = 1 + rng.below(8);
    for (std::uint64_t q = 0; q < nq; ++q) {
      const std::string qid = "q" + std::to_string(q);
      const auto npos = 1 + rng.below(3);
      for (std::uint64_t p = 0; p < npos; ++p) g.add(qid, "p" + std::to_string(rng.below(30)));
      if (rng.below(6) == 0) continue;  // query missing from the run
      auto ids = rng.sample_without_replacement(30, 1 + rng.below(30));
      std::vector<std::string> ps;
      for (auto i : ids) ps.push_back("p" + std::to_string(i));
      lists.emplace_back(qid, ps);
    }
    const auto run = run_with_ranks(lists);
    double prev = 0;
    for (std::size_t k : {1, 3, 5, 10, 20, 100}) {
      const double m = mrr_at_k(run, g, k), r = recall_at_k(run, g, k);
      EXPECT_DOUBLE_EQ(m, BruteForce::mrr(run, g, k));
      EXPECT_DOUBLE_EQ(r, BruteForce::recall(run, g, k));
      EXPECT_LE(m, r + 1e-15);
      EXPECT_GE(r, prev);
      prev = r;
      EXPECT_GE(m, 0.0);
      EXPECT_LE(r, 1.0);
    }
  }
}

TEST(Metrics, ParsedQrelsAndRunAgree) {
  const auto g = parse_gold_qrels("a 0 x 1\nb 0 y 1\nb 0 z 0\n");
  EXPECT_EQ(g.num_queries(), 2u);
  EXPECT_FALSE(g.positives.at("b").contains("z"));
  const auto run = parse_run("a Q0 x 1 3.0 t\nb Q0 z 1 2.0 t\nb Q0 y 2 1.0 t\n");
  EXPECT_DOUBLE_EQ(mrr_at_k(run, g, 10), 0.75);
}

TEST(Report, EvaluateAndFormat) {
  GoldQrels g;
  g.add("a", "x");
  const auto r = evaluate(run_with_ranks({{"a", {"n", "x"}}}), g, {5, 20, 100}, "full");
  EXPECT_EQ(r.recall_at.at(5), 1.0);
  EXPECT_EQ(r.mrr_at.at(20), 0.5);
  EXPECT_EQ(format_metric_row(r).substr(0, 15), "R@5\tR@20\tR@100\t");
  EXPECT_EQ(r.to_json()["recall_at"]["100"], 1.0);
}

TEST(Compare, TableLayoutAndTsvRoundTrip) {
  EvalReport full{{}, {{5, 0.749}, {20, 0.835}, {100, 0.891}}, 10, "full"};
  EvalReport no_psr{{}, {{5, 0.736}, {20, 0.833}, {100, 0.888}}, 10, "no_psr"};
  EvalReport odd{{}, {{5, 0.7}, {50, 0.8}}, 10, "odd"};
  const auto t = compare_variants({full, no_psr});
  EXPECT_EQ(t.columns, (std::vector<std::string>{"R@5", "R@20", "R@100"}));
  EXPECT_EQ(t.variants, (std::vector<std::string>{"full", "no_psr"}));
  EXPECT_EQ(parse_variant_tsv(t.to_tsv()), t);
  EXPECT_NE(t.to_text().find("74.9"), std::string::npos);

  const auto u = compare_variants({no_psr, odd});
  EXPECT_EQ(u.variants.front(), "no_psr");
  EXPECT_EQ(u.columns, (std::vector<std::string>{"R@5", "R@20", "R@50", "R@100"}));
  EXPECT_FALSE(u.values[1][1].has_value());
  EXPECT_FALSE(u.values[0][2].has_value());
  EXPECT_EQ(parse_variant_tsv(u.to_tsv()), u);
  EXPECT_THROW(compare_variants({full}), Error);
}

TEST(Margin, DuplicatePositiveBeatsOrthogonalNegatives) {
  // Identity-like encoder: the output is tanh of the pooled embedding.
  const std::uint32_t V = 4096, d = 8;
  BasicEncoderParams<float> p(EncoderDims{V, d, d, d}, 3);
  for (std::uint32_t i = 0; i < d; ++i) {
    p.w1[i * d + i] = 1.f;
    p.w2[i * d + i] = 1.f;
  }
  auto passages = std::make_shared<PassageStore>();
  const std::vector<std::string> texts{"alpha", "bravo", "charlie", "delta"};
  for (std::size_t t = 0; t < texts.size(); ++t) {
    passages->add("p" + std::to_string(t), texts[t]);
    for (auto id : featurize(texts[t], 3, V).ids) p.row(id)[t] = 1.f;
  }
  const Corpus c({{0, "q", "alpha"}, {1, "u", "unjudged"}}, passages, {{0, 0}});
  const DualEncoder enc{p, std::nullopt};
  const auto store = build_index(*passages, enc);
  const auto r = margin_analysis(enc, store, c, 100);
  EXPECT_EQ(r.n_pairs, 1u);
  EXPECT_EQ(r.n_skipped_queries, 1u);
  EXPECT_GT(r.mean_s_pos_q, r.mean_s_pos_neg);
  EXPECT_NEAR(r.mean_s_pos_neg, 0.0, 1e-6);
  EXPECT_GT(r.margin(), 0.0);
  const auto again = margin_analysis(enc, store, c, 100);
  EXPECT_EQ(again.to_json(), r.to_json());
}

}  // namespace
