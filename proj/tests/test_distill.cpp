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
#include "pair/distill.hpp"
#include "pair/synthetic.hpp"

namespace {

using namespace pair;

// Three queries over six passages; q1 -> p1, q2 -> p3 and p4, q3 unlabeled.
Corpus small_corpus() {
  return ingest_text("q1\tred apple pie recipe\nq2\tfast sports car\nq3\tgreen tea\n",
                     "p1\tan apple pie recipe with red apples\n"
                     "p2\ta pie made of cherries\n"
                     "p3\ta fast car for sports fans\n"
                     "p4\tsports car racing is fast\n"
                     "p5\tgreen tea is a drink\n"
                     "p6\tthe weather is cold today\n",
                     std::string("q1\t0\tp1\t1\nq2\t0\tp3\t1\nq2\t0\tp4\t1\n"));
}

/// Retriever returning a fixed candidate list for every query.
class FixedRetriever : public Retriever {
 public:
  explicit FixedRetriever(std::vector<PassageId> ids) : ids_(std::move(ids)) {}
  std::vector<Hit> retrieve(const Query&, std::size_t k) const override {
    std::vector<Hit> out;
    for (std::size_t i = 0; i < ids_.size() && i < k; ++i) out.push_back({ids_[i], double(ids_.size() - i)});
    return out;
  }

 private:
  std::vector<PassageId> ids_;
};

/// Teacher with a fixed score table keyed by (query external id, passage external id).
class TableTeacher : public Teacher {
 public:
  explicit TableTeacher(std::map<std::pair<std::string, std::string>, double> t, double fallback = 0.5)
      : t_(std::move(t)), fallback_(fallback) {}
  std::string name() const override { return "table"; }
  double score(const Query& q, const Passage& p) const override {
    auto it = t_.find({q.external_id, p.external_id});
    return it == t_.end() ? fallback_ : it->second;
  }

 private:
  std::map<std::pair<std::string, std::string>, double> t_;
  double fallback_;
};

TEST(Teacher, OracleScoresGoldOneAndOthersZero) {
  const auto c = small_corpus();
  const OracleTeacher t(gold_qrels(c));
  const auto& q1 = c.query(*c.find_query("q1"));
  EXPECT_EQ(teacher_score(&t, q1, c.passages()[0]).score, 1.0);
  EXPECT_EQ(teacher_score(&t, q1, c.passages()[1]).score, 0.0);
  EXPECT_EQ(teacher_score(&t, c.query(*c.find_query("q3")), c.passages()[4]).score, 0.0);
}

TEST(Teacher, NullTeacherIsAnError) {
  const auto c = small_corpus();
  EXPECT_THROW(teacher_score(nullptr, c.queries()[0], c.passages()[0]), Error);
}

TEST(Teacher, NoisyOracleIsPerPairDeterministic) {
  const auto c = small_corpus();
  const OracleTeacher a(gold_qrels(c), 0.1, 5), b(gold_qrels(c), 0.1, 5), other(gold_qrels(c), 0.1, 6);
  bool differs = false;
  for (const auto& q : c.queries())
    for (const auto& p : c.passages().all()) {
      const double s = a.score(q, p);
      EXPECT_EQ(s, b.score(q, p));
      EXPECT_GE(s, 0.0);
      EXPECT_LE(s, 1.0);
      differs |= s != other.score(q, p);
    }
  EXPECT_TRUE(differs);
}

TEST(Teacher, OverlapIsMonotoneInOverlap) {
  const OverlapTeacher t;
  const Query q{0, "q", "alpha beta gamma delta"};
  const Passage same{0, "a", "alpha beta gamma delta"};
  const Passage half{1, "b", "alpha beta omega sigma"};
  const Passage none{2, "c", "one two three four"};
  EXPECT_GE(t.score(q, same), t.score(q, half));
  EXPECT_GE(t.score(q, half), t.score(q, none));
  EXPECT_GT(t.score(q, same), t.score(q, none));
}

TEST(Teacher, FileTeacherReadsCacheAndRejectsMisses) {
  const auto c = small_corpus();
  const FileTeacher t("q1\tp1\t0.75\nq1\tp2\t1.5\n");
  const auto& q1 = c.query(*c.find_query("q1"));
  EXPECT_DOUBLE_EQ(t.score(q1, c.passages()[0]), 0.75);
  EXPECT_DOUBLE_EQ(t.score(q1, c.passages()[1]), 1.0);  // clamped
  EXPECT_THROW(t.score(q1, c.passages()[2]), Error);
  EXPECT_THROW(FileTeacher("q1\tp1\n"), Error);
  EXPECT_THROW(FileTeacher("q1\tp1\tabc\n"), Error);
}

TEST(Thresholds, SplitsStrictly) {
  const std::vector<std::pair<PassageId, double>> scored{{0, 0.95}, {1, 0.5}, {2, 0.05}};
  const auto s = apply_thresholds(scored, 0.9, 0.1);
  ASSERT_EQ(s.positives.size(), 1u);
  EXPECT_EQ(s.positives[0].first, 0u);
  ASSERT_EQ(s.negatives.size(), 1u);
  EXPECT_EQ(s.negatives[0].first, 2u);
  EXPECT_EQ(s.discarded, 1u);

  const auto edge = apply_thresholds({{0, 0.9}, {1, 0.1}}, 0.9, 0.1);
  EXPECT_TRUE(edge.positives.empty());
  EXPECT_TRUE(edge.negatives.empty());
  EXPECT_EQ(edge.discarded, 2u);
}

TEST(Thresholds, MonotoneOnRandomScoreSets) {
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::pair<PassageId, double>> scored;
    for (PassageId i = 0; i < 30; ++i) scored.emplace_back(i, rng.uniform());
    const double lo = rng.uniform(0.5, 0.9), hi = rng.uniform(lo, 1.0);
    const double nlo = rng.uniform(0.0, 0.2), nhi = rng.uniform(nlo, 0.5);
    auto ids = [](const auto& v) {
      std::set<PassageId> s;
      for (const auto& x : v) s.insert(x.first);
      return s;
    };
    const auto strict_pos = ids(apply_thresholds(scored, hi, nlo).positives);
    const auto loose_pos = ids(apply_thresholds(scored, lo, nlo).positives);
    EXPECT_TRUE(std::includes(loose_pos.begin(), loose_pos.end(), strict_pos.begin(), strict_pos.end()));
    const auto strict_neg = ids(apply_thresholds(scored, hi, nlo).negatives);
    const auto loose_neg = ids(apply_thresholds(scored, hi, nhi).negatives);
    EXPECT_TRUE(std::includes(loose_neg.begin(), loose_neg.end(), strict_neg.begin(), strict_neg.end()));
  }
}

TEST(PseudoLabel, ConfigValidation) {
  PseudoLabelConfig c;
  EXPECT_NO_THROW(c.validate());
  c.s_neg = 0.9;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.top_k = 0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.s_pos = 1.5;
  EXPECT_THROW(c.validate(), Error);
}

TEST(PseudoLabel, ScoresBecomeExamples) {
  const auto c = small_corpus();
  const FixedRetriever r({0, 1, 2, 3, 4, 5});
  const TableTeacher t({{{"q3", "p5"}, 0.95}, {{"q3", "p6"}, 0.05}, {{"q3", "p2"}, 0.02}}, 0.5);
  PseudoLabelConfig cfg;
  const auto set = generate_pseudo_labels(c.subset({*c.find_query("q3")}), r, t, cfg);
  ASSERT_EQ(set.examples.size(), 1u);
  const auto& ex = set.examples[0];
  EXPECT_EQ(ex.positive_id, 4u);
  EXPECT_EQ(ex.source, ExampleSource::pseudo);
  EXPECT_EQ(std::set<PassageId>(ex.hard_negative_ids.begin(), ex.hard_negative_ids.end()), (std::set<PassageId>{1, 5}));
  EXPECT_EQ(set.stats.n_queries_kept, 1u);
  EXPECT_EQ(set.stats.n_pos, 1u);
  EXPECT_EQ(set.stats.n_neg, 2u);
  EXPECT_EQ(set.stats.n_discarded_candidates, 3u);
  EXPECT_EQ(set.scores.size(), 6u);
  ASSERT_EQ(set.provenance.size(), 1u);
  EXPECT_DOUBLE_EQ(set.provenance[0].positive_score, 0.95);
  for (double s : set.provenance[0].negative_scores) EXPECT_LT(s, cfg.s_neg);
}

TEST(PseudoLabel, QueriesWithoutPositivesAreDiscarded) {
  const auto c = small_corpus();
  const TableTeacher t({}, 0.5);
  const auto set = generate_pseudo_labels(c, FixedRetriever({0, 1}), t, {});
  EXPECT_TRUE(set.examples.empty());
  EXPECT_EQ(set.stats.n_discarded, 3u);
  const auto empty = generate_pseudo_labels(c, FixedRetriever({}), t, {});
  EXPECT_EQ(empty.stats.n_discarded, 3u);
}

TEST(PseudoLabel, NegativesCappedAndNeverPositive) {
  const auto data = make_synthetic({.topics = 4, .passages_per_topic = 10, .queries_per_topic = 2,
                                    .unlabeled_per_topic = 5, .seed = 3});
  const OracleTeacher t(data.unlabeled_truth, 0.05, 1);
  const OverlapRetriever r(data.unlabeled.passages());
  PseudoLabelConfig cfg;
  cfg.top_k = 20;
  const auto set = generate_pseudo_labels(data.unlabeled, r, t, cfg);
  ASSERT_FALSE(set.examples.empty());
  for (std::size_t i = 0; i < set.examples.size(); ++i) {
    const auto& ex = set.examples[i];
    EXPECT_LE(ex.hard_negative_ids.size(), cfg.max_negs_per_pos);
    for (auto n : ex.hard_negative_ids) EXPECT_NE(n, ex.positive_id);
    EXPECT_GT(set.provenance[i].positive_score, cfg.s_pos);
    for (double s : set.provenance[i].negative_scores) EXPECT_LT(s, cfg.s_neg);
  }
}

TEST(PseudoLabel, ByteIdenticalAcrossRunsAndThreads) {
  const auto data = make_synthetic({.topics = 5, .passages_per_topic = 10, .queries_per_topic = 2,
                                    .unlabeled_per_topic = 6, .seed = 9});
  const OracleTeacher t(data.unlabeled_truth, 0.1, 2);
  const OverlapRetriever r(data.unlabeled.passages());
  PseudoLabelConfig cfg;
  cfg.top_k = 15;
  auto dump = [&](unsigned threads) {
    const auto set = generate_pseudo_labels(data.unlabeled, r, t, cfg, threads);
    return serialize_examples(data.unlabeled, set.examples) + serialize_scores(data.unlabeled, set.scores);
  };
  const auto a = dump(1);
  EXPECT_EQ(a, dump(1));
  EXPECT_EQ(a, dump(4));
}

TEST(Relabel, GoldAlwaysRetainedAndNeverNegative) {
  const auto c = small_corpus();
  const TableTeacher t({{{"q1", "p1"}, 0.3}, {{"q1", "p2"}, 0.05}, {{"q1", "p6"}, 0.95}}, 0.5);
  const FixedRetriever r({0, 1, 2, 5});
  const auto set = relabel_labeled_corpus(c.subset({*c.find_query("q1")}), r, t, {});
  ASSERT_EQ(set.examples.size(), 2u);
  EXPECT_EQ(set.examples[0].positive_id, 0u);
  EXPECT_EQ(set.examples[0].source, ExampleSource::gold);
  EXPECT_DOUBLE_EQ(set.provenance[0].positive_score, 0.3);
  EXPECT_EQ(set.examples[1].positive_id, 5u);
  EXPECT_EQ(set.examples[1].source, ExampleSource::pseudo);
  for (const auto& ex : set.examples) EXPECT_EQ(ex.hard_negative_ids, std::vector<PassageId>{1});
}

TEST(Relabel, NoiselessOracleRecoversGoldExactly) {
  const auto c = small_corpus();
  const OracleTeacher t(gold_qrels(c));
  const FixedRetriever r({0, 1, 2, 3, 4, 5});
  const auto set = relabel_labeled_corpus(c, r, t, {});
  std::set<std::pair<QueryId, PassageId>> got, want;
  for (const auto& ex : set.examples) got.emplace(ex.query_id, ex.positive_id);
  for (const auto& q : c.qrels()) want.emplace(q.query_id, q.passage_id);
  EXPECT_EQ(got, want);
  for (const auto& ex : set.examples) EXPECT_EQ(ex.source, ExampleSource::gold);
  EXPECT_EQ(set.stats.n_queries_kept, 2u);
}

TEST(Audit, NoiselessOracleIsPerfect) {
  const auto data = make_synthetic({.topics = 4, .passages_per_topic = 10, .queries_per_topic = 2,
                                    .unlabeled_per_topic = 5, .seed = 4});
  const OracleTeacher t(data.unlabeled_truth);
  const auto set = generate_pseudo_labels(data.unlabeled, OverlapRetriever(data.unlabeled.passages()), t, {});
  const auto a = audit_quality(data.unlabeled, set, data.unlabeled_truth, 10, 1);
  EXPECT_EQ(a.n_queries, 10u);
  EXPECT_EQ(a.acc_pos, 1.0);
  EXPECT_EQ(a.acc_neg, 1.0);
  const auto all = audit_quality(data.unlabeled, set, data.unlabeled_truth, 10000, 1);
  EXPECT_EQ(all.n_queries, set.stats.n_queries_kept);
}

TEST(Audit, StrictThresholdsAreCleanerUnderNoise) {
  const auto data = make_synthetic({.topics = 10, .passages_per_topic = 10, .queries_per_topic = 2,
                                    .unlabeled_per_topic = 10, .seed = 5});
  const OverlapRetriever r(data.unlabeled.passages());
  double strict = 0, loose = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const OracleTeacher t(data.unlabeled_truth, 0.1, seed);
    auto acc = [&](double sp, double sn) {
      PseudoLabelConfig cfg;
      cfg.s_pos = sp;
      cfg.s_neg = sn;
      cfg.top_k = 20;
      const auto a = audit_quality(data.unlabeled, generate_pseudo_labels(data.unlabeled, r, t, cfg),
                                   data.unlabeled_truth, 100, seed);
      return (a.acc_pos + a.acc_neg) / 2;
    };
    strict += acc(0.9, 0.1);
    loose += acc(0.6, 0.4);
  }
  EXPECT_GE(strict, loose);
}

TEST(CrossEncoder, BceGradientMatchesFiniteDifferences) {
  Rng rng(31);
  for (int trial = 0; trial < 5; ++trial) {
    const CrossDims d{64, 4, 5};
    auto p = BasicCrossParams<double>::random(d, trial, 10 + trial, 0.5);
    for (auto& b : p.b1) b = rng.uniform(-0.2, 0.2);
    p.b2[0] = rng.uniform(-0.2, 0.2);
    const std::vector<CrossInput> in{make_cross_input("red apple pie", "an apple pie recipe", trial, d.vocab),
                                     make_cross_input("fast car", "tea is green", trial, d.vocab),
                                     make_cross_input("car sports", "fast sports car", trial, d.vocab)};
    const std::vector<double> y{1, 0, 1};
    CrossGrads<double> g(d);
    cross_bce(p, in, y, &g);
    auto f = [&] { return cross_bce<double>(p, in, y, nullptr); };
    auto pb = p.blobs();
    auto gb = g.blobs();
    for (std::size_t b = 0; b < pb.size(); ++b)
      EXPECT_LT(pair_test::max_rel_err(f, *pb[b], *gb[b]), 1e-5) << "trial " << trial << " blob " << b;
  }
}

TEST(CrossEncoder, SeparatesHeldOutGoldFromRandomPairs) {
  auto data = make_synthetic({.topics = 10, .passages_per_topic = 10, .queries_per_topic = 6,
                              .unlabeled_per_topic = 0, .alias_prob = 0.0, .seed = 2});
  const auto sp = split(data.labeled, 0.2, 1);
  CrossTrainConfig cfg;
  cfg.dims = {1u << 14, 16, 16};
  cfg.epochs = 8;
  const auto teacher = train_mini_cross_encoder(sp.train, cfg);
  double gold = 0, random = 0;
  std::size_t n_gold = 0, n_random = 0;
  Rng rng(3);
  for (const auto& q : sp.dev.queries()) {
    for (auto p : sp.dev.positives(q.id)) {
      const double s = teacher.score(q, sp.dev.passages()[p]);
      EXPECT_GT(s, 0.0);
      EXPECT_LT(s, 1.0);
      gold += s;
      ++n_gold;
    }
    const auto p = static_cast<PassageId>(rng.below(sp.dev.num_passages()));
    if (sp.dev.is_positive(q.id, p)) continue;
    random += teacher.score(q, sp.dev.passages()[p]);
    ++n_random;
  }
  EXPECT_GT(gold / double(n_gold), random / double(n_random));
}

TEST(CrossEncoder, FileRoundTrip) {
  const auto c = small_corpus();
  CrossTrainConfig cfg;
  cfg.dims = {512, 4, 3};
  cfg.epochs = 2;
  const auto t = train_mini_cross_encoder(c, cfg);
  const auto bytes = serialize_cross_encoder(t);
  const auto back = parse_cross_encoder(bytes);
  EXPECT_EQ(serialize_cross_encoder(back), bytes);
  for (const auto& q : c.queries())
    for (const auto& p : c.passages().all()) EXPECT_EQ(back.score(q, p), t.score(q, p));
  EXPECT_THROW(parse_cross_encoder(bytes.substr(0, bytes.size() - 1)), Error);
  EXPECT_THROW(parse_cross_encoder("PAIREMB0000"), Error);
}

TEST(CrossEncoder, NeedsQrels) {
  const auto c = ingest_text("q1\thello\n", "p1\tworld\n", std::nullopt);
  EXPECT_THROW(train_mini_cross_encoder(c, {}), Error);
}

TEST(Retriever, OverlapRanksLexicalMatchesFirst) {
  const auto c = small_corpus();
  const OverlapRetriever r(c.passages());
  const auto hits = r.retrieve(c.query(*c.find_query("q2")), 3);
  ASSERT_GE(hits.size(), 2u);
  std::set<PassageId> top2{hits[0].id, hits[1].id};
  EXPECT_EQ(top2, (std::set<PassageId>{2, 3}));
  for (std::size_t i = 1; i < hits.size(); ++i) EXPECT_FALSE(ranks_before(hits[i], hits[i - 1]));
}

}  // namespace
