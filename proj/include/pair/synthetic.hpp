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

/// \file synthetic.hpp
/// Seeded topic-structured corpora for controlled experiments.
///
/// Every topic owns a small vocabulary. A passage draws most of its words
/// from its topic vocabulary and adds a few key words of its own, so
/// passages of one topic overlap heavily. Key words come from a per-topic
/// pool, so each recurs in a few passages. A query names its target passage
/// through some of its key words, mixed with topic words. Every key word has
/// an alias that only queries use, so matching a query to its passage has to
/// be learned from training pairs rather than read off shared words.

#include <map>
#include <string>
#include <vector>

#include "pair/corpus.hpp"
#include "pair/evalkit.hpp"

namespace pair {

struct SyntheticConfig {
  std::size_t topics = 50;
  std::size_t passages_per_topic = 20;
  std::size_t queries_per_topic = 5;       // labeled
  std::size_t unlabeled_per_topic = 40;
  std::size_t topic_vocab = 12;
  std::size_t topic_words_per_passage = 8;
  std::size_t key_words_per_passage = 3;
  std::size_t key_pool_per_topic = 10;     // key words are drawn from this per-topic pool
  double alias_prob = 0.5;                 // chance a query uses a key word's alias instead of the word
  std::size_t topic_words_per_query = 2;
  std::size_t key_words_per_query = 3;
  std::size_t shared_vocab = 40;           // filler words common to all topics
  std::size_t filler_words_per_text = 2;
  std::uint64_t seed = 1;
};

/// A generated collection: labeled queries with qrels, unlabeled queries,
/// and the hidden judgments of the unlabeled ones (for oracle teachers and
/// quality audits only).
struct SyntheticData {
  Corpus labeled;
  Corpus unlabeled;
  GoldQrels unlabeled_truth;
  std::vector<std::size_t> passage_topic;
};

namespace detail {

inline std::string random_word(Rng& rng) {
  std::string w(5 + rng.below(4), 'a');
  for (auto& c : w) c = static_cast<char>('a' + rng.below(26));
  return w;
}

}  // namespace detail

inline SyntheticData make_synthetic(const SyntheticConfig& cfg) {
  Rng rng(cfg.seed);
  std::set<std::string> used;
  auto fresh = [&] {
    std::string w;
    do {
      w = detail::random_word(rng);
    } while (!used.insert(w).second);
    return w;
  };
  std::vector<std::string> shared(cfg.shared_vocab);
  for (auto& w : shared) w = fresh();
  std::vector<std::vector<std::string>> topic_words(cfg.topics, std::vector<std::string>(cfg.topic_vocab));
  for (auto& t : topic_words)
    for (auto& w : t) w = fresh();
  std::vector<std::vector<std::string>> key_pool(cfg.topics, std::vector<std::string>(cfg.key_pool_per_topic));
  for (auto& t : key_pool)
    for (auto& w : t) w = fresh();
  std::map<std::string, std::string> alias;
  for (const auto& t : key_pool)
    for (const auto& w : t) alias[w] = fresh();

  auto pick = [&](const std::vector<std::string>& from, std::size_t n, std::vector<std::string>& into) {
    for (auto i : rng.sample_without_replacement(from.size(), n)) into.push_back(from[i]);
  };
  auto fillers = [&](std::vector<std::string>& into) {
    for (std::size_t i = 0; i < cfg.filler_words_per_text && !shared.empty(); ++i)
      into.push_back(shared[rng.below(shared.size())]);
  };
  auto join = [&](std::vector<std::string> words) {
    rng.shuffle(words);
    std::string s;
    for (const auto& w : words) s += (s.empty() ? "" : " ") + w;
    return s;
  };

  SyntheticData out;
  auto store = std::make_shared<PassageStore>();
  std::vector<std::vector<std::string>> keys;
  for (std::size_t t = 0; t < cfg.topics; ++t)
    for (std::size_t j = 0; j < cfg.passages_per_topic; ++j) {
      std::vector<std::string> k;
      pick(key_pool[t], cfg.key_words_per_passage, k);
      std::vector<std::string> words = k;
      pick(topic_words[t], cfg.topic_words_per_passage, words);
      fillers(words);
      store->add("d" + std::to_string(store->size()), join(words));
      keys.push_back(std::move(k));
      out.passage_topic.push_back(t);
    }

  auto make_queries = [&](std::size_t per_topic, const std::string& prefix, std::vector<Query>& qs,
                          std::vector<QRel>& rels) {
    for (std::size_t t = 0; t < cfg.topics; ++t) {
      const auto targets = rng.sample_without_replacement(cfg.passages_per_topic, per_topic);
      for (std::size_t i = 0; i < per_topic; ++i) {
        const auto pid = static_cast<PassageId>(t * cfg.passages_per_topic + targets[i % targets.size()]);
        std::vector<std::string> words;
        pick(keys[pid], cfg.key_words_per_query, words);
        for (auto& w : words)
          if (rng.uniform() < cfg.alias_prob) w = alias.at(w);
        pick(topic_words[t], cfg.topic_words_per_query, words);
        fillers(words);
        const auto qid = static_cast<QueryId>(qs.size());
        qs.push_back({qid, prefix + std::to_string(qid), join(words)});
        rels.push_back({qid, pid});
      }
    }
  };

  std::vector<Query> lq, uq;
  std::vector<QRel> lr, ur;
  make_queries(cfg.queries_per_topic, "q", lq, lr);
  make_queries(cfg.unlabeled_per_topic, "u", uq, ur);
  out.labeled = Corpus(std::move(lq), store, std::move(lr));
  const Corpus hidden(uq, store, ur);
  out.unlabeled_truth = gold_qrels(hidden);
  out.unlabeled = Corpus(std::move(uq), store, {});
  return out;
}

}  // namespace pair
