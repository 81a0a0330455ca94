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

/// \file distill.hpp
/// Teachers, candidate retrievers and threshold-based pseudo-labeling.
///
/// A teacher scores (query, passage) pairs in [0, 1]. Candidates come from a
/// retriever; a candidate scoring strictly above s_pos becomes a positive,
/// strictly below s_neg a hard negative, and anything in between is dropped.

#include <bit>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "pair/corpus.hpp"
#include "pair/encoder.hpp"
#include "pair/evalkit.hpp"
#include "pair/index.hpp"
#include "pair/optim.hpp"

namespace pair {

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

struct TeacherScore {
  QueryId query_id = 0;
  PassageId passage_id = 0;
  double score = 0;
};

class Teacher {
 public:
  virtual ~Teacher() = default;
  virtual std::string name() const = 0;
  /// Deterministic score in [0, 1].
  virtual double score(const Query& q, const Passage& p) const = 0;
};

inline TeacherScore teacher_score(const Teacher* teacher, const Query& q, const Passage& p) {
  if (!teacher) fail_usage("teacher is not initialized");
  const double s = teacher->score(q, p);
  if (!std::isfinite(s)) fail_numeric("teacher '" + teacher->name() + "' produced a non-finite score");
  return {q.id, p.id, std::clamp(s, 0.0, 1.0)};
}

// ---------------------------------------------------------------------------
// Oracle teacher

/// 1 for judged pairs, 0 otherwise, optionally perturbed by Gaussian noise
/// and clamped. The noise is a function of (seed, query, passage), so a pair
/// scores the same regardless of call order.
class OracleTeacher : public Teacher {
 public:
  OracleTeacher(GoldQrels gold, double sigma = 0.0, std::uint64_t seed = 0)
      : gold_(std::move(gold)), sigma_(sigma), seed_(seed) {}

  std::string name() const override { return "oracle"; }

  double score(const Query& q, const Passage& p) const override {
    auto it = gold_.positives.find(q.external_id);
    double s = (it != gold_.positives.end() && it->second.contains(p.external_id)) ? 1.0 : 0.0;
    if (sigma_ > 0) {
      Rng rng(hash_combine({seed_, fnv1a64(q.external_id), fnv1a64(p.external_id)}));
      s += sigma_ * rng.normal();
    }
    return std::clamp(s, 0.0, 1.0);
  }

 private:
  GoldQrels gold_;
  double sigma_;
  std::uint64_t seed_;
};

// ---------------------------------------------------------------------------
// Overlap teacher

inline std::set<std::string> word_set(std::string_view text) {
  const auto words = tokenize(text);
  return {words.begin(), words.end()};
}

/// Logistic of the fraction of distinct query words found in the passage.
class OverlapTeacher : public Teacher {
 public:
  explicit OverlapTeacher(double slope = 12.0, double midpoint = 0.5) : slope_(slope), midpoint_(midpoint) {}

  std::string name() const override { return "overlap"; }

  double score(const Query& q, const Passage& p) const override {
    const auto qw = word_set(q.text);
    const auto pw = word_set(p.text);
    if (qw.empty()) return 0.0;
    std::size_t shared = 0;
    for (const auto& w : qw) shared += pw.contains(w);
    return sigmoid(slope_ * (double(shared) / double(qw.size()) - midpoint_));
  }

 private:
  double slope_;
  double midpoint_;
};

// ---------------------------------------------------------------------------
// Score cache teacher

/// Reads `<query_id>\t<passage_id>\t<score>` lines. Pairs missing from the
/// cache are an error.
class FileTeacher : public Teacher {
 public:
  explicit FileTeacher(std::string_view content, const std::string& name = "scores") {
    std::size_t line_no = 0, pos = 0;
    while (pos < content.size()) {
      std::size_t end = content.find('\n', pos);
      if (end == std::string_view::npos) end = content.size();
      const auto line = trim(content.substr(pos, end - pos));
      pos = end + 1;
      ++line_no;
      if (line.empty()) continue;
      const auto f = split(line, '\t');
      if (f.size() != 3) fail_data(name + ":" + std::to_string(line_no) + ": expected '<qid>\\t<pid>\\t<score>'");
      double s = 0;
      try {
        s = std::stod(f[2]);
      } catch (const std::exception&) {
        fail_data(name + ":" + std::to_string(line_no) + ": malformed score");
      }
      scores_[f[0] + '\t' + f[1]] = s;
    }
  }

  std::string name() const override { return "file"; }

  double score(const Query& q, const Passage& p) const override {
    auto it = scores_.find(q.external_id + '\t' + p.external_id);
    if (it == scores_.end())
      fail_data("score cache has no entry for (" + q.external_id + ", " + p.external_id + ")");
    return std::clamp(it->second, 0.0, 1.0);
  }

 private:
  std::unordered_map<std::string, double> scores_;
};

// ---------------------------------------------------------------------------
// Mini cross-encoder
//
// Input: mean-pooled embeddings of the query bag, the passage bag and their
// intersection bag, plus the intersection size relative to each bag. One tanh
// layer and a sigmoid output. Trained with pointwise binary cross-entropy.

struct CrossDims {
  std::uint32_t vocab = 1u << 16;
  std::uint32_t emb = 32;
  std::uint32_t hidden = 32;

  std::uint32_t input() const { return 3 * emb + 2; }
};

template <class Real>
struct BasicCrossParams {
  CrossDims dims;
  std::uint64_t hash_seed = 0;
  std::vector<Real> embedding;  // vocab x emb
  std::vector<Real> w1;         // input x hidden
  std::vector<Real> b1;         // hidden
  std::vector<Real> w2;         // hidden
  std::vector<Real> b2;         // 1

  static BasicCrossParams random(const CrossDims& d, std::uint64_t hash_seed, std::uint64_t seed, double scale = 0.05) {
    BasicCrossParams p;
    p.dims = d;
    p.hash_seed = hash_seed;
    Rng rng(seed);
    p.embedding.resize(std::size_t(d.vocab) * d.emb);
    p.w1.resize(std::size_t(d.input()) * d.hidden);
    p.b1.assign(d.hidden, Real(0));
    p.w2.resize(d.hidden);
    p.b2.assign(1, Real(0));
    for (auto* blob : {&p.embedding, &p.w1, &p.w2})
      for (auto& x : *blob) x = static_cast<Real>(rng.uniform(-scale, scale));
    return p;
  }

  std::array<std::vector<Real>*, 5> blobs() { return {&embedding, &w1, &b1, &w2, &b2}; }
  std::array<const std::vector<Real>*, 5> blobs() const { return {&embedding, &w1, &b1, &w2, &b2}; }

  template <class Other>
  BasicCrossParams<Other> cast() const {
    BasicCrossParams<Other> o;
    o.dims = dims;
    o.hash_seed = hash_seed;
    auto s = blobs();
    auto d = o.blobs();
    for (std::size_t i = 0; i < s.size(); ++i) d[i]->assign(s[i]->begin(), s[i]->end());
    return o;
  }
};

struct CrossInput {
  FeatureBag query;
  FeatureBag passage;
  FeatureBag shared;
  double shared_over_query = 0;
  double shared_over_passage = 0;
};

inline CrossInput make_cross_input(std::string_view q, std::string_view p, std::uint64_t hash_seed,
                                   std::uint32_t vocab) {
  CrossInput in{featurize(q, hash_seed, vocab), featurize(p, hash_seed, vocab), {}, 0, 0};
  std::size_t i = 0, j = 0;
  while (i < in.query.ids.size() && j < in.passage.ids.size()) {
    if (in.query.ids[i] < in.passage.ids[j]) {
      ++i;
    } else if (in.query.ids[i] > in.passage.ids[j]) {
      ++j;
    } else {
      in.shared.ids.push_back(in.query.ids[i]);
      in.shared.counts.push_back(std::min(in.query.counts[i], in.passage.counts[j]));
      ++i;
      ++j;
    }
  }
  in.shared_over_query = double(in.shared.size()) / double(in.query.size());
  in.shared_over_passage = double(in.shared.size()) / double(in.passage.size());
  return in;
}

template <class Real>
struct CrossTrace {
  std::vector<Real> x;
  std::vector<Real> hidden;
  Real logit = 0;
};

namespace detail {

template <class Real>
void pool_into(const BasicCrossParams<Real>& p, const FeatureBag& bag, Real* out) {
  const auto total = bag.total();
  if (total == 0) return;
  const Real inv = Real(1) / static_cast<Real>(total);
  for (std::size_t i = 0; i < bag.ids.size(); ++i) {
    const Real w = static_cast<Real>(bag.counts[i]) * inv;
    const Real* r = p.embedding.data() + std::size_t(bag.ids[i]) * p.dims.emb;
    for (std::size_t k = 0; k < p.dims.emb; ++k) out[k] += w * r[k];
  }
}

template <class Real>
void pool_backward(const BasicCrossParams<Real>& p, const FeatureBag& bag, const Real* g, std::vector<Real>& g_emb) {
  const auto total = bag.total();
  if (total == 0) return;
  const Real inv = Real(1) / static_cast<Real>(total);
  for (std::size_t i = 0; i < bag.ids.size(); ++i) {
    const Real w = static_cast<Real>(bag.counts[i]) * inv;
    Real* r = g_emb.data() + std::size_t(bag.ids[i]) * p.dims.emb;
    for (std::size_t k = 0; k < p.dims.emb; ++k) r[k] += w * g[k];
  }
}

}  // namespace detail

template <class Real>
CrossTrace<Real> cross_forward(const BasicCrossParams<Real>& p, const CrossInput& in) {
  const auto& d = p.dims;
  CrossTrace<Real> t;
  t.x.assign(d.input(), Real(0));
  detail::pool_into(p, in.query, t.x.data());
  detail::pool_into(p, in.passage, t.x.data() + d.emb);
  detail::pool_into(p, in.shared, t.x.data() + 2 * d.emb);
  t.x[3 * d.emb] = static_cast<Real>(in.shared_over_query);
  t.x[3 * d.emb + 1] = static_cast<Real>(in.shared_over_passage);
  t.hidden.assign(p.b1.begin(), p.b1.end());
  for (std::size_t i = 0; i < d.input(); ++i) {
    const Real xi = t.x[i];
    if (xi == Real(0)) continue;
    const Real* w = p.w1.data() + i * d.hidden;
    for (std::size_t h = 0; h < d.hidden; ++h) t.hidden[h] += w[h] * xi;
  }
  t.logit = p.b2[0];
  for (std::size_t h = 0; h < d.hidden; ++h) {
    t.hidden[h] = std::tanh(t.hidden[h]);
    t.logit += p.w2[h] * t.hidden[h];
  }
  return t;
}

/// Gradient buffers for the cross-encoder, same layout as its parameters.
template <class Real>
struct CrossGrads {
  std::vector<Real> embedding, w1, b1, w2, b2;

  explicit CrossGrads(const CrossDims& d)
      : embedding(std::size_t(d.vocab) * d.emb, Real(0)),
        w1(std::size_t(d.input()) * d.hidden, Real(0)),
        b1(d.hidden, Real(0)),
        w2(d.hidden, Real(0)),
        b2(1, Real(0)) {}

  std::array<std::vector<Real>*, 5> blobs() { return {&embedding, &w1, &b1, &w2, &b2}; }
  std::array<const std::vector<Real>*, 5> blobs() const { return {&embedding, &w1, &b1, &w2, &b2}; }
};

/// Adds d(g_logit * logit)/d(params) into grads.
template <class Real>
void cross_backward(const BasicCrossParams<Real>& p, const CrossInput& in, const CrossTrace<Real>& t, Real g_logit,
                    CrossGrads<Real>& g) {
  const auto& d = p.dims;
  g.b2[0] += g_logit;
  std::vector<Real> g_hidden(d.hidden);
  for (std::size_t h = 0; h < d.hidden; ++h) {
    g.w2[h] += g_logit * t.hidden[h];
    g_hidden[h] = g_logit * p.w2[h] * (Real(1) - t.hidden[h] * t.hidden[h]);
    g.b1[h] += g_hidden[h];
  }
  std::vector<Real> g_x(d.input(), Real(0));
  for (std::size_t i = 0; i < d.input(); ++i) {
    const Real* w = p.w1.data() + i * d.hidden;
    Real* gw = g.w1.data() + i * d.hidden;
    Real acc = 0;
    for (std::size_t h = 0; h < d.hidden; ++h) {
      gw[h] += t.x[i] * g_hidden[h];
      acc += w[h] * g_hidden[h];
    }
    g_x[i] = acc;
  }
  detail::pool_backward(p, in.query, g_x.data(), g.embedding);
  detail::pool_backward(p, in.passage, g_x.data() + d.emb, g.embedding);
  detail::pool_backward(p, in.shared, g_x.data() + 2 * d.emb, g.embedding);
}

/// Mean binary cross-entropy over labeled inputs, accumulating gradients.
template <class Real>
double cross_bce(const BasicCrossParams<Real>& p, const std::vector<CrossInput>& inputs,
                 const std::vector<double>& labels, CrossGrads<Real>* grads) {
  double loss = 0;
  const double n = double(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto t = cross_forward(p, inputs[i]);
    const double z = static_cast<double>(t.logit);
    const double y = labels[i];
    // -[y log s(z) + (1-y) log(1-s(z))] = softplus(z) - y z
    loss += (std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)))) - y * z;
    if (grads) cross_backward(p, inputs[i], t, static_cast<Real>((sigmoid(z) - y) / n), *grads);
  }
  return loss / n;
}

struct CrossTrainConfig {
  CrossDims dims;
  std::uint64_t hash_seed = 0x5041495231ULL;
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  std::size_t negatives_per_positive = 4;
  double lr = 5e-3;
  std::uint64_t seed = 1;
};

class MiniCrossEncoder : public Teacher {
 public:
  using Params = BasicCrossParams<float>;

  explicit MiniCrossEncoder(Params params) : params_(std::move(params)) {}

  std::string name() const override { return "cross"; }

  double score(const Query& q, const Passage& p) const override {
    const auto in = make_cross_input(q.text, p.text, params_.hash_seed, params_.dims.vocab);
    return sigmoid(static_cast<double>(cross_forward(params_, in).logit));
  }

  const Params& params() const { return params_; }

 private:
  Params params_;
};

/// Gold positives against uniformly sampled non-positive passages.
inline MiniCrossEncoder train_mini_cross_encoder(const Corpus& labeled, const CrossTrainConfig& cfg) {
  if (labeled.qrels().empty()) fail_data("teacher training needs relevance judgments");
  const auto& d = cfg.dims;
  auto params = MiniCrossEncoder::Params::random(d, cfg.hash_seed, cfg.seed);
  Rng rng(cfg.seed);
  const std::size_t M = labeled.num_passages();

  std::vector<std::size_t> sizes;
  for (auto* b : params.blobs()) sizes.push_back(b->size());
  Adam<float> adam(sizes);
  CrossGrads<float> grads(d);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::pair<const Query*, PassageId>> pairs;
    std::vector<double> labels;
    for (const auto& r : labeled.qrels()) {
      const auto& q = labeled.query(r.query_id);
      pairs.emplace_back(&q, r.passage_id);
      labels.push_back(1.0);
      for (std::size_t n = 0; n < cfg.negatives_per_positive && M > 1; ++n) {
        PassageId neg;
        std::size_t tries = 0;
        do {
          neg = static_cast<PassageId>(rng.below(M));
        } while (labeled.is_positive(q.id, neg) && ++tries < 32);
        if (labeled.is_positive(q.id, neg)) continue;
        pairs.emplace_back(&q, neg);
        labels.push_back(0.0);
      }
    }
    std::vector<std::size_t> order(pairs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      std::vector<CrossInput> inputs;
      std::vector<double> ys;
      for (std::size_t i = b; i < std::min(order.size(), b + cfg.batch_size); ++i) {
        const auto& [q, pid] = pairs[order[i]];
        inputs.push_back(make_cross_input(q->text, labeled.passages()[pid].text, params.hash_seed, d.vocab));
        ys.push_back(labels[order[i]]);
      }
      for (auto* blob : grads.blobs()) std::fill(blob->begin(), blob->end(), 0.0f);
      cross_bce(params, inputs, ys, &grads);
      auto pb = params.blobs();
      auto gb = grads.blobs();
      std::array<const std::vector<float>*, 5> gc{gb[0], gb[1], gb[2], gb[3], gb[4]};
      adam.step(pb, gc, cfg.lr);
    }
  }
  return MiniCrossEncoder(std::move(params));
}

inline constexpr std::string_view kCrossMagic = "PAIRXENC";
inline constexpr std::uint32_t kCrossVersion = 1;

/// Magic, version, JSON header length, JSON header, then the parameter
/// blobs as little-endian float32.
inline std::string serialize_cross_encoder(const MiniCrossEncoder& t) {
  const auto& p = t.params();
  const std::string json = nlohmann::json{{"vocab", p.dims.vocab},
                                          {"emb", p.dims.emb},
                                          {"hidden", p.dims.hidden},
                                          {"hash_seed", p.hash_seed}}
                               .dump();
  std::string out(kCrossMagic);
  detail::put_u32(out, kCrossVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(json.size()));
  out += json;
  for (auto* blob : p.blobs()) detail::put_f32s(out, *blob);
  return out;
}

inline MiniCrossEncoder parse_cross_encoder(std::string_view bytes) {
  const std::size_t head = kCrossMagic.size() + 8;
  if (bytes.size() < head || bytes.substr(0, kCrossMagic.size()) != kCrossMagic)
    fail_data("not a cross-encoder teacher file");
  if (detail::get_u32(bytes, kCrossMagic.size()) != kCrossVersion) fail_data("unsupported teacher file version");
  const auto json_len = detail::get_u32(bytes, kCrossMagic.size() + 4);
  if (bytes.size() < head + json_len) fail_data("teacher file truncated");
  CrossDims d;
  std::uint64_t hash_seed = 0;
  try {
    const auto j = nlohmann::json::parse(bytes.substr(head, json_len));
    d.vocab = j.at("vocab").get<std::uint32_t>();
    d.emb = j.at("emb").get<std::uint32_t>();
    d.hidden = j.at("hidden").get<std::uint32_t>();
    hash_seed = j.at("hash_seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    fail_data(std::string("teacher file header invalid: ") + e.what());
  }
  if (d.vocab == 0 || d.emb == 0 || d.hidden == 0) fail_data("teacher file has a zero dimension");
  auto p = MiniCrossEncoder::Params::random(d, hash_seed, 0, 0.0);
  std::size_t at = head + json_len, total = 0;
  for (auto* blob : p.blobs()) total += blob->size();
  if (bytes.size() != at + 4 * total) fail_data("teacher file size does not match its header");
  for (auto* blob : p.blobs())
    for (auto& x : *blob) {
      x = std::bit_cast<float>(detail::get_u32(bytes, at));
      at += 4;
      if (!std::isfinite(x)) fail_data("teacher file contains a non-finite value");
    }
  return MiniCrossEncoder(std::move(p));
}

// ---------------------------------------------------------------------------
// Retrievers

class Retriever {
 public:
  virtual ~Retriever() = default;
  virtual std::vector<Hit> retrieve(const Query& q, std::size_t k) const = 0;
};

/// Exact inner-product retrieval with a trained dual encoder.
class DenseRetriever : public Retriever {
 public:
  DenseRetriever(DualEncoder enc, EmbeddingStore store) : enc_(std::move(enc)), store_(std::move(store)) {}

  std::vector<Hit> retrieve(const Query& q, std::size_t k) const override {
    const auto v = enc_.encode_text(q.text, Role::query);
    return search(store_, v, k);
  }

  const EmbeddingStore& store() const { return store_; }

 private:
  DualEncoder enc_;
  EmbeddingStore store_;
};

/// BM25 over word tokens; the fallback retriever before any encoder exists.
class OverlapRetriever : public Retriever {
 public:
  explicit OverlapRetriever(const PassageStore& passages, double k1 = 0.9, double b = 0.4) : k1_(k1), b_(b) {
    n_docs_ = passages.size();
    double total_len = 0;
    for (const auto& p : passages.all()) {
      const auto words = tokenize(p.text);
      doc_len_.push_back(double(words.size()));
      total_len += double(words.size());
      std::map<std::string, std::uint32_t> tf;
      for (const auto& w : words) ++tf[w];
      for (const auto& [w, n] : tf) postings_[w].push_back({p.id, n});
    }
    avg_len_ = n_docs_ ? total_len / double(n_docs_) : 0.0;
  }

  std::vector<Hit> retrieve(const Query& q, std::size_t k) const override {
    std::unordered_map<PassageId, double> acc;
    for (const auto& w : word_set(q.text)) {
      auto it = postings_.find(w);
      if (it == postings_.end()) continue;
      const double df = double(it->second.size());
      const double idf = std::log(1.0 + (double(n_docs_) - df + 0.5) / (df + 0.5));
      for (const auto& [pid, tf] : it->second) {
        const double norm = k1_ * (1.0 - b_ + b_ * doc_len_[pid] / avg_len_);
        acc[pid] += idf * double(tf) * (k1_ + 1.0) / (double(tf) + norm);
      }
    }
    std::vector<Hit> hits;
    hits.reserve(acc.size());
    for (auto [pid, s] : acc) hits.push_back({pid, s});
    const std::size_t keep = std::min(k, hits.size());
    std::partial_sort(hits.begin(), hits.begin() + std::ptrdiff_t(keep), hits.end(), ranks_before);
    hits.resize(keep);
    return hits;
  }

 private:
  struct Posting {
    PassageId id;
    std::uint32_t tf;
  };
  double k1_, b_;
  std::size_t n_docs_ = 0;
  double avg_len_ = 0;
  std::vector<double> doc_len_;
  std::unordered_map<std::string, std::vector<Posting>> postings_;
};

// ---------------------------------------------------------------------------
// Pseudo-labeling

struct PseudoLabelConfig {
  double s_pos = 0.9;
  double s_neg = 0.1;
  std::size_t top_k = 50;
  std::size_t max_negs_per_pos = 4;
  std::uint64_t seed = 1;

  void validate() const {
    if (!(0.0 <= s_neg && s_neg < s_pos && s_pos <= 1.0)) fail_usage("thresholds must satisfy 0 <= s_neg < s_pos <= 1");
    if (top_k == 0) fail_usage("top_k must be positive");
    if (max_negs_per_pos == 0) fail_usage("max_negs_per_pos must be positive");
  }
};

struct ExampleProvenance {
  double positive_score = 0;
  std::vector<double> negative_scores;
};

struct PseudoLabelStats {
  std::size_t n_queries_kept = 0;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  std::size_t n_discarded = 0;             // queries without any positive
  std::size_t n_discarded_candidates = 0;  // scores within [s_neg, s_pos]
};

struct PseudoLabelSet {
  std::vector<TrainExample> examples;
  std::vector<ExampleProvenance> provenance;
  PseudoLabelStats stats;
  std::vector<TeacherScore> scores;  // every teacher call, query order then rank order
};

/// Candidates of one query split by the thresholds, in retrieval order.
struct ThresholdSplit {
  std::vector<std::pair<PassageId, double>> positives;
  std::vector<std::pair<PassageId, double>> negatives;
  std::size_t discarded = 0;
};

inline ThresholdSplit apply_thresholds(const std::vector<std::pair<PassageId, double>>& scored, double s_pos,
                                       double s_neg) {
  ThresholdSplit s;
  for (const auto& c : scored) {
    if (c.second > s_pos)
      s.positives.push_back(c);
    else if (c.second < s_neg)
      s.negatives.push_back(c);
    else
      ++s.discarded;
  }
  return s;
}

namespace detail {

struct QueryLabels {
  std::vector<TrainExample> examples;
  std::vector<ExampleProvenance> provenance;
  std::vector<TeacherScore> scores;
  std::size_t n_pos = 0, n_neg = 0, n_discarded_candidates = 0;
  bool kept = false;
};

inline void emit_examples(const Query& q, const std::vector<std::tuple<PassageId, double, ExampleSource>>& positives,
                          const std::vector<std::pair<PassageId, double>>& negatives, const PseudoLabelConfig& cfg,
                          QueryLabels& out) {
  for (const auto& [pid, score, src] : positives) {
    Rng rng(hash_combine({cfg.seed, q.id, pid}));
    TrainExample ex{q.id, pid, {}, src};
    ExampleProvenance prov{score, {}};
    for (auto i : rng.sample_without_replacement(negatives.size(), cfg.max_negs_per_pos)) {
      ex.hard_negative_ids.push_back(negatives[i].first);
      prov.negative_scores.push_back(negatives[i].second);
    }
    out.examples.push_back(std::move(ex));
    out.provenance.push_back(std::move(prov));
  }
}

template <class PerQuery>
PseudoLabelSet label_queries(const std::vector<Query>& queries, unsigned threads, PerQuery per_query) {
  std::vector<QueryLabels> slots(queries.size());
  parallel_for(queries.size(), threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) slots[i] = per_query(queries[i]);
  });
  PseudoLabelSet set;
  for (auto& s : slots) {
    set.stats.n_pos += s.n_pos;
    set.stats.n_neg += s.n_neg;
    set.stats.n_discarded_candidates += s.n_discarded_candidates;
    if (s.kept)
      ++set.stats.n_queries_kept;
    else
      ++set.stats.n_discarded;
    for (auto& ts : s.scores) set.scores.push_back(ts);
    for (std::size_t j = 0; j < s.examples.size(); ++j) {
      set.examples.push_back(std::move(s.examples[j]));
      set.provenance.push_back(std::move(s.provenance[j]));
    }
  }
  return set;
}

}  // namespace detail

/// Labels every query of `queries` from its retrieved top_k candidates.
/// Queries are processed independently and assembled in query order.
inline PseudoLabelSet generate_pseudo_labels(const Corpus& queries, const Retriever& retriever, const Teacher& teacher,
                                             const PseudoLabelConfig& cfg, unsigned threads = 1) {
  cfg.validate();
  const auto& passages = queries.passages();
  return detail::label_queries(queries.queries(), threads, [&](const Query& q) {
    detail::QueryLabels out;
    const auto hits = retriever.retrieve(q, cfg.top_k);
    if (hits.empty()) return out;
    std::vector<std::pair<PassageId, double>> scored;
    for (const auto& h : hits) {
      const auto ts = teacher_score(&teacher, q, passages[h.id]);
      out.scores.push_back(ts);
      scored.emplace_back(h.id, ts.score);
    }
    const auto split = apply_thresholds(scored, cfg.s_pos, cfg.s_neg);
    out.n_discarded_candidates = split.discarded;
    if (split.positives.empty()) return out;
    out.kept = true;
    out.n_pos = split.positives.size();
    out.n_neg = split.negatives.size();
    std::vector<std::tuple<PassageId, double, ExampleSource>> pos;
    for (const auto& [pid, s] : split.positives) pos.emplace_back(pid, s, ExampleSource::pseudo);
    detail::emit_examples(q, pos, split.negatives, cfg, out);
    return out;
  });
}

/// Same mechanics over labeled queries. Gold positives are always kept (as
/// src=gold, in passage-id order) followed by any teacher-found positives;
/// gold passages never become negatives.
inline PseudoLabelSet relabel_labeled_corpus(const Corpus& corpus, const Retriever& retriever, const Teacher& teacher,
                                             const PseudoLabelConfig& cfg, unsigned threads = 1) {
  cfg.validate();
  const auto& passages = corpus.passages();
  std::vector<Query> labeled;
  for (const auto& q : corpus.queries())
    if (corpus.is_labeled(q.id)) labeled.push_back(q);
  return detail::label_queries(labeled, threads, [&](const Query& q) {
    detail::QueryLabels out;
    std::vector<std::tuple<PassageId, double, ExampleSource>> pos;
    for (auto g : corpus.positives(q.id)) {
      const auto ts = teacher_score(&teacher, q, passages[g]);
      pos.emplace_back(g, ts.score, ExampleSource::gold);
    }
    std::vector<std::pair<PassageId, double>> scored;
    for (const auto& h : retriever.retrieve(q, cfg.top_k)) {
      if (corpus.is_positive(q.id, h.id)) continue;
      const auto ts = teacher_score(&teacher, q, passages[h.id]);
      out.scores.push_back(ts);
      scored.emplace_back(h.id, ts.score);
    }
    const auto split = apply_thresholds(scored, cfg.s_pos, cfg.s_neg);
    out.n_discarded_candidates = split.discarded;
    for (const auto& [pid, s] : split.positives) pos.emplace_back(pid, s, ExampleSource::pseudo);
    out.kept = true;
    out.n_pos = pos.size();
    out.n_neg = split.negatives.size();
    detail::emit_examples(q, pos, split.negatives, cfg, out);
    return out;
  });
}

inline std::string serialize_scores(const Corpus& c, const std::vector<TeacherScore>& scores) {
  std::string out;
  for (const auto& s : scores)
    out += c.query(s.query_id).external_id + "\t" + c.passages()[s.passage_id].external_id + "\t" +
           format_double(s.score) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Quality audit

struct QualityAudit {
  double acc_pos = 0;
  double acc_neg = 0;
  std::size_t n_queries = 0;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
};

/// Precision of pseudo positives and pseudo negatives against gold judgments
/// on a seeded sample of the labeled queries. Distinct (query, passage) pairs
/// are counted once.
inline QualityAudit audit_quality(const Corpus& c, const PseudoLabelSet& set, const GoldQrels& gold,
                                  std::size_t sample_size, std::uint64_t seed) {
  std::vector<QueryId> queries;
  std::map<QueryId, std::pair<std::set<PassageId>, std::set<PassageId>>> labels;
  for (const auto& ex : set.examples) {
    if (!labels.contains(ex.query_id)) queries.push_back(ex.query_id);
    auto& [pos, neg] = labels[ex.query_id];
    pos.insert(ex.positive_id);
    neg.insert(ex.hard_negative_ids.begin(), ex.hard_negative_ids.end());
  }
  if (sample_size > queries.size()) {
    warn("audit sample of " + std::to_string(sample_size) + " exceeds the " + std::to_string(queries.size()) +
         " labeled queries in the set; auditing all");
    sample_size = queries.size();
  }
  Rng rng(seed);
  QualityAudit a;
  std::size_t good_pos = 0, good_neg = 0;
  for (auto i : rng.sample_without_replacement(queries.size(), sample_size)) {
    const auto& q = c.query(queries[i]);
    auto it = gold.positives.find(q.external_id);
    const std::set<std::string> none;
    const auto& g = it == gold.positives.end() ? none : it->second;
    const auto& [pos, neg] = labels[q.id];
    for (auto p : pos) good_pos += g.contains(c.passages()[p].external_id);
    for (auto p : neg) good_neg += !g.contains(c.passages()[p].external_id);
    a.n_pos += pos.size();
    a.n_neg += neg.size();
    ++a.n_queries;
  }
  a.acc_pos = a.n_pos ? double(good_pos) / double(a.n_pos) : 0.0;
  a.acc_neg = a.n_neg ? double(good_neg) / double(a.n_neg) : 0.0;
  return a;
}

}  // namespace pair
