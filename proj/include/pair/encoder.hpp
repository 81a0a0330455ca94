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

/// \file encoder.hpp
/// Hashed bag-of-features text encoder with a two-layer tanh MLP on top:
///
///     pool = sum_i c_i * E[f_i] / sum_i c_i
///     h    = tanh(W1^T pool + b1)
///     v    = W2^T h + b2
///
/// One parameter set serves queries and passages alike. Gradients are
/// written out by hand; the scalar type is a template parameter so that the
/// same code runs in float for training and in double for gradient checks.

#include <array>
#include <bit>
#include <cstring>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pair/common.hpp"

namespace pair {

// ---------------------------------------------------------------------------
// Features

/// Sorted unique feature ids with positive counts.
struct FeatureBag {
  std::vector<std::uint32_t> ids;
  std::vector<std::uint32_t> counts;

  std::size_t size() const { return ids.size(); }
  bool empty() const { return ids.empty(); }
  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (auto c : counts) t += c;
    return t;
  }

  friend bool operator==(const FeatureBag&, const FeatureBag&) = default;
};

/// Lower-cased word tokens: maximal runs of ASCII alphanumerics and non-ASCII
/// bytes. Text without any such byte becomes a single token.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c >= 0x80) {
      cur.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
    } else if (!cur.empty()) {
      words.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  if (words.empty()) {
    std::string whole(trim(text));
    if (!whole.empty()) words.push_back(std::move(whole));
  }
  return words;
}

/// Raw feature strings: `w:<word>` for each word and `c:<xyz>` for each
/// character trigram of the `#`-padded word.
inline std::vector<std::string> feature_strings(std::string_view text) {
  std::vector<std::string> out;
  for (const auto& w : tokenize(text)) {
    out.push_back("w:" + w);
    const std::string padded = "#" + w + "#";
    for (std::size_t i = 0; i + 3 <= padded.size(); ++i) out.push_back("c:" + padded.substr(i, 3));
  }
  return out;
}

inline std::uint32_t hash_feature(std::string_view feature, std::uint64_t hash_seed, std::uint32_t vocab) {
  return static_cast<std::uint32_t>(fnv1a64(feature, hash_seed) % vocab);
}

inline FeatureBag featurize(std::string_view text, std::uint64_t hash_seed, std::uint32_t vocab) {
  if (trim(text).empty()) fail_data("cannot featurize empty text");
  if (vocab == 0) fail_usage("feature vocabulary size must be positive");
  std::map<std::uint32_t, std::uint32_t> counts;
  for (const auto& f : feature_strings(text)) ++counts[hash_feature(f, hash_seed, vocab)];
  FeatureBag bag;
  bag.ids.reserve(counts.size());
  bag.counts.reserve(counts.size());
  for (auto [id, n] : counts) {
    bag.ids.push_back(id);
    bag.counts.push_back(n);
  }
  return bag;
}

// ---------------------------------------------------------------------------
// Parameters

struct EncoderDims {
  std::uint32_t vocab = 1u << 18;
  std::uint32_t emb = 128;
  std::uint32_t hidden = 128;
  std::uint32_t out = 128;

  friend bool operator==(const EncoderDims&, const EncoderDims&) = default;

  void validate() const {
    if (vocab == 0 || emb == 0 || hidden == 0 || out == 0) fail_usage("encoder dimensions must be positive");
  }
};

/// Dense weights, all row-major: embedding is vocab x emb, w1 is emb x hidden,
/// w2 is hidden x out.
template <class Real>
struct BasicEncoderParams {
  EncoderDims dims;
  std::uint64_t hash_seed = 0;
  std::vector<Real> embedding;
  std::vector<Real> w1;
  std::vector<Real> b1;
  std::vector<Real> w2;
  std::vector<Real> b2;

  BasicEncoderParams() = default;

  BasicEncoderParams(const EncoderDims& d, std::uint64_t seed)
      : dims(d),
        hash_seed(seed),
        embedding(std::size_t(d.vocab) * d.emb, Real(0)),
        w1(std::size_t(d.emb) * d.hidden, Real(0)),
        b1(d.hidden, Real(0)),
        w2(std::size_t(d.hidden) * d.out, Real(0)),
        b2(d.out, Real(0)) {
    d.validate();
  }

  /// Embeddings and weights uniform in [-scale, scale], biases zero.
  /// Uniform initialization. Without `scale`, embedding rows are drawn from
  /// U(-embedding_bound, embedding_bound) and both dense layers use the
  /// Glorot-uniform bound.
  static BasicEncoderParams random(const EncoderDims& d, std::uint64_t hash_seed, std::uint64_t init_seed,
                                   std::optional<double> scale = std::nullopt, double embedding_bound = 1.0) {
    BasicEncoderParams p(d, hash_seed);
    Rng rng(init_seed);
    auto fill = [&](std::vector<Real>& blob, double bound) {
      for (auto& x : blob) x = static_cast<Real>(rng.uniform(-bound, bound));
    };
    fill(p.embedding, scale.value_or(embedding_bound));
    fill(p.w1, scale.value_or(std::sqrt(6.0 / double(d.emb + d.hidden))));
    fill(p.w2, scale.value_or(std::sqrt(6.0 / double(d.hidden + d.out))));
    return p;
  }

  std::span<Real> row(std::uint32_t id) { return {embedding.data() + std::size_t(id) * dims.emb, dims.emb}; }
  std::span<const Real> row(std::uint32_t id) const {
    return {embedding.data() + std::size_t(id) * dims.emb, dims.emb};
  }

  /// Blobs in declared (serialization) order.
  std::array<std::vector<Real>*, 5> blobs() { return {&embedding, &w1, &b1, &w2, &b2}; }
  std::array<const std::vector<Real>*, 5> blobs() const { return {&embedding, &w1, &b1, &w2, &b2}; }

  std::size_t num_values() const {
    std::size_t n = 0;
    for (auto* b : blobs()) n += b->size();
    return n;
  }

  bool all_finite() const {
    for (auto* b : blobs())
      for (auto x : *b)
        if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
  }

  template <class Other>
  BasicEncoderParams<Other> cast() const {
    BasicEncoderParams<Other> o;
    o.dims = dims;
    o.hash_seed = hash_seed;
    auto src = blobs();
    auto dst = o.blobs();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i]->assign(src[i]->begin(), src[i]->end());
    return o;
  }

  friend bool operator==(const BasicEncoderParams&, const BasicEncoderParams&) = default;
};

using EncoderParams = BasicEncoderParams<float>;

/// Gradient buffer shaped like the parameters. Embedding rows written since
/// the last clear() are tracked so that clearing stays proportional to the
/// rows actually touched.
template <class Real>
struct BasicParamGrads {
  EncoderDims dims;
  std::vector<Real> embedding;
  std::vector<Real> w1;
  std::vector<Real> b1;
  std::vector<Real> w2;
  std::vector<Real> b2;
  std::vector<std::uint32_t> touched_rows;

  BasicParamGrads() = default;

  explicit BasicParamGrads(const EncoderDims& d)
      : dims(d),
        embedding(std::size_t(d.vocab) * d.emb, Real(0)),
        w1(std::size_t(d.emb) * d.hidden, Real(0)),
        b1(d.hidden, Real(0)),
        w2(std::size_t(d.hidden) * d.out, Real(0)),
        b2(d.out, Real(0)),
        row_mark_(d.vocab, 0) {}

  std::array<std::vector<Real>*, 5> blobs() { return {&embedding, &w1, &b1, &w2, &b2}; }
  std::array<const std::vector<Real>*, 5> blobs() const { return {&embedding, &w1, &b1, &w2, &b2}; }

  std::span<Real> row(std::uint32_t id) {
    if (!row_mark_[id]) {
      row_mark_[id] = 1;
      touched_rows.push_back(id);
    }
    return {embedding.data() + std::size_t(id) * dims.emb, dims.emb};
  }

  void clear() {
    for (auto id : touched_rows) {
      std::fill_n(embedding.begin() + std::ptrdiff_t(std::size_t(id) * dims.emb), dims.emb, Real(0));
      row_mark_[id] = 0;
    }
    touched_rows.clear();
    for (auto* b : {&w1, &b1, &w2, &b2}) std::fill(b->begin(), b->end(), Real(0));
  }

  /// Squared L2 norm over every entry.
  double squared_norm() const {
    double s = 0;
    for (auto id : touched_rows)
      for (std::size_t k = 0; k < dims.emb; ++k) {
        const double g = embedding[std::size_t(id) * dims.emb + k];
        s += g * g;
      }
    for (auto* b : {&w1, &b1, &w2, &b2})
      for (auto g : *b) s += double(g) * double(g);
    return s;
  }

  void scale(Real f) {
    for (auto id : touched_rows)
      for (std::size_t k = 0; k < dims.emb; ++k) embedding[std::size_t(id) * dims.emb + k] *= f;
    for (auto* b : {&w1, &b1, &w2, &b2})
      for (auto& g : *b) g *= f;
  }

  bool all_finite() const {
    for (auto* b : blobs())
      for (auto x : *b)
        if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
  }

 private:
  std::vector<std::uint8_t> row_mark_;
};

using ParamGrads = BasicParamGrads<float>;

// ---------------------------------------------------------------------------
// Forward and backward

template <class Real>
struct EncodeTrace {
  std::vector<Real> pool;
  std::vector<Real> hidden;
  std::vector<Real> output;
};

namespace detail {

template <class Real>
void check_finite(std::span<const Real> v, const char* layer) {
  for (auto x : v)
    if (!std::isfinite(static_cast<double>(x))) fail_numeric(std::string("non-finite value in encoder layer '") + layer + "'");
}

}  // namespace detail

template <class Real>
EncodeTrace<Real> encode_trace(const BasicEncoderParams<Real>& p, const FeatureBag& bag) {
  const auto& d = p.dims;
  EncodeTrace<Real> t;
  t.pool.assign(d.emb, Real(0));
  const std::uint64_t total = bag.total();
  if (total > 0) {
    const Real inv = Real(1) / static_cast<Real>(total);
    for (std::size_t i = 0; i < bag.ids.size(); ++i) {
      if (bag.ids[i] >= d.vocab) fail_usage("feature id " + std::to_string(bag.ids[i]) + " outside vocabulary");
      const Real w = static_cast<Real>(bag.counts[i]) * inv;
      const auto r = p.row(bag.ids[i]);
      for (std::size_t k = 0; k < d.emb; ++k) t.pool[k] += w * r[k];
    }
  }
  detail::check_finite<Real>(t.pool, "pool");

  t.hidden.assign(p.b1.begin(), p.b1.end());
  for (std::size_t e = 0; e < d.emb; ++e) {
    const Real x = t.pool[e];
    if (x == Real(0)) continue;
    const Real* w = p.w1.data() + e * d.hidden;
    for (std::size_t h = 0; h < d.hidden; ++h) t.hidden[h] += w[h] * x;
  }
  for (auto& h : t.hidden) h = std::tanh(h);
  detail::check_finite<Real>(t.hidden, "hidden");

  t.output.assign(p.b2.begin(), p.b2.end());
  for (std::size_t h = 0; h < d.hidden; ++h) {
    const Real x = t.hidden[h];
    const Real* w = p.w2.data() + h * d.out;
    for (std::size_t o = 0; o < d.out; ++o) t.output[o] += w[o] * x;
  }
  detail::check_finite<Real>(t.output, "output");
  return t;
}

template <class Real>
std::vector<Real> encode(const BasicEncoderParams<Real>& p, const FeatureBag& bag) {
  return encode_trace(p, bag).output;
}

/// Adds d(grad_output . encode(p, bag)) / d(params) into `grads`.
template <class Real>
void encode_backward_into(const BasicEncoderParams<Real>& p, const FeatureBag& bag, const EncodeTrace<Real>& t,
                          std::span<const Real> grad_output, BasicParamGrads<Real>& grads) {
  const auto& d = p.dims;
  if (grad_output.size() != d.out || grads.dims != d) fail_usage("gradient shape does not match encoder dimensions");
  for (std::size_t o = 0; o < d.out; ++o) grads.b2[o] += grad_output[o];

  std::vector<Real> g_hidden(d.hidden, Real(0));
  for (std::size_t h = 0; h < d.hidden; ++h) {
    const Real* w = p.w2.data() + h * d.out;
    Real* gw = grads.w2.data() + h * d.out;
    Real acc = 0;
    for (std::size_t o = 0; o < d.out; ++o) {
      gw[o] += t.hidden[h] * grad_output[o];
      acc += w[o] * grad_output[o];
    }
    g_hidden[h] = acc * (Real(1) - t.hidden[h] * t.hidden[h]);
  }
  for (std::size_t h = 0; h < d.hidden; ++h) grads.b1[h] += g_hidden[h];

  std::vector<Real> g_pool(d.emb, Real(0));
  for (std::size_t e = 0; e < d.emb; ++e) {
    const Real* w = p.w1.data() + e * d.hidden;
    Real* gw = grads.w1.data() + e * d.hidden;
    Real acc = 0;
    for (std::size_t h = 0; h < d.hidden; ++h) {
      gw[h] += t.pool[e] * g_hidden[h];
      acc += w[h] * g_hidden[h];
    }
    g_pool[e] = acc;
  }

  const std::uint64_t total = bag.total();
  if (total == 0) return;
  const Real inv = Real(1) / static_cast<Real>(total);
  for (std::size_t i = 0; i < bag.ids.size(); ++i) {
    const Real w = static_cast<Real>(bag.counts[i]) * inv;
    auto r = grads.row(bag.ids[i]);
    for (std::size_t k = 0; k < d.emb; ++k) r[k] += w * g_pool[k];
  }
}

template <class Real>
BasicParamGrads<Real> encode_backward(const BasicEncoderParams<Real>& p, const FeatureBag& bag,
                                      std::span<const Real> grad_output) {
  if (grad_output.size() != p.dims.out) fail_usage("grad_output has wrong dimension");
  for (auto g : grad_output)
    if (!std::isfinite(static_cast<double>(g))) fail_numeric("non-finite grad_output");
  BasicParamGrads<Real> grads(p.dims);
  encode_backward_into(p, bag, encode_trace(p, bag), grad_output, grads);
  return grads;
}

// ---------------------------------------------------------------------------
// Dual encoder

enum class Role { query, passage };

/// A shared encoder, or (for the separate-encoder ablation) one parameter set
/// per role.
template <class Real>
struct BasicDualEncoder {
  BasicEncoderParams<Real> query;
  std::optional<BasicEncoderParams<Real>> passage;

  bool shared() const { return !passage.has_value(); }

  const BasicEncoderParams<Real>& for_role(Role r) const { return r == Role::passage && passage ? *passage : query; }
  BasicEncoderParams<Real>& for_role(Role r) { return r == Role::passage && passage ? *passage : query; }

  std::size_t num_sets() const { return shared() ? 1 : 2; }
  BasicEncoderParams<Real>& set(std::size_t i) { return i == 0 ? query : *passage; }
  const BasicEncoderParams<Real>& set(std::size_t i) const { return i == 0 ? query : *passage; }

  const EncoderDims& dims() const { return query.dims; }

  std::vector<Real> encode_text(std::string_view text, Role r) const {
    const auto& p = for_role(r);
    return encode(p, featurize(text, p.hash_seed, p.dims.vocab));
  }

  friend bool operator==(const BasicDualEncoder&, const BasicDualEncoder&) = default;
};

using DualEncoder = BasicDualEncoder<float>;

inline DualEncoder make_dual_encoder(const EncoderDims& dims, std::uint64_t hash_seed, std::uint64_t init_seed,
                                     bool shared = true, double embedding_bound = 1.0) {
  DualEncoder enc{EncoderParams::random(dims, hash_seed, init_seed, std::nullopt, embedding_bound), std::nullopt};
  if (!shared)
    enc.passage = EncoderParams::random(dims, hash_seed, splitmix64(init_seed ^ 0x5041535341474531ULL), std::nullopt,
                                        embedding_bound);
  return enc;
}

// ---------------------------------------------------------------------------
// Checkpoints
//
//   "PAIRCKPT" | u32 version | u32 json length | json | f32 blobs
//
// Integers and floats are little-endian. The JSON header records the dims,
// hash seed, encoder count and any caller metadata under "meta". Blobs follow
// in declared field order, one full set per encoder.

inline constexpr std::string_view kCheckpointMagic = "PAIRCKPT";
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint32_t get_u32(std::string_view in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

inline void put_f32s(std::string& out, const std::vector<float>& xs) {
  for (float x : xs) put_u32(out, std::bit_cast<std::uint32_t>(x));
}

}  // namespace detail

struct Checkpoint {
  DualEncoder encoder;
  nlohmann::json meta = nlohmann::json::object();
};

inline std::string serialize_checkpoint(const DualEncoder& enc, const nlohmann::json& meta) {
  const auto& d = enc.dims();
  nlohmann::json header = {{"vocab", d.vocab},
                           {"emb", d.emb},
                           {"hidden", d.hidden},
                           {"out", d.out},
                           {"hash_seed", enc.query.hash_seed},
                           {"encoders", enc.num_sets()},
                           {"meta", meta}};
  const std::string json = header.dump();
  std::string out(kCheckpointMagic);
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(json.size()));
  out += json;
  for (std::size_t s = 0; s < enc.num_sets(); ++s)
    for (auto* blob : enc.set(s).blobs()) detail::put_f32s(out, *blob);
  return out;
}

inline Checkpoint parse_checkpoint(std::string_view bytes) {
  const std::size_t head = kCheckpointMagic.size() + 8;
  if (bytes.size() < head) fail_data("checkpoint truncated: header incomplete");
  if (bytes.substr(0, kCheckpointMagic.size()) != kCheckpointMagic) fail_data("checkpoint has wrong magic bytes");
  const std::uint32_t version = detail::get_u32(bytes, kCheckpointMagic.size());
  if (version != kCheckpointVersion) fail_data("unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t json_len = detail::get_u32(bytes, kCheckpointMagic.size() + 4);
  if (bytes.size() < head + json_len) fail_data("checkpoint truncated: metadata incomplete");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(head, json_len));
  } catch (const nlohmann::json::exception& e) {
    fail_data(std::string("checkpoint metadata is not valid JSON: ") + e.what());
  }
  EncoderDims d;
  std::uint64_t hash_seed = 0;
  std::size_t n_sets = 1;
  try {
    d.vocab = header.at("vocab").get<std::uint32_t>();
    d.emb = header.at("emb").get<std::uint32_t>();
    d.hidden = header.at("hidden").get<std::uint32_t>();
    d.out = header.at("out").get<std::uint32_t>();
    hash_seed = header.at("hash_seed").get<std::uint64_t>();
    n_sets = header.at("encoders").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    fail_data(std::string("checkpoint metadata incomplete: ") + e.what());
  }
  d.validate();
  if (n_sets != 1 && n_sets != 2) fail_data("checkpoint must hold one or two encoders");

  std::size_t at = head + json_len;
  auto read_set = [&]() {
    EncoderParams p(d, hash_seed);
    for (auto* blob : p.blobs()) {
      if (bytes.size() < at + blob->size() * 4) fail_data("checkpoint truncated: parameter data incomplete");
      for (auto& x : *blob) {
        x = std::bit_cast<float>(detail::get_u32(bytes, at));
        at += 4;
      }
    }
    return p;
  };
  Checkpoint ck;
  ck.encoder.query = read_set();
  if (n_sets == 2) ck.encoder.passage = read_set();
  if (at != bytes.size()) fail_data("checkpoint has trailing bytes");
  if (header.contains("meta")) ck.meta = header["meta"];
  return ck;
}

inline void save_checkpoint(const std::string& path, const DualEncoder& enc, const nlohmann::json& meta) {
  write_file(path, serialize_checkpoint(enc, meta));
}

inline Checkpoint load_checkpoint(const std::string& path) { return parse_checkpoint(read_file(path)); }

/// Content fingerprint of the parameters (not the metadata).
inline std::string fingerprint(const DualEncoder& enc) {
  std::string bytes;
  for (std::size_t s = 0; s < enc.num_sets(); ++s)
    for (auto* blob : enc.set(s).blobs()) detail::put_f32s(bytes, *blob);
  const auto& d = enc.dims();
  const std::string dims = std::to_string(d.vocab) + "/" + std::to_string(d.emb) + "/" + std::to_string(d.hidden) +
                           "/" + std::to_string(d.out) + "/" + std::to_string(enc.query.hash_seed);
  return hex64(fnv1a64(bytes, fnv1a64(dims)));
}

}  // namespace pair
