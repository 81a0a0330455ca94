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

/// \file index.hpp
/// Passage embedding store and exact maximum-inner-product search.
///
/// Search is a brute-force scan keeping a bounded heap of the k best rows.
/// Ranking order is score descending, then passage id ascending.

#include <bit>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pair/common.hpp"
#include "pair/corpus.hpp"
#include "pair/encoder.hpp"
#include "pair/objective.hpp"

namespace pair {

struct EmbeddingStore {
  std::vector<PassageId> ids;
  Matrix<float> matrix;  // M x d, row i encodes ids[i]
  std::string fingerprint;

  std::size_t size() const { return ids.size(); }
  std::size_t dim() const { return matrix.cols; }

  friend bool operator==(const EmbeddingStore&, const EmbeddingStore&) = default;
};

/// Encodes every passage with the passage-role parameters.
inline EmbeddingStore build_index(const PassageStore& passages, const DualEncoder& enc, unsigned threads = 1) {
  const auto& p = enc.for_role(Role::passage);
  EmbeddingStore s;
  s.fingerprint = fingerprint(enc);
  s.ids.resize(passages.size());
  s.matrix = Matrix<float>(passages.size(), p.dims.out);
  parallel_for(passages.size(), threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const auto& psg = passages.all()[i];
      const auto v = encode(p, featurize(psg.text, p.hash_seed, p.dims.vocab));
      s.ids[i] = psg.id;
      std::copy(v.begin(), v.end(), s.matrix.row(i).begin());
    }
  });
  return s;
}

/// Query-role encodings, one row per query.
inline Matrix<float> encode_queries(const std::vector<Query>& queries, const DualEncoder& enc, unsigned threads = 1) {
  const auto& p = enc.for_role(Role::query);
  Matrix<float> out(queries.size(), p.dims.out);
  parallel_for(queries.size(), threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const auto v = encode(p, featurize(queries[i].text, p.hash_seed, p.dims.vocab));
      std::copy(v.begin(), v.end(), out.row(i).begin());
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Search

struct Hit {
  PassageId id = 0;
  double score = 0;

  friend bool operator==(const Hit&, const Hit&) = default;
};

/// True when a ranks strictly ahead of b.
inline bool ranks_before(const Hit& a, const Hit& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.id < b.id;
}

/// Dot product of float vectors accumulated in double.
inline double dot(std::span<const float> a, std::span<const float> b) {
  double s = 0;
  for (std::size_t k = 0; k < a.size(); ++k) s += double(a[k]) * double(b[k]);
  return s;
}

/// Exact top-k over all rows; returns min(k, M) hits in rank order.
inline std::vector<Hit> search(const EmbeddingStore& store, std::span<const float> query, std::size_t k) {
  if (store.size() == 0) fail_data("search: empty embedding store");
  if (k == 0) fail_usage("search: k must be at least 1");
  if (query.size() != store.dim()) fail_usage("search: query dimension does not match the store");
  // Max-heap on "worst first" so the top is the weakest of the kept hits.
  auto worse = [](const Hit& a, const Hit& b) { return ranks_before(a, b); };
  std::priority_queue<Hit, std::vector<Hit>, decltype(worse)> heap(worse);
  for (std::size_t i = 0; i < store.size(); ++i) {
    const Hit h{store.ids[i], dot(store.matrix.row(i), query)};
    if (heap.size() < k) {
      heap.push(h);
    } else if (ranks_before(h, heap.top())) {
      heap.pop();
      heap.push(h);
    }
  }
  std::vector<Hit> out(heap.size());
  for (std::size_t i = out.size(); i-- > 0;) {
    out[i] = heap.top();
    heap.pop();
  }
  return out;
}

/// One ranked list per query row, in input order. Rows are sharded across
/// threads; each shard writes only its own slots.
inline std::vector<std::vector<Hit>> batch_search(const EmbeddingStore& store, const Matrix<float>& queries,
                                                  std::size_t k, unsigned threads = 1) {
  std::vector<std::vector<Hit>> out(queries.rows);
  parallel_for(queries.rows, threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) out[i] = search(store, queries.row(i), k);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Run files

struct RunEntry {
  std::string passage;
  double score = 0;
  std::size_t rank = 0;
};

struct QueryRun {
  std::string query;
  std::vector<RunEntry> entries;
};

/// Ranked results per query, keyed by external ids, in query order.
struct RunFile {
  std::vector<QueryRun> queries;

  const QueryRun* find(const std::string& q) const {
    for (const auto& r : queries)
      if (r.query == q) return &r;
    return nullptr;
  }
};

inline RunFile make_run(const std::vector<Query>& queries, const PassageStore& passages,
                        const std::vector<std::vector<Hit>>& hits) {
  RunFile run;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    QueryRun qr{queries[i].external_id, {}};
    for (std::size_t r = 0; r < hits[i].size(); ++r)
      qr.entries.push_back({passages[hits[i][r].id].external_id, hits[i][r].score, r + 1});
    run.queries.push_back(std::move(qr));
  }
  return run;
}

/// TREC format, scores with 6 significant digits.
inline std::string serialize_run(const RunFile& run) {
  std::string out;
  for (const auto& q : run.queries)
    for (const auto& e : q.entries)
      out += q.query + " Q0 " + e.passage + " " + std::to_string(e.rank) + " " + format_sig(e.score, 6) +
             " pair-toolkit\n";
  return out;
}

inline RunFile parse_run(std::string_view content, const std::string& name = "run") {
  RunFile run;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < content.size()) {
    std::size_t end = content.find('\n', pos);
    if (end == std::string_view::npos) end = content.size();
    const auto fields = split_ws(content.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (fields.empty()) continue;
    const std::string where = name + ":" + std::to_string(line_no);
    if (fields.size() != 6) fail_data(where + ": expected '<qid> Q0 <pid> <rank> <score> <tag>'");
    RunEntry e;
    e.passage = std::string(fields[2]);
    try {
      e.rank = std::stoul(std::string(fields[3]));
      e.score = std::stod(std::string(fields[4]));
    } catch (const std::exception&) {
      fail_data(where + ": malformed rank or score");
    }
    const std::string q(fields[0]);
    if (run.queries.empty() || run.queries.back().query != q) {
      if (run.find(q)) fail_data(where + ": results for query '" + q + "' are not contiguous");
      run.queries.push_back({q, {}});
    }
    run.queries.back().entries.push_back(std::move(e));
  }
  for (auto& q : run.queries)
    std::stable_sort(q.entries.begin(), q.entries.end(), [](const RunEntry& a, const RunEntry& b) { return a.rank < b.rank; });
  return run;
}

// ---------------------------------------------------------------------------
// Store persistence
//
//   "PAIREMB" | u32 version | u32 json length | json {M, d, fingerprint}
//   | M x u32 passage ids | M x d f32 matrix (row-major)

inline constexpr std::string_view kStoreMagic = "PAIREMB";
inline constexpr std::uint32_t kStoreVersion = 1;

inline std::string serialize_store(const EmbeddingStore& s) {
  const std::string json = nlohmann::json{{"M", s.size()}, {"d", s.dim()}, {"fingerprint", s.fingerprint}}.dump();
  std::string out(kStoreMagic);
  detail::put_u32(out, kStoreVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(json.size()));
  out += json;
  for (auto id : s.ids) detail::put_u32(out, id);
  detail::put_f32s(out, s.matrix.data);
  return out;
}

inline EmbeddingStore parse_store(std::string_view bytes) {
  const std::size_t head = kStoreMagic.size() + 8;
  if (bytes.size() < head) fail_data("embedding store truncated");
  if (bytes.substr(0, kStoreMagic.size()) != kStoreMagic) fail_data("embedding store has wrong magic bytes");
  const auto version = detail::get_u32(bytes, kStoreMagic.size());
  if (version != kStoreVersion) fail_data("unsupported embedding store version " + std::to_string(version));
  const auto json_len = detail::get_u32(bytes, kStoreMagic.size() + 4);
  if (bytes.size() < head + json_len) fail_data("embedding store truncated");
  EmbeddingStore s;
  std::size_t m = 0, d = 0;
  try {
    const auto j = nlohmann::json::parse(bytes.substr(head, json_len));
    m = j.at("M").get<std::size_t>();
    d = j.at("d").get<std::size_t>();
    s.fingerprint = j.at("fingerprint").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    fail_data(std::string("embedding store header invalid: ") + e.what());
  }
  std::size_t at = head + json_len;
  if (bytes.size() != at + 4 * m + 4 * m * d) fail_data("embedding store size does not match its header");
  s.ids.resize(m);
  for (auto& id : s.ids) {
    id = detail::get_u32(bytes, at);
    at += 4;
  }
  s.matrix = Matrix<float>(m, d);
  for (auto& x : s.matrix.data) {
    x = std::bit_cast<float>(detail::get_u32(bytes, at));
    at += 4;
    if (!std::isfinite(x)) fail_data("embedding store contains a non-finite value");
  }
  return s;
}

/// Loads a store and checks that it was built from the given encoder.
inline EmbeddingStore load_store(const std::string& path, const std::string& expected_fingerprint) {
  auto s = parse_store(read_file(path));
  if (s.fingerprint != expected_fingerprint)
    fail_data("embedding store '" + path + "' was built from checkpoint " + s.fingerprint + ", expected " +
              expected_fingerprint);
  return s;
}

/// `<id>\t<float>...\t<float>` per passage.
inline std::string export_embeddings_tsv(const EmbeddingStore& s, const PassageStore& passages) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    out += passages[s.ids[i]].external_id;
    for (float x : s.matrix.row(i)) out += "\t" + format_sig(x, 9);
    out += "\n";
  }
  return out;
}

}  // namespace pair
