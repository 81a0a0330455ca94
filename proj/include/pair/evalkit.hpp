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

/// \file evalkit.hpp
/// MRR@k and Recall@k over run files, the positive/negative similarity
/// margin analysis, and side-by-side tables of several variants.

#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "pair/corpus.hpp"
#include "pair/index.hpp"

namespace pair {

/// Gold positives per query, keyed by external ids, in first-seen order.
struct GoldQrels {
  std::vector<std::string> query_order;
  std::unordered_map<std::string, std::set<std::string>> positives;

  void add(const std::string& q, const std::string& p) {
    auto [it, inserted] = positives.try_emplace(q);
    if (inserted) query_order.push_back(q);
    it->second.insert(p);
  }

  std::size_t num_queries() const { return query_order.size(); }
};

inline GoldQrels parse_gold_qrels(std::string_view content, const std::string& name = "qrels") {
  GoldQrels g;
  for (const auto& r : detail::parse_qrels(content, name)) g.add(r.query, r.passage);
  return g;
}

inline GoldQrels gold_qrels(const Corpus& c) {
  GoldQrels g;
  for (const auto& r : c.qrels()) g.add(c.query(r.query_id).external_id, c.passages()[r.passage_id].external_id);
  return g;
}

namespace detail {

/// 1-based rank of the first gold positive within the top k, or 0.
inline std::size_t first_positive_rank(const QueryRun& qr, const std::set<std::string>& gold, std::size_t k) {
  for (const auto& e : qr.entries) {
    if (e.rank > k) break;
    if (gold.contains(e.passage)) return e.rank;
  }
  return 0;
}

template <class PerQuery>
double mean_over_qrels(const RunFile& run, const GoldQrels& qrels, std::size_t k, PerQuery per_query) {
  if (k == 0) fail_usage("k must be at least 1");
  if (qrels.num_queries() == 0) return 0.0;
  std::unordered_map<std::string, const QueryRun*> by_query;
  for (const auto& q : run.queries) by_query.emplace(q.query, &q);
  double total = 0;
  std::size_t missing = 0;
  for (const auto& q : qrels.query_order) {
    auto it = by_query.find(q);
    if (it == by_query.end()) {
      ++missing;
      continue;
    }
    total += per_query(first_positive_rank(*it->second, qrels.positives.at(q), k));
  }
  if (missing) warn(std::to_string(missing) + " judged queries have no results in the run and score 0");
  return total / static_cast<double>(qrels.num_queries());
}

}  // namespace detail

inline double mrr_at_k(const RunFile& run, const GoldQrels& qrels, std::size_t k) {
  return detail::mean_over_qrels(run, qrels, k, [](std::size_t rank) { return rank ? 1.0 / double(rank) : 0.0; });
}

inline double recall_at_k(const RunFile& run, const GoldQrels& qrels, std::size_t k) {
  return detail::mean_over_qrels(run, qrels, k, [](std::size_t rank) { return rank ? 1.0 : 0.0; });
}

struct EvalReport {
  std::map<std::size_t, double> mrr_at;
  std::map<std::size_t, double> recall_at;
  std::size_t n_queries = 0;
  std::string variant;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["variant"] = variant;
    j["n_queries"] = n_queries;
    for (auto [k, v] : mrr_at) j["mrr_at"][std::to_string(k)] = v;
    for (auto [k, v] : recall_at) j["recall_at"][std::to_string(k)] = v;
    return j;
  }
};

inline EvalReport evaluate(const RunFile& run, const GoldQrels& qrels, const std::vector<std::size_t>& ks,
                           std::string variant = "") {
  EvalReport r;
  r.variant = std::move(variant);
  r.n_queries = qrels.num_queries();
  for (auto k : ks) {
    r.mrr_at[k] = mrr_at_k(run, qrels, k);
    r.recall_at[k] = recall_at_k(run, qrels, k);
  }
  return r;
}

/// `R@5 R@20 ...` header plus one row of percentages.
inline std::string format_metric_row(const EvalReport& r) {
  std::ostringstream head, row;
  for (auto [k, v] : r.recall_at) {
    head << "R@" << k << '\t';
    row << std::fixed << std::setprecision(1) << 100.0 * v << '\t';
  }
  for (auto [k, v] : r.mrr_at) {
    head << "MRR@" << k << '\t';
    row << std::fixed << std::setprecision(1) << 100.0 * v << '\t';
  }
  std::string h = head.str(), w = row.str();
  if (!h.empty()) h.pop_back();
  if (!w.empty()) w.pop_back();
  return h + "\n" + w + "\n";
}

// ---------------------------------------------------------------------------
// Margin analysis

struct MarginReport {
  double mean_s_pos_q = 0;
  double mean_s_pos_neg = 0;
  double std_s_pos_q = 0;
  double std_s_pos_neg = 0;
  std::size_t n_pairs = 0;
  std::size_t n_skipped_queries = 0;

  double margin() const { return mean_s_pos_q - mean_s_pos_neg; }

  nlohmann::json to_json() const {
    return {{"mean_s_pos_q", mean_s_pos_q}, {"mean_s_pos_neg", mean_s_pos_neg}, {"std_s_pos_q", std_s_pos_q},
            {"std_s_pos_neg", std_s_pos_neg}, {"margin", margin()},            {"n_pairs", n_pairs},
            {"n_skipped_queries", n_skipped_queries}};
  }
};

/// For each judged (query, positive) pair: s(p+, q) and the mean of s(p+, p-)
/// over the non-positive passages among the query's top_n results. Both are
/// then averaged across pairs. Queries without positives are skipped.
inline MarginReport margin_analysis(const DualEncoder& enc, const EmbeddingStore& store, const Corpus& corpus,
                                    std::size_t top_n = 100, unsigned threads = 1) {
  const auto qvecs = encode_queries(corpus.queries(), enc, threads);
  const auto hits = batch_search(store, qvecs, top_n, threads);
  std::unordered_map<PassageId, std::size_t> row_of;
  for (std::size_t i = 0; i < store.size(); ++i) row_of.emplace(store.ids[i], i);

  std::vector<double> pos_q, pos_neg;
  MarginReport r;
  for (std::size_t qi = 0; qi < corpus.queries().size(); ++qi) {
    const auto& q = corpus.queries()[qi];
    const auto& gold = corpus.positives(q.id);
    if (gold.empty()) {
      ++r.n_skipped_queries;
      continue;
    }
    for (auto p : gold) {
      auto it = row_of.find(p);
      if (it == row_of.end()) fail_data("margin analysis: positive passage missing from the store");
      const auto pvec = store.matrix.row(it->second);
      double neg_sum = 0;
      std::size_t n_neg = 0;
      for (const auto& h : hits[qi]) {
        if (corpus.is_positive(q.id, h.id)) continue;
        neg_sum += dot(pvec, store.matrix.row(row_of.at(h.id)));
        ++n_neg;
      }
      if (n_neg == 0) continue;
      pos_q.push_back(dot(pvec, qvecs.row(qi)));
      pos_neg.push_back(neg_sum / double(n_neg));
    }
  }
  r.n_pairs = pos_q.size();
  if (r.n_pairs == 0) fail_data("margin analysis: no query with a positive and a retrieved negative");
  auto mean_std = [](const std::vector<double>& v, double& mean, double& sd) {
    mean = 0;
    for (double x : v) mean += x;
    mean /= double(v.size());
    double ss = 0;
    for (double x : v) ss += (x - mean) * (x - mean);
    sd = std::sqrt(ss / double(v.size()));
  };
  mean_std(pos_q, r.mean_s_pos_q, r.std_s_pos_q);
  mean_std(pos_neg, r.mean_s_pos_neg, r.std_s_pos_neg);
  return r;
}

// ---------------------------------------------------------------------------
// Variant comparison

struct VariantTable {
  std::vector<std::string> columns;  // e.g. "R@5"
  std::vector<std::string> variants;
  std::vector<std::vector<std::optional<double>>> values;  // [variant][column]

  friend bool operator==(const VariantTable&, const VariantTable&) = default;

  /// Aligned text table, values as percentages; missing cells are blank.
  std::string to_text() const {
    std::size_t w0 = 7;
    for (const auto& v : variants) w0 = std::max(w0, v.size());
    std::ostringstream os;
    os << std::left << std::setw(int(w0)) << "variant";
    for (const auto& c : columns) os << "  " << std::right << std::setw(7) << c;
    os << '\n';
    for (std::size_t i = 0; i < variants.size(); ++i) {
      os << std::left << std::setw(int(w0)) << variants[i];
      for (const auto& v : values[i]) {
        os << "  " << std::right << std::setw(7);
        if (v)
          os << std::fixed << std::setprecision(1) << 100.0 * *v;
        else
          os << "";
      }
      os << '\n';
    }
    return os.str();
  }

  /// Long format, one line per present cell: variant, metric, k, value.
  std::string to_tsv() const {
    std::string out = "variant\tmetric\tk\tvalue\n";
    for (std::size_t i = 0; i < variants.size(); ++i)
      for (std::size_t c = 0; c < columns.size(); ++c) {
        if (!values[i][c]) continue;
        const auto at = columns[c].find('@');
        out += variants[i] + "\t" + columns[c].substr(0, at) + "\t" + columns[c].substr(at + 1) + "\t" +
               format_double(*values[i][c]) + "\n";
      }
    return out;
  }
};

inline std::string metric_column(const std::string& metric, std::size_t k) { return metric + "@" + std::to_string(k); }

/// Rows in the given order; columns are the union of recall cut-offs (then
/// MRR cut-offs when requested), ascending in k.
inline VariantTable compare_variants(const std::vector<EvalReport>& reports, bool include_mrr = false) {
  if (reports.size() < 2) fail_usage("compare_variants needs at least two reports");
  std::set<std::size_t> rk, mk;
  for (const auto& r : reports) {
    for (auto [k, _] : r.recall_at) rk.insert(k);
    for (auto [k, _] : r.mrr_at) mk.insert(k);
  }
  VariantTable t;
  for (auto k : rk) t.columns.push_back(metric_column("R", k));
  if (include_mrr)
    for (auto k : mk) t.columns.push_back(metric_column("MRR", k));
  for (const auto& r : reports) {
    t.variants.push_back(r.variant);
    std::vector<std::optional<double>> row;
    for (auto k : rk) row.push_back(r.recall_at.contains(k) ? std::optional(r.recall_at.at(k)) : std::nullopt);
    if (include_mrr)
      for (auto k : mk) row.push_back(r.mrr_at.contains(k) ? std::optional(r.mrr_at.at(k)) : std::nullopt);
    t.values.push_back(std::move(row));
  }
  return t;
}

inline VariantTable parse_variant_tsv(std::string_view content) {
  VariantTable t;
  std::map<std::string, std::size_t> col_index, var_index;
  std::vector<std::tuple<std::string, std::string, double>> cells;
  std::vector<std::pair<std::size_t, std::string>> cols;  // (k ordering key, name)
  bool header = true;
  std::size_t pos = 0;
  while (pos < content.size()) {
    std::size_t end = content.find('\n', pos);
    if (end == std::string_view::npos) end = content.size();
    const auto line = content.substr(pos, end - pos);
    pos = end + 1;
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    const auto f = split(line, '\t');
    if (f.size() != 4) fail_data("variant TSV: expected 4 fields");
    const std::string col = f[1] + "@" + f[2];
    if (!var_index.contains(f[0])) {
      var_index[f[0]] = t.variants.size();
      t.variants.push_back(f[0]);
    }
    if (!col_index.contains(col)) {
      col_index[col] = 0;
      cols.push_back({std::stoul(f[2]) + (f[1] == "R" ? 0 : (std::size_t(1) << 40)), col});
    }
    cells.emplace_back(f[0], col, std::stod(f[3]));
  }
  std::sort(cols.begin(), cols.end());
  for (std::size_t i = 0; i < cols.size(); ++i) {
    col_index[cols[i].second] = i;
    t.columns.push_back(cols[i].second);
  }
  t.values.assign(t.variants.size(), std::vector<std::optional<double>>(t.columns.size()));
  for (const auto& [v, c, x] : cells) t.values[var_index[v]][col_index[c]] = x;
  return t;
}

}  // namespace pair
