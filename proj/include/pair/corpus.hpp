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

/// \file corpus.hpp
/// Queries, passages, relevance judgments and training examples.
///
/// Input files carry arbitrary string ids. Ingestion assigns dense integer
/// ids in file order (line k of the passages file becomes passage k) and
/// keeps the external id alongside, so every file written back out uses the
/// original ids. Internal ids index embedding rows directly.

#include <cctype>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "pair/common.hpp"

namespace pair {

using QueryId = std::uint32_t;
using PassageId = std::uint32_t;

struct Query {
  QueryId id = 0;
  std::string external_id;
  std::string text;
};

struct Passage {
  PassageId id = 0;
  std::string external_id;
  std::string text;
};

struct QRel {
  QueryId query_id = 0;
  PassageId passage_id = 0;

  friend auto operator<=>(const QRel&, const QRel&) = default;
};

enum class ExampleSource { gold, pseudo };

inline std::string_view to_string(ExampleSource s) { return s == ExampleSource::gold ? "gold" : "pseudo"; }

struct TrainExample {
  QueryId query_id = 0;
  PassageId positive_id = 0;
  std::vector<PassageId> hard_negative_ids;
  ExampleSource source = ExampleSource::gold;

  friend bool operator==(const TrainExample&, const TrainExample&) = default;
};

/// Passage collection shared between a corpus and its splits.
class PassageStore {
 public:
  PassageStore() = default;

  PassageId add(std::string external_id, std::string text) {
    const auto id = static_cast<PassageId>(passages_.size());
    if (!by_external_.emplace(external_id, id).second) fail_data("duplicate passage id '" + external_id + "'");
    passages_.push_back({id, std::move(external_id), std::move(text)});
    return id;
  }

  std::size_t size() const { return passages_.size(); }
  const Passage& operator[](PassageId id) const { return passages_.at(id); }
  const std::vector<Passage>& all() const { return passages_; }

  std::optional<PassageId> find(const std::string& external_id) const {
    auto it = by_external_.find(external_id);
    if (it == by_external_.end()) return std::nullopt;
    return it->second;
  }

 private:
  std::vector<Passage> passages_;
  std::unordered_map<std::string, PassageId> by_external_;
};

/// Immutable after construction. Queries without qrels count as unlabeled.
class Corpus {
 public:
  Corpus() : passages_(std::make_shared<PassageStore>()) {}

  Corpus(std::vector<Query> queries, std::shared_ptr<const PassageStore> passages, std::vector<QRel> qrels)
      : queries_(std::move(queries)), passages_(std::move(passages)), qrels_(std::move(qrels)) {
    reindex();
  }

  const std::vector<Query>& queries() const { return queries_; }
  const PassageStore& passages() const { return *passages_; }
  std::shared_ptr<const PassageStore> passage_store() const { return passages_; }
  const std::vector<QRel>& qrels() const { return qrels_; }

  std::size_t num_queries() const { return queries_.size(); }
  std::size_t num_passages() const { return passages_->size(); }

  const Query& query(QueryId id) const {
    auto it = query_pos_.find(id);
    if (it == query_pos_.end()) fail_data("unknown query id " + std::to_string(id));
    return queries_[it->second];
  }

  bool has_query(QueryId id) const { return query_pos_.contains(id); }

  std::optional<QueryId> find_query(const std::string& external_id) const {
    auto it = query_by_external_.find(external_id);
    if (it == query_by_external_.end()) return std::nullopt;
    return it->second;
  }

  /// Gold positives of a query, ascending by passage id.
  const std::vector<PassageId>& positives(QueryId id) const {
    static const std::vector<PassageId> kNone;
    auto it = positives_.find(id);
    return it == positives_.end() ? kNone : it->second;
  }

  bool is_positive(QueryId q, PassageId p) const {
    const auto& pos = positives(q);
    return std::binary_search(pos.begin(), pos.end(), p);
  }

  bool is_labeled(QueryId id) const { return positives_.contains(id); }

  std::vector<QueryId> labeled_query_ids() const {
    std::vector<QueryId> out;
    for (const auto& q : queries_)
      if (is_labeled(q.id)) out.push_back(q.id);
    return out;
  }

  /// Sub-corpus over the given queries, sharing the passage collection.
  Corpus subset(const std::vector<QueryId>& ids) const {
    std::set<QueryId> keep(ids.begin(), ids.end());
    std::vector<Query> qs;
    for (const auto& q : queries_)
      if (keep.contains(q.id)) qs.push_back(q);
    std::vector<QRel> rels;
    for (const auto& r : qrels_)
      if (keep.contains(r.query_id)) rels.push_back(r);
    return Corpus(std::move(qs), passages_, std::move(rels));
  }

 private:
  void reindex() {
    std::set<std::pair<QueryId, PassageId>> seen;
    for (std::size_t i = 0; i < queries_.size(); ++i) {
      if (!query_pos_.emplace(queries_[i].id, i).second)
        fail_data("duplicate query id " + std::to_string(queries_[i].id));
      query_by_external_.emplace(queries_[i].external_id, queries_[i].id);
    }
    for (const auto& r : qrels_) {
      if (!query_pos_.contains(r.query_id)) fail_data("qrel references unknown query " + std::to_string(r.query_id));
      if (r.passage_id >= passages_->size())
        fail_data("qrel references unknown passage " + std::to_string(r.passage_id));
      if (!seen.emplace(r.query_id, r.passage_id).second)
        fail_data("duplicate qrel (" + query(r.query_id).external_id + ", " +
                  (*passages_)[r.passage_id].external_id + ")");
      positives_[r.query_id].push_back(r.passage_id);
    }
    for (auto& [_, v] : positives_) std::sort(v.begin(), v.end());
  }

  std::vector<Query> queries_;
  std::shared_ptr<const PassageStore> passages_;
  std::vector<QRel> qrels_;
  std::unordered_map<QueryId, std::size_t> query_pos_;
  std::unordered_map<std::string, QueryId> query_by_external_;
  std::map<QueryId, std::vector<PassageId>> positives_;
};

struct IngestCounts {
  std::size_t queries = 0;
  std::size_t passages = 0;
  std::size_t qrels = 0;
  std::size_t unlabeled_queries = 0;
};

inline IngestCounts counts(const Corpus& c) {
  IngestCounts n{c.num_queries(), c.num_passages(), c.qrels().size(), 0};
  for (const auto& q : c.queries())
    if (!c.is_labeled(q.id)) ++n.unlabeled_queries;
  return n;
}

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

/// Parses `<id>\t<text>` records. Blank lines are skipped.
inline std::vector<std::pair<std::string, std::string>> parse_tsv_records(std::string_view content,
                                                                          const std::string& name) {
  std::vector<std::pair<std::string, std::string>> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < content.size()) {
    std::size_t end = content.find('\n', pos);
    if (end == std::string_view::npos) end = content.size();
    std::string_view line = content.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty()) continue;
    const auto tab = line.find('\t');
    const std::string where = name + ":" + std::to_string(line_no);
    if (tab == std::string_view::npos) fail_data(where + ": expected '<id>\\t<text>'");
    const auto id = trim(line.substr(0, tab));
    const auto text = trim(line.substr(tab + 1));
    if (id.empty()) fail_data(where + ": empty id");
    if (text.empty()) fail_data(where + ": empty text");
    out.emplace_back(std::string(id), std::string(text));
  }
  return out;
}

struct RawQRel {
  std::string query;
  std::string passage;
  std::size_t line = 0;
};

/// TREC qrels: `<query_id> 0 <passage_id> <label>`; label must be positive.
inline std::vector<RawQRel> parse_qrels(std::string_view content, const std::string& name) {
  std::vector<RawQRel> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < content.size()) {
    std::size_t end = content.find('\n', pos);
    if (end == std::string_view::npos) end = content.size();
    const std::string_view line = content.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    const auto fields = split_ws(line);
    if (fields.empty()) continue;
    const std::string where = name + ":" + std::to_string(line_no);
    if (fields.size() != 4) fail_data(where + ": expected '<query_id> 0 <passage_id> <label>'");
    int label = 0;
    try {
      label = std::stoi(std::string(fields[3]));
    } catch (const std::exception&) {
      fail_data(where + ": non-numeric label '" + std::string(fields[3]) + "'");
    }
    if (label <= 0) continue;
    out.push_back({std::string(fields[0]), std::string(fields[2]), line_no});
  }
  return out;
}

}  // namespace detail

/// Builds a corpus from in-memory file contents. Names are used in messages.
inline Corpus ingest_text(std::string_view queries_tsv, std::string_view passages_tsv,
                          std::optional<std::string_view> qrels_txt, const std::string& queries_name = "queries",
                          const std::string& passages_name = "passages", const std::string& qrels_name = "qrels") {
  auto store = std::make_shared<PassageStore>();
  for (auto& [id, text] : detail::parse_tsv_records(passages_tsv, passages_name)) store->add(id, std::move(text));

  std::vector<Query> queries;
  std::unordered_map<std::string, QueryId> qids;
  for (auto& [id, text] : detail::parse_tsv_records(queries_tsv, queries_name)) {
    const auto qid = static_cast<QueryId>(queries.size());
    if (!qids.emplace(id, qid).second) fail_data(queries_name + ": duplicate query id '" + id + "'");
    queries.push_back({qid, id, std::move(text)});
  }

  std::vector<QRel> qrels;
  if (qrels_txt) {
    std::vector<std::string> dangling;
    std::set<std::pair<QueryId, PassageId>> seen;
    for (const auto& raw : detail::parse_qrels(*qrels_txt, qrels_name)) {
      auto q = qids.find(raw.query);
      auto p = store->find(raw.passage);
      if (q == qids.end()) dangling.push_back("query '" + raw.query + "' (line " + std::to_string(raw.line) + ")");
      if (!p) dangling.push_back("passage '" + raw.passage + "' (line " + std::to_string(raw.line) + ")");
      if (q == qids.end() || !p) continue;
      if (!seen.emplace(q->second, *p).second)
        fail_data(qrels_name + ":" + std::to_string(raw.line) + ": duplicate pair (" + raw.query + ", " + raw.passage + ")");
      qrels.push_back({q->second, *p});
    }
    if (!dangling.empty()) {
      std::string msg = qrels_name + ": dangling ids: ";
      for (std::size_t i = 0; i < dangling.size(); ++i) msg += (i ? ", " : "") + dangling[i];
      fail_data(msg);
    }
  }
  return Corpus(std::move(queries), std::move(store), std::move(qrels));
}

inline Corpus ingest(const std::string& queries_file, const std::string& passages_file,
                     const std::optional<std::string>& qrels_file = std::nullopt) {
  const std::string q = read_file(queries_file);
  const std::string p = read_file(passages_file);
  std::optional<std::string> r;
  if (qrels_file) r = read_file(*qrels_file);
  return ingest_text(q, p, r ? std::optional<std::string_view>(*r) : std::nullopt, queries_file, passages_file,
                     qrels_file.value_or("qrels"));
}

/// Parses only a queries file against an existing passage collection, e.g.
/// an unlabeled query set for pseudo-labeling.
inline Corpus ingest_queries(const std::string& queries_file, std::shared_ptr<const PassageStore> passages) {
  std::vector<Query> queries;
  for (auto& [id, text] : detail::parse_tsv_records(read_file(queries_file), queries_file))
    queries.push_back({static_cast<QueryId>(queries.size()), id, std::move(text)});
  return Corpus(std::move(queries), std::move(passages), {});
}

// ---------------------------------------------------------------------------
// Serialization

inline std::string serialize_queries(const Corpus& c) {
  std::string out;
  for (const auto& q : c.queries()) out += q.external_id + "\t" + q.text + "\n";
  return out;
}

inline std::string serialize_passages(const PassageStore& s) {
  std::string out;
  for (const auto& p : s.all()) out += p.external_id + "\t" + p.text + "\n";
  return out;
}

inline std::string serialize_qrels(const Corpus& c) {
  std::string out;
  for (const auto& r : c.qrels())
    out += c.query(r.query_id).external_id + " 0 " + c.passages()[r.passage_id].external_id + " 1\n";
  return out;
}

/// `<kind>\t<internal id>\t<external id>` lines.
inline std::string serialize_id_map(const Corpus& c) {
  std::string out;
  for (const auto& q : c.queries()) out += "q\t" + std::to_string(q.id) + "\t" + q.external_id + "\n";
  for (const auto& p : c.passages().all()) out += "p\t" + std::to_string(p.id) + "\t" + p.external_id + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Train-example JSON lines

namespace detail {

inline nlohmann::ordered_json id_to_json(const std::string& external) {
  // Canonical unsigned decimals are written as numbers, anything else as a string.
  const bool numeric = !external.empty() && external.size() <= 18 &&
                       std::all_of(external.begin(), external.end(), [](unsigned char c) { return std::isdigit(c); }) &&
                       (external.size() == 1 || external[0] != '0');
  if (numeric) return std::stoull(external);
  return external;
}

inline std::string id_from_json(const nlohmann::json& j, const std::string& where) {
  if (j.is_string()) return j.get<std::string>();
  if (j.is_number_unsigned() || j.is_number_integer()) {
    if (j.is_number_integer() && j.get<long long>() < 0) fail_data(where + ": negative id");
    return std::to_string(j.get<unsigned long long>());
  }
  fail_data(where + ": id must be a string or non-negative integer");
}

}  // namespace detail

inline std::string example_to_json_line(const Corpus& c, const TrainExample& ex) {
  nlohmann::ordered_json j;
  j["q"] = detail::id_to_json(c.query(ex.query_id).external_id);
  j["pos"] = detail::id_to_json(c.passages()[ex.positive_id].external_id);
  auto negs = nlohmann::ordered_json::array();
  for (auto n : ex.hard_negative_ids) negs.push_back(detail::id_to_json(c.passages()[n].external_id));
  j["negs"] = std::move(negs);
  j["src"] = std::string(to_string(ex.source));
  return j.dump();
}

inline std::string serialize_examples(const Corpus& c, const std::vector<TrainExample>& examples) {
  std::string out;
  for (const auto& ex : examples) out += example_to_json_line(c, ex) + "\n";
  return out;
}

/// Parses and validates train examples against a corpus. `max_negatives`
/// bounds the hard-negative list length (0 disables the check).
inline std::vector<TrainExample> parse_examples(const Corpus& c, std::string_view content,
                                                const std::string& name = "examples", std::size_t max_negatives = 0) {
  std::vector<TrainExample> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < content.size()) {
    std::size_t end = content.find('\n', pos);
    if (end == std::string_view::npos) end = content.size();
    const std::string_view line = trim(content.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    const std::string where = name + ":" + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail_data(where + ": malformed JSON: " + e.what());
    }
    if (!j.is_object() || !j.contains("q") || !j.contains("pos"))
      fail_data(where + ": expected an object with \"q\" and \"pos\"");
    TrainExample ex;
    const auto qid = c.find_query(detail::id_from_json(j["q"], where));
    if (!qid) fail_data(where + ": unknown query id " + j["q"].dump());
    ex.query_id = *qid;
    const auto pid = c.passages().find(detail::id_from_json(j["pos"], where));
    if (!pid) fail_data(where + ": unknown passage id " + j["pos"].dump());
    ex.positive_id = *pid;
    if (j.contains("negs")) {
      if (!j["negs"].is_array()) fail_data(where + ": \"negs\" must be an array");
      for (const auto& n : j["negs"]) {
        const auto nid = c.passages().find(detail::id_from_json(n, where));
        if (!nid) fail_data(where + ": unknown passage id " + n.dump());
        if (*nid == ex.positive_id) fail_data(where + ": positive listed among hard negatives");
        ex.hard_negative_ids.push_back(*nid);
      }
    }
    if (max_negatives && ex.hard_negative_ids.size() > max_negatives)
      fail_data(where + ": " + std::to_string(ex.hard_negative_ids.size()) + " hard negatives exceed the limit of " +
                std::to_string(max_negatives));
    const std::string src = j.value("src", std::string("gold"));
    if (src == "gold")
      ex.source = ExampleSource::gold;
    else if (src == "pseudo")
      ex.source = ExampleSource::pseudo;
    else
      fail_data(where + ": src must be \"gold\" or \"pseudo\"");
    out.push_back(std::move(ex));
  }
  return out;
}

/// One example per gold (query, positive) pair, without hard negatives.
inline std::vector<TrainExample> gold_examples(const Corpus& c) {
  std::vector<TrainExample> out;
  for (const auto& q : c.queries())
    for (auto p : c.positives(q.id)) out.push_back({q.id, p, {}, ExampleSource::gold});
  return out;
}

// ---------------------------------------------------------------------------
// Split

struct CorpusSplit {
  Corpus train;
  Corpus dev;
};

/// Seeded partition of the queries. Both halves share the passages.
inline CorpusSplit split(const Corpus& c, double dev_fraction, std::uint64_t seed) {
  if (!(dev_fraction > 0.0 && dev_fraction < 1.0)) fail_usage("dev_fraction must lie in (0, 1)");
  std::vector<QueryId> ids;
  for (const auto& q : c.queries()) ids.push_back(q.id);
  Rng rng(seed);
  rng.shuffle(ids);
  const auto n_dev = static_cast<std::size_t>(std::llround(dev_fraction * static_cast<double>(ids.size())));
  std::vector<QueryId> dev(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(std::min(n_dev, ids.size())));
  std::vector<QueryId> train(ids.begin() + static_cast<std::ptrdiff_t>(dev.size()), ids.end());
  return {c.subset(train), c.subset(dev)};
}

}  // namespace pair
