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

// `pair-synth`: writes a synthetic collection as plain files that the `pair`
// commands accept: queries.tsv, passages.tsv, qrels.txt, unlabeled.tsv and
// the hidden judgments of the unlabeled queries in unlabeled_qrels.txt.

#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "pair/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Write a seeded synthetic retrieval collection.", "pair-synth"};
  std::string out;
  pair::SyntheticConfig cfg;
  app.add_option("--out", out, "Output directory")->required();
  app.add_option("--topics", cfg.topics, "Number of topics");
  app.add_option("--passages-per-topic", cfg.passages_per_topic, "Passages per topic");
  app.add_option("--queries-per-topic", cfg.queries_per_topic, "Labeled queries per topic");
  app.add_option("--unlabeled-per-topic", cfg.unlabeled_per_topic, "Unlabeled queries per topic");
  app.add_option("--seed", cfg.seed, "Random seed");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "pair-synth: error: " << e.what() << '\n';
    return 1;
  }
  try {
    const auto d = pair::make_synthetic(cfg);
    std::filesystem::create_directories(out);
    const std::filesystem::path dir(out);
    pair::write_file((dir / "queries.tsv").string(), pair::serialize_queries(d.labeled));
    pair::write_file((dir / "passages.tsv").string(), pair::serialize_passages(d.labeled.passages()));
    pair::write_file((dir / "qrels.txt").string(), pair::serialize_qrels(d.labeled));
    pair::write_file((dir / "unlabeled.tsv").string(), pair::serialize_queries(d.unlabeled));
    std::string truth;
    for (const auto& q : d.unlabeled_truth.query_order)
      for (const auto& p : d.unlabeled_truth.positives.at(q)) truth += q + " 0 " + p + " 1\n";
    pair::write_file((dir / "unlabeled_qrels.txt").string(), truth);
  } catch (const std::exception& e) {
    std::cerr << "pair-synth: error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
