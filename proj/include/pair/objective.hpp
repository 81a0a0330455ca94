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

/// \file objective.hpp
/// Contrastive objectives over a batch of encodings.
///
/// Query-centric rows anchor at a query and score it against every positive
/// and hard negative in the batch; the example's own positive is the target.
/// Passage-centric rows anchor at a positive passage; the target is its query
/// and the competitors are the other passages of the batch. Both rows feed a
/// softmax negative log-likelihood, and the combined loss mixes the two as
/// (1 - alpha) * L_Q + alpha * L_P.

#include <span>
#include <vector>

#include "pair/common.hpp"

namespace pair {

/// Row-major dense matrix.
template <class Real>
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<Real> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, Real fill = Real(0)) : rows(r), cols(c), data(r * c, fill) {}

  Real& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  Real operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  std::span<Real> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const Real> row(std::size_t i) const { return {data.data() + i * cols, cols}; }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

/// Logit assigned to masked candidates.
inline constexpr double kMaskedLogit = -1e9;

template <class Real>
Real similarity(std::span<const Real> u, std::span<const Real> v) {
  if (u.size() != v.size()) fail_usage("similarity: dimension mismatch");
  Real s = 0;
  for (std::size_t k = 0; k < u.size(); ++k) s += u[k] * v[k];
  return s;
}

/// Encodings of one optimization step. Hard negatives are stored flat with
/// their owning example; any example may carry zero of them. Passage ids are
/// optional and, when present, drive the duplicate-passage mask.
template <class Real>
struct BasicTrainBatch {
  Matrix<Real> q;
  Matrix<Real> pos;
  Matrix<Real> neg;
  std::vector<std::size_t> neg_owner;
  std::vector<std::uint32_t> pos_ids;
  std::vector<std::uint32_t> neg_ids;
  std::vector<std::size_t> example_refs;

  std::size_t size() const { return q.rows; }
  std::size_t dim() const { return q.cols; }

  void validate() const {
    if (q.rows == 0) fail_usage("batch is empty");
    if (pos.rows != q.rows || pos.cols != q.cols) fail_usage("batch: positive matrix shape mismatch");
    if (neg.rows > 0 && neg.cols != q.cols) fail_usage("batch: negative matrix shape mismatch");
    if (neg_owner.size() != neg.rows) fail_usage("batch: neg_owner length mismatch");
    if (!pos_ids.empty() && pos_ids.size() != q.rows) fail_usage("batch: pos_ids length mismatch");
    if (!neg_ids.empty() && neg_ids.size() != neg.rows) fail_usage("batch: neg_ids length mismatch");
  }
};

using TrainBatch = BasicTrainBatch<float>;

enum class VecKind : std::uint8_t { query, positive, negative };

struct VecRef {
  VecKind kind;
  std::uint32_t index;
};

/// Logits plus, for every entry, the pair of vectors it was computed from.
template <class Real>
struct CandidateMatrix {
  Matrix<Real> logits;
  std::vector<std::size_t> targets;
  std::vector<VecRef> anchors;              // one per row
  std::vector<std::vector<VecRef>> columns; // per row, one per column
  std::vector<std::vector<bool>> masked;    // per row, one per column
};

/// Which passages compete with the query in a passage-centric row.
enum class PassagePool {
  hard_negatives_only,
  in_batch_and_hard,
};

namespace detail {

template <class Real>
std::span<const Real> vec(const BasicTrainBatch<Real>& b, VecRef r) {
  switch (r.kind) {
    case VecKind::query:
      return b.q.row(r.index);
    case VecKind::positive:
      return b.pos.row(r.index);
    case VecKind::negative:
      return b.neg.row(r.index);
  }
  return {};
}

template <class Real>
void fill_logits(const BasicTrainBatch<Real>& b, CandidateMatrix<Real>& m) {
  const std::size_t rows = m.anchors.size();
  const std::size_t cols = rows ? m.columns[0].size() : 0;
  m.logits = Matrix<Real>(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      m.logits(i, j) = m.masked[i][j] ? static_cast<Real>(kMaskedLogit)
                                      : similarity<Real>(vec(b, m.anchors[i]), vec(b, m.columns[i][j]));
}

inline bool same_passage(const std::vector<std::uint32_t>& ids_a, std::size_t a, const std::vector<std::uint32_t>& ids_b,
                         std::size_t b) {
  return !ids_a.empty() && !ids_b.empty() && ids_a[a] == ids_b[b];
}

}  // namespace detail

/// B x (B + N) query-centric logits: every positive, then every hard negative.
/// Target of row i is column i.
template <class Real>
CandidateMatrix<Real> build_candidates_q(const BasicTrainBatch<Real>& b) {
  b.validate();
  const std::size_t B = b.size();
  const std::size_t N = b.neg.rows;
  CandidateMatrix<Real> m;
  for (std::size_t i = 0; i < B; ++i) {
    m.anchors.push_back({VecKind::query, static_cast<std::uint32_t>(i)});
    m.targets.push_back(i);
    std::vector<VecRef> cols;
    std::vector<bool> mask;
    for (std::size_t j = 0; j < B; ++j) {
      cols.push_back({VecKind::positive, static_cast<std::uint32_t>(j)});
      mask.push_back(j != i && detail::same_passage(b.pos_ids, j, b.pos_ids, i));
    }
    for (std::size_t k = 0; k < N; ++k) {
      cols.push_back({VecKind::negative, static_cast<std::uint32_t>(k)});
      mask.push_back(detail::same_passage(b.neg_ids, k, b.pos_ids, i));
    }
    m.columns.push_back(std::move(cols));
    m.masked.push_back(std::move(mask));
  }
  detail::fill_logits(b, m);
  return m;
}

/// Passage-centric logits. Row i anchors at positive i; column 0 is its query
/// (the target), then the other positives (unless the pool excludes them),
/// then every hard negative.
template <class Real>
CandidateMatrix<Real> build_candidates_p(const BasicTrainBatch<Real>& b,
                                         PassagePool pool = PassagePool::in_batch_and_hard) {
  b.validate();
  const std::size_t B = b.size();
  const std::size_t N = b.neg.rows;
  CandidateMatrix<Real> m;
  for (std::size_t i = 0; i < B; ++i) {
    m.anchors.push_back({VecKind::positive, static_cast<std::uint32_t>(i)});
    m.targets.push_back(0);
    std::vector<VecRef> cols{{VecKind::query, static_cast<std::uint32_t>(i)}};
    std::vector<bool> mask{false};
    if (pool == PassagePool::in_batch_and_hard) {
      for (std::size_t j = 0; j < B; ++j) {
        if (j == i) continue;
        cols.push_back({VecKind::positive, static_cast<std::uint32_t>(j)});
        mask.push_back(detail::same_passage(b.pos_ids, j, b.pos_ids, i));
      }
    }
    for (std::size_t k = 0; k < N; ++k) {
      cols.push_back({VecKind::negative, static_cast<std::uint32_t>(k)});
      mask.push_back(detail::same_passage(b.neg_ids, k, b.pos_ids, i));
    }
    m.columns.push_back(std::move(cols));
    m.masked.push_back(std::move(mask));
  }
  detail::fill_logits(b, m);
  return m;
}

template <class Real>
struct NllResult {
  Real loss = 0;
  Matrix<Real> grad;
};

/// Mean over rows of -log softmax(row)[target], via max-subtracted
/// log-sum-exp. grad = (softmax - onehot) / rows.
template <class Real>
NllResult<Real> nll_loss(const Matrix<Real>& logits, std::span<const std::size_t> targets) {
  if (targets.size() != logits.rows) fail_usage("nll_loss: one target per row required");
  if (logits.rows == 0) fail_usage("nll_loss: empty logits");
  NllResult<Real> r;
  r.grad = Matrix<Real>(logits.rows, logits.cols);
  const Real inv_rows = Real(1) / static_cast<Real>(logits.rows);
  Real total = 0;
  for (std::size_t i = 0; i < logits.rows; ++i) {
    const auto row = logits.row(i);
    if (targets[i] >= logits.cols) fail_usage("nll_loss: target column out of range");
    Real mx = -std::numeric_limits<Real>::infinity();
    for (auto x : row) {
      if (!std::isfinite(static_cast<double>(x))) fail_numeric("nll_loss: non-finite logit in row " + std::to_string(i));
      mx = std::max(mx, x);
    }
    Real sum = 0;
    for (auto x : row) sum += std::exp(x - mx);
    const Real lse = mx + std::log(sum);
    total += lse - row[targets[i]];
    auto g = r.grad.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) g[j] = std::exp(row[j] - lse) * inv_rows;
    g[targets[i]] -= inv_rows;
  }
  r.loss = total * inv_rows;
  return r;
}

struct LossReport {
  double loss_q = 0;
  double loss_p = 0;
  double loss_combined = 0;
  double alpha = 0;
  std::size_t n_examples = 0;
};

template <class Real>
struct BatchGrads {
  Matrix<Real> q;
  Matrix<Real> pos;
  Matrix<Real> neg;
};

namespace detail {

/// Chains dL/dlogits back onto the vectors, scaled by `weight`.
template <class Real>
void backprop_logits(const BasicTrainBatch<Real>& b, const CandidateMatrix<Real>& m, const Matrix<Real>& g_logits,
                     Real weight, BatchGrads<Real>& out) {
  auto grad_of = [&](VecRef r) -> std::span<Real> {
    switch (r.kind) {
      case VecKind::query:
        return out.q.row(r.index);
      case VecKind::positive:
        return out.pos.row(r.index);
      case VecKind::negative:
        return out.neg.row(r.index);
    }
    return {};
  };
  for (std::size_t i = 0; i < m.anchors.size(); ++i) {
    const auto a = vec(b, m.anchors[i]);
    auto ga = grad_of(m.anchors[i]);
    for (std::size_t j = 0; j < m.columns[i].size(); ++j) {
      if (m.masked[i][j]) continue;
      const Real g = weight * g_logits(i, j);
      if (g == Real(0)) continue;
      const auto c = vec(b, m.columns[i][j]);
      auto gc = grad_of(m.columns[i][j]);
      for (std::size_t k = 0; k < a.size(); ++k) {
        ga[k] += g * c[k];
        gc[k] += g * a[k];
      }
    }
  }
}

}  // namespace detail

/// (1 - alpha) * loss_q + alpha * loss_p.
inline double mix_losses(double loss_q, double loss_p, double alpha) { return (1.0 - alpha) * loss_q + alpha * loss_p; }

template <class Real>
struct CombinedResult {
  LossReport report;
  BatchGrads<Real> grads;
};

/// L = (1 - alpha) L_Q + alpha L_P with gradients w.r.t. every batch vector.
/// Both losses are always evaluated; a zero weight skips only its backward.
template <class Real>
CombinedResult<Real> combined_loss(const BasicTrainBatch<Real>& b, double alpha,
                                   PassagePool pool = PassagePool::in_batch_and_hard) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) fail_usage("alpha must lie in [0, 1]");
  const auto mq = build_candidates_q(b);
  const auto mp = build_candidates_p(b, pool);
  const auto lq = nll_loss<Real>(mq.logits, mq.targets);
  const auto lp = nll_loss<Real>(mp.logits, mp.targets);

  CombinedResult<Real> r;
  r.report.loss_q = static_cast<double>(lq.loss);
  r.report.loss_p = static_cast<double>(lp.loss);
  r.report.alpha = alpha;
  r.report.loss_combined = mix_losses(r.report.loss_q, r.report.loss_p, alpha);
  r.report.n_examples = b.size();

  r.grads.q = Matrix<Real>(b.q.rows, b.q.cols);
  r.grads.pos = Matrix<Real>(b.pos.rows, b.pos.cols);
  r.grads.neg = Matrix<Real>(b.neg.rows, b.q.cols);
  if (alpha < 1.0) detail::backprop_logits(b, mq, lq.grad, static_cast<Real>(1.0 - alpha), r.grads);
  if (alpha > 0.0) detail::backprop_logits(b, mp, lp.grad, static_cast<Real>(alpha), r.grads);
  return r;
}

}  // namespace pair
