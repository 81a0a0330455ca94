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

/// \file optim.hpp
/// Adam and the linear warm-up / linear decay learning-rate schedule.

#include <span>
#include <vector>

#include "pair/common.hpp"

namespace pair {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam over a fixed list of parameter blobs.
template <class Real>
class Adam {
 public:
  Adam() = default;

  Adam(std::vector<std::size_t> blob_sizes, AdamConfig cfg = {}) : cfg_(cfg) {
    for (auto n : blob_sizes) {
      m_.emplace_back(n, Real(0));
      v_.emplace_back(n, Real(0));
    }
  }

  std::uint64_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }
  const std::vector<std::vector<Real>>& first_moments() const { return m_; }
  const std::vector<std::vector<Real>>& second_moments() const { return v_; }

  /// One update with learning rate lr. params[i] and grads[i] must have the
  /// sizes given at construction.
  void step(std::span<std::vector<Real>* const> params, std::span<const std::vector<Real>* const> grads, double lr) {
    if (params.size() != m_.size() || grads.size() != m_.size()) fail_usage("adam: blob count mismatch");
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
    const double b1 = cfg_.beta1, b2 = cfg_.beta2;
    for (std::size_t i = 0; i < m_.size(); ++i) {
      auto& p = *params[i];
      const auto& g = *grads[i];
      if (p.size() != m_[i].size() || g.size() != m_[i].size()) fail_usage("adam: blob size mismatch");
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::size_t k = 0; k < p.size(); ++k) {
        const double gk = g[k];
        const double mk = b1 * double(m[k]) + (1.0 - b1) * gk;
        const double vk = b2 * double(v[k]) + (1.0 - b2) * gk * gk;
        m[k] = static_cast<Real>(mk);
        v[k] = static_cast<Real>(vk);
        if (lr == 0.0) continue;
        const double update = lr * (mk / bc1) / (std::sqrt(vk / bc2) + cfg_.eps);
        p[k] = static_cast<Real>(double(p[k]) - update);
      }
    }
  }

 private:
  AdamConfig cfg_;
  std::vector<std::vector<Real>> m_;
  std::vector<std::vector<Real>> v_;
  std::uint64_t t_ = 0;
};

/// lr(step) rises linearly from 0 to peak over the first
/// ceil(warmup_ratio * total) steps, then falls linearly to 0 at `total`.
/// Steps are 0-based; lr(0) = 0 whenever warmup_ratio > 0.
inline double scheduled_lr(double peak, std::uint64_t step, std::uint64_t total, double warmup_ratio) {
  if (total == 0 || step >= total) return 0.0;
  // Any positive ratio yields at least one warm-up step, so lr(0) = 0.
  const auto warm = static_cast<std::uint64_t>(std::ceil(warmup_ratio * double(total) - 1e-9));
  if (step < warm) return peak * double(step) / double(warm);
  return peak * double(total - step) / double(total - warm);
}

}  // namespace pair
