// Copyright 2026 The vseg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <cstddef>
#include <string>

#include "vseg/error.hpp"
#include "vseg/tape.hpp"

namespace vseg {

/// Smoothing term added to the pseudo-Dice denominator.
inline constexpr double kDiceSmoothing = 1e-5;

/// Sums entering the pseudo-Dice score, accumulated sample by sample.
struct DiceSums {
  double intersection = 0.0;  // sum p * g
  double pred_sq = 0.0;       // sum p^2
  double target_sq = 0.0;     // sum g^2

  double score(double smoothing = kDiceSmoothing) const {
    return 2.0 * intersection / (pred_sq + target_sq + smoothing);
  }
};

namespace detail {

template <class T>
void check_dice_inputs(const Tensor5<T>& pred, const Tensor5<T>& target) {
  if (pred.shape() != target.shape())
    throw ContractError("pseudo_dice: shape mismatch " + pred.shape().str() + " vs " + target.shape().str());
  for (T g : target.values())
    if (g != T{0} && g != T{1}) throw ContractError("pseudo_dice: target must be binary, found value " + std::to_string(g));
}

template <class T>
DiceSums dice_sums(const Tensor5<T>& pred, const Tensor5<T>& target) {
  DiceSums total;
  const std::size_t per_sample = pred.size() / pred.shape().n;
  for (std::size_t n = 0; n < pred.shape().n; ++n) {
    DiceSums part;
    const T* p = pred.data() + n * per_sample;
    const T* g = target.data() + n * per_sample;
    for (std::size_t i = 0; i < per_sample; ++i) {
      const double pv = static_cast<double>(p[i]);
      const double gv = static_cast<double>(g[i]);
      part.intersection += pv * gv;
      part.pred_sq += pv * pv;
      part.target_sq += gv * gv;
    }
    total.intersection += part.intersection;
    total.pred_sq += part.pred_sq;
    total.target_sq += part.target_sq;
  }
  return total;
}

}  // namespace detail

/// Soft Dice D = 2 sum(p g) / (sum p^2 + sum g^2 + eps), sums over the whole batch.
template <class T>
double pseudo_dice(const Tensor5<T>& pred, const Tensor5<T>& target, double smoothing = kDiceSmoothing) {
  detail::check_dice_inputs(pred, target);
  return detail::dice_sums(pred, target).score(smoothing);
}

/// Records L = 1 - D on the tape. The sums are reduced across every context
/// sharing the mini-batch, so each context backpropagates the loss of the
/// whole batch restricted to its own samples.
template <class T>
Var pseudo_dice_loss(Tape<T>& tape, Var pred, const Tensor5<T>& target, double smoothing = kDiceSmoothing) {
  const Tensor5<T>& p = tape.value(pred);
  detail::check_dice_inputs(p, target);
  DiceSums local = detail::dice_sums(p, target);
  std::array<double, 3> sums{local.intersection, local.pred_sq, local.target_sq};
  tape.reducer().allreduce(sums);
  const DiceSums total{sums[0], sums[1], sums[2]};
  const double denom = total.pred_sq + total.target_sq + smoothing;
  const double dice = 2.0 * total.intersection / denom;
  return tape.record("pseudo_dice_loss", {pred}, Tensor5<T>::scalar(static_cast<T>(1.0 - dice)),
                     tape.requires_grad(pred), [pred, target, total, denom](Tape<T>& t, std::size_t self) {
                       // dL/dp_i = -2 (g_i S - 2 I p_i) / S^2
                       const double upstream = static_cast<double>(t.grad(Var{self})[0]);
                       const Tensor5<T>& pv = t.value(pred);
                       Tensor5<T> dp(pv.shape());
                       const double s2 = denom * denom;
                       for (std::size_t i = 0; i < dp.size(); ++i) {
                         const double g = static_cast<double>(target[i]);
                         const double p = static_cast<double>(pv[i]);
                         dp[i] = static_cast<T>(upstream * -2.0 * (g * denom - 2.0 * total.intersection * p) / s2);
                       }
                       t.accumulate_grad(pred, dp);
                     });
}

}  // namespace vseg
