#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fineparser/tensor.h"

namespace fineparser {

inline constexpr double kProbEpsilon = 1e-7;

struct FocalConfig {
  double alpha = 0.25;
  double gamma = 2.0;

  void validate() const;
};

// Mean over elements of -alpha (1 - p)^gamma log p, where p is the predicted
// probability of the true class, clamped to [eps, 1].
Tensor focal_loss(const Tensor& pred, std::span<const std::uint8_t> gt, const FocalConfig& cfg);
// Sum of focal_loss over every prediction.
Tensor focal_mask_loss(std::span<const Tensor> predictions, std::span<const std::uint8_t> gt, const FocalConfig& cfg);

// probs [T, L'], transitions 1-based. Binary cross-entropy against one-hot
// columns, normalized by T * L'.
Tensor transition_bce_loss(const Tensor& probs, std::span<const int> transitions);

Tensor regression_loss(const Tensor& prediction, double target);

Tensor total_loss(const Tensor& l_sap, const Tensor& l_tap, const Tensor& l_reg);

}  // namespace fineparser
