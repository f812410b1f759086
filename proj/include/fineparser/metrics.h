#pragma once

// Evaluation metrics for scores (rank correlation, relative L2), temporal
// parsing (AIoU) and masks (MAE, F-measure, S-measure).

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "fineparser/tap.h"

namespace fineparser {

struct MetricConfig {
  double beta2 = 0.3;
  double alpha = 0.5;
  std::vector<double> aiou_thresholds = {0.5, 0.75};
  double mask_threshold = 0.5;
  // Range used by relative L2; taken from the training scores when unset.
  std::optional<double> y_min;
  std::optional<double> y_max;

  void validate() const;
};

// Average ranks (1-based) with ties sharing the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

// Empty when either sequence is constant.
std::optional<double> spearman_rho(std::span<const double> preds, std::span<const double> gts);

// Mean squared range-normalized error, times 100.
double relative_l2(std::span<const double> preds, std::span<const double> gts, double y_min, double y_max);

// Mean over steps of the frame-interval IoU.
double transition_iou(const TransitionSet& pred, const TransitionSet& gt);
// Fraction of samples whose transition_iou is at least d.
double aiou_at(std::span<const TransitionSet> preds, std::span<const TransitionSet> gts, double d);

double mask_mae(std::span<const double> pred, std::span<const std::uint8_t> gt);

// Weighted harmonic mean of precision and recall of a binary prediction.
// 1 when both prediction and ground truth are empty, 0 when only one is.
double f_measure(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt, double beta2);

// Structure measure of one [H, W] map against a binary ground truth.
double s_object(std::span<const double> pred, std::span<const std::uint8_t> gt);
double s_region(std::span<const double> pred, std::span<const std::uint8_t> gt, int height, int width);
double s_measure(std::span<const double> pred, std::span<const std::uint8_t> gt, int height, int width, double alpha);

}  // namespace fineparser
