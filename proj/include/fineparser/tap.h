#pragma once

// Temporal action parser: dense transition probabilities, bin-constrained
// transition localization, step segmentation and fixed-length resampling.

#include <span>
#include <utility>
#include <vector>

#include "fineparser/data_model.h"
#include "fineparser/parameters.h"

namespace fineparser {

// Transition frames t_1 < ... < t_L' (1-based). Step l covers frames
// (t_{l-1}, t_l] with t_0 = 0 and t_{L'+1} = T.
class TransitionSet {
 public:
  TransitionSet() = default;
  TransitionSet(std::vector<int> timestamps, int num_frames);  // throws DataError when invalid

  const std::vector<int>& timestamps() const { return timestamps_; }
  int num_frames() const { return num_frames_; }
  int num_steps() const { return static_cast<int>(timestamps_.size()) + 1; }
  // 0-based half-open row ranges [begin, end) of every step.
  std::vector<std::pair<int, int>> intervals() const;

  friend bool operator==(const TransitionSet&, const TransitionSet&) = default;

 private:
  std::vector<int> timestamps_;
  int num_frames_ = 0;
};

// probs: row-major [T, L']. Column k is searched inside its bin; the last bin
// stops at T - 1 so the final step is never empty. Ties go to the earliest frame.
TransitionSet locate_transitions(std::span<const double> probs, int num_transitions, int num_frames);
TransitionSet locate_transitions(const Tensor& probs);

// features [T, ...] -> L'+1 tensors along the leading axis.
std::vector<Tensor> segment_steps(const Tensor& features, const TransitionSet& transitions);

// step [n, ...] -> [target_len, ...] by linear interpolation with aligned endpoints.
Tensor resample_step(const Tensor& step, int target_len);

struct TapConfig {
  int num_transitions = 2;
  int hidden = 16;
  int step_len = 8;
  double transition_prior = 0.01;  // initial per-frame transition probability

  void validate() const;
};

class TemporalParser {
 public:
  // embedding_channels / embedding_len: per-snippet X_V is [N, C, T_e, 1, 1].
  TemporalParser(const TapConfig& config, int embedding_channels, int embedding_len, const SnippetLayout& layout,
                 ParameterStore& store, Rng& rng);

  // [T, L'] logits and probabilities.
  Tensor transition_logits(const Tensor& gated) const;
  Tensor predict_transition_probs(const Tensor& gated) const { return sigmoid(transition_logits(gated)); }
  // X_V upsampled and stitched onto the video timeline: [T, C].
  Tensor frame_features(const Tensor& gated) const;
  // L'+1 step tensors [step_len, C].
  std::vector<Tensor> parse_steps(const Tensor& frame_features, const TransitionSet& transitions) const;

  const TapConfig& config() const { return config_; }

 private:
  TapConfig config_;
  int channels_;
  int embedding_len_;
  SnippetLayout layout_;
  TimeMap to_video_;  // [N * T_e] -> [T]
  Conv3dLayer head1_;
  Conv3dLayer head2_;

  Tensor per_snippet_rows_to_video(const Tensor& x) const;
};

}  // namespace fineparser
