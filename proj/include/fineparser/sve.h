#pragma once

// Static visual encoder: a per-frame residual image encoder whose features are
// split at the transitions and projected per step to a fixed duration.

#include <vector>

#include "fineparser/parameters.h"
#include "fineparser/tap.h"

namespace fineparser {

struct SveConfig {
  int stem_channels = 4;
  int channels = 8;
  int feature_dim = 16;     // C_s
  int projection_dim = 16;  // C_p
  int duration = 4;
  int frame_stride = 1;

  void validate() const;
};

struct StaticFeatures {
  Tensor per_frame;               // [T, C_s]
  std::vector<Tensor> per_step;   // L'+1 tensors [duration, C_p]
};

class StaticEncoder {
 public:
  StaticEncoder(const SveConfig& config, int height, int width, int num_steps, ParameterStore& store, Rng& rng);

  // frames [T, 3, 1, H, W] -> [T, C_s]
  Tensor encode_frames(const Tensor& frames) const;
  Tensor project_step(const Tensor& segment, int step) const;
  StaticFeatures encode(const Tensor& frames, const TransitionSet& transitions) const;

  const SveConfig& config() const { return config_; }
  int num_steps() const { return static_cast<int>(projections_.size()); }

 private:
  SveConfig config_;
  int height_;
  int width_;
  Conv3dLayer stem_;
  Conv3dLayer res1_;
  Conv3dLayer res2_;
  Conv3dLayer down_;
  LinearLayer out_;
  std::vector<LinearLayer> projections_;
};

// Rows [1, t_1], (t_1, t_2], ..., (t_L', T] of per-frame features.
std::vector<Tensor> split_by_transitions(const Tensor& per_frame, const TransitionSet& transitions);

}  // namespace fineparser
