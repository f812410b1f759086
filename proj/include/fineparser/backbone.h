#pragma once

// Staged 3-D convolutional feature extractor with four tapped stages and one
// embedding stage. Each stage pools its input (optional), then applies a
// 3x3x3 convolution and ReLU. The embedding stage is a valid convolution
// spanning the remaining spatial extent, leaving [N, C_e, T_4, 1, 1].

#include <array>
#include <string>

#include "fineparser/parameters.h"

namespace fineparser {

struct StageConfig {
  int channels = 8;
  Dim3 pool{1, 1, 1};
  Dim3 conv_stride{1, 1, 1};
};

struct BackboneConfig {
  int in_channels = 3;
  std::array<StageConfig, 4> stages{{
      {4, {1, 1, 1}, {2, 2, 2}},
      {8, {1, 2, 2}, {1, 1, 1}},
      {16, {2, 2, 2}, {1, 1, 1}},
      {16, {1, 2, 2}, {1, 1, 1}},
  }};
  int embedding_channels = 16;

  // Throws ConfigError when any stage cannot be applied to the input.
  void validate(Dim3 input) const;
};

// Realized per-snippet shapes [C, T, H, W] for each stage and the embedding.
struct BackboneShapes {
  std::array<Shape, 4> stages;
  Shape embedding;
};

BackboneShapes declared_shapes(const BackboneConfig& config, Dim3 input);

struct StagedFeatures {
  std::array<Tensor, 4> stage_outputs;  // [N, C_j, T_j, H_j, W_j]
  Tensor embedding;                     // [N, C_e, T_e, 1, 1]
};

class Backbone {
 public:
  Backbone(const BackboneConfig& config, Dim3 input, ParameterStore& store, const std::string& prefix,
           ParamGroup group, Rng& rng);

  // snippets: [N, C_in, L, H, W]
  StagedFeatures extract_staged(const Tensor& snippets) const;
  Tensor video_embedding(const Tensor& snippets) const { return extract_staged(snippets).embedding; }

  const BackboneConfig& config() const { return config_; }
  const BackboneShapes& shapes() const { return shapes_; }
  Dim3 input_dims() const { return input_; }
  const std::string& prefix() const { return prefix_; }

 private:
  BackboneConfig config_;
  Dim3 input_;
  BackboneShapes shapes_;
  std::string prefix_;
  std::array<Conv3dLayer, 4> stages_;
  Conv3dLayer embed_;
};

}  // namespace fineparser
