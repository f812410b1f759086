#pragma once

// Spatial action parser: a mask pyramid decoded from the four backbone taps,
// a learned fusion of the pyramid, and the sigmoid gate applied to the video
// embedding.

#include <array>
#include <span>
#include <vector>

#include "fineparser/backbone.h"
#include "fineparser/data_model.h"

namespace fineparser {

struct SapConfig {
  int fuse_kernel = 1;        // odd temporal/spatial extent of the fusion convolution
  double mask_prior = 0.01;   // initial foreground probability of every mask output

  void validate() const;
};

struct MaskPyramid {
  std::array<Tensor, 4> up1;  // per-snippet logits [N, 1, L, H, W]
  std::array<Tensor, 4> up2;  // probabilities [T, H, W]
  Tensor fused;               // probabilities [T, H, W]

  // The five supervised predictions: up2_1..up2_4 then fused.
  std::array<Tensor, 5> supervised() const { return {up2[0], up2[1], up2[2], up2[3], fused}; }
};

struct TargetRepresentation {
  Tensor gated;           // X_V, same shape as the video embedding
  Tensor mask_embedding;  // B_5(X)
  MaskPyramid pyramid;
};

// Reassembles per-snippet rows [N * L, ...] onto the video timeline [T, ...].
Tensor stitch_snippets(const Tensor& rows, const TimeMap& map);

class SpatialParser {
 public:
  SpatialParser(const SapConfig& config, const BackboneShapes& shapes, Dim3 snippet_dims, const SnippetLayout& layout,
                ParameterStore& store, Rng& rng);

  MaskPyramid build_pyramid(const StagedFeatures& staged) const;
  // up1: four per-snippet logit volumes. Returns per-snippet probabilities [N, 1, L, H, W].
  Tensor fuse_masks(std::span<const Tensor> up1) const;

  const std::array<Dim3, 4>& upsample_factors() const { return factors_; }

 private:
  struct Branch {
    Conv3dLayer reduce;
    ConvTranspose3dLayer upsample;
    Tensor operator()(const Tensor& x) const { return upsample(reduce(x)); }
  };

  SapConfig config_;
  Dim3 snippet_dims_;
  SnippetLayout layout_;
  TimeMap stitch_;
  std::array<Dim3, 4> factors_{};
  std::array<Branch, 4> branch1_;
  std::array<Branch, 4> branch2_;
  Conv3dLayer fuse_;

  Tensor to_video(const Tensor& per_snippet_probs) const;
};

// X_V = video_emb * sigmoid(mask_emb).
Tensor gate_target_representation(const Tensor& video_emb, const Tensor& mask_emb);

// 1 where prob > threshold, else 0.
std::vector<std::uint8_t> binarize_mask(std::span<const double> probs, double threshold);

}  // namespace fineparser
