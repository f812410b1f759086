#include "fineparser/sap.h"

#include <cmath>

#include "fineparser/error.h"

namespace fineparser {

void SapConfig::validate() const {
  if (fuse_kernel < 1 || fuse_kernel % 2 == 0) throw ConfigError("sap.fuse_kernel must be a positive odd integer");
  if (!(mask_prior > 0.0 && mask_prior < 1.0)) throw ConfigError("sap.mask_prior must be in (0, 1)");
}

Tensor stitch_snippets(const Tensor& rows, const TimeMap& map) { return apply_time_map(map, rows); }

SpatialParser::SpatialParser(const SapConfig& config, const BackboneShapes& shapes, Dim3 snippet_dims,
                             const SnippetLayout& layout, ParameterStore& store, Rng& rng)
    : config_(config), snippet_dims_(snippet_dims), layout_(layout), stitch_(stitch_map(layout)) {
  config_.validate();
  for (int j = 0; j < 4; ++j) {
    const Shape& s = shapes.stages[j];
    const std::string stage = "stage " + std::to_string(j + 1);
    for (int d = 0; d < 3; ++d) {
      if (s[d + 1] <= 0 || snippet_dims[d] % s[d + 1] != 0) {
        throw ConfigError("sap " + stage + ": output " + shape_str(s) +
                          " cannot be upsampled exactly to the mask resolution");
      }
      factors_[j][d] = snippet_dims[d] / s[d + 1];
    }
    const std::string base = "sap.pyramid" + std::to_string(j + 1);
    for (int b = 0; b < 2; ++b) {
      auto& branch = b == 0 ? branch1_[j] : branch2_[j];
      const std::string name = base + (b == 0 ? ".up1" : ".up2");
      branch.reduce = Conv3dLayer::create(store, name + ".reduce", ParamGroup::sap, s[0], 1, {1, 1, 1}, {1, 1, 1},
                                          {0, 0, 0}, rng);
      branch.upsample =
          ConvTranspose3dLayer::create(store, name + ".upsample", ParamGroup::sap, 1, 1, factors_[j], factors_[j], rng);
    }
  }
  const int k = config_.fuse_kernel;
  fuse_ = Conv3dLayer::create(store, "sap.fuse", ParamGroup::sap, 4, 1, {k, k, k}, {1, 1, 1}, {k / 2, k / 2, k / 2},
                              rng);
  const double prior_logit = std::log(config_.mask_prior / (1.0 - config_.mask_prior));
  for (auto& b : branch2_) {
    for (double& v : b.upsample.bias.values_mut()) v = prior_logit;
  }
  for (double& v : fuse_.bias.values_mut()) v = prior_logit;
}

Tensor SpatialParser::to_video(const Tensor& per_snippet_probs) const {
  const auto& s = per_snippet_probs.shape();
  Tensor rows = reshape(per_snippet_probs, {s[0] * s[2], s[3], s[4]});
  return stitch_snippets(rows, stitch_);
}

MaskPyramid SpatialParser::build_pyramid(const StagedFeatures& staged) const {
  MaskPyramid p;
  const int n = staged.stage_outputs[0].size(0);
  const Shape expected{n, 1, snippet_dims_[0], snippet_dims_[1], snippet_dims_[2]};
  for (int j = 0; j < 4; ++j) {
    p.up1[j] = branch1_[j](staged.stage_outputs[j]);
    Tensor up2 = branch2_[j](staged.stage_outputs[j]);
    if (p.up1[j].shape() != expected || up2.shape() != expected) {
      throw ConfigError("sap stage " + std::to_string(j + 1) + ": branch output " + shape_str(up2.shape()) +
                        " is off the mask resolution " + shape_str(expected));
    }
    p.up2[j] = to_video(sigmoid(up2));
  }
  p.fused = to_video(fuse_masks(p.up1));
  return p;
}

Tensor SpatialParser::fuse_masks(std::span<const Tensor> up1) const {
  if (up1.size() != 4) throw ShapeError("fuse_masks expects 4 branch tensors, got " + std::to_string(up1.size()));
  return sigmoid(fuse_(concat(up1, 1)));
}

Tensor gate_target_representation(const Tensor& video_emb, const Tensor& mask_emb) {
  if (video_emb.shape() != mask_emb.shape()) {
    throw ShapeError("gate: video embedding " + shape_str(video_emb.shape()) + " vs mask embedding " +
                     shape_str(mask_emb.shape()));
  }
  return mul(video_emb, sigmoid(mask_emb));
}

std::vector<std::uint8_t> binarize_mask(std::span<const double> probs, double threshold) {
  std::vector<std::uint8_t> out(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) out[i] = probs[i] > threshold ? 1 : 0;
  return out;
}

}  // namespace fineparser
