#include "fineparser/backbone.h"

#include "fineparser/error.h"

namespace fineparser {

namespace {

Dim3 stage_output(Dim3 in, const StageConfig& s, int stage) {
  Dim3 out{};
  for (int i = 0; i < 3; ++i) {
    if (s.pool[i] < 1 || s.conv_stride[i] < 1) throw ConfigError("backbone stage " + std::to_string(stage) + ": non-positive pool/stride");
    if (in[i] % s.pool[i] != 0) {
      throw ConfigError("backbone stage " + std::to_string(stage) + ": pool does not divide input extent " +
                        std::to_string(in[i]));
    }
    const int pooled = in[i] / s.pool[i];
    out[i] = (pooled - 1) / s.conv_stride[i] + 1;  // kernel 3, pad 1
  }
  return out;
}

}  // namespace

void BackboneConfig::validate(Dim3 input) const { (void)declared_shapes(*this, input); }

BackboneShapes declared_shapes(const BackboneConfig& config, Dim3 input) {
  if (config.in_channels < 1 || config.embedding_channels < 1) throw ConfigError("backbone channels must be positive");
  BackboneShapes shapes;
  Dim3 cur = input;
  for (int j = 0; j < 4; ++j) {
    const auto& s = config.stages[j];
    if (s.channels < 1) throw ConfigError("backbone stage " + std::to_string(j + 1) + ": channels must be positive");
    cur = stage_output(cur, s, j + 1);
    shapes.stages[j] = {s.channels, cur[0], cur[1], cur[2]};
  }
  shapes.embedding = {config.embedding_channels, cur[0], 1, 1};
  return shapes;
}

Backbone::Backbone(const BackboneConfig& config, Dim3 input, ParameterStore& store, const std::string& prefix,
                   ParamGroup group, Rng& rng)
    : config_(config), input_(input), shapes_(declared_shapes(config, input)), prefix_(prefix) {
  int in = config.in_channels;
  for (int j = 0; j < 4; ++j) {
    const auto& s = config.stages[j];
    stages_[j] = Conv3dLayer::create(store, prefix + ".stage" + std::to_string(j + 1), group, in, s.channels, {3, 3, 3},
                                     s.conv_stride, {1, 1, 1}, rng);
    in = s.channels;
  }
  const Shape& last = shapes_.stages[3];
  embed_ = Conv3dLayer::create(store, prefix + ".embed", group, in, config.embedding_channels, {1, last[2], last[3]},
                               {1, 1, 1}, {0, 0, 0}, rng);
}

StagedFeatures Backbone::extract_staged(const Tensor& snippets) const {
  const Shape& s = snippets.shape();
  if (s.size() != 5 || s[1] != config_.in_channels || s[2] != input_[0] || s[3] != input_[1] || s[4] != input_[2]) {
    throw ConfigError("backbone " + prefix_ + ": input " + shape_str(s) + " does not match configured [N, " +
                      std::to_string(config_.in_channels) + ", " + std::to_string(input_[0]) + ", " +
                      std::to_string(input_[1]) + ", " + std::to_string(input_[2]) + "]");
  }
  StagedFeatures f;
  Tensor x = snippets;
  for (int j = 0; j < 4; ++j) {
    const auto& pool = config_.stages[j].pool;
    if (pool[0] * pool[1] * pool[2] > 1) x = max_pool3d(x, pool);
    x = relu(stages_[j](x));
    f.stage_outputs[j] = x;
  }
  f.embedding = embed_(x);
  return f;
}

}  // namespace fineparser
