#include "fineparser/sve.h"

#include "fineparser/error.h"

namespace fineparser {

void SveConfig::validate() const {
  if (stem_channels < 1 || channels < 1 || feature_dim < 1 || projection_dim < 1) {
    throw ConfigError("sve widths must be positive");
  }
  if (duration < 1) throw ConfigError("sve.duration must be >= 1");
  if (frame_stride < 1) throw ConfigError("sve.frame_stride must be >= 1");
}

StaticEncoder::StaticEncoder(const SveConfig& config, int height, int width, int num_steps, ParameterStore& store,
                             Rng& rng)
    : config_(config), height_(height), width_(width) {
  config_.validate();
  if (height % 8 != 0 || width % 8 != 0) throw ConfigError("sve: frame size must be divisible by 8");
  if (num_steps < 1) throw ConfigError("sve: step count must be >= 1");
  const int c0 = config.stem_channels, c1 = config.channels;
  stem_ = Conv3dLayer::create(store, "sve.stem", ParamGroup::sve, 3, c0, {1, 3, 3}, {1, 2, 2}, {0, 1, 1}, rng);
  res1_ = Conv3dLayer::create(store, "sve.res.conv1", ParamGroup::sve, c0, c0, {1, 3, 3}, {1, 1, 1}, {0, 1, 1}, rng);
  res2_ = Conv3dLayer::create(store, "sve.res.conv2", ParamGroup::sve, c0, c0, {1, 3, 3}, {1, 1, 1}, {0, 1, 1}, rng);
  down_ = Conv3dLayer::create(store, "sve.down", ParamGroup::sve, c0, c1, {1, 3, 3}, {1, 2, 2}, {0, 1, 1}, rng);
  out_ = LinearLayer::create(store, "sve.out", ParamGroup::sve, c1, config.feature_dim, rng);
  for (int l = 0; l < num_steps; ++l) {
    projections_.push_back(LinearLayer::create(store, "sve.project" + std::to_string(l + 1), ParamGroup::sve,
                                               config.feature_dim, config.projection_dim, rng));
  }
}

Tensor StaticEncoder::encode_frames(const Tensor& frames) const {
  const auto& s = frames.shape();
  if (s.size() != 5 || s[1] != 3 || s[2] != 1 || s[3] != height_ || s[4] != width_) {
    throw ShapeError("sve: expected frames [T, 3, 1, " + std::to_string(height_) + ", " + std::to_string(width_) +
                     "], got " + shape_str(s));
  }
  const int t_len = s[0];
  const int stride = config_.frame_stride;
  Tensor input = frames;
  if (stride > 1) {
    std::vector<Tensor> picked;
    for (int t = 0; t < t_len; t += stride) picked.push_back(slice(frames, 0, t, t + 1));
    input = concat(picked, 0);
  }
  Tensor x = max_pool3d(relu(stem_(input)), {1, 2, 2});
  x = relu(add(x, res2_(relu(res1_(x)))));
  x = relu(down_(x));
  const auto& d = x.shape();
  // Global average over the spatial plane: [T', C, 1, h, w] -> [T', C].
  Tensor pooled = mean_last(reshape(x, {d[0], d[1], d[3] * d[4]}));
  Tensor feats = out_(pooled);
  if (stride > 1) {
    TimeMap hold;
    hold.in_len = feats.size(0);
    hold.out_len = t_len;
    for (int t = 0; t < t_len; ++t) hold.entries.push_back({t, t / stride, 1.0});
    feats = apply_time_map(hold, feats);
  }
  return feats;
}

std::vector<Tensor> split_by_transitions(const Tensor& per_frame, const TransitionSet& transitions) {
  if (per_frame.dim() != 2 || per_frame.size(0) != transitions.num_frames()) {
    throw ShapeError("split_by_transitions: expected [T, C] with T=" + std::to_string(transitions.num_frames()));
  }
  std::vector<Tensor> out;
  int begin = 0;
  for (int t : transitions.timestamps()) {
    out.push_back(slice(per_frame, 0, begin, t));
    begin = t;
  }
  out.push_back(slice(per_frame, 0, begin, transitions.num_frames()));
  return out;
}

Tensor StaticEncoder::project_step(const Tensor& segment, int step) const {
  if (step < 0 || step >= num_steps()) throw ShapeError("sve: step index " + std::to_string(step) + " out of range");
  return projections_[static_cast<std::size_t>(step)](resample_step(segment, config_.duration));
}

StaticFeatures StaticEncoder::encode(const Tensor& frames, const TransitionSet& transitions) const {
  if (transitions.num_steps() != num_steps()) throw ShapeError("sve: transition count does not match step count");
  StaticFeatures f;
  f.per_frame = encode_frames(frames);
  const auto segments = split_by_transitions(f.per_frame, transitions);
  for (int l = 0; l < num_steps(); ++l) f.per_step.push_back(project_step(segments[l], l));
  return f;
}

}  // namespace fineparser
