#include "fineparser/tap.h"

#include <cmath>

#include "fineparser/error.h"

namespace fineparser {

TransitionSet::TransitionSet(std::vector<int> timestamps, int num_frames)
    : timestamps_(std::move(timestamps)), num_frames_(num_frames) {
  int prev = 0;
  for (int t : timestamps_) {
    if (t <= prev) throw DataError("transitions must be strictly increasing and >= 1");
    prev = t;
  }
  if (prev >= num_frames_ && !timestamps_.empty()) throw DataError("last transition leaves an empty final step");
}

std::vector<std::pair<int, int>> TransitionSet::intervals() const {
  std::vector<std::pair<int, int>> out;
  int begin = 0;
  for (int t : timestamps_) {
    out.emplace_back(begin, t);
    begin = t;
  }
  out.emplace_back(begin, num_frames_);
  return out;
}

TransitionSet locate_transitions(std::span<const double> probs, int num_transitions, int num_frames) {
  if (num_transitions < 1 || num_frames < num_transitions + 1) {
    throw ConfigError("locate_transitions: need T > L' >= 1");
  }
  if (probs.size() != static_cast<std::size_t>(num_transitions) * num_frames) {
    throw ShapeError("locate_transitions: probability map size mismatch");
  }
  std::vector<int> ts;
  for (int k = 1; k <= num_transitions; ++k) {
    auto [lo, hi] = transition_bin(k, num_transitions, num_frames);
    if (k == num_transitions) hi = std::min(hi, num_frames - 1);
    int best = lo + 1;
    double best_p = probs[static_cast<std::size_t>(lo) * num_transitions + (k - 1)];
    for (int t = lo + 2; t <= hi; ++t) {
      const double p = probs[static_cast<std::size_t>(t - 1) * num_transitions + (k - 1)];
      if (p > best_p) {
        best_p = p;
        best = t;
      }
    }
    ts.push_back(best);
  }
  return TransitionSet(std::move(ts), num_frames);
}

TransitionSet locate_transitions(const Tensor& probs) {
  if (probs.dim() != 2) throw ShapeError("locate_transitions expects [T, L'], got " + shape_str(probs.shape()));
  return locate_transitions(probs.values(), probs.size(1), probs.size(0));
}

std::vector<Tensor> segment_steps(const Tensor& features, const TransitionSet& transitions) {
  if (features.dim() < 1 || features.size(0) != transitions.num_frames()) {
    throw ShapeError("segment_steps: feature length " + std::to_string(features.dim() ? features.size(0) : 0) +
                     " does not match T=" + std::to_string(transitions.num_frames()));
  }
  std::vector<Tensor> steps;
  for (const auto& [b, e] : transitions.intervals()) steps.push_back(slice(features, 0, b, e));
  return steps;
}

Tensor resample_step(const Tensor& step, int target_len) {
  if (target_len < 1 || step.dim() < 1 || step.size(0) < 1) throw ShapeError("resample_step: empty input or target");
  if (step.size(0) == target_len) return step;
  return apply_time_map(interpolation_map(step.size(0), target_len, Align::corners), step);
}

void TapConfig::validate() const {
  if (num_transitions < 1) throw ConfigError("tap.num_transitions must be >= 1");
  if (hidden < 1) throw ConfigError("tap.hidden must be >= 1");
  if (step_len < 1) throw ConfigError("tap.step_len must be >= 1");
  if (!(transition_prior > 0.0 && transition_prior < 1.0)) throw ConfigError("tap.transition_prior must be in (0, 1)");
}

TemporalParser::TemporalParser(const TapConfig& config, int embedding_channels, int embedding_len,
                               const SnippetLayout& layout, ParameterStore& store, Rng& rng)
    : config_(config), channels_(embedding_channels), embedding_len_(embedding_len), layout_(layout) {
  config_.validate();
  const TimeMap up = interpolation_map(embedding_len, layout.snippet_len, Align::half_pixel);
  const TimeMap stitched = stitch_map(layout);
  // Compose per-snippet upsampling with overlap averaging into one map.
  const TimeMap per_snippet = repeat_map(up, layout.num_snippets);
  std::vector<std::vector<std::pair<int, double>>> rows(static_cast<std::size_t>(per_snippet.out_len));
  for (const auto& e : per_snippet.entries) rows[e.out].emplace_back(e.in, e.weight);
  to_video_.in_len = per_snippet.in_len;
  to_video_.out_len = stitched.out_len;
  std::vector<std::vector<double>> dense(static_cast<std::size_t>(stitched.out_len),
                                         std::vector<double>(per_snippet.in_len, 0.0));
  for (const auto& e : stitched.entries) {
    for (const auto& [in, w] : rows[e.in]) dense[e.out][in] += e.weight * w;
  }
  for (int o = 0; o < stitched.out_len; ++o) {
    for (int i = 0; i < per_snippet.in_len; ++i) {
      if (dense[o][i] != 0.0) to_video_.entries.push_back({o, i, dense[o][i]});
    }
  }
  head1_ = Conv3dLayer::create(store, "tap.head1", ParamGroup::tap, embedding_channels, config.hidden, {3, 1, 1},
                               {1, 1, 1}, {1, 0, 0}, rng);
  head2_ = Conv3dLayer::create(store, "tap.head2", ParamGroup::tap, config.hidden, config.num_transitions, {3, 1, 1},
                               {1, 1, 1}, {1, 0, 0}, rng);
  const double prior_logit = std::log(config.transition_prior / (1.0 - config.transition_prior));
  for (double& b : head2_.bias.values_mut()) b = prior_logit;
}

Tensor TemporalParser::per_snippet_rows_to_video(const Tensor& x) const {
  // x [N, C, T_e, 1, 1] -> [N * T_e, C] -> [T, C]
  const auto& s = x.shape();
  if (s.size() != 5 || s[2] != embedding_len_ || s[3] != 1 || s[4] != 1 || s[0] != layout_.num_snippets) {
    throw ShapeError("temporal parser: unexpected input " + shape_str(s));
  }
  Tensor rows = reshape(permute(reshape(x, {s[0], s[1], s[2]}), {0, 2, 1}), {s[0] * s[2], s[1]});
  return apply_time_map(to_video_, rows);
}

Tensor TemporalParser::transition_logits(const Tensor& gated) const {
  if (gated.dim() != 5 || gated.size(1) != channels_) {
    throw ShapeError("temporal parser: unexpected input " + shape_str(gated.shape()));
  }
  return per_snippet_rows_to_video(head2_(relu(head1_(gated))));
}

Tensor TemporalParser::frame_features(const Tensor& gated) const { return per_snippet_rows_to_video(gated); }

std::vector<Tensor> TemporalParser::parse_steps(const Tensor& frame_features, const TransitionSet& transitions) const {
  auto steps = segment_steps(frame_features, transitions);
  for (auto& s : steps) s = resample_step(s, config_.step_len);
  return steps;
}

}  // namespace fineparser
