#pragma once

// The full parser and regressor: two backbones, spatial and temporal parsers,
// the static encoder and the contrastive regressor, sharing one parameter store.

#include <json.hpp>
#include <memory>
#include <optional>
#include <span>

#include "fineparser/backbone.h"
#include "fineparser/data_model.h"
#include "fineparser/finereg.h"
#include "fineparser/sap.h"
#include "fineparser/sve.h"
#include "fineparser/tap.h"

namespace fineparser {

struct ModelConfig {
  int num_frames = 96;
  int height = 32;
  int width = 32;
  SnippetLayout layout;
  BackboneConfig sap_backbone;
  BackboneConfig tap_backbone;
  SapConfig sap;
  TapConfig tap;
  SveConfig sve;
  FineRegConfig finereg;
  bool use_gate = true;
  bool use_sve = true;
  std::uint64_t init_seed = 1;

  int num_steps() const { return tap.num_transitions + 1; }
  // Checks every structural constraint; throws ConfigError.
  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);  // missing keys keep defaults
  std::uint64_t hash() const;
};

struct RepresentOptions {
  // Ground-truth transitions for teacher forcing; predicted ones when null.
  const TransitionSet* segment_with = nullptr;
  bool with_masks = true;
};

struct VideoRepresentation {
  MaskPyramid pyramid;  // empty when masks were not requested
  Tensor transition_probs;   // [T, L']
  TransitionSet predicted;   // from transition_probs
  TransitionSet segmented;   // transitions used to build the step features
  std::vector<Tensor> tap_steps;
  std::vector<Tensor> sve_steps;
};

struct PairPrediction {
  Tensor score;
  std::vector<StepRelative> steps;
};

struct ExemplarRef {
  const VideoRepresentation* representation = nullptr;
  double score = 0.0;
};

struct MultiPrediction {
  double score = 0.0;
  std::vector<double> contributions;  // relative + y_Z per exemplar
  std::vector<std::vector<std::pair<double, double>>> step_relatives;
};

class FineParserModel {
 public:
  explicit FineParserModel(const ModelConfig& config);

  VideoRepresentation represent(const VideoSample& sample, const RepresentOptions& options = {}) const;
  PairPrediction score_pair(const VideoRepresentation& query, const VideoRepresentation& exemplar,
                            double exemplar_score) const;
  MultiPrediction predict_multi_exemplar(const VideoRepresentation& query, std::span<const ExemplarRef> exemplars) const;

  const ModelConfig& config() const { return config_; }
  ParameterStore& parameters() { return store_; }
  const ParameterStore& parameters() const { return store_; }
  const Backbone& sap_backbone() const { return *sap_backbone_; }
  const Backbone& tap_backbone() const { return *tap_backbone_; }
  const SpatialParser& spatial_parser() const { return *sap_; }
  const TemporalParser& temporal_parser() const { return *tap_; }
  const StaticEncoder* static_encoder() const { return sve_.get(); }
  const FineRegressor& regressor() const { return *finereg_; }

 private:
  ModelConfig config_;
  ParameterStore store_;
  std::unique_ptr<Backbone> sap_backbone_;
  std::unique_ptr<Backbone> tap_backbone_;
  std::unique_ptr<SpatialParser> sap_;
  std::unique_ptr<TemporalParser> tap_;
  std::unique_ptr<StaticEncoder> sve_;
  std::unique_ptr<FineRegressor> finereg_;
};

}  // namespace fineparser
