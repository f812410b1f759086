#include "fineparser/model.h"

#include "fineparser/error.h"

namespace fineparser {

using nlohmann::json;

namespace {

json dim3_json(const Dim3& d) { return json::array({d[0], d[1], d[2]}); }

Dim3 dim3_from(const json& j) {
  if (!j.is_array() || j.size() != 3) throw ConfigError("expected a 3-element array");
  return {j[0].get<int>(), j[1].get<int>(), j[2].get<int>()};
}

json backbone_json(const BackboneConfig& b) {
  json stages = json::array();
  for (const auto& s : b.stages) {
    stages.push_back({{"channels", s.channels}, {"pool", dim3_json(s.pool)}, {"conv_stride", dim3_json(s.conv_stride)}});
  }
  return {{"in_channels", b.in_channels}, {"stages", stages}, {"embedding_channels", b.embedding_channels}};
}

BackboneConfig backbone_from(const json& j, BackboneConfig b) {
  b.in_channels = j.value("in_channels", b.in_channels);
  b.embedding_channels = j.value("embedding_channels", b.embedding_channels);
  if (j.contains("stages")) {
    const auto& st = j.at("stages");
    if (!st.is_array() || st.size() != 4) throw ConfigError("backbone.stages must list exactly 4 stages");
    for (std::size_t i = 0; i < 4; ++i) {
      auto& s = b.stages[i];
      s.channels = st[i].value("channels", s.channels);
      if (st[i].contains("pool")) s.pool = dim3_from(st[i].at("pool"));
      if (st[i].contains("conv_stride")) s.conv_stride = dim3_from(st[i].at("conv_stride"));
    }
  }
  return b;
}

template <class T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void ModelConfig::validate() const {
  if (num_frames < 2 || height < 1 || width < 1) throw ConfigError("model: invalid video dimensions");
  layout.validate(num_frames);
  const Dim3 snippet{layout.snippet_len, height, width};
  const auto sap_shapes = declared_shapes(sap_backbone, snippet);
  const auto tap_shapes = declared_shapes(tap_backbone, snippet);
  if (sap_shapes.embedding != tap_shapes.embedding) {
    throw ConfigError("model: video embedding " + shape_str(tap_shapes.embedding) + " and mask embedding " +
                      shape_str(sap_shapes.embedding) + " must match for the gate");
  }
  sap.validate();
  tap.validate();
  if (num_frames <= tap.num_transitions) throw ConfigError("model: T must exceed the transition count");
  sve.validate();
  finereg.validate(num_steps());
  if (finereg.width != tap_shapes.embedding[0]) {
    throw ConfigError("model: finereg.width must equal the embedding width " + std::to_string(tap_shapes.embedding[0]));
  }
  if (use_sve && sve.projection_dim != finereg.width) {
    throw ConfigError("model: sve.projection_dim must equal finereg.width");
  }
  if (height % 8 != 0 || width % 8 != 0) throw ConfigError("model: frame size must be divisible by 8");
}

json ModelConfig::to_json() const {
  return {{"num_frames", num_frames},
          {"height", height},
          {"width", width},
          {"layout", {{"num_snippets", layout.num_snippets}, {"snippet_len", layout.snippet_len}, {"stride", layout.stride}}},
          {"sap_backbone", backbone_json(sap_backbone)},
          {"tap_backbone", backbone_json(tap_backbone)},
          {"sap", {{"fuse_kernel", sap.fuse_kernel}, {"mask_prior", sap.mask_prior}}},
          {"tap",
           {{"num_transitions", tap.num_transitions},
            {"hidden", tap.hidden},
            {"step_len", tap.step_len},
            {"transition_prior", tap.transition_prior}}},
          {"sve",
           {{"stem_channels", sve.stem_channels},
            {"channels", sve.channels},
            {"feature_dim", sve.feature_dim},
            {"projection_dim", sve.projection_dim},
            {"duration", sve.duration},
            {"frame_stride", sve.frame_stride}}},
          {"finereg",
           {{"width", finereg.width},
            {"heads", finereg.heads},
            {"ffn_hidden", finereg.ffn_hidden},
            {"head_hidden1", finereg.head_hidden1},
            {"head_hidden2", finereg.head_hidden2},
            {"lambda", finereg.lambda}}},
          {"use_gate", use_gate},
          {"use_sve", use_sve},
          {"init_seed", init_seed}};
}

ModelConfig ModelConfig::from_json(const json& j) {
  ModelConfig c;
  try {
    read_opt(j, "num_frames", c.num_frames);
    read_opt(j, "height", c.height);
    read_opt(j, "width", c.width);
    if (j.contains("layout")) {
      const auto& l = j.at("layout");
      read_opt(l, "num_snippets", c.layout.num_snippets);
      read_opt(l, "snippet_len", c.layout.snippet_len);
      read_opt(l, "stride", c.layout.stride);
    }
    if (j.contains("sap_backbone")) c.sap_backbone = backbone_from(j.at("sap_backbone"), c.sap_backbone);
    if (j.contains("tap_backbone")) c.tap_backbone = backbone_from(j.at("tap_backbone"), c.tap_backbone);
    if (j.contains("sap")) {
      read_opt(j.at("sap"), "fuse_kernel", c.sap.fuse_kernel);
      read_opt(j.at("sap"), "mask_prior", c.sap.mask_prior);
    }
    if (j.contains("tap")) {
      const auto& t = j.at("tap");
      read_opt(t, "num_transitions", c.tap.num_transitions);
      read_opt(t, "hidden", c.tap.hidden);
      read_opt(t, "step_len", c.tap.step_len);
      read_opt(t, "transition_prior", c.tap.transition_prior);
    }
    if (j.contains("sve")) {
      const auto& s = j.at("sve");
      read_opt(s, "stem_channels", c.sve.stem_channels);
      read_opt(s, "channels", c.sve.channels);
      read_opt(s, "feature_dim", c.sve.feature_dim);
      read_opt(s, "projection_dim", c.sve.projection_dim);
      read_opt(s, "duration", c.sve.duration);
      read_opt(s, "frame_stride", c.sve.frame_stride);
    }
    if (j.contains("finereg")) {
      const auto& f = j.at("finereg");
      read_opt(f, "width", c.finereg.width);
      read_opt(f, "heads", c.finereg.heads);
      read_opt(f, "ffn_hidden", c.finereg.ffn_hidden);
      read_opt(f, "head_hidden1", c.finereg.head_hidden1);
      read_opt(f, "head_hidden2", c.finereg.head_hidden2);
      read_opt(f, "lambda", c.finereg.lambda);
    }
    read_opt(j, "use_gate", c.use_gate);
    read_opt(j, "use_sve", c.use_sve);
    read_opt(j, "init_seed", c.init_seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  return c;
}

std::uint64_t ModelConfig::hash() const { return fnv1a64(to_json().dump()); }

FineParserModel::FineParserModel(const ModelConfig& config) : config_(config) {
  config_.validate();
  const Dim3 snippet{config.layout.snippet_len, config.height, config.width};
  const std::uint64_t seed = config.init_seed;
  Rng sap_rng(derive_seed(seed, "sap_backbone"));
  Rng tap_rng(derive_seed(seed, "tap_backbone"));
  Rng head_rng(derive_seed(seed, "heads"));
  sap_backbone_ = std::make_unique<Backbone>(config.sap_backbone, snippet, store_, "sap.backbone", ParamGroup::sap, sap_rng);
  tap_backbone_ = std::make_unique<Backbone>(config.tap_backbone, snippet, store_, "tap.backbone", ParamGroup::tap, tap_rng);
  sap_ = std::make_unique<SpatialParser>(config.sap, sap_backbone_->shapes(), snippet, config.layout, store_, head_rng);
  const Shape& emb = tap_backbone_->shapes().embedding;
  tap_ = std::make_unique<TemporalParser>(config.tap, emb[0], emb[1], config.layout, store_, head_rng);
  if (config.use_sve) {
    sve_ = std::make_unique<StaticEncoder>(config.sve, config.height, config.width, config.num_steps(), store_, head_rng);
  }
  finereg_ = std::make_unique<FineRegressor>(config.finereg, config.num_steps(), config.use_sve, store_, head_rng);
}

VideoRepresentation FineParserModel::represent(const VideoSample& sample, const RepresentOptions& options) const {
  if (sample.num_frames != config_.num_frames || sample.height != config_.height || sample.width != config_.width) {
    throw ConfigError("sample '" + sample.id + "' is " + std::to_string(sample.num_frames) + "x" +
                      std::to_string(sample.height) + "x" + std::to_string(sample.width) + " but the model expects " +
                      std::to_string(config_.num_frames) + "x" + std::to_string(config_.height) + "x" +
                      std::to_string(config_.width));
  }
  VideoRepresentation r;
  const Tensor snippets = snippet_tensor(sample, config_.layout);
  const StagedFeatures staged = sap_backbone_->extract_staged(snippets);
  if (options.with_masks) r.pyramid = sap_->build_pyramid(staged);
  const Tensor video_emb = tap_backbone_->video_embedding(snippets);
  const Tensor gated = config_.use_gate ? gate_target_representation(video_emb, staged.embedding) : video_emb;
  r.transition_probs = tap_->predict_transition_probs(gated);
  r.predicted = locate_transitions(r.transition_probs);
  r.segmented = options.segment_with ? *options.segment_with : r.predicted;
  r.tap_steps = tap_->parse_steps(tap_->frame_features(gated), r.segmented);
  if (sve_) r.sve_steps = sve_->encode(frame_tensor(sample), r.segmented).per_step;
  return r;
}

PairPrediction FineParserModel::score_pair(const VideoRepresentation& query, const VideoRepresentation& exemplar,
                                           double exemplar_score) const {
  PairPrediction p;
  p.steps = finereg_->relative(query.tap_steps, exemplar.tap_steps, query.sve_steps, exemplar.sve_steps);
  p.score = assemble_score(p.steps, config_.finereg.lambda, exemplar_score);
  return p;
}

MultiPrediction FineParserModel::predict_multi_exemplar(const VideoRepresentation& query,
                                                        std::span<const ExemplarRef> exemplars) const {
  if (exemplars.empty()) throw DataError("predict_multi_exemplar: no exemplars");
  MultiPrediction m;
  for (const auto& e : exemplars) {
    const PairPrediction p = score_pair(query, *e.representation, e.score);
    const double s = p.score.item();
    m.contributions.push_back(s);
    std::vector<std::pair<double, double>> steps;
    for (const auto& st : p.steps) steps.emplace_back(st.r_v.item(), st.r_s.defined() ? st.r_s.item() : 0.0);
    m.step_relatives.push_back(std::move(steps));
  }
  // Mean shifted by the first contribution, exact when all contributions agree.
  double shift = 0.0;
  for (double c : m.contributions) shift += c - m.contributions.front();
  m.score = m.contributions.front() + shift / static_cast<double>(exemplars.size());
  return m;
}

}  // namespace fineparser
