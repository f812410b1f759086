#pragma once

// Optimization loop, checkpoint container and evaluation harness.

#include <filesystem>
#include <functional>
#include <json.hpp>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fineparser/losses.h"
#include "fineparser/metrics.h"
#include "fineparser/model.h"

namespace fineparser {

struct TrainConfig {
  double lr_sap = 1e-3;
  double lr_tap = 1e-4;
  double lr_sve = 1e-3;
  double lr_finereg = 1e-3;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int epochs = 50;
  int batch_size = 8;
  std::uint64_t seed = 7;
  FocalConfig focal;
  bool teacher_forcing = true;
  std::string dump_dir;  // where a diagnostic record is written on a non-finite loss

  double learning_rate(ParamGroup group) const;
  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct EpochLog {
  int epoch = 0;
  double l_sap = 0.0;
  double l_tap = 0.0;
  double l_reg = 0.0;
  double total = 0.0;

  friend bool operator==(const EpochLog&, const EpochLog&) = default;
};

struct OptimizerState {
  std::int64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

struct TrainingProgress {
  int epoch = 0;
  std::vector<EpochLog> log;
  OptimizerState optimizer;
};

// Adam with one learning rate per parameter group.
class Adam {
 public:
  Adam(const TrainConfig& config, ParameterStore& store, OptimizerState& state);
  void step();

 private:
  const TrainConfig& config_;
  ParameterStore& store_;
  OptimizerState& state_;
};

struct LossBreakdown {
  Tensor l_sap;
  Tensor l_tap;
  Tensor l_reg;
  Tensor total;
};

// Losses of one query-exemplar pair. Mask and transition terms supervise the query.
LossBreakdown pair_loss(const FineParserModel& model, const VideoSample& query, const VideoSample& exemplar,
                        const TrainConfig& config);

class Trainer {
 public:
  Trainer(FineParserModel& model, TrainConfig config, TrainingProgress progress = {});

  // Trains epochs progress.epoch + 1 .. until_epoch; after each epoch the
  // callback (if any) receives the log entry.
  void train(const Dataset& train_set, int until_epoch, const std::function<void(const EpochLog&)>& on_epoch = {});
  EpochLog train_epoch(const Dataset& train_set);

  const TrainingProgress& progress() const { return progress_; }
  const TrainConfig& config() const { return config_; }
  FineParserModel& model() { return model_; }

 private:
  FineParserModel& model_;
  TrainConfig config_;
  TrainingProgress progress_;
};

void write_training_log(const std::filesystem::path& path, const std::vector<EpochLog>& log);

// Checkpoint container: "FPCK", u32 version, u64 header size, JSON header,
// then little-endian float64 payload.
void save_checkpoint(const std::filesystem::path& path, const FineParserModel& model, const TrainingProgress& progress,
                     const TrainConfig& train_config);

struct LoadedCheckpoint {
  std::unique_ptr<FineParserModel> model;
  TrainingProgress progress;
  TrainConfig train_config;
};

// With an expected config, a different stored config hash is rejected.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected = nullptr);

struct SamplePrediction {
  std::string sample_id;
  double score = 0.0;
  TransitionSet transitions;
  std::vector<double> fused_mask;  // [T, H, W]
  std::vector<std::string> exemplar_ids;
  std::vector<double> contributions;
  std::vector<std::vector<std::pair<double, double>>> step_relatives;

  nlohmann::json to_json() const;  // without the mask
};

class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual SamplePrediction predict(const VideoSample& query, const std::vector<const VideoSample*>& exemplars) = 0;
};

// Evaluation-mode model inference with per-sample representation caching.
class ModelPredictor : public Predictor {
 public:
  explicit ModelPredictor(const FineParserModel& model) : model_(model) {}
  SamplePrediction predict(const VideoSample& query, const std::vector<const VideoSample*>& exemplars) override;
  const VideoRepresentation& representation(const VideoSample& sample);

 private:
  const FineParserModel& model_;
  std::map<std::string, VideoRepresentation> cache_;
};

// Returns the ground truth of each query.
class OraclePredictor : public Predictor {
 public:
  SamplePrediction predict(const VideoSample& query, const std::vector<const VideoSample*>& exemplars) override;
};

struct MetricReport {
  std::optional<double> rho;
  double r_l2_x100 = 0.0;
  std::vector<std::pair<double, double>> aiou;  // (threshold, value)
  double mae = 0.0;
  double f_beta = 0.0;
  double s_measure = 0.0;
  std::size_t num_samples = 0;

  nlohmann::json to_json() const;
  // Empty when every field is present and within its declared range.
  std::string bounds_violation() const;
};

struct Evaluation {
  MetricReport report;
  std::vector<SamplePrediction> predictions;
};

Evaluation evaluate(Predictor& predictor, const Dataset& test_set, const Dataset& exemplar_pool, int num_exemplars,
                    std::uint64_t seed, const MetricConfig& metrics = {});

}  // namespace fineparser
