#pragma once

// Fine-grained contrastive regression: step-wise cross-attention between the
// query and exemplar videos, relative score heads, weighted assembly and
// multi-exemplar voting.

#include <vector>

#include "fineparser/parameters.h"

namespace fineparser {

struct FineRegConfig {
  int width = 16;
  int heads = 4;
  int ffn_hidden = 32;
  int head_hidden1 = 32;
  int head_hidden2 = 16;
  std::vector<double> lambda = {3.0, 5.0, 2.0};

  void validate(int num_steps) const;
};

// One decoder-style block: D1 = q + MHA(q, kv, kv); D = D1 + FFN(D1).
class CrossAttention {
 public:
  CrossAttention() = default;
  CrossAttention(int width, int heads, int ffn_hidden, ParameterStore& store, const std::string& name, Rng& rng);

  // query [n, d], context [m, d] -> [n, d]. When weights is non-null it
  // receives one [n, m] attention matrix per head.
  Tensor operator()(const Tensor& query, const Tensor& context, std::vector<Tensor>* weights = nullptr) const;

 private:
  int width_ = 0;
  int heads_ = 0;
  LinearLayer wq_, wk_, wv_, wo_, ffn1_, ffn2_;
};

// Three affine layers with ReLU between them, ending in a scalar.
class RegressionHead {
 public:
  RegressionHead() = default;
  RegressionHead(int in, int hidden1, int hidden2, ParameterStore& store, const std::string& name, Rng& rng);

  Tensor operator()(const Tensor& pooled) const;  // [1, d] -> [1, 1]

  const std::vector<LinearLayer>& affine_layers() const { return layers_; }
  int relu_count() const { return static_cast<int>(layers_.size()) - 1; }

 private:
  std::vector<LinearLayer> layers_;
};

struct StepRelative {
  Tensor r_v;  // [1, 1]
  Tensor r_s;  // [1, 1], undefined when the static stream is disabled
};

// y = sum_l lambda_l (r_v,l + r_s,l) + y_Z.
Tensor assemble_score(const std::vector<StepRelative>& relative, const std::vector<double>& lambda, double exemplar_score);
double assemble_score(const std::vector<std::pair<double, double>>& relative, const std::vector<double>& lambda,
                      double exemplar_score);

class FineRegressor {
 public:
  FineRegressor(const FineRegConfig& config, int num_steps, bool use_static, ParameterStore& store, Rng& rng);

  // Per-step features: TAP steps [step_len, d] and SVE steps [duration, d].
  std::vector<StepRelative> relative(const std::vector<Tensor>& query_v, const std::vector<Tensor>& exemplar_v,
                                     const std::vector<Tensor>& query_s, const std::vector<Tensor>& exemplar_s) const;

  const FineRegConfig& config() const { return config_; }
  const CrossAttention& attention_v() const { return attend_v_; }
  const RegressionHead& head_v() const { return head_v_; }
  const RegressionHead& head_s() const { return head_s_; }
  bool use_static() const { return use_static_; }

 private:
  FineRegConfig config_;
  int num_steps_;
  bool use_static_;
  CrossAttention attend_v_, attend_s_;
  RegressionHead head_v_, head_s_;
};

}  // namespace fineparser
