#include "fineparser/finereg.h"

#include <cmath>

#include "fineparser/error.h"

namespace fineparser {

void FineRegConfig::validate(int num_steps) const {
  if (width < 1 || heads < 1 || width % heads != 0) throw ConfigError("finereg.width must be a positive multiple of heads");
  if (ffn_hidden < 1 || head_hidden1 < 1 || head_hidden2 < 1) throw ConfigError("finereg hidden widths must be positive");
  if (static_cast<int>(lambda.size()) != num_steps) {
    throw ConfigError("finereg.lambda has " + std::to_string(lambda.size()) + " weights but the model has " +
                      std::to_string(num_steps) + " steps (len(lambda) must equal L'+1)");
  }
  for (double l : lambda) {
    if (!(l > 0.0)) throw ConfigError("finereg.lambda weights must be positive");
  }
}

CrossAttention::CrossAttention(int width, int heads, int ffn_hidden, ParameterStore& store, const std::string& name,
                               Rng& rng)
    : width_(width), heads_(heads) {
  const auto g = ParamGroup::finereg;
  wq_ = LinearLayer::create(store, name + ".wq", g, width, width, rng, 0.5);
  wk_ = LinearLayer::create(store, name + ".wk", g, width, width, rng, 0.5);
  wv_ = LinearLayer::create(store, name + ".wv", g, width, width, rng, 0.5);
  wo_ = LinearLayer::create(store, name + ".wo", g, width, width, rng, 0.5);
  ffn1_ = LinearLayer::create(store, name + ".ffn1", g, width, ffn_hidden, rng);
  ffn2_ = LinearLayer::create(store, name + ".ffn2", g, ffn_hidden, width, rng, 0.5);
}

Tensor CrossAttention::operator()(const Tensor& query, const Tensor& context, std::vector<Tensor>* weights) const {
  if (query.dim() != 2 || context.dim() != 2 || query.size(1) != width_ || context.size(1) != width_) {
    throw ShapeError("cross-attention: expected [n, " + std::to_string(width_) + "] inputs, got " +
                     shape_str(query.shape()) + " and " + shape_str(context.shape()));
  }
  const Tensor q = wq_(query), k = wk_(context), v = wv_(context);
  const int dh = width_ / heads_;
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> outs;
  if (weights) weights->clear();
  for (int h = 0; h < heads_; ++h) {
    const Tensor qh = slice(q, 1, h * dh, (h + 1) * dh);
    const Tensor kh = slice(k, 1, h * dh, (h + 1) * dh);
    const Tensor vh = slice(v, 1, h * dh, (h + 1) * dh);
    const Tensor a = softmax_rows(scale(matmul(qh, transpose2d(kh)), scale_factor));
    if (weights) weights->push_back(a);
    outs.push_back(matmul(a, vh));
  }
  const Tensor d1 = add(query, wo_(concat(outs, 1)));
  return add(d1, ffn2_(relu(ffn1_(d1))));
}

RegressionHead::RegressionHead(int in, int hidden1, int hidden2, ParameterStore& store, const std::string& name,
                               Rng& rng) {
  const auto g = ParamGroup::finereg;
  layers_.push_back(LinearLayer::create(store, name + ".fc1", g, in, hidden1, rng));
  layers_.push_back(LinearLayer::create(store, name + ".fc2", g, hidden1, hidden2, rng));
  layers_.push_back(LinearLayer::create(store, name + ".fc3", g, hidden2, 1, rng, 0.1));
}

Tensor RegressionHead::operator()(const Tensor& pooled) const {
  Tensor x = pooled;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    x = layers_[i](x);
    if (i + 1 < layers_.size()) x = relu(x);
  }
  return x;
}

Tensor assemble_score(const std::vector<StepRelative>& relative, const std::vector<double>& lambda,
                      double exemplar_score) {
  if (relative.size() != lambda.size()) {
    throw ShapeError("assemble_score: " + std::to_string(relative.size()) + " relative scores for " +
                     std::to_string(lambda.size()) + " weights");
  }
  Tensor total;
  for (std::size_t l = 0; l < relative.size(); ++l) {
    Tensor r = relative[l].r_s.defined() ? add(relative[l].r_v, relative[l].r_s) : relative[l].r_v;
    Tensor term = scale(r, lambda[l]);
    total = total.defined() ? add(total, term) : term;
  }
  return add_scalar(reshape(total, {}), exemplar_score);
}

double assemble_score(const std::vector<std::pair<double, double>>& relative, const std::vector<double>& lambda,
                      double exemplar_score) {
  if (relative.size() != lambda.size()) throw ShapeError("assemble_score: relative/lambda length mismatch");
  double total = 0.0;
  for (std::size_t l = 0; l < relative.size(); ++l) total += lambda[l] * (relative[l].first + relative[l].second);
  return total + exemplar_score;
}

FineRegressor::FineRegressor(const FineRegConfig& config, int num_steps, bool use_static, ParameterStore& store,
                             Rng& rng)
    : config_(config), num_steps_(num_steps), use_static_(use_static) {
  config_.validate(num_steps);
  const int d = config.width;
  attend_v_ = CrossAttention(d, config.heads, config.ffn_hidden, store, "finereg.attend_v", rng);
  head_v_ = RegressionHead(d, config.head_hidden1, config.head_hidden2, store, "finereg.head_v", rng);
  if (use_static) {
    attend_s_ = CrossAttention(d, config.heads, config.ffn_hidden, store, "finereg.attend_s", rng);
    head_s_ = RegressionHead(d, config.head_hidden1, config.head_hidden2, store, "finereg.head_s", rng);
  }
}

std::vector<StepRelative> FineRegressor::relative(const std::vector<Tensor>& query_v,
                                                  const std::vector<Tensor>& exemplar_v,
                                                  const std::vector<Tensor>& query_s,
                                                  const std::vector<Tensor>& exemplar_s) const {
  const auto n = static_cast<std::size_t>(num_steps_);
  if (query_v.size() != n || exemplar_v.size() != n) throw ShapeError("finereg: expected one TAP feature per step");
  if (use_static_ && (query_s.size() != n || exemplar_s.size() != n)) {
    throw ShapeError("finereg: expected one static feature per step");
  }
  std::vector<StepRelative> out(n);
  for (std::size_t l = 0; l < n; ++l) {
    auto check = [&](const Tensor& a, const Tensor& b) {
      if (a.shape() != b.shape()) {
        throw ShapeError("finereg step " + std::to_string(l + 1) + ": query " + shape_str(a.shape()) +
                         " vs exemplar " + shape_str(b.shape()));
      }
    };
    check(query_v[l], exemplar_v[l]);
    out[l].r_v = head_v_(mean_rows(attend_v_(query_v[l], exemplar_v[l])));
    if (use_static_) {
      check(query_s[l], exemplar_s[l]);
      out[l].r_s = head_s_(mean_rows(attend_s_(query_s[l], exemplar_s[l])));
    }
  }
  return out;
}

}  // namespace fineparser
