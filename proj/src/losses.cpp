#include "fineparser/losses.h"

#include <cmath>

#include "fineparser/error.h"
#include "fineparser/ops.h"

namespace fineparser {

namespace {

// x^g with exact products for small integer exponents.
double focal_pow(double x, double g) {
  if (g == 0.0) return 1.0;
  if (g == 1.0) return x;
  if (g == 2.0) return x * x;
  if (g == 3.0) return x * x * x;
  return std::pow(x, g);
}

}  // namespace

void FocalConfig::validate() const {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("focal.alpha must be in (0, 1]");
  if (!(gamma >= 0.0)) throw ConfigError("focal.gamma must be >= 0");
}

Tensor focal_loss(const Tensor& pred, std::span<const std::uint8_t> gt, const FocalConfig& cfg) {
  cfg.validate();
  if (static_cast<std::size_t>(pred.numel()) != gt.size() || gt.empty()) {
    throw ShapeError("focal_loss: prediction " + shape_str(pred.shape()) + " vs " + std::to_string(gt.size()) +
                     " ground-truth elements");
  }
  const auto v = pred.values();
  const std::size_t n = v.size();
  const double a = cfg.alpha, g = cfg.gamma;
  std::vector<double> dldx(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const bool pos = gt[i] != 0;
    const double raw = pos ? v[i] : 1.0 - v[i];
    const bool clamped = raw < kProbEpsilon;
    const double p = clamped ? kProbEpsilon : std::min(raw, 1.0);
    const double q = 1.0 - p;
    const double lp = std::log(p);
    const double qg = focal_pow(q, g);
    total += -a * qg * lp;
    if (clamped) {
      dldx[i] = 0.0;
    } else {
      const double dq = g > 0.0 ? g * focal_pow(q, g - 1.0) : 0.0;
      const double dldp = -a * (qg / p - dq * lp);
      dldx[i] = (pos ? dldp : -dldp) / static_cast<double>(n);
    }
  }
  return make_result({}, {total / static_cast<double>(n)}, {pred}, [dldx = std::move(dldx)](detail::Node& node) {
    if (double* gbuf = node.parents[0]->grad_buffer()) {
      for (std::size_t i = 0; i < dldx.size(); ++i) gbuf[i] += node.grad[0] * dldx[i];
    }
  });
}

Tensor focal_mask_loss(std::span<const Tensor> predictions, std::span<const std::uint8_t> gt, const FocalConfig& cfg) {
  if (predictions.empty()) throw ShapeError("focal_mask_loss: no predictions");
  Tensor total;
  for (const auto& p : predictions) {
    Tensor l = focal_loss(p, gt, cfg);
    total = total.defined() ? add(total, l) : l;
  }
  return total;
}

Tensor transition_bce_loss(const Tensor& probs, std::span<const int> transitions) {
  if (probs.dim() != 2 || probs.size(1) != static_cast<int>(transitions.size())) {
    throw ShapeError("transition_bce_loss: probabilities " + shape_str(probs.shape()) + " vs " +
                     std::to_string(transitions.size()) + " transitions");
  }
  const int T = probs.size(0), L = probs.size(1);
  for (int t : transitions) {
    if (t < 1 || t > T) throw DataError("transition timestamp " + std::to_string(t) + " outside [1, " + std::to_string(T) + "]");
  }
  const auto v = probs.values();
  const double norm = 1.0 / (static_cast<double>(T) * L);
  std::vector<double> dldx(v.size());
  double total = 0.0;
  for (int t = 0; t < T; ++t) {
    for (int k = 0; k < L; ++k) {
      const std::size_t i = static_cast<std::size_t>(t) * L + k;
      const bool target = transitions[k] == t + 1;
      const double s = v[i];
      const double c = std::clamp(s, kProbEpsilon, 1.0 - kProbEpsilon);
      total -= target ? std::log(c) : std::log(1.0 - c);
      const bool inside = s > kProbEpsilon && s < 1.0 - kProbEpsilon;
      dldx[i] = inside ? norm * (target ? -1.0 / c : 1.0 / (1.0 - c)) : 0.0;
    }
  }
  return make_result({}, {total * norm}, {probs}, [dldx = std::move(dldx)](detail::Node& node) {
    if (double* g = node.parents[0]->grad_buffer()) {
      for (std::size_t i = 0; i < dldx.size(); ++i) g[i] += node.grad[0] * dldx[i];
    }
  });
}

Tensor regression_loss(const Tensor& prediction, double target) {
  if (prediction.numel() != 1) throw ShapeError("regression_loss expects a scalar prediction");
  const Tensor d = add_scalar(reshape(prediction, {}), -target);
  return mul(d, d);
}

Tensor total_loss(const Tensor& l_sap, const Tensor& l_tap, const Tensor& l_reg) { return add(add(l_sap, l_tap), l_reg); }

}  // namespace fineparser
