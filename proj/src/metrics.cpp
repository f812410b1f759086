#include "fineparser/metrics.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fineparser/error.h"

namespace fineparser {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

void require_same(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw ShapeError(std::string(what) + ": length mismatch " + std::to_string(a) + " vs " + std::to_string(b));
}

double pearson(std::span<const double> a, std::span<const double> b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

// SSIM-style agreement between a region of the prediction and ground truth.
double region_ssim(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  const double denom = n - 1.0 + kEps;
  sxx /= denom;
  syy /= denom;
  sxy /= denom;
  const double a = 4.0 * mx * my * sxy;
  const double b = (mx * mx + my * my) * (sxx + syy);
  if (a != 0.0) return a / (b + kEps);
  return b == 0.0 ? 1.0 : 0.0;
}

double object_score(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  const double n = static_cast<double>(values.size());
  const double m = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double var = 0.0;
  for (double v : values) var += (v - m) * (v - m);
  const double sd = values.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
  return 2.0 * m / (m * m + 1.0 + sd + kEps);
}

}  // namespace

void MetricConfig::validate() const {
  if (!(beta2 > 0.0)) throw ConfigError("metrics.beta2 must be > 0");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("metrics.alpha must be in [0, 1]");
  if (!(mask_threshold > 0.0 && mask_threshold < 1.0)) throw ConfigError("metrics.mask_threshold must be in (0, 1)");
  for (double d : aiou_thresholds) {
    if (!(d >= 0.0 && d <= 1.0)) throw ConfigError("metrics.aiou_thresholds must lie in [0, 1]");
  }
  if (y_min && y_max && !(*y_max > *y_min)) throw ConfigError("metrics.y_max must exceed y_min");
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

std::optional<double> spearman_rho(std::span<const double> preds, std::span<const double> gts) {
  require_same(preds.size(), gts.size(), "spearman_rho");
  if (preds.size() < 2) return std::nullopt;
  const auto rp = average_ranks(preds), rg = average_ranks(gts);
  const auto constant = [](const std::vector<double>& r) {
    return std::all_of(r.begin(), r.end(), [&](double v) { return v == r.front(); });
  };
  if (constant(rp) || constant(rg)) return std::nullopt;
  return std::clamp(pearson(rp, rg), -1.0, 1.0);
}

double relative_l2(std::span<const double> preds, std::span<const double> gts, double y_min, double y_max) {
  require_same(preds.size(), gts.size(), "relative_l2");
  if (!(y_max > y_min)) throw ConfigError("relative_l2: y_max must exceed y_min");
  if (preds.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double e = (preds[i] - gts[i]) / (y_max - y_min);
    total += e * e;
  }
  return 100.0 * total / static_cast<double>(preds.size());
}

double transition_iou(const TransitionSet& pred, const TransitionSet& gt) {
  if (pred.num_steps() != gt.num_steps() || pred.num_frames() != gt.num_frames()) {
    throw ShapeError("transition_iou: transition sets differ in shape");
  }
  const auto a = pred.intervals(), b = gt.intervals();
  double total = 0.0;
  for (std::size_t l = 0; l < a.size(); ++l) {
    const int inter = std::max(0, std::min(a[l].second, b[l].second) - std::max(a[l].first, b[l].first));
    const int uni = (a[l].second - a[l].first) + (b[l].second - b[l].first) - inter;
    total += static_cast<double>(inter) / uni;
  }
  return total / static_cast<double>(a.size());
}

double aiou_at(std::span<const TransitionSet> preds, std::span<const TransitionSet> gts, double d) {
  require_same(preds.size(), gts.size(), "aiou_at");
  if (preds.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hits += transition_iou(preds[i], gts[i]) >= d ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

double mask_mae(std::span<const double> pred, std::span<const std::uint8_t> gt) {
  require_same(pred.size(), gt.size(), "mask_mae");
  if (pred.empty()) throw ShapeError("mask_mae: empty mask");
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) total += std::abs(pred[i] - static_cast<double>(gt[i]));
  return total / static_cast<double>(pred.size());
}

double f_measure(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt, double beta2) {
  require_same(pred.size(), gt.size(), "f_measure");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] && gt[i]) ++tp;
    else if (pred[i]) ++fp;
    else if (gt[i]) ++fn;
  }
  if (tp + fp + fn == 0) return 1.0;
  if (tp == 0) return 0.0;
  const double p = static_cast<double>(tp) / static_cast<double>(tp + fp);
  const double r = static_cast<double>(tp) / static_cast<double>(tp + fn);
  return (1.0 + beta2) * p * r / (beta2 * p + r);
}

double s_object(std::span<const double> pred, std::span<const std::uint8_t> gt) {
  require_same(pred.size(), gt.size(), "s_object");
  std::vector<double> fg, bg;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (gt[i]) fg.push_back(pred[i]);
    else bg.push_back(1.0 - pred[i]);
  }
  const double u = static_cast<double>(fg.size()) / static_cast<double>(pred.size());
  return u * object_score(fg) + (1.0 - u) * object_score(bg);
}

double s_region(std::span<const double> pred, std::span<const std::uint8_t> gt, int height, int width) {
  require_same(pred.size(), gt.size(), "s_region");
  require_same(pred.size(), static_cast<std::size_t>(height) * width, "s_region");
  double total = 0.0, sx = 0.0, sy = 0.0;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (gt[static_cast<std::size_t>(y) * width + x]) {
        total += 1.0;
        sx += x + 1;
        sy += y + 1;
      }
    }
  }
  // Split point: 1-based rounded centroid, or the image center when empty.
  const int cx = total > 0 ? static_cast<int>(std::round(sx / total)) : static_cast<int>(std::round(width / 2.0));
  const int cy = total > 0 ? static_cast<int>(std::round(sy / total)) : static_cast<int>(std::round(height / 2.0));
  const double area = static_cast<double>(width) * height;
  const int xs[3] = {0, cx, width}, ys[3] = {0, cy, height};
  double q = 0.0, w_sum = 0.0;
  for (int qy = 0; qy < 2; ++qy) {
    for (int qx = 0; qx < 2; ++qx) {
      const int w = xs[qx + 1] - xs[qx], h = ys[qy + 1] - ys[qy];
      const double weight = (qx == 1 && qy == 1) ? 1.0 - w_sum : static_cast<double>(w) * h / area;
      w_sum += weight;
      if (w <= 0 || h <= 0) continue;
      std::vector<double> a, b;
      for (int y = ys[qy]; y < ys[qy + 1]; ++y) {
        for (int x = xs[qx]; x < xs[qx + 1]; ++x) {
          const std::size_t i = static_cast<std::size_t>(y) * width + x;
          a.push_back(pred[i]);
          b.push_back(gt[i]);
        }
      }
      q += weight * region_ssim(a, b);
    }
  }
  return q;
}

double s_measure(std::span<const double> pred, std::span<const std::uint8_t> gt, int height, int width, double alpha) {
  require_same(pred.size(), gt.size(), "s_measure");
  if (pred.empty()) throw ShapeError("s_measure: empty mask");
  const double n = static_cast<double>(pred.size());
  const double fg = static_cast<double>(std::count_if(gt.begin(), gt.end(), [](std::uint8_t v) { return v != 0; }));
  const double mean_pred = std::accumulate(pred.begin(), pred.end(), 0.0) / n;
  double q = 0.0;
  if (fg == 0.0) {
    q = 1.0 - mean_pred;
  } else if (fg == n) {
    q = mean_pred;
  } else {
    q = alpha * s_object(pred, gt) + (1.0 - alpha) * s_region(pred, gt, height, width);
  }
  return std::clamp(q, 0.0, 1.0);
}

}  // namespace fineparser
