#include "fineparser/ops.h"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "fineparser/error.h"

namespace fineparser {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void require_dim(const Tensor& a, int d, const char* op) {
  if (a.dim() != d) {
    throw ShapeError(std::string(op) + ": expected " + std::to_string(d) + "-D tensor, got " + shape_str(a.shape()));
  }
}

template <class F>
Tensor unary(const Tensor& a, F&& fwd, std::function<void(detail::Node&)> bwd) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (double& v : out) v = fwd(v);
  return make_result(a.shape(), std::move(out), {a}, std::move(bwd));
}

std::vector<int> strides_of(const Shape& s) {
  std::vector<int> st(s.size(), 1);
  for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i) st[i] = st[i + 1] * s[i + 1];
  return st;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.values().begin(), a.values().end());
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& n) {
    for (auto& p : n.parents) {
      if (double* g = p->grad_buffer()) {
        for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i];
      }
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.values().begin(), a.values().end());
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& n) {
    if (double* g = n.parents[0]->grad_buffer()) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i];
    }
    if (double* g = n.parents[1]->grad_buffer()) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] -= n.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.values().begin(), a.values().end());
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& n) {
    const auto& av = n.parents[0]->value;
    const auto& bv = n.parents[1]->value;
    if (double* g = n.parents[0]->grad_buffer()) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i] * bv[i];
    }
    if (double* g = n.parents[1]->grad_buffer()) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i] * av[i];
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  return unary(a, [s](double v) { return v * s; }, [s](detail::Node& n) {
    if (double* g = n.parents[0]->grad_buffer()) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i] * s;
    }
  });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary(a, [s](double v) { return v + s; }, [](detail::Node& n) {
    if (double* g = n.parents[0]->grad_buffer()) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i];
    }
  });
}

Tensor relu(const Tensor& a) {
  return unary(a, [](double v) { return v < 0.0 ? 0.0 : v; }, [](detail::Node& n) {
    if (double* g = n.parents[0]->grad_buffer()) {
      const auto& x = n.parents[0]->value;
      for (std::size_t i = 0; i < n.grad.size(); ++i) {
        if (x[i] > 0.0) g[i] += n.grad[i];
      }
    }
  });
}

Tensor sigmoid(const Tensor& a) {
  return unary(a, [](double v) { return 1.0 / (1.0 + std::exp(-v)); }, [](detail::Node& n) {
    if (double* g = n.parents[0]->grad_buffer()) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) {
        const double s = n.value[i];
        g[i] += n.grad[i] * s * (1.0 - s);
      }
    }
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape " + shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  std::vector<double> out(a.values().begin(), a.values().end());
  return make_result(std::move(shape), std::move(out), {a}, [](detail::Node& n) {
    if (double* g = n.parents[0]->grad_buffer()) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i];
    }
  });
}

Tensor permute(const Tensor& a, const std::vector<int>& order) {
  const int d = a.dim();
  if (static_cast<int>(order.size()) != d) throw ShapeError("permute: order rank mismatch");
  std::vector<bool> used(d, false);
  for (int o : order) {
    if (o < 0 || o >= d || used[o]) throw ShapeError("permute: invalid order");
    used[o] = true;
  }
  const Shape& in_shape = a.shape();
  Shape out_shape(d);
  for (int i = 0; i < d; ++i) out_shape[i] = in_shape[order[i]];
  const auto in_strides = strides_of(in_shape);
  // src_index[k] = flat input index of flat output element k
  const auto total = static_cast<std::size_t>(a.numel());
  auto src = std::make_shared<std::vector<int>>(total);
  std::vector<int> idx(d, 0);
  for (std::size_t k = 0; k < total; ++k) {
    int off = 0;
    for (int i = 0; i < d; ++i) off += idx[i] * in_strides[order[i]];
    (*src)[k] = off;
    for (int i = d - 1; i >= 0; --i) {
      if (++idx[i] < out_shape[i]) break;
      idx[i] = 0;
    }
  }
  std::vector<double> out(total);
  const auto av = a.values();
  for (std::size_t k = 0; k < total; ++k) out[k] = av[(*src)[k]];
  return make_result(std::move(out_shape), std::move(out), {a}, [src](detail::Node& n) {
    if (double* g = n.parents[0]->grad_buffer()) {
      for (std::size_t k = 0; k < n.grad.size(); ++k) g[(*src)[k]] += n.grad[k];
    }
  });
}

Tensor slice(const Tensor& a, int dim, int begin, int end) {
  const int d = a.dim();
  if (dim < 0) dim += d;
  if (dim < 0 || dim >= d) throw ShapeError("slice: bad dim");
  const Shape& s = a.shape();
  if (begin < 0 || end > s[dim] || begin >= end) {
    throw ShapeError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) + ") invalid for " +
                     shape_str(s) + " dim " + std::to_string(dim));
  }
  int outer = 1, inner = 1;
  for (int i = 0; i < dim; ++i) outer *= s[i];
  for (int i = dim + 1; i < d; ++i) inner *= s[i];
  const int len = end - begin;
  Shape out_shape = s;
  out_shape[dim] = len;
  std::vector<double> out(static_cast<std::size_t>(outer) * len * inner);
  const auto av = a.values();
  for (int o = 0; o < outer; ++o) {
    const double* srcp = av.data() + (static_cast<std::size_t>(o) * s[dim] + begin) * inner;
    std::copy(srcp, srcp + static_cast<std::size_t>(len) * inner, out.data() + static_cast<std::size_t>(o) * len * inner);
  }
  const int full = s[dim];
  return make_result(std::move(out_shape), std::move(out), {a}, [=](detail::Node& n) {
    if (double* g = n.parents[0]->grad_buffer()) {
      for (int o = 0; o < outer; ++o) {
        double* dst = g + (static_cast<std::size_t>(o) * full + begin) * inner;
        const double* srcg = n.grad.data() + static_cast<std::size_t>(o) * len * inner;
        for (std::size_t i = 0; i < static_cast<std::size_t>(len) * inner; ++i) dst[i] += srcg[i];
      }
    }
  });
}

Tensor concat(std::span<const Tensor> parts, int dim) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const int d = parts[0].dim();
  if (dim < 0) dim += d;
  Shape out_shape = parts[0].shape();
  std::vector<int> lens;
  int total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (static_cast<int>(s.size()) != d) throw ShapeError("concat: rank mismatch");
    for (int i = 0; i < d; ++i) {
      if (i != dim && s[i] != out_shape[i]) throw ShapeError("concat: shape mismatch " + shape_str(s));
    }
    lens.push_back(s[dim]);
    total += s[dim];
  }
  out_shape[dim] = total;
  int outer = 1, inner = 1;
  for (int i = 0; i < dim; ++i) outer *= out_shape[i];
  for (int i = dim + 1; i < d; ++i) inner *= out_shape[i];
  std::vector<double> out(static_cast<std::size_t>(outer) * total * inner);
  int offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto v = parts[p].values();
    for (int o = 0; o < outer; ++o) {
      std::copy(v.data() + static_cast<std::size_t>(o) * lens[p] * inner,
                v.data() + static_cast<std::size_t>(o + 1) * lens[p] * inner,
                out.data() + (static_cast<std::size_t>(o) * total + offset) * inner);
    }
    offset += lens[p];
  }
  std::vector<Tensor> parents(parts.begin(), parts.end());
  return make_result(std::move(out_shape), std::move(out), parents, [=](detail::Node& n) {
    int off = 0;
    for (std::size_t p = 0; p < n.parents.size(); ++p) {
      if (double* g = n.parents[p]->grad_buffer()) {
        for (int o = 0; o < outer; ++o) {
          const double* srcg = n.grad.data() + (static_cast<std::size_t>(o) * total + off) * inner;
          double* dst = g + static_cast<std::size_t>(o) * lens[p] * inner;
          for (std::size_t i = 0; i < static_cast<std::size_t>(lens[p]) * inner; ++i) dst[i] += srcg[i];
        }
      }
      off += lens[p];
    }
  });
}

Tensor sum(const Tensor& a) {
  const auto v = a.values();
  const double s = std::accumulate(v.begin(), v.end(), 0.0);
  return make_result({}, {s}, {a}, [](detail::Node& n) {
    if (double* g = n.parents[0]->grad_buffer()) {
      for (std::size_t i = 0; i < n.parents[0]->value.size(); ++i) g[i] += n.grad[0];
    }
  });
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor mean_rows(const Tensor& a) {
  require_dim(a, 2, "mean_rows");
  const int r = a.size(0), c = a.size(1);
  if (r == 0) throw ShapeError("mean_rows: no rows");
  std::vector<double> out(c, 0.0);
  const auto v = a.values();
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < c; ++j) out[j] += v[static_cast<std::size_t>(i) * c + j];
  }
  for (double& x : out) x /= r;
  return make_result({1, c}, std::move(out), {a}, [r, c](detail::Node& n) {
    if (double* g = n.parents[0]->grad_buffer()) {
      for (int i = 0; i < r; ++i) {
        for (int j = 0; j < c; ++j) g[static_cast<std::size_t>(i) * c + j] += n.grad[j] / r;
      }
    }
  });
}

Tensor mean_last(const Tensor& a) {
  if (a.dim() < 1) throw ShapeError("mean_last: scalar input");
  const int k = a.size(-1);
  if (k == 0) throw ShapeError("mean_last: empty last dim");
  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  const auto rows = static_cast<std::size_t>(a.numel() / k);
  std::vector<double> out(rows, 0.0);
  const auto v = a.values();
  for (std::size_t i = 0; i < rows; ++i) {
    double s = 0.0;
    for (int j = 0; j < k; ++j) s += v[i * k + j];
    out[i] = s / k;
  }
  return make_result(std::move(out_shape), std::move(out), {a}, [rows, k](detail::Node& n) {
    if (double* g = n.parents[0]->grad_buffer()) {
      for (std::size_t i = 0; i < rows; ++i) {
        const double gi = n.grad[i] / k;
        for (int j = 0; j < k; ++j) g[i * k + j] += gi;
      }
    }
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_dim(a, 2, "matmul");
  require_dim(b, 2, "matmul");
  const int m = a.size(0), k = a.size(1), n = b.size(1);
  if (b.size(0) != k) throw ShapeError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  std::vector<double> out(static_cast<std::size_t>(m) * n);
  MapMat(out.data(), m, n).noalias() = ConstMapMat(a.values().data(), m, k) * ConstMapMat(b.values().data(), k, n);
  return make_result({m, n}, std::move(out), {a, b}, [m, k, n](detail::Node& node) {
    ConstMapMat g(node.grad.data(), m, n);
    if (double* ga = node.parents[0]->grad_buffer()) {
      MapMat(ga, m, k).noalias() += g * ConstMapMat(node.parents[1]->value.data(), k, n).transpose();
    }
    if (double* gb = node.parents[1]->grad_buffer()) {
      MapMat(gb, k, n).noalias() += ConstMapMat(node.parents[0]->value.data(), m, k).transpose() * g;
    }
  });
}

Tensor transpose2d(const Tensor& a) {
  require_dim(a, 2, "transpose2d");
  return permute(a, {1, 0});
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_dim(x, 2, "linear");
  require_dim(w, 2, "linear");
  const int r = x.size(0), in = x.size(1), out_dim = w.size(0);
  if (w.size(1) != in || b.numel() != out_dim) {
    throw ShapeError("linear: x " + shape_str(x.shape()) + " w " + shape_str(w.shape()) + " b " + shape_str(b.shape()));
  }
  std::vector<double> out(static_cast<std::size_t>(r) * out_dim);
  MapMat y(out.data(), r, out_dim);
  y.noalias() = ConstMapMat(x.values().data(), r, in) * ConstMapMat(w.values().data(), out_dim, in).transpose();
  y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.values().data(), out_dim);
  return make_result({r, out_dim}, std::move(out), {x, w, b}, [r, in, out_dim](detail::Node& n) {
    ConstMapMat g(n.grad.data(), r, out_dim);
    if (double* gx = n.parents[0]->grad_buffer()) {
      MapMat(gx, r, in).noalias() += g * ConstMapMat(n.parents[1]->value.data(), out_dim, in);
    }
    if (double* gw = n.parents[1]->grad_buffer()) {
      MapMat(gw, out_dim, in).noalias() += g.transpose() * ConstMapMat(n.parents[0]->value.data(), r, in);
    }
    if (double* gb = n.parents[2]->grad_buffer()) {
      for (int i = 0; i < r; ++i) {
        for (int o = 0; o < out_dim; ++o) gb[o] += n.grad[static_cast<std::size_t>(i) * out_dim + o];
      }
    }
  });
}

Tensor softmax_rows(const Tensor& a) {
  require_dim(a, 2, "softmax_rows");
  const int r = a.size(0), c = a.size(1);
  std::vector<double> out(a.values().begin(), a.values().end());
  for (int i = 0; i < r; ++i) {
    double* row = out.data() + static_cast<std::size_t>(i) * c;
    const double mx = *std::max_element(row, row + c);
    double s = 0.0;
    for (int j = 0; j < c; ++j) {
      row[j] = std::exp(row[j] - mx);
      s += row[j];
    }
    for (int j = 0; j < c; ++j) row[j] /= s;
  }
  return make_result({r, c}, std::move(out), {a}, [r, c](detail::Node& n) {
    if (double* g = n.parents[0]->grad_buffer()) {
      for (int i = 0; i < r; ++i) {
        const double* y = n.value.data() + static_cast<std::size_t>(i) * c;
        const double* gy = n.grad.data() + static_cast<std::size_t>(i) * c;
        double dot = 0.0;
        for (int j = 0; j < c; ++j) dot += y[j] * gy[j];
        for (int j = 0; j < c; ++j) g[static_cast<std::size_t>(i) * c + j] += y[j] * (gy[j] - dot);
      }
    }
  });
}

TimeMap interpolation_map(int in_len, int out_len, Align align) {
  if (in_len < 1 || out_len < 1) throw ShapeError("interpolation_map: lengths must be >= 1");
  TimeMap map;
  map.in_len = in_len;
  map.out_len = out_len;
  for (int o = 0; o < out_len; ++o) {
    double pos = 0.0;
    if (align == Align::corners) {
      pos = out_len == 1 ? 0.0 : static_cast<double>(o) * (in_len - 1) / (out_len - 1);
    } else {
      pos = (o + 0.5) * static_cast<double>(in_len) / out_len - 0.5;
    }
    pos = std::clamp(pos, 0.0, static_cast<double>(in_len - 1));
    const int lo = static_cast<int>(std::floor(pos));
    const int hi = std::min(lo + 1, in_len - 1);
    const double frac = pos - lo;
    if (hi == lo || frac == 0.0) {
      map.entries.push_back({o, lo, 1.0});
    } else {
      map.entries.push_back({o, lo, 1.0 - frac});
      map.entries.push_back({o, hi, frac});
    }
  }
  return map;
}

TimeMap repeat_map(const TimeMap& block, int count) {
  TimeMap map;
  map.in_len = block.in_len * count;
  map.out_len = block.out_len * count;
  map.entries.reserve(block.entries.size() * count);
  for (int c = 0; c < count; ++c) {
    for (const auto& e : block.entries) {
      map.entries.push_back({e.out + c * block.out_len, e.in + c * block.in_len, e.weight});
    }
  }
  return map;
}

Tensor apply_time_map(const TimeMap& map, const Tensor& x) {
  if (x.dim() < 1 || x.size(0) != map.in_len) {
    throw ShapeError("apply_time_map: expected leading dim " + std::to_string(map.in_len) + ", got " +
                     shape_str(x.shape()));
  }
  const auto inner = static_cast<std::size_t>(x.numel() / map.in_len);
  Shape out_shape = x.shape();
  out_shape[0] = map.out_len;
  std::vector<double> out(static_cast<std::size_t>(map.out_len) * inner, 0.0);
  const auto xv = x.values();
  for (const auto& e : map.entries) {
    const double* src = xv.data() + static_cast<std::size_t>(e.in) * inner;
    double* dst = out.data() + static_cast<std::size_t>(e.out) * inner;
    for (std::size_t i = 0; i < inner; ++i) dst[i] += e.weight * src[i];
  }
  auto entries = std::make_shared<std::vector<TimeMap::Entry>>(map.entries);
  return make_result(std::move(out_shape), std::move(out), {x}, [entries, inner](detail::Node& n) {
    if (double* g = n.parents[0]->grad_buffer()) {
      for (const auto& e : *entries) {
        const double* src = n.grad.data() + static_cast<std::size_t>(e.out) * inner;
        double* dst = g + static_cast<std::size_t>(e.in) * inner;
        for (std::size_t i = 0; i < inner; ++i) dst[i] += e.weight * src[i];
      }
    }
  });
}

}  // namespace fineparser
