#include <Eigen/Core>
#include <limits>

#include "fineparser/error.h"
#include "fineparser/ops.h"

namespace fineparser {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

// Geometry of a convolution from an "image" grid to a "patch" grid. For a
// forward conv the image is the input; for a transposed conv it is the output.
struct Geometry {
  int batch = 0;
  int channels = 0;  // image channels
  Dim3 image{};
  Dim3 kernel{};
  Dim3 stride{};
  Dim3 pad{};
  Dim3 grid{};  // patch grid

  int kernel_volume() const { return kernel[0] * kernel[1] * kernel[2]; }
  int image_volume() const { return image[0] * image[1] * image[2]; }
  int grid_volume() const { return grid[0] * grid[1] * grid[2]; }
};

int conv_out(int in, int k, int s, int p) { return (in + 2 * p - k) / s + 1; }

// col is [channels * K, batch * P] with P = grid volume.
void im2col(const Geometry& g, const double* image, double* col) {
  const int K = g.kernel_volume();
  const int P = g.grid_volume();
  const std::size_t cols = static_cast<std::size_t>(g.batch) * P;
  for (int c = 0; c < g.channels; ++c) {
    for (int a = 0; a < g.kernel[0]; ++a) {
      for (int b = 0; b < g.kernel[1]; ++b) {
        for (int e = 0; e < g.kernel[2]; ++e) {
          const std::size_t row = static_cast<std::size_t>(c) * K + (a * g.kernel[1] + b) * g.kernel[2] + e;
          double* dst_row = col + row * cols;
          for (int n = 0; n < g.batch; ++n) {
            const double* img = image + (static_cast<std::size_t>(n) * g.channels + c) * g.image_volume();
            double* dst = dst_row + static_cast<std::size_t>(n) * P;
            for (int ot = 0; ot < g.grid[0]; ++ot) {
              const int it = ot * g.stride[0] - g.pad[0] + a;
              for (int oh = 0; oh < g.grid[1]; ++oh) {
                const int ih = oh * g.stride[1] - g.pad[1] + b;
                double* d = dst + (ot * g.grid[1] + oh) * g.grid[2];
                if (it < 0 || it >= g.image[0] || ih < 0 || ih >= g.image[1]) {
                  for (int ow = 0; ow < g.grid[2]; ++ow) d[ow] = 0.0;
                  continue;
                }
                const double* s = img + (static_cast<std::size_t>(it) * g.image[1] + ih) * g.image[2];
                for (int ow = 0; ow < g.grid[2]; ++ow) {
                  const int iw = ow * g.stride[2] - g.pad[2] + e;
                  d[ow] = (iw >= 0 && iw < g.image[2]) ? s[iw] : 0.0;
                }
              }
            }
          }
        }
      }
    }
  }
}

// Scatter-add of col back onto the image grid (adjoint of im2col).
void col2im(const Geometry& g, const double* col, double* image) {
  const int K = g.kernel_volume();
  const int P = g.grid_volume();
  const std::size_t cols = static_cast<std::size_t>(g.batch) * P;
  for (int c = 0; c < g.channels; ++c) {
    for (int a = 0; a < g.kernel[0]; ++a) {
      for (int b = 0; b < g.kernel[1]; ++b) {
        for (int e = 0; e < g.kernel[2]; ++e) {
          const std::size_t row = static_cast<std::size_t>(c) * K + (a * g.kernel[1] + b) * g.kernel[2] + e;
          const double* src_row = col + row * cols;
          for (int n = 0; n < g.batch; ++n) {
            double* img = image + (static_cast<std::size_t>(n) * g.channels + c) * g.image_volume();
            const double* src = src_row + static_cast<std::size_t>(n) * P;
            for (int ot = 0; ot < g.grid[0]; ++ot) {
              const int it = ot * g.stride[0] - g.pad[0] + a;
              if (it < 0 || it >= g.image[0]) continue;
              for (int oh = 0; oh < g.grid[1]; ++oh) {
                const int ih = oh * g.stride[1] - g.pad[1] + b;
                if (ih < 0 || ih >= g.image[1]) continue;
                const double* s = src + (ot * g.grid[1] + oh) * g.grid[2];
                double* d = img + (static_cast<std::size_t>(it) * g.image[1] + ih) * g.image[2];
                for (int ow = 0; ow < g.grid[2]; ++ow) {
                  const int iw = ow * g.stride[2] - g.pad[2] + e;
                  if (iw >= 0 && iw < g.image[2]) d[iw] += s[ow];
                }
              }
            }
          }
        }
      }
    }
  }
}

// [N, C, P] <-> [C, N * P]
void batch_to_channel_major(const double* src, double* dst, int n, int c, int p) {
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < c; ++j) {
      const double* s = src + (static_cast<std::size_t>(i) * c + j) * p;
      double* d = dst + (static_cast<std::size_t>(j) * n + i) * p;
      std::copy(s, s + p, d);
    }
  }
}

void channel_major_to_batch(const double* src, double* dst, int n, int c, int p) {
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < c; ++j) {
      const double* s = src + (static_cast<std::size_t>(j) * n + i) * p;
      double* d = dst + (static_cast<std::size_t>(i) * c + j) * p;
      std::copy(s, s + p, d);
    }
  }
}

void require_5d(const Tensor& t, const char* what) {
  if (t.dim() != 5) throw ShapeError(std::string(what) + " must be 5-D, got " + shape_str(t.shape()));
}

}  // namespace

Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& b, Dim3 stride, Dim3 pad) {
  require_5d(x, "conv3d input");
  require_5d(w, "conv3d weight");
  const int n = x.size(0), ci = x.size(1), co = w.size(0);
  if (w.size(1) != ci) {
    throw ShapeError("conv3d: input channels " + std::to_string(ci) + " vs weight " + shape_str(w.shape()));
  }
  if (b.numel() != co) throw ShapeError("conv3d: bias size mismatch");
  Geometry g;
  g.batch = n;
  g.channels = ci;
  g.image = {x.size(2), x.size(3), x.size(4)};
  g.kernel = {w.size(2), w.size(3), w.size(4)};
  g.stride = stride;
  g.pad = pad;
  for (int i = 0; i < 3; ++i) {
    g.grid[i] = conv_out(g.image[i], g.kernel[i], stride[i], pad[i]);
    if (g.grid[i] < 1) throw ShapeError("conv3d: empty output for input " + shape_str(x.shape()));
  }
  const int K = g.kernel_volume();
  const int P = g.grid_volume();
  const int rows = ci * K;
  const int cols = n * P;

  std::vector<double> col(static_cast<std::size_t>(rows) * cols);
  im2col(g, x.values().data(), col.data());
  std::vector<double> ycm(static_cast<std::size_t>(co) * cols);
  MapMat ym(ycm.data(), co, cols);
  ym.noalias() = ConstMapMat(w.values().data(), co, rows) * ConstMapMat(col.data(), rows, cols);
  ym.colwise() += Eigen::Map<const Eigen::VectorXd>(b.values().data(), co);
  std::vector<double> out(ycm.size());
  channel_major_to_batch(ycm.data(), out.data(), n, co, P);

  Shape out_shape{n, co, g.grid[0], g.grid[1], g.grid[2]};
  return make_result(std::move(out_shape), std::move(out), {x, w, b}, [g, co, rows, cols, P](detail::Node& node) {
    auto& xn = *node.parents[0];
    auto& wn = *node.parents[1];
    auto& bn = *node.parents[2];
    std::vector<double> gcm(static_cast<std::size_t>(co) * cols);
    batch_to_channel_major(node.grad.data(), gcm.data(), g.batch, co, P);
    ConstMapMat gm(gcm.data(), co, cols);
    if (double* gb = bn.grad_buffer()) {
      for (int c = 0; c < co; ++c) {
        const double* row = gcm.data() + static_cast<std::size_t>(c) * cols;
        double acc = 0.0;
        for (int j = 0; j < cols; ++j) acc += row[j];
        gb[c] += acc;
      }
    }
    if (double* gw = wn.grad_buffer()) {
      std::vector<double> col(static_cast<std::size_t>(rows) * cols);
      im2col(g, xn.value.data(), col.data());
      MapMat(gw, co, rows).noalias() += gm * ConstMapMat(col.data(), rows, cols).transpose();
    }
    if (double* gx = xn.grad_buffer()) {
      std::vector<double> dcol(static_cast<std::size_t>(rows) * cols);
      MapMat(dcol.data(), rows, cols).noalias() = ConstMapMat(wn.value.data(), co, rows).transpose() * gm;
      col2im(g, dcol.data(), gx);
    }
  });
}

Tensor conv_transpose3d(const Tensor& x, const Tensor& w, const Tensor& b, Dim3 stride, Dim3 pad) {
  require_5d(x, "conv_transpose3d input");
  require_5d(w, "conv_transpose3d weight");
  const int n = x.size(0), ci = x.size(1), co = w.size(1);
  if (w.size(0) != ci) {
    throw ShapeError("conv_transpose3d: input channels " + std::to_string(ci) + " vs weight " + shape_str(w.shape()));
  }
  if (b.numel() != co) throw ShapeError("conv_transpose3d: bias size mismatch");
  Geometry g;
  g.batch = n;
  g.channels = co;
  g.kernel = {w.size(2), w.size(3), w.size(4)};
  g.stride = stride;
  g.pad = pad;
  g.grid = {x.size(2), x.size(3), x.size(4)};
  for (int i = 0; i < 3; ++i) {
    g.image[i] = (g.grid[i] - 1) * stride[i] - 2 * pad[i] + g.kernel[i];
    if (g.image[i] < 1) throw ShapeError("conv_transpose3d: empty output");
  }
  const int K = g.kernel_volume();
  const int P = g.grid_volume();
  const int rows = co * K;
  const int cols = n * P;

  std::vector<double> xcm(static_cast<std::size_t>(ci) * cols);
  batch_to_channel_major(x.values().data(), xcm.data(), n, ci, P);
  std::vector<double> col(static_cast<std::size_t>(rows) * cols);
  MapMat(col.data(), rows, cols).noalias() =
      ConstMapMat(w.values().data(), ci, rows).transpose() * ConstMapMat(xcm.data(), ci, cols);
  const int vol = g.image_volume();
  std::vector<double> out(static_cast<std::size_t>(n) * co * vol, 0.0);
  col2im(g, col.data(), out.data());
  const auto bv = b.values();
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < co; ++c) {
      double* d = out.data() + (static_cast<std::size_t>(i) * co + c) * vol;
      for (int v = 0; v < vol; ++v) d[v] += bv[c];
    }
  }

  Shape out_shape{n, co, g.image[0], g.image[1], g.image[2]};
  return make_result(std::move(out_shape), std::move(out), {x, w, b}, [g, ci, co, rows, cols, P, vol](detail::Node& node) {
    auto& xn = *node.parents[0];
    auto& wn = *node.parents[1];
    auto& bn = *node.parents[2];
    if (double* gb = bn.grad_buffer()) {
      for (int i = 0; i < g.batch; ++i) {
        for (int c = 0; c < co; ++c) {
          const double* s = node.grad.data() + (static_cast<std::size_t>(i) * co + c) * vol;
          double acc = 0.0;
          for (int v = 0; v < vol; ++v) acc += s[v];
          gb[c] += acc;
        }
      }
    }
    std::vector<double> dcol(static_cast<std::size_t>(rows) * cols);
    im2col(g, node.grad.data(), dcol.data());
    ConstMapMat dc(dcol.data(), rows, cols);
    if (double* gw = wn.grad_buffer()) {
      std::vector<double> xcm(static_cast<std::size_t>(ci) * cols);
      batch_to_channel_major(xn.value.data(), xcm.data(), g.batch, ci, P);
      MapMat(gw, ci, rows).noalias() += ConstMapMat(xcm.data(), ci, cols) * dc.transpose();
    }
    if (double* gx = xn.grad_buffer()) {
      std::vector<double> dx(static_cast<std::size_t>(ci) * cols);
      MapMat(dx.data(), ci, cols).noalias() = ConstMapMat(wn.value.data(), ci, rows) * dc;
      std::vector<double> dxb(dx.size());
      channel_major_to_batch(dx.data(), dxb.data(), g.batch, ci, P);
      for (std::size_t i = 0; i < dxb.size(); ++i) gx[i] += dxb[i];
    }
  });
}

Tensor max_pool3d(const Tensor& x, Dim3 kernel) {
  require_5d(x, "max_pool3d input");
  const int n = x.size(0), c = x.size(1);
  const Dim3 in{x.size(2), x.size(3), x.size(4)};
  Dim3 out_dims{};
  for (int i = 0; i < 3; ++i) {
    if (kernel[i] < 1 || in[i] % kernel[i] != 0) {
      throw ShapeError("max_pool3d: kernel does not divide input " + shape_str(x.shape()));
    }
    out_dims[i] = in[i] / kernel[i];
  }
  const std::size_t planes = static_cast<std::size_t>(n) * c;
  const int in_vol = in[0] * in[1] * in[2];
  const int out_vol = out_dims[0] * out_dims[1] * out_dims[2];
  std::vector<double> out(planes * out_vol);
  auto argmax = std::make_shared<std::vector<int>>(planes * out_vol);
  const auto xv = x.values();
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = xv.data() + p * in_vol;
    for (int ot = 0; ot < out_dims[0]; ++ot) {
      for (int oh = 0; oh < out_dims[1]; ++oh) {
        for (int ow = 0; ow < out_dims[2]; ++ow) {
          double best = -std::numeric_limits<double>::infinity();
          int best_idx = 0;
          for (int a = 0; a < kernel[0]; ++a) {
            for (int b2 = 0; b2 < kernel[1]; ++b2) {
              for (int e = 0; e < kernel[2]; ++e) {
                const int idx = ((ot * kernel[0] + a) * in[1] + oh * kernel[1] + b2) * in[2] + ow * kernel[2] + e;
                if (src[idx] > best) {
                  best = src[idx];
                  best_idx = idx;
                }
              }
            }
          }
          const std::size_t o = p * out_vol + (ot * out_dims[1] + oh) * out_dims[2] + ow;
          out[o] = best;
          (*argmax)[o] = best_idx;
        }
      }
    }
  }
  Shape out_shape{n, c, out_dims[0], out_dims[1], out_dims[2]};
  return make_result(std::move(out_shape), std::move(out), {x}, [argmax, planes, in_vol, out_vol](detail::Node& node) {
    if (double* g = node.parents[0]->grad_buffer()) {
      for (std::size_t p = 0; p < planes; ++p) {
        for (int o = 0; o < out_vol; ++o) {
          g[p * in_vol + (*argmax)[p * out_vol + o]] += node.grad[p * out_vol + o];
        }
      }
    }
  });
}

}  // namespace fineparser
