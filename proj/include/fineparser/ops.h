#pragma once

// Differentiable tensor operations. Layout is row-major; video tensors are
// [N, C, T, H, W].

#include <array>
#include <span>
#include <vector>

#include "fineparser/tensor.h"

namespace fineparser {

using Dim3 = std::array<int, 3>;  // (t, h, w)

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);

Tensor reshape(const Tensor& a, Shape shape);
Tensor permute(const Tensor& a, const std::vector<int>& order);
Tensor slice(const Tensor& a, int dim, int begin, int end);
Tensor concat(std::span<const Tensor> parts, int dim);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// [R, C] -> [1, C]
Tensor mean_rows(const Tensor& a);
// [..., K] -> [...]
Tensor mean_last(const Tensor& a);

// 2-D products.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose2d(const Tensor& a);
// x [R, in], w [out, in], b [out] -> [R, out]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor softmax_rows(const Tensor& a);

// x [N, Ci, T, H, W], w [Co, Ci, kt, kh, kw], b [Co]
Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& b, Dim3 stride, Dim3 pad);
// x [N, Ci, T, H, W], w [Ci, Co, kt, kh, kw], b [Co]
Tensor conv_transpose3d(const Tensor& x, const Tensor& w, const Tensor& b, Dim3 stride, Dim3 pad);
// Non-overlapping max pooling (window = stride = kernel). Dims must divide.
Tensor max_pool3d(const Tensor& x, Dim3 kernel);

// Sparse linear map along the leading axis: out[o, :] = sum_j w_j * in[i_j, :].
// Used for snippet stitching and temporal interpolation.
struct TimeMap {
  struct Entry {
    int out;
    int in;
    double weight;
  };
  int in_len = 0;
  int out_len = 0;
  std::vector<Entry> entries;
};

enum class Align { corners, half_pixel };

// Linear interpolation from in_len to out_len samples.
TimeMap interpolation_map(int in_len, int out_len, Align align);
// Block-diagonal repetition of `block` for `count` consecutive blocks.
TimeMap repeat_map(const TimeMap& block, int count);

// x [in_len, ...] -> [out_len, ...]
Tensor apply_time_map(const TimeMap& map, const Tensor& x);

}  // namespace fineparser
