#include <gtest/gtest.h>

#include "fineparser/error.h"
#include "fineparser/ops.h"
#include "gradcheck.h"

namespace fineparser {
namespace {

using testing::gradient_error;
using testing::random_tensor;

// Weighted sum so every output element gets a distinct upstream gradient.
Tensor probe(const Tensor& y, const Tensor& weights) { return sum(mul(y, weights)); }

TEST(Ops, ElementwiseGradients) {
  Rng rng(1);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({3, 4}, rng);
  Tensor w = random_tensor({3, 4}, rng, false);
  auto loss = [&] {
    Tensor y = add(mul(sigmoid(a), relu(b)), sub(scale(a, 0.3), add_scalar(b, 2.0)));
    return probe(y, w);
  };
  EXPECT_LT(gradient_error(loss, {a, b}), 1e-6);
}

TEST(Ops, StructuralGradients) {
  Rng rng(2);
  Tensor a = random_tensor({2, 3, 4}, rng);
  Tensor b = random_tensor({2, 2, 4}, rng);
  Tensor w = random_tensor({4, 5, 2}, rng, false);
  auto loss = [&] {
    Tensor c = concat(std::vector<Tensor>{a, b}, 1);           // [2,5,4]
    Tensor p = permute(c, {2, 1, 0});                          // [4,5,2]
    Tensor s = slice(reshape(p, {4, 10}), 1, 2, 9);            // [4,7]
    Tensor m = mean_rows(s);                                   // [1,7]
    return add(probe(p, w), add(sum(m), mean(mean_last(c))));
  };
  EXPECT_LT(gradient_error(loss, {a, b}), 1e-6);
}

TEST(Ops, MatrixGradients) {
  Rng rng(3);
  Tensor x = random_tensor({5, 4}, rng);
  Tensor w = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({3}, rng);
  Tensor k = random_tensor({3, 6}, rng);
  Tensor pw = random_tensor({5, 6}, rng, false);
  auto loss = [&] {
    Tensor h = linear(x, w, b);
    Tensor s = softmax_rows(matmul(h, k));
    return probe(s, pw);
  };
  EXPECT_LT(gradient_error(loss, {x, w, b, k}), 1e-6);
}

TEST(Ops, SoftmaxRowsSumToOne) {
  Rng rng(4);
  Tensor s = softmax_rows(random_tensor({4, 7}, rng, false, -20, 20));
  for (int i = 0; i < 4; ++i) {
    double total = 0.0;
    for (int j = 0; j < 7; ++j) total += s.values()[i * 7 + j];
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(Ops, Conv3dMatchesDirectSum) {
  Rng rng(5);
  Tensor x = random_tensor({2, 2, 3, 5, 4}, rng, false);
  Tensor w = random_tensor({3, 2, 3, 3, 2}, rng, false);
  Tensor b = random_tensor({3}, rng, false);
  const Dim3 stride{1, 2, 1}, pad{1, 1, 0};
  Tensor y = conv3d(x, w, b, stride, pad);
  ASSERT_EQ(y.shape(), (Shape{2, 3, 3, 3, 3}));
  auto at = [&](const Tensor& t, std::initializer_list<int> idx) {
    const Shape& s = t.shape();
    int off = 0, k = 0;
    for (int i : idx) off = off * s[k++] + i;
    return t.values()[off];
  };
  for (int n = 0; n < 2; ++n)
    for (int co = 0; co < 3; ++co)
      for (int t = 0; t < 3; ++t)
        for (int h = 0; h < 3; ++h)
          for (int ww = 0; ww < 3; ++ww) {
            double acc = b.values()[co];
            for (int ci = 0; ci < 2; ++ci)
              for (int a = 0; a < 3; ++a)
                for (int c = 0; c < 3; ++c)
                  for (int e = 0; e < 2; ++e) {
                    const int it = t - 1 + a, ih = h * 2 - 1 + c, iw = ww + e;
                    if (it < 0 || it >= 3 || ih < 0 || ih >= 5 || iw < 0 || iw >= 4) continue;
                    acc += at(w, {co, ci, a, c, e}) * at(x, {n, ci, it, ih, iw});
                  }
            EXPECT_NEAR(at(y, {n, co, t, h, ww}), acc, 1e-12);
          }
}

TEST(Ops, ConvGradients) {
  Rng rng(6);
  Tensor x = random_tensor({2, 2, 4, 4, 4}, rng);
  Tensor w = random_tensor({3, 2, 3, 3, 3}, rng);
  Tensor b = random_tensor({3}, rng);
  Tensor tw = random_tensor({3, 2, 2, 2, 2}, rng);
  Tensor tb = random_tensor({2}, rng);
  Tensor pw = random_tensor({2, 2, 4, 4, 4}, rng, false);
  auto loss = [&] {
    Tensor y = conv3d(x, w, b, {2, 2, 2}, {1, 1, 1});  // [2,3,2,2,2]
    Tensor u = conv_transpose3d(y, tw, tb, {2, 2, 2}, {0, 0, 0});  // [2,2,4,4,4]
    return probe(u, pw);
  };
  EXPECT_LT(gradient_error(loss, {x, w, b, tw, tb}), 1e-6);
}

TEST(Ops, OverlappingTransposedConvGradients) {
  Rng rng(7);
  Tensor x = random_tensor({1, 2, 3, 3, 2}, rng);
  Tensor w = random_tensor({2, 1, 3, 3, 3}, rng);
  Tensor b = random_tensor({1}, rng);
  auto loss = [&] {
    Tensor u = conv_transpose3d(x, w, b, {2, 1, 2}, {1, 1, 0});
    return sum(mul(u, u));
  };
  EXPECT_LT(gradient_error(loss, {x, w, b}), 1e-6);
}

TEST(Ops, MaxPoolGradients) {
  Rng rng(8);
  Tensor x = random_tensor({2, 2, 4, 4, 2}, rng);
  Tensor pw = random_tensor({2, 2, 2, 2, 1}, rng, false);
  auto loss = [&] { return probe(max_pool3d(x, {2, 2, 2}), pw); };
  EXPECT_LT(gradient_error(loss, {x}), 1e-6);
  EXPECT_THROW(max_pool3d(x, {3, 1, 1}), ShapeError);
}

TEST(Ops, InterpolationMaps) {
  Tensor x({2, 1}, {0.0, 1.0});
  Tensor y = apply_time_map(interpolation_map(2, 3, Align::corners), x);
  ASSERT_EQ(y.shape(), (Shape{3, 1}));
  EXPECT_DOUBLE_EQ(y.values()[0], 0.0);
  EXPECT_DOUBLE_EQ(y.values()[1], 0.5);
  EXPECT_DOUBLE_EQ(y.values()[2], 1.0);

  Rng rng(9);
  Tensor z = random_tensor({4, 3}, rng);
  Tensor pw = random_tensor({12, 3}, rng, false);
  const TimeMap map = repeat_map(interpolation_map(2, 6, Align::half_pixel), 2);
  auto loss = [&] { return probe(apply_time_map(map, z), pw); };
  EXPECT_LT(gradient_error(loss, {z}), 1e-6);
}

TEST(Ops, GradientsAccumulateAcrossBackwardCalls) {
  Tensor a = Tensor::scalar(2.0, true);
  mul(a, a).backward();
  mul(a, a).backward();
  EXPECT_DOUBLE_EQ(a.grad()[0], 8.0);
  a.zero_grad();
  EXPECT_DOUBLE_EQ(a.grad()[0], 0.0);
}

TEST(Ops, NoGradGuardSkipsGraph) {
  Tensor a = Tensor::scalar(2.0, true);
  NoGradGuard guard;
  Tensor y = mul(a, a);
  EXPECT_FALSE(y.requires_grad());
}

}  // namespace
}  // namespace fineparser
