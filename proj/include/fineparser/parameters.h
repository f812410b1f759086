#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "fineparser/ops.h"
#include "fineparser/rng.h"
#include "fineparser/tensor.h"

namespace fineparser {

// Optimizer groups with independently configured learning rates.
enum class ParamGroup { sap, tap, sve, finereg };

std::string_view group_name(ParamGroup group);
ParamGroup group_from_name(std::string_view name);

struct Parameter {
  std::string name;
  ParamGroup group;
  Tensor tensor;
};

// Owns every learnable tensor of a model, in registration order.
class ParameterStore {
 public:
  // Uniform(-bound, bound) initialization; bound 0 gives zeros.
  Tensor create(std::string name, ParamGroup group, Shape shape, double bound, Rng& rng);

  const std::vector<Parameter>& all() const { return params_; }
  std::vector<Parameter>& all() { return params_; }
  const Parameter* find(std::string_view name) const;
  std::size_t scalar_count() const;

  // Bitwise FNV-1a over the values of parameters whose name starts with prefix.
  std::uint64_t checksum(std::string_view prefix = {}) const;

  void zero_grad();

 private:
  std::vector<Parameter> params_;
};

// He-style bound for a ReLU layer with the given fan-in.
double he_bound(int fan_in);

struct Conv3dLayer {
  Tensor weight;  // [Co, Ci, kt, kh, kw]
  Tensor bias;
  Dim3 stride{1, 1, 1};
  Dim3 pad{0, 0, 0};

  static Conv3dLayer create(ParameterStore& store, const std::string& name, ParamGroup group, int in, int out,
                            Dim3 kernel, Dim3 stride, Dim3 pad, Rng& rng);
  Tensor operator()(const Tensor& x) const { return conv3d(x, weight, bias, stride, pad); }
};

struct ConvTranspose3dLayer {
  Tensor weight;  // [Ci, Co, kt, kh, kw]
  Tensor bias;
  Dim3 stride{1, 1, 1};
  Dim3 pad{0, 0, 0};

  static ConvTranspose3dLayer create(ParameterStore& store, const std::string& name, ParamGroup group, int in, int out,
                                     Dim3 kernel, Dim3 stride, Rng& rng);
  Tensor operator()(const Tensor& x) const { return conv_transpose3d(x, weight, bias, stride, pad); }
};

struct LinearLayer {
  Tensor weight;  // [out, in]
  Tensor bias;

  static LinearLayer create(ParameterStore& store, const std::string& name, ParamGroup group, int in, int out,
                            Rng& rng, double bound_scale = 1.0);
  Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }
};

}  // namespace fineparser
