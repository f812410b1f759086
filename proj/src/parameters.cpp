#include "fineparser/parameters.h"

#include <bit>
#include <cmath>

#include "fineparser/error.h"

namespace fineparser {

std::string_view group_name(ParamGroup group) {
  switch (group) {
    case ParamGroup::sap:
      return "sap";
    case ParamGroup::tap:
      return "tap";
    case ParamGroup::sve:
      return "sve";
    case ParamGroup::finereg:
      return "finereg";
  }
  return "unknown";
}

ParamGroup group_from_name(std::string_view name) {
  if (name == "sap") return ParamGroup::sap;
  if (name == "tap") return ParamGroup::tap;
  if (name == "sve") return ParamGroup::sve;
  if (name == "finereg") return ParamGroup::finereg;
  throw ConfigError("unknown parameter group '" + std::string(name) + "'");
}

Tensor ParameterStore::create(std::string name, ParamGroup group, Shape shape, double bound, Rng& rng) {
  if (find(name)) throw ConfigError("duplicate parameter name " + name);
  Tensor t = Tensor::zeros(std::move(shape), true);
  if (bound > 0.0) {
    for (double& v : t.values_mut()) v = rng.uniform(-bound, bound);
  }
  params_.push_back({std::move(name), group, t});
  return t;
}

const Parameter* ParameterStore::find(std::string_view name) const {
  for (const auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.tensor.numel());
  return n;
}

std::uint64_t ParameterStore::checksum(std::string_view prefix) const {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (const auto& p : params_) {
    if (!p.name.starts_with(prefix)) continue;
    for (double v : p.tensor.values()) {
      auto bits = std::bit_cast<std::uint64_t>(v);
      for (int i = 0; i < 8; ++i) {
        h ^= (bits >> (8 * i)) & 0xFF;
        h *= 0x100000001B3ULL;
      }
    }
  }
  return h;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

double he_bound(int fan_in) { return std::sqrt(6.0 / std::max(1, fan_in)); }

Conv3dLayer Conv3dLayer::create(ParameterStore& store, const std::string& name, ParamGroup group, int in, int out,
                                Dim3 kernel, Dim3 stride, Dim3 pad, Rng& rng) {
  Conv3dLayer layer;
  const int fan_in = in * kernel[0] * kernel[1] * kernel[2];
  layer.weight = store.create(name + ".weight", group, {out, in, kernel[0], kernel[1], kernel[2]}, he_bound(fan_in), rng);
  layer.bias = store.create(name + ".bias", group, {out}, 0.0, rng);
  layer.stride = stride;
  layer.pad = pad;
  return layer;
}

ConvTranspose3dLayer ConvTranspose3dLayer::create(ParameterStore& store, const std::string& name, ParamGroup group,
                                                  int in, int out, Dim3 kernel, Dim3 stride, Rng& rng) {
  ConvTranspose3dLayer layer;
  // Each output voxel receives in * (kernel / stride) contributions.
  int overlap = 1;
  for (int i = 0; i < 3; ++i) overlap *= std::max(1, kernel[i] / std::max(1, stride[i]));
  layer.weight = store.create(name + ".weight", group, {in, out, kernel[0], kernel[1], kernel[2]},
                              std::sqrt(3.0 / (in * overlap)), rng);
  layer.bias = store.create(name + ".bias", group, {out}, 0.0, rng);
  layer.stride = stride;
  return layer;
}

LinearLayer LinearLayer::create(ParameterStore& store, const std::string& name, ParamGroup group, int in, int out,
                                Rng& rng, double bound_scale) {
  LinearLayer layer;
  layer.weight = store.create(name + ".weight", group, {out, in}, bound_scale * he_bound(in), rng);
  layer.bias = store.create(name + ".bias", group, {out}, 0.0, rng);
  return layer;
}

}  // namespace fineparser
