#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "topoaug/nn.hpp"

namespace topoaug {

// Two parallel conv blocks (traffic matrix and adjacency), each
// conv -> ReLU -> conv -> ReLU -> flatten -> FC -> ReLU, then a two-layer
// ReLU trunk feeding a softmax policy head and a linear value head.
struct Architecture {
  std::size_t tm_size = 0;
  std::size_t adj_size = 0;
  std::size_t actions = 0;
  std::size_t conv1_filters = 16;
  std::size_t conv2_filters = 32;
  std::size_t kernel = 3;
  std::size_t block_fc = 128;
  std::size_t trunk1 = 128;
  std::size_t trunk2 = 64;

  void validate() const;
  std::string fingerprint() const;
  std::vector<std::pair<std::string, nn::Shape>> layout() const;
};

// Positions of each tensor inside a parameter set.
enum Slot : std::size_t {
  kConvA1W, kConvA1B, kConvA2W, kConvA2B, kFcAW, kFcAB,
  kConvB1W, kConvB1B, kConvB2W, kConvB2B, kFcBW, kFcBB,
  kTrunk1W, kTrunk1B, kTrunk2W, kTrunk2B,
  kPolicyW, kPolicyB, kValueW, kValueB,
  kSlotCount
};

template <typename T>
struct ModelParams {
  Architecture arch;
  nn::ParamSet<T> params;
  std::uint64_t version = 0;

  template <typename U>
  ModelParams<U> cast() const {
    return {arch, params.template cast<U>(), version};
  }
};

using Gradients = nn::ParamSet<float>;

// He-uniform for conv layers, Xavier-uniform for dense layers and heads,
// zero biases.
ModelParams<float> init_params(const Architecture& arch, std::uint64_t seed);

struct Checkpoint {
  ModelParams<float> model;
  long long adam_steps = 0;
  nn::ParamSet<float> adam_first;
  nn::ParamSet<float> adam_second;
  std::map<std::string, std::string> meta;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
// Throws ValidationError when `expected` is given and its fingerprint differs.
Checkpoint load_checkpoint(const std::filesystem::path& path, const Architecture* expected = nullptr);

}  // namespace topoaug
