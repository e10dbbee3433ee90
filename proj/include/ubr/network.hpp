#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ubr/diffcore/graph.hpp"

namespace ubr {

using diff::Tensor;

/// One conv -> ReLU -> (optional) max-pool stage of the feature stack.
/// A pool window of 1 disables pooling; the pool stride equals the window.
struct StageSpec {
  std::size_t out_channels = 8;
  std::size_t kernel_size = 3;
  std::size_t stride = 1;
  std::size_t padding = 1;
  std::size_t pool_window = 2;

  bool operator==(const StageSpec&) const = default;
};

struct NetworkConfig {
  std::size_t input_height = 32;
  std::size_t input_width = 32;
  std::vector<StageSpec> stages = {{8, 3, 1, 1, 2}, {16, 3, 1, 1, 2}, {32, 3, 1, 1, 2}};
  std::size_t conv6_channels = 32;
  std::uint64_t seed = 0;

  /// Throws a usage error if any stage collapses the spatial extent below 1.
  void validate() const;
  /// (H, W) of the activation maps entering Conv6.
  std::pair<std::size_t, std::size_t> feature_extent() const;

  bool operator==(const NetworkConfig&) const = default;
};

/// Parameter names in creation order: conv1..convN, conv6 (the 1x1 head conv)
/// and fc7, each with ".weight" and ".bias".
std::vector<std::string> parameter_names(const NetworkConfig& config);

struct ModelParams {
  NetworkConfig config;
  std::map<std::string, Tensor> tensors;

  const Tensor& at(const std::string& name) const;
  /// Throws unless every layer has exactly its kernel and bias with the right shapes.
  void validate() const;
  bool operator==(const ModelParams&) const = default;
};

/// He-style init: kernels ~ N(0, 2/fan_in), biases zero. Deterministic in config.seed.
ModelParams init_network(const NetworkConfig& config);

struct ForwardOptions {
  /// Replaces the post-Conv6 activations right before global average pooling.
  std::function<Tensor(const Tensor&)> pre_pool_hook;
};

struct NetworkVars {
  diff::Var scores;  // [B,1]
  diff::Var pooled;  // [B,conv6_channels]
};

/// Records the regressor on `graph`. `params` maps each parameter name to a
/// leaf already on the graph; `input` is [B,1,H,W].
NetworkVars build_network(diff::Graph& graph, const NetworkConfig& config,
                          const std::map<std::string, diff::Var>& params, diff::Var input,
                          const ForwardOptions& options = {});

struct ForwardResult {
  Tensor scores;  // [B]
  Tensor pooled;  // [B,conv6_channels]
};

ForwardResult forward(const ModelParams& params, const Tensor& batch, const ForwardOptions& options = {});

/// Checks a [B,1,H,W] batch against the configured input size.
void check_batch_shape(const NetworkConfig& config, const Tensor& batch);

std::string network_config_to_text(const NetworkConfig& config);
NetworkConfig network_config_from_text(const std::string& text);

void save_params(const ModelParams& params, const std::filesystem::path& path);
/// Config comes from the file, never from the caller. Extra tensors in the
/// file (optimizer state) are ignored.
ModelParams load_params(const std::filesystem::path& path);

}  // namespace ubr
