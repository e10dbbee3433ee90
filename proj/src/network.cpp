#include "ubr/network.hpp"

#include <cmath>
#include <random>

#include "ubr/binary_io.hpp"
#include "ubr/error.hpp"
#include "ubr/rng.hpp"

namespace ubr {

namespace {

std::string stage_name(std::size_t index) { return "conv" + std::to_string(index + 1); }

std::size_t conv_extent(std::size_t in, const StageSpec& s) {
  const std::size_t padded = in + 2 * s.padding;
  if (padded < s.kernel_size) return 0;
  return (padded - s.kernel_size) / s.stride + 1;
}

}  // namespace

void NetworkConfig::validate() const {
  if (input_height == 0 || input_width == 0) throw usage_error("network input size must be positive");
  if (conv6_channels == 0) throw usage_error("conv6_channels must be >= 1");
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const auto& s = stages[i];
    if (s.out_channels == 0 || s.kernel_size == 0 || s.stride == 0 || s.pool_window == 0) {
      throw usage_error("stage " + std::to_string(i + 1) + ": channels, kernel, stride and pool window must be >= 1");
    }
  }
  const auto [h, w] = feature_extent();
  if (h == 0 || w == 0) {
    throw usage_error("feature stack collapses the " + std::to_string(input_height) + "x" +
                      std::to_string(input_width) + " input below 1 pixel");
  }
}

std::pair<std::size_t, std::size_t> NetworkConfig::feature_extent() const {
  std::size_t h = input_height;
  std::size_t w = input_width;
  for (const auto& s : stages) {
    h = conv_extent(h, s);
    w = conv_extent(w, s);
    if (h < s.pool_window || w < s.pool_window) return {0, 0};
    h /= s.pool_window;
    w /= s.pool_window;
  }
  return {h, w};
}

std::vector<std::string> parameter_names(const NetworkConfig& config) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < config.stages.size(); ++i) {
    names.push_back(stage_name(i) + ".weight");
    names.push_back(stage_name(i) + ".bias");
  }
  for (const char* layer : {"conv6", "fc7"}) {
    names.push_back(std::string(layer) + ".weight");
    names.push_back(std::string(layer) + ".bias");
  }
  return names;
}

namespace {

std::map<std::string, Tensor::Shape> expected_shapes(const NetworkConfig& config) {
  std::map<std::string, Tensor::Shape> shapes;
  std::size_t channels = 1;
  for (std::size_t i = 0; i < config.stages.size(); ++i) {
    const auto& s = config.stages[i];
    shapes[stage_name(i) + ".weight"] = {s.out_channels, channels, s.kernel_size, s.kernel_size};
    shapes[stage_name(i) + ".bias"] = {s.out_channels};
    channels = s.out_channels;
  }
  shapes["conv6.weight"] = {config.conv6_channels, channels, 1, 1};
  shapes["conv6.bias"] = {config.conv6_channels};
  shapes["fc7.weight"] = {config.conv6_channels, 1};
  shapes["fc7.bias"] = {1};
  return shapes;
}

}  // namespace

const Tensor& ModelParams::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw data_error("model has no parameter '" + name + "'");
  return it->second;
}

void ModelParams::validate() const {
  config.validate();
  const auto shapes = expected_shapes(config);
  for (const auto& [name, shape] : shapes) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw data_error("model is missing parameter '" + name + "'");
    if (it->second.shape() != shape) {
      throw data_error("parameter '" + name + "' has shape " + diff::shape_string(it->second.shape()) + ", expected " +
                       diff::shape_string(shape));
    }
  }
  for (const auto& [name, tensor] : tensors) {
    if (!shapes.contains(name)) throw data_error("unexpected model parameter '" + name + "'");
  }
}

ModelParams init_network(const NetworkConfig& config) {
  config.validate();
  ModelParams params;
  params.config = config;
  Rng rng = make_rng(config.seed, "network.init");
  const auto shapes = expected_shapes(config);
  for (const auto& name : parameter_names(config)) {
    const auto& shape = shapes.at(name);
    Tensor t(shape, 0.0);
    if (name.ends_with(".weight")) {
      // fan-in: everything except the output axis.
      const std::size_t fan_in = name == "fc7.weight" ? shape[0] : diff::element_count(shape) / shape[0];
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
      for (auto& v : t.data()) v = dist(rng);
    }
    params.tensors.emplace(name, std::move(t));
  }
  return params;
}

void check_batch_shape(const NetworkConfig& config, const Tensor& batch) {
  const auto& s = batch.shape();
  if (s.size() != 4) throw ShapeError("rank", "batch must be [B,1,H,W], got " + diff::shape_string(s));
  if (s[1] != 1) throw ShapeError("channel", "slices are single-channel, batch has " + std::to_string(s[1]));
  if (s[2] != config.input_height) {
    throw ShapeError("height", "slice height " + std::to_string(s[2]) + " does not match network input height " +
                                   std::to_string(config.input_height));
  }
  if (s[3] != config.input_width) {
    throw ShapeError("width", "slice width " + std::to_string(s[3]) + " does not match network input width " +
                                  std::to_string(config.input_width));
  }
}

NetworkVars build_network(diff::Graph& graph, const NetworkConfig& config,
                          const std::map<std::string, diff::Var>& params, diff::Var input,
                          const ForwardOptions& options) {
  check_batch_shape(config, graph.value(input));
  auto param = [&](const std::string& name) {
    auto it = params.find(name);
    if (it == params.end()) throw data_error("network graph is missing parameter '" + name + "'");
    return it->second;
  };

  diff::Var x = input;
  for (std::size_t i = 0; i < config.stages.size(); ++i) {
    const auto& s = config.stages[i];
    const auto name = stage_name(i);
    x = graph.conv2d(x, param(name + ".weight"), param(name + ".bias"), s.stride, s.padding);
    x = graph.relu(x);
    if (s.pool_window > 1) x = graph.maxpool2d(x, s.pool_window, s.pool_window);
  }
  x = graph.conv2d(x, param("conv6.weight"), param("conv6.bias"), 1, 0);
  x = graph.relu(x);
  if (options.pre_pool_hook) x = graph.constant(options.pre_pool_hook(graph.value(x)));
  const diff::Var pooled = graph.global_avg_pool(x);
  const diff::Var scores = graph.fully_connected(pooled, param("fc7.weight"), param("fc7.bias"));
  return {scores, pooled};
}

ForwardResult forward(const ModelParams& params, const Tensor& batch, const ForwardOptions& options) {
  check_batch_shape(params.config, batch);
  diff::Graph graph;
  std::map<std::string, diff::Var> vars;
  for (const auto& [name, tensor] : params.tensors) vars.emplace(name, graph.constant(tensor));
  const auto input = graph.constant(batch);
  const auto out = build_network(graph, params.config, vars, input, options);
  const auto& scores = graph.value(out.scores);
  return {scores.reshaped({scores.extent(0)}), graph.value(out.pooled)};
}

void save_params(const ModelParams& params, const std::filesystem::path& path) {
  params.validate();
  io::CheckpointFile file;
  file.config_text = network_config_to_text(params.config);
  for (const auto& name : parameter_names(params.config)) file.tensors.push_back({name, params.at(name)});
  io::write_checkpoint(path, file);
}

ModelParams load_params(const std::filesystem::path& path) {
  const auto file = io::read_checkpoint(path);
  ModelParams params;
  params.config = network_config_from_text(file.config_text);
  for (const auto& name : parameter_names(params.config)) {
    const auto* t = file.find(name);
    if (t == nullptr) throw data_error(path.string() + ": checkpoint lacks tensor '" + name + "'");
    params.tensors.emplace(name, *t);
  }
  params.validate();
  return params;
}

}  // namespace ubr
