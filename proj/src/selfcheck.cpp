#include "ubr/selfcheck.hpp"

#include <functional>
#include <random>

#include "ubr/losses.hpp"
#include "ubr/rng.hpp"

namespace ubr {

using diff::Graph;
using diff::NamedTensor;
using diff::Var;

namespace {

Tensor random_tensor(Tensor::Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> d(lo, hi);
  for (auto& v : t.data()) v = d(rng);
  return t;
}

// Random readout weights so no output element's gradient is trivially uniform.
Var readout(Graph& graph, Var x, std::uint64_t seed) {
  Rng rng = make_rng(seed, "selfcheck.readout");
  return graph.weighted_sum(x, random_tensor(graph.value(x).shape(), rng));
}

NamedCheck check(std::string name, std::vector<NamedTensor> params, const diff::GraphBuilder& build,
                 const diff::GradCheckOptions& options) {
  return {std::move(name), diff::grad_check(params, build, options)};
}

}  // namespace

NetworkConfig tiny_network_config() {
  NetworkConfig c;
  c.input_height = 12;
  c.input_width = 12;
  c.stages = {{3, 3, 1, 1, 2}, {4, 3, 1, 1, 2}};
  c.conv6_channels = 5;
  return c;
}

std::vector<NamedCheck> op_grad_checks(std::uint64_t seed, const diff::GradCheckOptions& options) {
  Rng rng = make_rng(seed, "selfcheck.inputs");
  std::vector<NamedCheck> out;

  out.push_back(check("conv2d",
                      {{"input", random_tensor({2, 2, 5, 5}, rng)},
                       {"kernels", random_tensor({3, 2, 3, 3}, rng)},
                       {"bias", random_tensor({3}, rng)}},
                      [seed](Graph& g, const std::vector<Var>& p) {
                        return readout(g, g.conv2d(p[0], p[1], p[2], 2, 1), seed);
                      },
                      options));
  out.push_back(check("relu", {{"x", random_tensor({2, 3, 4, 4}, rng)}},
                      [seed](Graph& g, const std::vector<Var>& p) { return readout(g, g.relu(p[0]), seed); }, options));
  out.push_back(check("maxpool2d", {{"x", random_tensor({1, 2, 6, 6}, rng)}},
                      [seed](Graph& g, const std::vector<Var>& p) { return readout(g, g.maxpool2d(p[0], 2, 2), seed); },
                      options));
  out.push_back(check("global_avg_pool", {{"x", random_tensor({2, 3, 3, 3}, rng)}},
                      [seed](Graph& g, const std::vector<Var>& p) { return readout(g, g.global_avg_pool(p[0]), seed); },
                      options));
  out.push_back(check("fully_connected",
                      {{"input", random_tensor({3, 4}, rng)},
                       {"weights", random_tensor({4, 2}, rng)},
                       {"bias", random_tensor({2}, rng)}},
                      [seed](Graph& g, const std::vector<Var>& p) {
                        return readout(g, g.fully_connected(p[0], p[1], p[2]), seed);
                      },
                      options));
  out.push_back(check("sigmoid", {{"x", random_tensor({2, 5}, rng, -6.0, 6.0)}},
                      [seed](Graph& g, const std::vector<Var>& p) { return readout(g, g.sigmoid(p[0]), seed); }, options));
  out.push_back(check("log_probability", {{"p", random_tensor({2, 5}, rng, 0.05, 1.0)}},
                      [seed](Graph& g, const std::vector<Var>& p) { return readout(g, g.log_probability(p[0]), seed); },
                      options));
  out.push_back(check("smooth_l1", {{"x", random_tensor({3, 6}, rng, -3.0, 3.0)}},
                      [seed](Graph& g, const std::vector<Var>& p) { return readout(g, g.smooth_l1(p[0]), seed); },
                      options));
  out.push_back(check("adjacent_diff", {{"x", random_tensor({3, 5}, rng)}},
                      [seed](Graph& g, const std::vector<Var>& p) { return readout(g, g.adjacent_diff(p[0]), seed); },
                      options));
  out.push_back(check("sum_scale", {{"x", random_tensor({2, 3}, rng)}},
                      [](Graph& g, const std::vector<Var>& p) { return g.scale(g.sum(p[0]), -1.5); }, options));
  out.push_back(check("add_reshape", {{"a", random_tensor({2, 3}, rng)}, {"b", random_tensor({6}, rng)}},
                      [seed](Graph& g, const std::vector<Var>& p) {
                        return readout(g, g.add(g.reshape(p[0], {6}), p[1]), seed);
                      },
                      options));
  out.push_back(check("order_distance_loss", {{"scores", random_tensor({3, 8}, rng, -2.0, 2.0)}},
                      [](Graph& g, const std::vector<Var>& p) { return total_loss_graph(g, p[0]); }, options));
  return out;
}

NamedCheck network_grad_check(const NetworkConfig& config, std::size_t g, std::size_t m, std::uint64_t seed,
                              const diff::GradCheckOptions& options) {
  NetworkConfig seeded = config;
  seeded.seed = seed;
  const ModelParams params = init_network(seeded);
  Rng rng = make_rng(seed, "selfcheck.network");
  const Tensor pixels = random_tensor({g * m, 1, config.input_height, config.input_width}, rng, 0.0, 1.0);

  std::vector<NamedTensor> named;
  const auto names = parameter_names(config);
  for (const auto& name : names) {
    Tensor value = params.at(name);
    // Nonzero biases keep the check away from the all-zero init symmetry.
    if (name.ends_with(".bias")) value = random_tensor(value.shape(), rng, -0.1, 0.1);
    named.push_back({name, value});
  }
  auto build = [&](Graph& graph, const std::vector<Var>& leaves) {
    std::map<std::string, Var> vars;
    for (std::size_t i = 0; i < names.size(); ++i) vars.emplace(names[i], leaves[i]);
    const auto net = build_network(graph, config, vars, graph.constant(pixels));
    return total_loss_graph(graph, graph.reshape(net.scores, {g, m}));
  };
  return {"network+loss", diff::grad_check(named, build, options)};
}

}  // namespace ubr
