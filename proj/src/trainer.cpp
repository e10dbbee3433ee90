#include "ubr/trainer.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ubr/binary_io.hpp"
#include "ubr/config.hpp"
#include "ubr/error.hpp"

namespace ubr {

void TrainConfig::validate() const {
  if (iterations < 1) throw usage_error("iterations must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw usage_error("learning rate must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw usage_error("momentum must lie in [0,1)");
  if (!(lr_decay_factor > 0.0)) throw usage_error("lr_decay_factor must be > 0");
  if (!(dist_weight >= 0.0)) throw usage_error("dist_weight must be >= 0");
  sampler.validate();
  network.validate();
}

double TrainConfig::learning_rate_at(std::size_t iteration) const {
  if (lr_decay_period == 0 || iteration == 0) return learning_rate;
  const auto steps = static_cast<double>((iteration - 1) / lr_decay_period);
  return learning_rate * std::pow(lr_decay_factor, steps);
}

void sgd_step(TensorMap& params, const TensorMap& grads, double learning_rate, double momentum, TensorMap& velocity) {
  for (const auto& [name, grad] : grads) {
    auto p = params.find(name);
    if (p == params.end()) throw usage_error("sgd_step: no parameter '" + name + "'");
    if (p->second.shape() != grad.shape()) {
      throw ShapeError(name, "sgd_step: gradient for '" + name + "' has shape " + diff::shape_string(grad.shape()) +
                                 ", parameter has " + diff::shape_string(p->second.shape()));
    }
    auto v = velocity.try_emplace(name, Tensor::zeros_like(grad)).first;
    if (v->second.shape() != grad.shape()) throw ShapeError(name, "sgd_step: velocity shape mismatch for '" + name + "'");
    auto& pv = p->second;
    auto& vv = v->second;
    for (std::size_t i = 0; i < grad.size(); ++i) {
      vv[i] = momentum * vv[i] + grad[i];
      pv[i] -= learning_rate * vv[i];
    }
  }
}

GroupGradients group_gradients(const ModelParams& params, const Tensor& pixels, std::size_t g, std::size_t m,
                               double dist_weight) {
  diff::Graph graph;
  std::map<std::string, diff::Var> vars;
  for (const auto& [name, tensor] : params.tensors) vars.emplace(name, graph.parameter(tensor));
  const auto input = graph.constant(pixels);
  const auto net = build_network(graph, params.config, vars, input);
  const Tensor& scores = graph.value(net.scores);
  if (scores.size() != g * m) {
    throw ShapeError("batch", "group of " + std::to_string(scores.size()) + " slices does not match g*m = " +
                                  std::to_string(g * m));
  }

  GroupGradients out;
  out.loss = total_loss(ScoreTable(g, m, scores.storage()), dist_weight);
  out.scores = scores.reshaped({g * m});
  const auto seeded = graph.weighted_sum(net.scores, Tensor(scores.shape(), out.loss.grad));
  graph.backward(seeded);
  for (const auto& [name, var] : vars) out.grads.emplace(name, graph.grad(var));
  return out;
}

namespace {

namespace pt = boost::property_tree;

std::string rng_to_text(const Rng& rng) {
  std::ostringstream out;
  out << rng;
  return out.str();
}

Rng rng_from_text(const std::string& text) {
  std::istringstream in(text);
  Rng rng;
  in >> rng;
  if (in.fail()) throw data_error("checkpoint has a malformed rng state");
  return rng;
}

}  // namespace

void save_train_state(const std::filesystem::path& path, const TrainState& state, const TrainConfig& config) {
  io::CheckpointFile file;
  std::ostringstream text;
  text << network_config_to_text(state.params.config) << "\n[train_state]\n"
       << "iteration = " << state.iteration << '\n'
       << "g = " << config.sampler.g << '\n'
       << "m = " << config.sampler.m << '\n'
       << "max_interval = " << config.sampler.max_interval << '\n'
       << "learning_rate = " << format_double(config.learning_rate) << '\n'
       << "rng = " << rng_to_text(state.rng) << '\n';
  file.config_text = text.str();
  for (const auto& name : parameter_names(state.params.config)) {
    file.tensors.push_back({name, state.params.at(name)});
  }
  for (const auto& name : parameter_names(state.params.config)) {
    auto it = state.velocity.find(name);
    if (it != state.velocity.end()) file.tensors.push_back({"velocity/" + name, it->second});
  }
  io::write_checkpoint(path, file);
}

TrainState load_train_state(const std::filesystem::path& path, SamplerConfig* sampler) {
  const auto file = io::read_checkpoint(path);
  TrainState state;
  state.params = load_params(path);

  std::istringstream in(file.config_text);
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw data_error(path.string() + ": malformed checkpoint config: " + e.message());
  }
  const auto section = tree.get_child_optional("train_state");
  if (!section) throw data_error(path.string() + ": not a training checkpoint (no [train_state] section)");
  try {
    state.iteration = section->get<std::size_t>("iteration");
    state.rng = rng_from_text(section->get<std::string>("rng"));
    if (sampler != nullptr) {
      sampler->g = section->get<std::size_t>("g");
      sampler->m = section->get<std::size_t>("m");
      sampler->max_interval = section->get<std::size_t>("max_interval");
    }
  } catch (const pt::ptree_error& e) {
    throw data_error(path.string() + ": checkpoint train state: " + e.what());
  }
  for (const auto& name : parameter_names(state.params.config)) {
    if (const auto* v = file.find("velocity/" + name)) state.velocity.emplace(name, *v);
  }
  return state;
}

namespace {

TrainResult run(const Dataset& dataset, const TrainConfig& config, TrainState state, const TrainOptions& options,
                TrainLog log) {
  const auto started = std::chrono::steady_clock::now();
  const std::size_t g = config.sampler.g;
  const std::size_t m = config.sampler.m;
  if (!options.checkpoint_dir.empty()) std::filesystem::create_directories(options.checkpoint_dir);

  while (state.iteration < config.iterations) {
    const std::size_t it = state.iteration + 1;
    const SampleGroup group = sample_group(dataset, config.sampler, state.rng);
    auto step = group_gradients(state.params, group.pixels, g, m, config.dist_weight);
    if (!std::isfinite(step.loss.total)) {
      throw DivergenceError(it, "training diverged at iteration " + std::to_string(it) + " (non-finite loss)");
    }
    sgd_step(state.params.tensors, step.grads, config.learning_rate_at(it), config.momentum, state.velocity);
    state.iteration = it;

    const IterationRecord record{it, step.loss.order, step.loss.dist, step.loss.total};
    log.records.push_back(record);
    if (options.on_iteration) options.on_iteration(record);
    if (!options.checkpoint_dir.empty() && config.checkpoint_period > 0 && it % config.checkpoint_period == 0 &&
        it < config.iterations) {
      save_train_state(options.checkpoint_dir / ("checkpoint_" + std::to_string(it) + ".ubrc"), state, config);
    }
  }

  if (!options.checkpoint_dir.empty()) {
    log.final_checkpoint = options.checkpoint_dir / kModelFileName;
    save_train_state(log.final_checkpoint, state, config);
  }
  log.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  TrainResult result;
  result.params = state.params;
  result.log = std::move(log);
  result.state = std::move(state);
  return result;
}

}  // namespace

TrainResult train(const Dataset& dataset, const TrainConfig& config, const TrainOptions& options) {
  config.validate();
  TrainState state;
  state.params = init_network(config.network);
  state.rng = make_rng(config.seed, "trainer.sampler");
  return run(dataset, config, std::move(state), options, {});
}

TrainResult resume(const std::filesystem::path& checkpoint, const Dataset& dataset, const TrainConfig& config,
                   const TrainOptions& options) {
  config.validate();
  SamplerConfig saved_sampler;
  TrainState state = load_train_state(checkpoint, &saved_sampler);
  if (saved_sampler.g != config.sampler.g || saved_sampler.m != config.sampler.m ||
      saved_sampler.max_interval != config.sampler.max_interval) {
    throw usage_error("cannot resume: checkpoint was trained with g=" + std::to_string(saved_sampler.g) +
                      ", m=" + std::to_string(saved_sampler.m) + ", max_interval=" +
                      std::to_string(saved_sampler.max_interval) + " but the config asks for g=" +
                      std::to_string(config.sampler.g) + ", m=" + std::to_string(config.sampler.m) +
                      ", max_interval=" + std::to_string(config.sampler.max_interval));
  }
  if (!(state.params.config == config.network)) {
    throw usage_error("cannot resume: checkpoint network config differs from the requested one");
  }
  if (state.iteration > config.iterations) {
    throw usage_error("cannot resume: checkpoint is at iteration " + std::to_string(state.iteration) +
                      ", beyond the requested " + std::to_string(config.iterations));
  }

  TrainLog log;
  const auto file = io::read_checkpoint(checkpoint);
  std::istringstream in(file.config_text);
  pt::ptree tree;
  pt::read_ini(in, tree);
  const auto saved_lr = tree.get<double>("train_state.learning_rate", config.learning_rate);
  if (saved_lr != config.learning_rate) {
    log.notes.push_back("learning rate changed on resume: " + format_double(saved_lr) + " -> " +
                        format_double(config.learning_rate));
  }
  return run(dataset, config, std::move(state), options, std::move(log));
}

void write_train_log(const std::filesystem::path& path, const TrainLog& log) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw data_error(path.string() + ": cannot open for writing");
  out << "# iteration order dist total\n";
  for (const auto& r : log.records) {
    out << r.iteration << ' ' << format_double(r.order) << ' ' << format_double(r.dist) << ' ' << format_double(r.total)
        << '\n';
  }
  for (const auto& note : log.notes) out << "# note: " << note << '\n';
}

}  // namespace ubr
