#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ubr/dataset.hpp"
#include "ubr/losses.hpp"
#include "ubr/network.hpp"
#include "ubr/rng.hpp"
#include "ubr/sampler.hpp"

namespace ubr {

struct TrainConfig {
  std::size_t iterations = 2000;
  double learning_rate = 0.002;
  double lr_decay_factor = 1.0;   // step decay multiplier
  std::size_t lr_decay_period = 0;  // iterations per decay step; 0 = constant rate
  double momentum = 0.9;
  double dist_weight = 1.0;  // 1 = plain sum of the two terms, 0 = order loss only
  SamplerConfig sampler;
  NetworkConfig network;
  std::uint64_t seed = 0;
  std::size_t checkpoint_period = 0;  // 0 = final checkpoint only

  void validate() const;
  double learning_rate_at(std::size_t iteration) const;
  bool operator==(const TrainConfig&) const = default;
};

struct IterationRecord {
  std::size_t iteration = 0;
  double order = 0.0;
  double dist = 0.0;
  double total = 0.0;
};

/// One record per iteration executed by the call that produced it.
struct TrainLog {
  std::vector<IterationRecord> records;
  double wall_seconds = 0.0;
  std::filesystem::path final_checkpoint;
  std::vector<std::string> notes;
};

using TensorMap = std::map<std::string, Tensor>;

/// v <- momentum * v + grad; p <- p - lr * v. Missing velocity entries start at zero.
void sgd_step(TensorMap& params, const TensorMap& grads, double learning_rate, double momentum, TensorMap& velocity);

struct GroupGradients {
  LossReport loss;
  Tensor scores;  // [g*m]
  TensorMap grads;
};

/// Forward over a [g*m,1,H,W] group, loss on the score table, then the loss
/// gradient pushed back through the network.
GroupGradients group_gradients(const ModelParams& params, const Tensor& pixels, std::size_t g, std::size_t m,
                               double dist_weight);

/// Everything needed to continue a run bit-exactly.
struct TrainState {
  ModelParams params;
  TensorMap velocity;
  std::size_t iteration = 0;
  Rng rng;
};

void save_train_state(const std::filesystem::path& path, const TrainState& state, const TrainConfig& config);
/// Also returns the sampler settings the checkpoint was trained with.
TrainState load_train_state(const std::filesystem::path& path, SamplerConfig* sampler = nullptr);

struct TrainOptions {
  std::filesystem::path checkpoint_dir;  // empty = write nothing
  std::function<void(const IterationRecord&)> on_iteration;
};

struct TrainResult {
  ModelParams params;
  TrainLog log;
  TrainState state;
};

inline constexpr const char* kModelFileName = "model.ubrc";

TrainResult train(const Dataset& dataset, const TrainConfig& config, const TrainOptions& options = {});

/// Continues from `checkpoint` up to config.iterations total iterations.
/// Sampler or network changes are rejected; learning-rate changes are noted.
TrainResult resume(const std::filesystem::path& checkpoint, const Dataset& dataset, const TrainConfig& config,
                   const TrainOptions& options = {});

void write_train_log(const std::filesystem::path& path, const TrainLog& log);

}  // namespace ubr
