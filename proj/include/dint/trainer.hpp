#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dint/checkpoint.hpp"
#include "dint/data.hpp"
#include "dint/losses.hpp"
#include "dint/network.hpp"

namespace dint {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  double base_lr = 0.01;
  /// Per-layer learning-rate multipliers keyed by layer name; default 1.
  std::map<std::string, double> lr_multipliers;
  double momentum = 0.9;
  std::size_t batch_size = 32;
  std::uint64_t max_iterations = 0;
  std::uint64_t seed = 0;
  LossConfig loss;
  AugmentConfig augment = desk_augment();
  /// Run augment() on every sample; when false samples are used as loaded.
  bool use_augment = true;
  /// 0 disables periodic checkpoints.
  std::uint64_t checkpoint_every = 0;

  static AugmentConfig desk_augment() {
    AugmentConfig a;
    a.crop_h = 64;
    a.crop_w = 64;
    return a;
  }

  void validate() const;
  double lr_for(const std::string& layer) const;
  /// Canonical text of every field that shapes the parameter trajectory
  /// (iteration limits and checkpoint cadence excluded).
  std::string canonical() const;
};

/// Heavy-ball update for every parameter, then zeroes the gradients:
///   v <- momentum * v - lr * g;  theta <- theta + v.
/// Throws if a gradient is non-finite, naming the parameter and iteration.
void sgd_momentum_step(Network& net, const TrainConfig& cfg, std::uint64_t iteration = 0);

/// Rounds parameters and momentum buffers to float32, the checkpoint
/// storage precision, so a resumed run continues from identical values.
void round_to_storage(Network& net);

struct TraceEntry {
  std::uint64_t iteration;
  double loss;
};

struct TrainResult {
  Checkpoint final_checkpoint;
  std::vector<TraceEntry> trace;
};

using CheckpointSink = std::function<void(const Checkpoint&)>;

/// Fingerprint binding a checkpoint to its network and training config.
Fingerprint config_fingerprint(const NetworkConfig& net, const TrainConfig& cfg);

/// Runs iterations [start, max_iterations). Each iteration draws
/// batch_size samples (epoch-wise reshuffle with wraparound), augments and
/// pads each one, takes guarded logs of the albedo/shading targets, runs a
/// train-mode forward/backward per sample with gradients averaged over the
/// batch, and applies one momentum step. With `resume` the network state
/// and iteration come from that checkpoint.
TrainResult train_loop(Network& net, const std::vector<Sample>& dataset, const TrainConfig& cfg,
                       const std::optional<Checkpoint>& resume = std::nullopt,
                       const CheckpointSink& on_checkpoint = {});

/// Prepared network inputs/targets for one sample.
struct PreparedSample {
  Tensor image;
  Tensor log_albedo;
  Tensor log_shading;
  Tensor mask;
};

/// Pads a sample to the network's input multiple (padding is masked out)
/// and converts targets to guarded log space.
PreparedSample prepare_sample(const Sample& s, std::size_t multiple, double log_epsilon);

}  // namespace dint
