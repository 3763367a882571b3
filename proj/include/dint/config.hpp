#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "dint/metrics.hpp"
#include "dint/network.hpp"
#include "dint/trainer.hpp"

namespace dint {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything a CLI run needs, read from a `key = value` file with
/// `[section]` headers:
///
///   [network]  channel_scale, hypercolumn, deconv_head, dropout, input_multiple
///   [train]    base_lr, momentum, batch_size, max_iterations, seed,
///              checkpoint_every, augment
///   [loss]     lambda, gradient_loss, log_epsilon
///   [augment]  crop_h, crop_w, mirror_prob, rotate_min, rotate_max,
///              zoom_min, zoom_max, rotate_zoom
///   [lr]       <layer name> = multiplier
///   [eval]     window_fraction, align_dssim, mit_total
///   [data]     manifest, split
///   [output]   dir, trace, checkpoint
///
/// Unknown sections or keys are rejected.
struct RunConfig {
  NetworkConfig network;
  TrainConfig train;
  EvalOptions eval;
  std::filesystem::path manifest;
  std::string split = "train";
  std::filesystem::path output_dir = "run";
  std::string trace_file = "loss_trace.csv";
  std::string checkpoint_file = "final.ckpt";

  static RunConfig parse(const std::string& text, const std::filesystem::path& base_dir = {});
  static RunConfig load(const std::filesystem::path& path);
  void validate() const;
};

}  // namespace dint
