#include "dint/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

namespace dint {

void TrainConfig::validate() const {
  if (!(base_lr > 0.0) || !std::isfinite(base_lr)) throw std::invalid_argument("train: base_lr must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("train: momentum must lie in [0, 1)");
  if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  for (const auto& [layer, m] : lr_multipliers) {
    if (!(m >= 0.0) || !std::isfinite(m)) {
      throw std::invalid_argument("train: lr multiplier for '" + layer + "' must be >= 0");
    }
  }
  loss.validate();
  augment.validate();
}

double TrainConfig::lr_for(const std::string& layer) const {
  auto it = lr_multipliers.find(layer);
  return base_lr * (it == lr_multipliers.end() ? 1.0 : it->second);
}

std::string TrainConfig::canonical() const {
  std::ostringstream s;
  s.precision(17);
  s << "base_lr=" << base_lr << ";momentum=" << momentum << ";batch_size=" << batch_size
    << ";seed=" << seed << ";lambda=" << loss.lambda << ";gradient_loss=" << loss.use_gradient_loss
    << ";log_epsilon=" << loss.log_epsilon << ";use_augment=" << use_augment
    << ";crop=" << augment.crop_h << "x" << augment.crop_w << ";mirror=" << augment.mirror_prob
    << ";rotate=" << augment.rotate_min_deg << ":" << augment.rotate_max_deg
    << ";zoom=" << augment.zoom_min << ":" << augment.zoom_max
    << ";rotate_zoom=" << augment.enable_rotate_zoom;
  for (const auto& [layer, m] : lr_multipliers) s << ";lr." << layer << "=" << m;
  return s.str();
}

Fingerprint config_fingerprint(const NetworkConfig& net, const TrainConfig& cfg) {
  std::ostringstream s;
  s.precision(17);
  s << "channel_scale=" << net.channel_scale << ";hypercolumn=" << net.use_hypercolumn
    << ";deconv_head=" << net.use_deconv_head << ";dropout=" << net.dropout_prob
    << ";input_multiple=" << net.input_multiple << ";" << cfg.canonical();
  return sha256(s.str());
}

void sgd_momentum_step(Network& net, const TrainConfig& cfg, std::uint64_t iteration) {
  auto params = net.parameters();
  for (const auto& p : params) {
    if (!p.param->grad.all_finite()) {
      throw TrainingError("non-finite gradient in '" + p.name + "' at iteration " +
                          std::to_string(iteration));
    }
  }
  for (auto& p : params) {
    const double lr = cfg.lr_for(p.layer);
    Param& q = *p.param;
    for (std::size_t k = 0; k < q.value.size(); ++k) {
      q.velocity[k] = cfg.momentum * q.velocity[k] - lr * q.grad[k];
      q.value[k] += q.velocity[k];
    }
    q.grad.fill(0.0);
  }
}

void round_to_storage(Network& net) {
  for (auto& p : net.parameters()) {
    for (Tensor* t : {&p.param->value, &p.param->velocity})
      for (double& v : t->data()) v = static_cast<double>(static_cast<float>(v));
  }
}

PreparedSample prepare_sample(const Sample& s, std::size_t multiple, double log_epsilon) {
  PreparedSample p;
  p.image = pad_to_multiple(s.image, multiple).tensor;
  p.log_albedo = guarded_log(pad_to_multiple(s.albedo, multiple).tensor, log_epsilon);
  p.log_shading = guarded_log(pad_to_multiple(s.shading, multiple).tensor, log_epsilon);
  p.mask = Tensor(1, 1, p.image.h(), p.image.w());
  for (std::size_t h = 0; h < s.mask.h(); ++h)
    for (std::size_t w = 0; w < s.mask.w(); ++w) p.mask(0, 0, h, w) = s.mask(0, 0, h, w);
  return p;
}

namespace {

// Stream ids for the counter-based RNG forks.
constexpr std::uint64_t kShuffleStream = 0x5348554646ULL;
constexpr std::uint64_t kSampleStream = 0x53414d50ULL;

std::vector<std::size_t> epoch_order(const Rng& master, std::uint64_t epoch, std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng r = master.fork(kShuffleStream ^ mix64(epoch));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[r.below(i)]);
  return order;
}

}  // namespace

TrainResult train_loop(Network& net, const std::vector<Sample>& dataset, const TrainConfig& cfg,
                       const std::optional<Checkpoint>& resume, const CheckpointSink& on_checkpoint) {
  cfg.validate();
  const auto layers = net.layer_names();
  const std::set<std::string> known(layers.begin(), layers.end());
  for (const auto& [layer, m] : cfg.lr_multipliers) {
    if (!known.count(layer)) throw std::invalid_argument("train: lr multiplier for unknown layer '" + layer + "'");
  }
  const Fingerprint fp = config_fingerprint(net.config(), cfg);

  Rng master(cfg.seed);
  std::uint64_t start = 0;
  if (resume) {
    if (resume->fingerprint != fp) {
      throw TrainingError("checkpoint was written with a different configuration (fingerprint " +
                          to_hex(resume->fingerprint) + ", expected " + to_hex(fp) + ")");
    }
    restore_checkpoint(*resume, net);
    master = Rng::from_state(resume->rng);
    start = resume->iteration;
  }
  net.zero_grad();
  round_to_storage(net);

  TrainResult result;
  if (start < cfg.max_iterations && dataset.empty()) throw std::invalid_argument("train: dataset is empty");
  const std::size_t n = dataset.size();
  const double inv_batch = 1.0 / static_cast<double>(cfg.batch_size);

  std::uint64_t cached_epoch = ~std::uint64_t{0};
  std::vector<std::size_t> order;
  for (std::uint64_t it = start; it < cfg.max_iterations; ++it) {
    double loss = 0.0;
    std::string ids;
    for (std::size_t j = 0; j < cfg.batch_size; ++j) {
      const std::uint64_t pos = it * cfg.batch_size + j;
      const std::uint64_t epoch = pos / n;
      if (epoch != cached_epoch) {
        order = epoch_order(master, epoch, n);
        cached_epoch = epoch;
      }
      const Sample& src = dataset[order[pos % n]];
      if (!ids.empty()) ids += ",";
      ids += src.id;

      Rng rng = master.fork(kSampleStream ^ mix64(pos));
      const Sample s = cfg.use_augment ? augment(src, cfg.augment, rng) : src;
      const PreparedSample p = prepare_sample(s, net.config().input_multiple, cfg.loss.log_epsilon);
      ForwardCache cache;
      const NetworkOutput out = net.forward(p.image, true, rng, &cache);
      TotalLoss tl = total_loss(p.log_albedo, p.log_shading, out.log_albedo, out.log_shading,
                                p.mask, cfg.loss);
      if (!std::isfinite(tl.loss)) {
        throw TrainingError("non-finite loss at iteration " + std::to_string(it) + " (samples " +
                            ids + ")");
      }
      loss += tl.loss * inv_batch;
      tl.grad_albedo *= inv_batch;
      tl.grad_shading *= inv_batch;
      net.backward(cache, tl.grad_albedo, tl.grad_shading);
    }
    sgd_momentum_step(net, cfg, it);
    round_to_storage(net);
    result.trace.push_back({it, loss});
    if (on_checkpoint && cfg.checkpoint_every > 0 && (it + 1) % cfg.checkpoint_every == 0) {
      on_checkpoint(capture_checkpoint(net, it + 1, master, fp));
    }
  }
  result.final_checkpoint =
      capture_checkpoint(net, std::max(start, cfg.max_iterations), master, fp);
  return result;
}

}  // namespace dint
