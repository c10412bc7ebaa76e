#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "floragan/dataset.hpp"
#include "floragan/layer_spec.hpp"
#include "floragan/losses.hpp"
#include "floragan/network.hpp"
#include "floragan/preprocess.hpp"

namespace floragan {

class TrainingError : public Error {
 public:
  using Error::Error;
};

struct TrainConfig {
  GeneratorVariant variant = GeneratorVariant::A_subpixel;
  LesionType lesion_filter = LesionType::I;
  int epochs = 200;
  int decay_start = 100;
  double lr0 = 0.0002;
  int batch_size = 1;
  LossWeights weights;
  std::uint64_t seed = 0;
  int working_size = 256;
  int history_buffer_size = 50;
  double beta1 = 0.5;
  double beta2 = 0.999;
  Augmentation augmentation = Augmentation::none;
  NetworkOptions network;
  int checkpoint_every = 10;  // run control; not part of the fingerprint

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

void validate(const TrainConfig& cfg);

std::string config_to_json(const TrainConfig& cfg);
TrainConfig config_from_json(const std::string& text);

/// FNV-1a over the canonical config (minus run-control fields) and both layer tables.
std::uint64_t config_fingerprint(const TrainConfig& cfg);

/// lr0 before decay_start, then linear to 0 at `epochs`.
double lr_at_epoch(int epoch, const TrainConfig& cfg);

/// Image pool of earlier generator outputs fed to the discriminator.
/// Capacity 0 disables it.
class HistoryBuffer {
 public:
  explicit HistoryBuffer(std::size_t capacity) : capacity_(capacity) {}

  template <typename Rng>
  Tensor<float> push_sample(const Tensor<float>& fake, Rng& rng) {
    if (capacity_ == 0) return fake;
    if (images_.size() < capacity_) {
      images_.push_back(fake);
      return fake;
    }
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    if (coin(rng) < 0.5) {
      std::uniform_int_distribution<std::size_t> pick(0, capacity_ - 1);
      const std::size_t i = pick(rng);
      Tensor<float> old = std::move(images_[i]);
      images_[i] = fake;
      return old;
    }
    return fake;
  }

  std::size_t size() const { return images_.size(); }
  std::size_t capacity() const { return capacity_; }
  const std::vector<Tensor<float>>& images() const { return images_; }
  void restore(std::vector<Tensor<float>> images);

 private:
  std::size_t capacity_;
  std::vector<Tensor<float>> images_;
};

/// Adam with bias correction over a fixed parameter list.
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<NamedParameter<float>> params, double beta1, double beta2, double eps = 1e-8);

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  /// Applies one update from the accumulated gradients; parameters without a gradient are skipped.
  void step();
  void zero_grad();

  long steps() const { return step_; }
  void set_steps(long s) { step_ = s; }
  std::vector<NamedParameter<float>>& parameters() { return params_; }
  std::vector<Tensor<float>>& first_moments() { return m_; }
  std::vector<Tensor<float>>& second_moments() { return v_; }

 private:
  std::vector<NamedParameter<float>> params_;
  std::vector<Tensor<float>> m_, v_;
  double beta1_ = 0.5, beta2_ = 0.999, eps_ = 1e-8, lr_ = 0;
  long step_ = 0;
};

/// Serialized training state: every tensor by name plus bookkeeping.
struct ModelCheckpoint {
  static constexpr std::uint32_t kVersion = 1;

  TrainConfig config;
  std::uint64_t fingerprint = 0;
  int epoch = 0;  // completed epochs
  double best_cycle_loss = std::numeric_limits<double>::infinity();
  std::map<std::string, std::int64_t> counters;  // optimizer step counts
  std::map<std::string, Tensor<float>> tensors;
};

void save_checkpoint(const ModelCheckpoint& ckpt, const std::string& path);
/// Reads a checkpoint and verifies its stored fingerprint; with `expected`,
/// also requires the fingerprint of that config to match.
ModelCheckpoint load_checkpoint(const std::string& path, const std::optional<TrainConfig>& expected = std::nullopt);

/// The four networks and two optimizers of one cycle-consistent model.
class CycleGan {
 public:
  explicit CycleGan(const TrainConfig& cfg);

  /// Random weights from the config seed.
  void initialize();

  ModelCheckpoint to_checkpoint();
  void load(const ModelCheckpoint& ckpt);

  const TrainConfig& config() const { return config_; }
  Network<float>& G() { return g_; }
  Network<float>& F() { return f_; }
  Network<float>& D_X() { return dx_; }
  Network<float>& D_Y() { return dy_; }
  Adam& generator_optimizer() { return opt_g_; }
  Adam& discriminator_optimizer() { return opt_d_; }
  HistoryBuffer& pool_X() { return pool_x_; }  // earlier F outputs
  HistoryBuffer& pool_Y() { return pool_y_; }  // earlier G outputs

  int epoch = 0;
  double best_cycle_loss = std::numeric_limits<double>::infinity();

 private:
  TrainConfig config_;
  Network<float> g_, f_, dx_, dy_;
  Adam opt_g_, opt_d_;
  HistoryBuffer pool_x_, pool_y_;
};

/// Generator G (melanoma -> flower) rebuilt from a checkpoint, in eval mode.
Network<float> load_generator(const ModelCheckpoint& ckpt);

struct TrainOptions {
  bool resume = false;                    // continue from <dir>/latest.ckpt if present
  std::optional<int> stop_after_epoch;    // end the run early (after this many completed epochs)
  std::function<void(const std::string&)> progress;
};

/// Runs the adversarial loop and writes latest.ckpt, best.ckpt, losses.jsonl and
/// config.json under `checkpoint_dir`. Returns the final state.
ModelCheckpoint train(const TrainConfig& cfg, const DatasetManifest& manifest, const std::string& checkpoint_dir,
                      const TrainOptions& options = {});

}  // namespace floragan
