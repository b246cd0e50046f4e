#pragma once

// Loss, Adam, learning-rate schedule, the single-worker training loop,
// evaluation, checkpoints and fine-tuning.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "szoo/architectures.hpp"
#include "szoo/data.hpp"
#include "szoo/metrics.hpp"

namespace szoo {

struct TrainConfig {
  int epochs = 30;
  double base_lr = 1e-3;
  int decay_epoch = 24;
  double decay_factor = 0.1;
  int batch_size = 32;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-7;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Mean stable binary cross-entropy over all N*K logits.
Tensor bce_loss(const Tensor& logits, const Tensor& targets);

double lr_schedule(int epoch, const TrainConfig& cfg);

/// Per-parameter gradients of one step; absent entries are untouched parameters.
using GradientSet = std::vector<std::optional<Tensor>>;

class Adam {
 public:
  Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-7) : b1_(beta1), b2_(beta2), eps_(eps) {}
  explicit Adam(const TrainConfig& c) : Adam(c.beta1, c.beta2, c.eps) {}

  /// m and v follow every parameter with a gradient; the update uses the
  /// bias-corrected moments m_hat / (sqrt(v_hat) + eps).
  void step(ParameterStore& params, const GradientSet& grads, double lr);

  std::int64_t steps() const { return t_; }
  const std::optional<Tensor>& first_moment(ParamId id) const { return m_.at(id); }
  const std::optional<Tensor>& second_moment(ParamId id) const { return v_.at(id); }

 private:
  double b1_, b2_, eps_;
  std::int64_t t_ = 0;
  std::vector<std::optional<Tensor>> m_, v_;
};

/// Options shared by every forward/backward pass of a training run.
struct StepOptions {
  std::function<bool(const std::string&)> frozen;
  BatchNormCollective* bn_collective = nullptr;
  /// Multiplies the loss before backward; workers use it to weight unequal shards.
  double loss_scale = 1.0;
};

struct StepResult {
  double loss = 0.0;
  GradientSet grads;
};

/// One forward/backward pass in training mode.
StepResult compute_gradients(Model& model, const Batch& batch, const StepOptions& opt = {});

/// Shuffled sample order of one epoch; a pure function of (n, epoch, seed).
std::vector<std::size_t> epoch_order(std::size_t n, int epoch, std::uint64_t seed);

struct TrainStats {
  double wall_seconds = 0.0;
  std::vector<double> epoch_loss;
  std::int64_t steps = 0;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using EpochCallback = std::function<void(int epoch, double loss)>;

TrainStats train(Model& model, const Dataset& ds, const TrainConfig& cfg, const StepOptions& opt = {},
                 const EpochCallback& on_epoch = {});

struct EvalResult {
  MetricsReport report;
  double inference_rate = 0.0;  // images per second
  std::vector<std::vector<double>> probabilities;
};

EvalResult evaluate(Model& model, const Dataset& ds, double tau = 0.5, int batch_size = 64);

// Checkpoints --------------------------------------------------------------------

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<unsigned char> checkpoint_bytes(const Model& model);
Model model_from_checkpoint(const std::vector<unsigned char>& bytes);
void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

/// Copies every backbone tensor from source into a fresh model whose head has
/// new_num_classes outputs, then trains it. With freeze_backbone only the head
/// receives updates and backbone norm layers stay in inference mode.
Model finetune(const Model& source, const Dataset& ds, int new_num_classes, bool freeze_backbone, const TrainConfig& cfg,
               std::uint64_t head_seed = 0, TrainStats* stats = nullptr);

bool is_head_param(const std::string& name);

}  // namespace szoo
