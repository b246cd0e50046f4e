#pragma once

// Model configurations, the four network families, and parameter accounting.

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "szoo/attention.hpp"
#include "szoo/blocks.hpp"
#include "szoo/module.hpp"

namespace szoo {

enum class Family { wrn, efficientnet, mlpmixer, vit };
std::string to_string(Family f);
Family parse_family(const std::string& s);

struct ModelConfig {
  std::string name;
  Family family = Family::wrn;
  AttentionSpec attention;
  bool ghost = false;
  double depth_multiplier = 1.0;
  double width_multiplier = 1.0;
  int resolution = 60;
  int in_channels = 10;
  int num_classes = 19;

  // wrn
  int base_depth = 10;
  int widen_factor = 2;
  int stem_channels = 16;

  // mlpmixer / vit
  int patch = 12;
  int hidden = 128;
  int layers = 4;
  int token_dim = 64;
  int channel_dim = 200;
  int heads = 4;
  int mlp_dim = 768;
  bool use_class_token = true;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct WrnLayout {
  int blocks_per_group = 1;
  std::array<std::int64_t, 3> widths{};
  bool operator==(const WrnLayout&) const = default;
};
WrnLayout wrn_layout(const ModelConfig& c);

struct MBStage {
  int repeats, kernel, stride, expand;
  std::int64_t in, out;
  bool operator==(const MBStage&) const = default;
};
struct EfficientNetLayout {
  std::int64_t stem = 32, head = 1280;
  std::vector<MBStage> stages;
  bool operator==(const EfficientNetLayout&) const = default;
};
/// Nearest multiple of 8 that keeps at least 90% of filters * w.
std::int64_t round_filters(std::int64_t filters, double w);
int round_repeats(int repeats, double d);
EfficientNetLayout efficientnet_layout(const ModelConfig& c);

/// True when both configs build structurally identical networks.
bool same_network(const ModelConfig& a, const ModelConfig& b);

/// Body of a model: `features` ends at the final feature map (NCHW for the
/// convolutional families, N x T x D tokens otherwise); `head` maps it to logits.
class Network {
 public:
  virtual ~Network() = default;
  virtual Tensor features(Context& ctx, const Tensor& x) const = 0;
  virtual Tensor head(Context& ctx, const Tensor& features) const = 0;
  virtual bool convolutional() const = 0;
};

class Model {
 public:
  Model() = default;
  Model(ModelConfig config, std::shared_ptr<const Network> net, ParameterStore params)
      : config_(std::move(config)), net_(std::move(net)), params_(std::move(params)) {}

  const ModelConfig& config() const { return config_; }
  const Network& network() const { return *net_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }

  Tensor forward(Context& ctx, const Tensor& x) const { return net_->head(ctx, net_->features(ctx, x)); }
  /// Eval-mode logits without gradients.
  Tensor predict(const Tensor& x);

  std::int64_t count_params() const { return params_.total_elements(); }
  Model clone() const { return Model(config_, net_, params_.clone()); }

 private:
  ModelConfig config_;
  std::shared_ptr<const Network> net_;
  ParameterStore params_;
};

Model build_wrn(const ModelConfig& c, std::uint64_t seed = 0);
Model build_efficientnet(const ModelConfig& c, std::uint64_t seed = 0);
Model build_mlp_mixer(const ModelConfig& c, std::uint64_t seed = 0);
Model build_vit(const ModelConfig& c, std::uint64_t seed = 0);
Model build_model(const ModelConfig& c, std::uint64_t seed = 0);

std::int64_t count_params(const Model& m);

/// Head parameters are named with this prefix.
inline constexpr const char* kHeadPrefix = "head.";

// --- exposed sub-layers (used by the gradient tests) -----------------------

class MixerLayer {
 public:
  MixerLayer() = default;
  MixerLayer(Builder b, std::int64_t tokens, std::int64_t hidden, std::int64_t token_dim, std::int64_t channel_dim);
  /// x: N x T x D.
  Tensor forward(Context& ctx, const Tensor& x) const;

 private:
  LayerNormLayer ln1_, ln2_;
  DenseLayer tok1_, tok2_, ch1_, ch2_;
};

class TransformerLayer {
 public:
  TransformerLayer() = default;
  TransformerLayer(Builder b, std::int64_t hidden, int heads, std::int64_t mlp_dim);
  Tensor forward(Context& ctx, const Tensor& x) const;

 private:
  int heads_ = 1;
  LayerNormLayer ln1_, ln2_;
  DenseLayer qkv_, proj_, fc1_, fc2_;
};

/// N x C x H x W -> N x (H/p * W/p) x (p * p * C), patches in row-major order.
Tensor extract_patches(const Tensor& x, int patch);

// --- model zoo ----------------------------------------------------------------

/// Named configs: WRNB0[-SE|-ECA|-CBAM|-COORD][-GHOST], the same suffixes on
/// EfficientNetB0, MLPMixer[/p], MLPMixerTiny, ViT/p, ViTM/20.
ModelConfig zoo_config(const std::string& name);
std::vector<std::string> zoo_names();
/// Closest known name by edit distance.
std::string nearest_zoo_name(const std::string& name);

}  // namespace szoo
