#include "szoo/serialize.hpp"

namespace szoo {

using nlohmann::json;

json config_to_json(const ModelConfig& c) {
  const auto& a = c.attention;
  return {{"name", c.name},
          {"family", to_string(c.family)},
          {"attention",
           {{"kind", to_string(a.kind)},
            {"se_reduction", a.se_reduction},
            {"cbam_spatial_kernel", a.cbam_spatial_kernel},
            {"cbam_reduction", a.cbam_reduction},
            {"cbam_spatial_bn", a.cbam_spatial_bn},
            {"coord_reduction", a.coord_reduction},
            {"coord_min_channels", a.coord_min_channels},
            {"eca_gamma", a.eca_gamma},
            {"eca_b", a.eca_b}}},
          {"ghost", c.ghost},
          {"depth_multiplier", c.depth_multiplier},
          {"width_multiplier", c.width_multiplier},
          {"resolution", c.resolution},
          {"in_channels", c.in_channels},
          {"num_classes", c.num_classes},
          {"base_depth", c.base_depth},
          {"widen_factor", c.widen_factor},
          {"stem_channels", c.stem_channels},
          {"patch", c.patch},
          {"hidden", c.hidden},
          {"layers", c.layers},
          {"token_dim", c.token_dim},
          {"channel_dim", c.channel_dim},
          {"heads", c.heads},
          {"mlp_dim", c.mlp_dim},
          {"use_class_token", c.use_class_token}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.name = j.value("name", c.name);
  if (j.contains("family")) c.family = parse_family(j["family"].get<std::string>());
  if (j.contains("attention")) {
    const auto& a = j["attention"];
    auto& s = c.attention;
    if (a.is_string()) {
      s.kind = parse_attention(a.get<std::string>());
    } else {
      if (a.contains("kind")) s.kind = parse_attention(a["kind"].get<std::string>());
      s.se_reduction = a.value("se_reduction", s.se_reduction);
      s.cbam_spatial_kernel = a.value("cbam_spatial_kernel", s.cbam_spatial_kernel);
      s.cbam_reduction = a.value("cbam_reduction", s.cbam_reduction);
      s.cbam_spatial_bn = a.value("cbam_spatial_bn", s.cbam_spatial_bn);
      s.coord_reduction = a.value("coord_reduction", s.coord_reduction);
      s.coord_min_channels = a.value("coord_min_channels", s.coord_min_channels);
      s.eca_gamma = a.value("eca_gamma", s.eca_gamma);
      s.eca_b = a.value("eca_b", s.eca_b);
    }
  }
  c.ghost = j.value("ghost", c.ghost);
  c.depth_multiplier = j.value("depth_multiplier", c.depth_multiplier);
  c.width_multiplier = j.value("width_multiplier", c.width_multiplier);
  c.resolution = j.value("resolution", c.resolution);
  c.in_channels = j.value("in_channels", c.in_channels);
  c.num_classes = j.value("num_classes", c.num_classes);
  c.base_depth = j.value("base_depth", c.base_depth);
  c.widen_factor = j.value("widen_factor", c.widen_factor);
  c.stem_channels = j.value("stem_channels", c.stem_channels);
  c.patch = j.value("patch", c.patch);
  c.hidden = j.value("hidden", c.hidden);
  c.layers = j.value("layers", c.layers);
  c.token_dim = j.value("token_dim", c.token_dim);
  c.channel_dim = j.value("channel_dim", c.channel_dim);
  c.heads = j.value("heads", c.heads);
  c.mlp_dim = j.value("mlp_dim", c.mlp_dim);
  c.use_class_token = j.value("use_class_token", c.use_class_token);
  return c;
}

ModelConfig resolve_model_json(const json& j) {
  if (j.is_string()) return zoo_config(j.get<std::string>());
  if (!j.is_object()) throw std::invalid_argument("model entry must be a zoo name or an object");
  if (j.contains("family") || !j.contains("name")) return config_from_json(j);
  json merged = config_to_json(zoo_config(j["name"].get<std::string>()));
  merged.merge_patch(j);
  return config_from_json(merged);
}

json train_config_to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs}, {"base_lr", c.base_lr}, {"decay_epoch", c.decay_epoch}, {"decay_factor", c.decay_factor},
          {"batch_size", c.batch_size}, {"beta1", c.beta1}, {"beta2", c.beta2}, {"eps", c.eps}, {"seed", c.seed}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.base_lr = j.value("base_lr", c.base_lr);
  c.decay_epoch = j.value("decay_epoch", c.decay_epoch);
  c.decay_factor = j.value("decay_factor", c.decay_factor);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.eps = j.value("eps", c.eps);
  c.seed = j.value("seed", c.seed);
  return c;
}

json synth_config_to_json(const SynthConfig& c) {
  return {{"n", c.n}, {"num_classes", c.num_classes}, {"channels", c.channels}, {"resolution", c.resolution},
          {"seed", c.seed}, {"noise", c.noise}, {"min_labels", c.min_labels}, {"max_labels", c.max_labels},
          {"signature_seed", c.signature_seed}, {"signature_shift", c.signature_shift}, {"id_prefix", c.id_prefix},
          {"split", c.split}};
}

SynthConfig synth_config_from_json(const json& j) {
  SynthConfig c;
  c.n = j.value("n", c.n);
  c.num_classes = j.value("num_classes", c.num_classes);
  c.channels = j.value("channels", c.channels);
  c.resolution = j.value("resolution", c.resolution);
  c.seed = j.value("seed", c.seed);
  c.noise = j.value("noise", c.noise);
  c.min_labels = j.value("min_labels", c.min_labels);
  c.max_labels = j.value("max_labels", c.max_labels);
  c.signature_seed = j.value("signature_seed", c.signature_seed);
  c.signature_shift = j.value("signature_shift", c.signature_shift);
  c.id_prefix = j.value("id_prefix", c.id_prefix);
  c.split = j.value("split", c.split);
  return c;
}

}  // namespace szoo
