#pragma once

// JSON forms of model configurations.

#include <json.hpp>

#include "szoo/architectures.hpp"
#include "szoo/data.hpp"
#include "szoo/training.hpp"

namespace szoo {

nlohmann::json config_to_json(const ModelConfig& c);
/// Missing fields keep their defaults.
ModelConfig config_from_json(const nlohmann::json& j);

/// A zoo name, a full config object, or {"name": zoo name, ...overrides}.
ModelConfig resolve_model_json(const nlohmann::json& j);

nlohmann::json train_config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

nlohmann::json synth_config_to_json(const SynthConfig& c);
SynthConfig synth_config_from_json(const nlohmann::json& j);

}  // namespace szoo
