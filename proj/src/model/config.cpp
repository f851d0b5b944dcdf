#include "pvtadp/model/config.h"

#include <stdexcept>

namespace pvtadp::model {

using nlohmann::json;

Variant parse_variant(const std::string& name) {
  if (name == "base") return Variant::kBase;
  if (name == "dsenc") return Variant::kDsEnc;
  if (name == "dsencres") return Variant::kDsEncRes;
  if (name == "full") return Variant::kFull;
  throw std::invalid_argument("unknown variant '" + name + "' (expected base, dsenc, dsencres or full)");
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kBase: return "base";
    case Variant::kDsEnc: return "dsenc";
    case Variant::kDsEncRes: return "dsencres";
    case Variant::kFull: return "full";
  }
  return "full";
}

void ModelConfig::validate() const {
  encoder.validate();
  if (se_reduction == 0) throw std::invalid_argument("se_reduction must be positive");
  if (adapter_reduction < 2) throw std::invalid_argument("adapter_reduction must be at least 2");
  for (std::size_t c : encoder.stage_channels) {
    if (residual_decoder() && c / se_reduction < 1) {
      throw std::invalid_argument("se_reduction " + std::to_string(se_reduction) + " too large for " +
                                  std::to_string(c) + " channels");
    }
    if (adapter_skips() && c / adapter_reduction < 1) {
      throw std::invalid_argument("adapter_reduction " + std::to_string(adapter_reduction) + " too large for " +
                                  std::to_string(c) + " channels");
    }
  }
}

json ModelConfig::to_json() const {
  return json{{"variant", variant_name(variant)},
              {"in_channels", encoder.in_channels},
              {"stage_channels", encoder.stage_channels},
              {"stage_depths", encoder.stage_depths},
              {"sr_ratios", encoder.sr_ratios},
              {"num_heads", encoder.num_heads},
              {"patch_strides", encoder.patch_strides},
              {"mlp_ratio", encoder.mlp_ratio},
              {"se_reduction", se_reduction},
              {"adapter_activation", nn::activation_name(adapter_activation)},
              {"adapter_reduction", adapter_reduction},
              {"adapter_shared", adapter_shared},
              {"adapter_enabled", adapter_enabled},
              {"seed", seed}};
}

ModelConfig ModelConfig::from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("model config must be a JSON object");
  ModelConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "variant") c.variant = parse_variant(value.get<std::string>());
    else if (key == "in_channels") c.encoder.in_channels = value.get<std::size_t>();
    else if (key == "stage_channels") c.encoder.stage_channels = value.get<std::vector<std::size_t>>();
    else if (key == "stage_depths") c.encoder.stage_depths = value.get<std::vector<std::size_t>>();
    else if (key == "sr_ratios") c.encoder.sr_ratios = value.get<std::vector<std::size_t>>();
    else if (key == "num_heads") c.encoder.num_heads = value.get<std::vector<std::size_t>>();
    else if (key == "patch_strides") c.encoder.patch_strides = value.get<std::vector<std::size_t>>();
    else if (key == "mlp_ratio") c.encoder.mlp_ratio = value.get<std::size_t>();
    else if (key == "se_reduction") c.se_reduction = value.get<std::size_t>();
    else if (key == "adapter_activation") c.adapter_activation = nn::parse_activation(value.get<std::string>());
    else if (key == "adapter_reduction") c.adapter_reduction = value.get<std::size_t>();
    else if (key == "adapter_shared") c.adapter_shared = value.get<bool>();
    else if (key == "adapter_enabled") c.adapter_enabled = value.get<bool>();
    else if (key == "seed") c.seed = value.get<std::uint64_t>();
    else throw std::invalid_argument("unknown model config key '" + key + "'");
  }
  c.validate();
  return c;
}

ModelConfig tiny_config(Variant variant) {
  ModelConfig c;
  c.variant = variant;
  c.encoder.stage_channels = {8, 16, 32};
  c.encoder.stage_depths = {1, 1, 1};
  c.encoder.sr_ratios = {4, 2, 1};
  c.encoder.num_heads = {1, 2, 4};
  c.encoder.mlp_ratio = 2;
  return c;
}

}  // namespace pvtadp::model
