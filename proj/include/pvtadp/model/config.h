#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"
#include "pvtadp/encoder/pvt.h"
#include "pvtadp/nn/layers.h"

namespace pvtadp::model {

// Nested ablations: DsEnc adds downsample-and-sum fusion to Base, DsEncRes
// swaps the plain decoder blocks for residual-SE blocks, Full swaps the CBR
// skip transforms for adapters.
enum class Variant { kBase, kDsEnc, kDsEncRes, kFull };

Variant parse_variant(const std::string& name);
std::string variant_name(Variant v);

struct ModelConfig {
  Variant variant = Variant::kFull;
  enc::EncoderConfig encoder;
  std::size_t se_reduction = 8;
  nn::Activation adapter_activation = nn::Activation::kRelu;
  // Adapter bottleneck = level channels / adapter_reduction.
  std::size_t adapter_reduction = 2;
  bool adapter_shared = false;
  // Full only: false falls back to CBR skips (same parameter names as DsEncRes).
  bool adapter_enabled = true;
  std::uint64_t seed = 42;

  bool fuses() const { return variant != Variant::kBase; }
  bool residual_decoder() const { return variant == Variant::kDsEncRes || variant == Variant::kFull; }
  bool adapter_skips() const { return variant == Variant::kFull && adapter_enabled; }

  void validate() const;

  nlohmann::json to_json() const;
  // Missing keys keep their defaults; unknown keys are rejected.
  static ModelConfig from_json(const nlohmann::json& j);
};

// Small configuration used by tests and gradient checks: widths [8,16,32],
// one block per stage.
ModelConfig tiny_config(Variant variant);

}  // namespace pvtadp::model
