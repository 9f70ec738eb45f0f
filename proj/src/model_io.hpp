#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "binary_io.hpp"
#include "retarget/mlp.hpp"

namespace retarget::io {

// Shared container for model files:
//   0 magic (8 bytes)   8 u32 version   12 u32 CRC-32 of every byte after offset 16
//   16 u64 metadata length, metadata JSON, then float32 network parameters.
// Each network stores its layers (weights row-major in x out, then biases),
// followed by squash center and halfwidth for limit_squash outputs.

nlohmann::json mlp_shape(const nn::MlpModel<float>& model);

std::vector<std::uint8_t> encode_model_file(std::string_view magic, std::uint32_t version,
                                            const nlohmann::json& metadata,
                                            std::span<const nn::MlpModel<float>* const> nets);

struct ModelFile {
  nlohmann::json metadata;
  std::vector<nn::MlpModel<float>> nets;
};

// `shape_key` names the metadata array holding one mlp_shape per network.
// Bad magic is a FormatError, an unknown version a VersionError, and any
// damage, including truncation, a ChecksumError.
ModelFile decode_model_file(std::span<const std::uint8_t> bytes, std::string_view magic,
                            std::uint32_t version, std::string_view what);

}  // namespace retarget::io
