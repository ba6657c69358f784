#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "jointseg/model.hpp"

namespace jointseg {

inline constexpr std::string_view kModelMagic = "FJSTM1";
inline constexpr std::uint32_t kModelFormatVersion = 1;

// Byte-deterministic encoding of a model; layout documented in
// docs/model_format.md. Parameters are always stored as 32-bit floats.
template <typename Real>
std::vector<std::uint8_t> serialize_model(const Model<Real>& model);

Model<float> deserialize_model(std::span<const std::uint8_t> bytes);

// Writes the model and returns the CRC-32 stored in its trailer.
template <typename Real>
std::uint32_t save_model(const Model<Real>& model, const std::string& path);

Model<float> load_model(const std::string& path);

}  // namespace jointseg
