#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "zwocr/net.hpp"
#include "zwocr/train.hpp"

namespace zwocr {

// model.bin layout: 8-byte magic "ZWOCRNET", u32 format version, u32 value
// count (both little-endian), then the parameters as little-endian IEEE-754
// doubles in param_layout() order.
inline constexpr char kModelMagic[8] = {'Z', 'W', 'O', 'C', 'R', 'N', 'E', 'T'};
inline constexpr std::uint32_t kModelFormatVersion = 1;
inline constexpr std::size_t kModelHeaderBytes = 16;

std::string encode_model_bin(const ModelParams& params);
// Throws IoError on bad magic, version, or size mismatch with `dims`.
ModelParams decode_model_bin(const std::string& bytes, const ArchDims& dims);

// model.json sidecar: architecture, alphabet, tensor layout, train config.
nlohmann::json model_sidecar(const ModelParams& params, const TrainConfig& config);

struct LoadedModel {
  ModelParams params;
  TrainConfig config;
};

// Writes <dir>/model.bin and <dir>/model.json.
void save_model(const std::filesystem::path& dir, const ModelParams& params,
                const TrainConfig& config);
LoadedModel load_model(const std::filesystem::path& dir);

}  // namespace zwocr
