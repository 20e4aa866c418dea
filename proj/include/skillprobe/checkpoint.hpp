#pragma once

#include <filesystem>

#include "skillprobe/model.hpp"

namespace skillprobe {

// Model checkpoint directory:
//   manifest.json  {format, config, dtype, content_hash, seed, sections[]}
//   weights.bin    raw little-endian row-major tensors in ParamLayout order
// The hash always covers the f64le encoding of the in-memory weights.
void save_model(const ModelParams& params, const std::filesystem::path& dir,
                const char* dtype = "f64le");
ModelParams load_model(const std::filesystem::path& dir);

// Manifest text written by save_model.
std::string model_manifest_json(const ModelParams& params, const char* dtype);

}  // namespace skillprobe
