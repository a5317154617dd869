#pragma once

#include "rdcm/model.hpp"

#include <filesystem>

namespace rdcm {

/// Writes `params.bin`, every parameter value as little-endian float64 concatenated in
/// registration order, and `params.json`, the model config plus a name/shape/offset index.
void save_model(const RdcmModel& model, const std::filesystem::path& dir);

/// Inverse of save_model. Throws LoadError on missing files or an index that does not
/// match the rebuilt architecture.
RdcmModel load_model(const std::filesystem::path& dir);

}  // namespace rdcm
