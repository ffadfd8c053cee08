#pragma once

#include <filesystem>

#include "sgmlab/model.hpp"
#include "json.hpp"

namespace sgmlab {

inline constexpr int kCheckpointVersion = 1;

// JSON container: layer shapes, parameters, freeze masks, adapters and the
// model RNG state. Numbers are written in shortest round-trip form, so
// save -> load is bit-exact.
template <class T>
nlohmann::json checkpoint_to_json(const Model<T>& model);

template <class T>
Model<T> checkpoint_from_json(const nlohmann::json& j);

template <class T>
void save_checkpoint(const Model<T>& model, const std::filesystem::path& path);

template <class T>
Model<T> load_checkpoint(const std::filesystem::path& path);

}  // namespace sgmlab
