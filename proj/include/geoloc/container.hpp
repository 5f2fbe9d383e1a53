#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "geoloc/corpus.hpp"
#include "geoloc/discretise.hpp"
#include "geoloc/neuralnet.hpp"

namespace geoloc {

inline constexpr int kModelFormatVersion = 1;

/// Everything needed to predict and embed. A text manifest comes first, then
/// two text listings (vocabulary, discretiser), then the parameter tensors as
/// little-endian float32 in row-major order.
struct ModelContainer {
  std::map<std::string, std::string> manifest;  // free-form keys: dataset, config.*, metric.*
  Vocabulary vocab;
  Discretiser discretiser;
  MlpModel model;
};

std::string serialize_model(const ModelContainer& container);
ModelContainer deserialize_model(std::string_view bytes);

void save_model(const ModelContainer& container, const std::filesystem::path& path);
ModelContainer load_model(const std::filesystem::path& path);

}  // namespace geoloc
