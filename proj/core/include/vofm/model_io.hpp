#pragma once

#include <string>

#include "vofm/train.hpp"

namespace vofm::net {

struct Model {
  UNet<float> net;
  data::NormStats norm;
  TrainConfig train_config;  // echo of the run that produced the parameters

  std::string digest() const;  // over the serialized bytes
};

// Single-line UTF-8 JSON header (format version, config, train-config echo,
// norm stats, canonical layer manifest), '\n', then raw binary32
// little-endian parameter blocks in manifest order (weights then bias per
// block). Round trips are bitwise exact.
void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

std::string serialize_model(const Model& model);

}  // namespace vofm::net
