#include "vofm/model_io.hpp"

#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>

#include "vofm/digest.hpp"

using nlohmann::json;

namespace vofm::net {

namespace {
constexpr int kModelFormatVersion = 1;
}

std::string serialize_model(const Model& model) {
  json h;
  h["format_version"] = kModelFormatVersion;
  h["unet"] = {{"depth", model.net.config.depth},
               {"base_width", model.net.config.base_width},
               {"in_channels", model.net.config.in_channels}};
  h["train"] = {{"epochs", model.train_config.epochs},
                {"batch_size", model.train_config.batch_size},
                {"lr0", model.train_config.lr0},
                {"drop_factor", model.train_config.drop_factor},
                {"drop_period", model.train_config.drop_period},
                {"weight_decay", model.train_config.weight_decay},
                {"seed", model.train_config.seed},
                {"beta1", model.train_config.beta1},
                {"beta2", model.train_config.beta2},
                {"eps", model.train_config.eps}};
  h["norm"] = {{"input_mean", model.norm.input_mean},
               {"input_std", model.norm.input_std},
               {"target_mean", model.norm.target_mean},
               {"target_std", model.norm.target_std}};
  json manifest = json::array();
  for (const auto& b : model.net.blocks)
    manifest.push_back({{"name", b.name},
                        {"weights", {b.weights.n, b.weights.c, b.weights.h, b.weights.w}},
                        {"bias", b.bias.size()}});
  h["manifest"] = manifest;

  std::string out = h.dump() + "\n";
  for (const auto& b : model.net.blocks) {
    size_t w_bytes = b.weights.size() * sizeof(float);
    size_t off = out.size();
    out.resize(off + w_bytes + b.bias.size() * sizeof(float));
    std::memcpy(out.data() + off, b.weights.data(), w_bytes);
    std::memcpy(out.data() + off + w_bytes, b.bias.data(),
                b.bias.size() * sizeof(float));
  }
  return out;
}

std::string Model::digest() const { return digest_hex(serialize_model(*this)); }

void save_model(const Model& model, const std::string& path) {
  std::string bytes = serialize_model(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::io, "short write to " + path);
}

Model load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  size_t nl = bytes.find('\n');
  if (nl == std::string::npos)
    throw Error(ErrorKind::format, "model file has no header line: " + path);
  json h;
  try {
    h = json::parse(bytes.substr(0, nl));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::format, std::string("bad model header: ") + e.what());
  }
  if (!h.contains("format_version") ||
      h["format_version"].get<int>() != kModelFormatVersion)
    throw Error(ErrorKind::format, "model format version mismatch");

  Model model;
  try {
    model.net.config.depth = h.at("unet").at("depth").get<int>();
    model.net.config.base_width = h.at("unet").at("base_width").get<int>();
    model.net.config.in_channels = h.at("unet").at("in_channels").get<int>();
    const auto& t = h.at("train");
    model.train_config.epochs = t.at("epochs").get<int>();
    model.train_config.batch_size = t.at("batch_size").get<int>();
    model.train_config.lr0 = t.at("lr0").get<double>();
    model.train_config.drop_factor = t.at("drop_factor").get<double>();
    model.train_config.drop_period = t.at("drop_period").get<int>();
    model.train_config.weight_decay = t.at("weight_decay").get<double>();
    model.train_config.seed = t.at("seed").get<uint64_t>();
    model.train_config.beta1 = t.at("beta1").get<double>();
    model.train_config.beta2 = t.at("beta2").get<double>();
    model.train_config.eps = t.at("eps").get<double>();
    const auto& nj = h.at("norm");
    model.norm.input_mean = nj.at("input_mean").get<std::vector<double>>();
    model.norm.input_std = nj.at("input_std").get<std::vector<double>>();
    model.norm.target_mean = nj.at("target_mean").get<double>();
    model.norm.target_std = nj.at("target_std").get<double>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::format, std::string("bad model header: ") + e.what());
  }

  // rebuild the block structure, then overwrite parameters from the payload
  model.net = UNet<float>::build(model.net.config, 0);
  const auto& manifest = h.at("manifest");
  if (manifest.size() != model.net.blocks.size())
    throw Error(ErrorKind::format, "model manifest length mismatch");
  size_t off = nl + 1;
  for (size_t i = 0; i < model.net.blocks.size(); ++i) {
    auto& b = model.net.blocks[i];
    const auto& mj = manifest[i];
    if (mj.at("name").get<std::string>() != b.name)
      throw Error(ErrorKind::format, "model manifest block name mismatch");
    auto shape = mj.at("weights").get<std::vector<int>>();
    if (shape != std::vector<int>{b.weights.n, b.weights.c, b.weights.h, b.weights.w} ||
        mj.at("bias").get<size_t>() != b.bias.size())
      throw Error(ErrorKind::format, "model manifest shape mismatch");
    size_t w_bytes = b.weights.size() * sizeof(float);
    size_t b_bytes = b.bias.size() * sizeof(float);
    if (off + w_bytes + b_bytes > bytes.size())
      throw Error(ErrorKind::format, "truncated model file: " + path);
    std::memcpy(b.weights.data(), bytes.data() + off, w_bytes);
    std::memcpy(b.bias.data(), bytes.data() + off + w_bytes, b_bytes);
    off += w_bytes + b_bytes;
  }
  if (off != bytes.size())
    throw Error(ErrorKind::format, "trailing bytes in model file: " + path);
  return model;
}

}  // namespace vofm::net
