#include "vofm/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>

#include "vofm/digest.hpp"
#include "vofm/parallel.hpp"
#include "vofm/rng.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace vofm::data {

namespace {

constexpr int kDatasetFormatVersion = 1;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path);
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const void* data, size_t len) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path);
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(len));
  if (!out) throw Error(ErrorKind::io, "short write to " + path);
}

std::vector<float> read_f32_file(const std::string& path, size_t expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path);
  in.seekg(0, std::ios::end);
  size_t bytes = static_cast<size_t>(in.tellg());
  if (bytes != expected * sizeof(float))
    throw Error(ErrorKind::format,
                bytes < expected * sizeof(float)
                    ? "truncated dataset file: " + path
                    : "oversized dataset file: " + path);
  in.seekg(0);
  std::vector<float> v(expected);
  in.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(bytes));
  if (!in) throw Error(ErrorKind::io, "read failure on " + path);
  return v;
}

}  // namespace

optics::ForwardConfig Dataset::forward_config() const {
  return optics::ForwardConfig::from_json(meta.config_json);
}

std::string Dataset::content_digest() const {
  Fnv1a f;
  f.update(inputs.data(), inputs.size() * sizeof(float));
  f.update(targets.data(), targets.size() * sizeof(float));
  return f.hex();
}

SurfaceGrid sample_delta_topography(uint64_t seed, uint64_t index, int grid_size,
                                    const SamplingParams& sp) {
  Rng rng(derive_stream(seed, index));
  zernike::ZernikeCoeffs coeffs;
  coeffs.reserve(sp.j_max - sp.j_min + 1);
  for (int j = sp.j_min; j <= sp.j_max; ++j)
    coeffs.push_back({j, rng.uniform(-1.0, 1.0)});
  double scale =
      std::exp(rng.uniform(std::log(sp.scale_min_nm), std::log(sp.scale_max_nm)));
  SurfaceGrid g = zernike::synthesize_surface(coeffs, grid_size);
  double sum2 = 0.0;
  size_t n_in = 0;
  for (int r = 0; r < grid_size; ++r)
    for (int c = 0; c < grid_size; ++c)
      if (in_disc(r, c, grid_size)) {
        sum2 += g.at(r, c) * g.at(r, c);
        ++n_in;
      }
  double rms = std::sqrt(sum2 / static_cast<double>(n_in));
  if (rms > 0.0) {
    double f = scale / rms;
    for (auto& v : g.values) v *= f;
  }
  return g;
}

Dataset generate_dataset(const std::string& design, int n, uint64_t seed,
                         const optics::ForwardConfig& cfg,
                         const SamplingParams& sp, int workers) {
  if (n < 1) throw Error(ErrorKind::invalid_input, "sample count must be >= 1");
  cfg.validate();
  if (cfg.design != design)
    throw Error(ErrorKind::invalid_input, "design does not match forward config");
  Dataset ds;
  ds.meta.design = design;
  ds.meta.seed = seed;
  ds.meta.sample_count = n;
  ds.meta.grid_size = cfg.grid_size;
  ds.meta.channel_count = cfg.channel_count();
  ds.meta.sampling = sp;
  ds.meta.config_digest = cfg.digest();
  ds.meta.config_json = cfg.to_json();
  ds.inputs.assign(static_cast<size_t>(n) * ds.input_sample_stride(), 0.0f);
  ds.targets.assign(static_cast<size_t>(n) * ds.target_sample_stride(), 0.0f);

  parallel_for(n, workers, [&](int i) {
    SurfaceGrid dt = sample_delta_topography(seed, static_cast<uint64_t>(i),
                                             cfg.grid_size, sp);
    OPLField dl = optics::delta_opd_perfect(dt, cfg);
    float* in = ds.inputs.data() + static_cast<size_t>(i) * ds.input_sample_stride();
    float* tg = ds.targets.data() + static_cast<size_t>(i) * ds.target_sample_stride();
    for (size_t p = 0; p < dl.values.size(); ++p)
      in[p] = static_cast<float>(dl.values[p]);
    for (size_t p = 0; p < dt.values.size(); ++p)
      tg[p] = static_cast<float>(dt.values[p]);
  });
  ds.meta.content_digest = ds.content_digest();
  return ds;
}

Dataset subset_dataset(const Dataset& ds, const std::vector<int>& indices) {
  if (indices.empty())
    throw Error(ErrorKind::invalid_input, "empty subset");
  Dataset out;
  out.meta = ds.meta;
  out.meta.sample_count = static_cast<int>(indices.size());
  out.inputs.reserve(indices.size() * ds.input_sample_stride());
  out.targets.reserve(indices.size() * ds.target_sample_stride());
  for (int i : indices) {
    if (i < 0 || i >= ds.meta.sample_count)
      throw Error(ErrorKind::invalid_input, "subset index out of range");
    out.inputs.insert(out.inputs.end(), ds.input(i),
                      ds.input(i) + ds.input_sample_stride());
    out.targets.insert(out.targets.end(), ds.target(i),
                       ds.target(i) + ds.target_sample_stride());
  }
  out.meta.content_digest = out.content_digest();
  return out;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double test_frac,
                                          uint64_t seed) {
  if (!(test_frac > 0.0 && test_frac < 1.0))
    throw Error(ErrorKind::invalid_input, "test fraction must be in (0, 1)");
  const int n = ds.meta.sample_count;
  int n_test = static_cast<int>(std::llround(n * test_frac));
  if (n_test < 1 || n_test >= n)
    throw Error(ErrorKind::invalid_input, "split leaves an empty side");
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(derive_stream(seed, 0x5917));
  for (int i = n - 1; i > 0; --i) {
    int j = static_cast<int>(rng.below(static_cast<uint64_t>(i) + 1));
    std::swap(idx[i], idx[j]);
  }
  std::vector<int> test_idx(idx.begin(), idx.begin() + n_test);
  std::vector<int> train_idx(idx.begin() + n_test, idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  std::sort(train_idx.begin(), train_idx.end());
  return {subset_dataset(ds, train_idx), subset_dataset(ds, test_idx)};
}

NormStats compute_norm_stats(const Dataset& train) {
  if (train.meta.sample_count < 1)
    throw Error(ErrorKind::invalid_input, "empty training set");
  const int m = train.meta.grid_size;
  const int k = train.meta.channel_count;
  const int n = train.meta.sample_count;
  optics::ForwardConfig cfg = train.forward_config();

  NormStats st;
  st.input_mean.resize(k);
  st.input_std.resize(k);
  for (int ch = 0; ch < k; ++ch) {
    auto mask = optics::channel_mask(cfg.channels[ch], m);
    std::vector<int> px;
    for (int i = 0; i < m * m; ++i)
      if (mask[i]) px.push_back(i);
    double sum = 0.0, sum2 = 0.0;
    for (int s = 0; s < n; ++s) {
      const float* in = train.input(s) + static_cast<size_t>(ch) * m * m;
      for (int i : px) {
        sum += in[i];
        sum2 += static_cast<double>(in[i]) * in[i];
      }
    }
    double cnt = static_cast<double>(px.size()) * n;
    double mean = sum / cnt;
    double var = sum2 / cnt - mean * mean;
    double sd = var > 0.0 ? std::sqrt(var) : 0.0;
    if (!(sd > 1e-12))
      throw Error(ErrorKind::invalid_input,
                  "degenerate input channel " + std::to_string(ch) +
                      ": zero variance over the training set");
    st.input_mean[ch] = mean;
    st.input_std[ch] = sd;
  }
  {
    auto mask = disc_mask(m);
    std::vector<int> px;
    for (int i = 0; i < m * m; ++i)
      if (mask[i]) px.push_back(i);
    double sum = 0.0, sum2 = 0.0;
    for (int s = 0; s < n; ++s) {
      const float* tg = train.target(s);
      for (int i : px) {
        sum += tg[i];
        sum2 += static_cast<double>(tg[i]) * tg[i];
      }
    }
    double cnt = static_cast<double>(px.size()) * n;
    st.target_mean = sum / cnt;
    double var = sum2 / cnt - st.target_mean * st.target_mean;
    double sd = var > 0.0 ? std::sqrt(var) : 0.0;
    if (!(sd > 1e-12))
      throw Error(ErrorKind::invalid_input,
                  "degenerate target channel: zero variance over the training set");
    st.target_std = sd;
  }
  return st;
}

void save_dataset(const Dataset& ds, const std::string& path) {
  std::error_code ec;
  fs::create_directories(path, ec);
  write_file(path + "/inputs.bin", ds.inputs.data(),
             ds.inputs.size() * sizeof(float));
  write_file(path + "/targets.bin", ds.targets.data(),
             ds.targets.size() * sizeof(float));
  json j;
  j["format_version"] = kDatasetFormatVersion;
  j["design"] = ds.meta.design;
  j["seed"] = ds.meta.seed;
  j["sample_count"] = ds.meta.sample_count;
  j["grid_size"] = ds.meta.grid_size;
  j["channel_count"] = ds.meta.channel_count;
  j["sampling"] = {{"j_min", ds.meta.sampling.j_min},
                   {"j_max", ds.meta.sampling.j_max},
                   {"scale_min_nm", ds.meta.sampling.scale_min_nm},
                   {"scale_max_nm", ds.meta.sampling.scale_max_nm}};
  j["config_digest"] = ds.meta.config_digest;
  j["config"] = json::parse(ds.meta.config_json);
  j["content_digest"] = ds.content_digest();
  std::string text = j.dump(2) + "\n";
  write_file(path + "/meta", text.data(), text.size());
}

Dataset load_dataset(const std::string& path) {
  json j;
  try {
    j = json::parse(read_file(path + "/meta"));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::format, std::string("bad dataset meta: ") + e.what());
  }
  if (!j.contains("format_version") ||
      j["format_version"].get<int>() != kDatasetFormatVersion)
    throw Error(ErrorKind::format, "dataset format version mismatch");
  Dataset ds;
  try {
    ds.meta.design = j.at("design").get<std::string>();
    ds.meta.seed = j.at("seed").get<uint64_t>();
    ds.meta.sample_count = j.at("sample_count").get<int>();
    ds.meta.grid_size = j.at("grid_size").get<int>();
    ds.meta.channel_count = j.at("channel_count").get<int>();
    const auto& sj = j.at("sampling");
    ds.meta.sampling.j_min = sj.at("j_min").get<int>();
    ds.meta.sampling.j_max = sj.at("j_max").get<int>();
    ds.meta.sampling.scale_min_nm = sj.at("scale_min_nm").get<double>();
    ds.meta.sampling.scale_max_nm = sj.at("scale_max_nm").get<double>();
    ds.meta.config_digest = j.at("config_digest").get<std::string>();
    ds.meta.config_json = j.at("config").dump(2) + "\n";
    ds.meta.content_digest = j.at("content_digest").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::format, std::string("bad dataset meta: ") + e.what());
  }
  ds.inputs = read_f32_file(
      path + "/inputs.bin",
      static_cast<size_t>(ds.meta.sample_count) * ds.input_sample_stride());
  ds.targets = read_f32_file(
      path + "/targets.bin",
      static_cast<size_t>(ds.meta.sample_count) * ds.target_sample_stride());
  if (ds.content_digest() != ds.meta.content_digest)
    throw Error(ErrorKind::format, "dataset content digest mismatch: " + path);
  return ds;
}

}  // namespace vofm::data
