#include "vofm/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>

#include "vofm/parallel.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace vofm::pipeline {

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path);
  out << text;
  if (!out) throw Error(ErrorKind::io, "short write to " + path);
}

[[noreturn]] void fail_stage(const std::string& stage, const std::exception& e) {
  const Error* err = dynamic_cast<const Error*>(&e);
  throw Error(err ? err->kind() : ErrorKind::numeric,
              "stage '" + stage + "' failed: " + e.what());
}

template <class Fn>
auto stage(const std::string& name, Fn&& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    fail_stage(name, e);
  }
}

}  // namespace

std::string utc_timestamp() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void RunManifest::write(const std::string& path) const {
  json j;
  j["command"] = command;
  j["flags"] = flags;
  j["seeds"] = seeds;
  j["config_digests"] = config_digests;
  j["artifacts"] = artifacts;
  j["tool_version"] = tool_version;
  j["timestamp"] = timestamp;
  write_text(path, j.dump(2) + "\n");
}

ReproduceOptions resolve_scale(ReproduceOptions opt) {
  if (opt.scale == "desk") {
    opt.n_samples = 4000;
    opt.epochs = 10;
    opt.batch_size = 32;
    opt.depth = 3;
    opt.base_width = 16;
  } else if (opt.scale == "paper") {
    opt.n_samples = 22000;
    opt.epochs = 15;
    opt.batch_size = (opt.design == "asphere") ? 8 : 64;
    opt.depth = 3;
    opt.base_width = 16;
  } else {
    throw Error(ErrorKind::invalid_input, "unknown scale: " + opt.scale);
  }
  return opt;
}

std::vector<SurfaceGrid> predict_disturbed(const net::Model& model,
                                           const data::Dataset& ds,
                                           const optics::Disturbance& dist,
                                           const calib::DisturbanceEstimate* est,
                                           int workers) {
  optics::ForwardConfig cfg = ds.forward_config();
  const int m = cfg.grid_size;
  SurfaceGrid design = optics::design_topography(cfg.design, m);
  std::vector<SurfaceGrid> preds(ds.meta.sample_count);
  parallel_for(ds.meta.sample_count, workers, [&](int i) {
    SurfaceGrid specimen(m);
    const float* dt = ds.target(i);
    for (size_t p = 0; p < specimen.values.size(); ++p)
      specimen.values[p] = design.values[p] + dt[p];
    OPLField input =
        est ? calib::hybrid_delta_opd(specimen, cfg, dist, *est)
            : calib::uncalibrated_delta_opd(specimen, cfg, dist);
    preds[i] = net::predict(model.net, model.norm, input);
  });
  return preds;
}

ReproduceResult run_reproduce(const ReproduceOptions& raw,
                              const std::string& out_dir) {
  ReproduceOptions opt = resolve_scale(raw);
  fs::create_directories(out_dir);
  ReproduceResult result;

  optics::ForwardConfig cfg = optics::default_config(opt.design);
  write_text(out_dir + "/forward_config.json", cfg.to_json());

  // gen-data
  data::Dataset full = stage("gen-data", [&] {
    return data::generate_dataset(opt.design, opt.n_samples, opt.seed, cfg, {},
                                  opt.workers);
  });
  result.dataset_path = out_dir + "/dataset";
  stage("gen-data", [&] { data::save_dataset(full, result.dataset_path); return 0; });

  // split
  auto [train_ds, test_ds] = stage("split", [&] {
    return data::split_dataset(full, 0.10, derive_stream(opt.seed, 0x511));
  });

  // train
  net::Model model;
  stage("train", [&] {
    net::UNetConfig ncfg;
    ncfg.depth = opt.depth;
    ncfg.base_width = opt.base_width;
    ncfg.in_channels = cfg.channel_count();
    net::TrainConfig tc;
    tc.epochs = opt.epochs;
    tc.batch_size = opt.batch_size;
    tc.seed = derive_stream(opt.seed, 0x7121);
    model.norm = data::compute_norm_stats(train_ds);
    model.train_config = tc;
    model.net = net::UNet<float>::build(ncfg, tc.seed);
    net::train(model.net, train_ds, model.norm, tc);
    return 0;
  });
  result.model_path = out_dir + "/model.vofm";
  net::save_model(model, result.model_path);

  // evaluate on the perfect system
  result.perfect = stage("eval-perfect", [&] { return evalrep::evaluate(model, test_ds); });
  evalrep::write_report(result.perfect, out_dir + "/report_perfect.json");

  // disturb the instrument
  optics::Disturbance dist = stage("disturb", [&] {
    return optics::sample_disturbance(cfg, derive_stream(opt.seed, 0xd15));
  });
  write_text(out_dir + "/disturbance_true.json", dist.to_json());

  // 30 held-out topographies for the disturbed-system comparison
  data::Dataset eval30 = stage("disturb", [&] {
    std::vector<int> idx;
    for (int i = 0; i < std::min(30, test_ds.meta.sample_count); ++i)
      idx.push_back(i);
    return data::subset_dataset(test_ds, idx);
  });

  result.disturbed = stage("eval-disturbed", [&] {
    auto preds = predict_disturbed(model, eval30, dist, nullptr, opt.workers);
    evalrep::MetricsReport rep = evalrep::evaluate_predictions(preds, eval30);
    rep.model_digest = model.digest();
    return rep;
  });
  evalrep::write_report(result.disturbed, out_dir + "/report_disturbed.json");

  // conventional calibration of the surrogate model
  calib::DisturbanceEstimate est = stage("calibrate", [&] {
    auto specimens = calib::generate_calibration_set(
        cfg, dist, {5e3, -5e3, 1e4, -1e4, 2e4});
    return calib::estimate_disturbance(specimens, cfg, 10);
  });
  write_text(out_dir + "/disturbance_estimate.json", est.to_json());

  result.calibrated = stage("eval-calibrated", [&] {
    auto preds = predict_disturbed(model, eval30, dist, &est, opt.workers);
    evalrep::MetricsReport rep = evalrep::evaluate_predictions(preds, eval30);
    rep.model_digest = model.digest();
    return rep;
  });
  evalrep::write_report(result.calibrated, out_dir + "/report_calibrated.json");

  // three-column table
  {
    char buf[256];
    std::string table;
    std::snprintf(buf, sizeof(buf), "%-10s %12s %12s %12s\n", "",
                  "perfect", "disturbed", "calibrated");
    table += buf;
    std::snprintf(buf, sizeof(buf), "%-10s %9.1f nm %9.1f nm %9.1f nm\n",
                  "RMSE", result.perfect.rmse_nm, result.disturbed.rmse_nm,
                  result.calibrated.rmse_nm);
    table += buf;
    std::snprintf(buf, sizeof(buf), "%-10s %9.1f nm %9.1f nm %9.1f nm\n",
                  "Median", result.perfect.median_abs_nm,
                  result.disturbed.median_abs_nm,
                  result.calibrated.median_abs_nm);
    table += buf;
    write_text(out_dir + "/table.txt", table);
  }

  // heatmaps of three sample predictions: truth, prediction, error
  stage("heatmaps", [&] {
    auto preds = net::predict_batch(model.net, model.norm, test_ds.inputs.data(),
                                    std::min(3, test_ds.meta.sample_count),
                                    test_ds.meta.channel_count,
                                    test_ds.meta.grid_size);
    for (size_t i = 0; i < preds.size(); ++i) {
      const int m = test_ds.meta.grid_size;
      SurfaceGrid truth(m), err(m);
      const float* t = test_ds.target(static_cast<int>(i));
      for (size_t p = 0; p < truth.values.size(); ++p) {
        truth.values[p] = t[p];
        err.values[p] = truth.values[p] - preds[i].values[p];
      }
      std::string base = out_dir + "/sample" + std::to_string(i);
      evalrep::emit_heatmap(truth, base + "_truth.pgm");
      evalrep::emit_heatmap(preds[i], base + "_pred.pgm");
      evalrep::emit_heatmap(err, base + "_error.pgm");
    }
    return 0;
  });

  RunManifest manifest;
  manifest.command = "reproduce";
  manifest.flags = {{"design", opt.design},
                    {"scale", opt.scale},
                    {"out", out_dir},
                    {"n", std::to_string(opt.n_samples)},
                    {"epochs", std::to_string(opt.epochs)},
                    {"batch", std::to_string(opt.batch_size)},
                    {"depth", std::to_string(opt.depth)},
                    {"width", std::to_string(opt.base_width)},
                    {"workers", std::to_string(opt.workers)}};
  manifest.seeds = {{"seed", opt.seed}};
  manifest.config_digests = {{"forward_config", cfg.digest()},
                             {"dataset", full.meta.content_digest},
                             {"model", model.digest()}};
  for (const auto& entry : fs::recursive_directory_iterator(out_dir))
    if (entry.is_regular_file() && entry.path().filename() != "manifest.json")
      manifest.artifacts.push_back(fs::relative(entry.path(), out_dir).string());
  std::sort(manifest.artifacts.begin(), manifest.artifacts.end());
  manifest.timestamp = utc_timestamp();
  manifest.write(out_dir + "/manifest.json");

  return result;
}

}  // namespace vofm::pipeline
