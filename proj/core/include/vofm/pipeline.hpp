#pragma once

#include <map>
#include <string>
#include <vector>

#include "vofm/calib.hpp"
#include "vofm/metrics.hpp"

namespace vofm::pipeline {

inline constexpr const char* kToolVersion = "1.0.0";

// Every command records what it ran: the manifest alone suffices to re-run it.
struct RunManifest {
  std::string command;
  std::map<std::string, std::string> flags;
  std::map<std::string, uint64_t> seeds;
  std::map<std::string, std::string> config_digests;
  std::vector<std::string> artifacts;
  std::string tool_version = kToolVersion;
  std::string timestamp;  // UTC, ISO 8601

  void write(const std::string& path) const;
};

std::string utc_timestamp();

struct ReproduceOptions {
  std::string design = "freeform";
  std::string scale = "desk";  // desk | paper
  uint64_t seed = 1;
  int workers = 1;
  // desk-scale defaults; reproduce() overrides from scale/design
  int n_samples = 4000;
  int epochs = 10;
  int batch_size = 32;
  int depth = 3;
  int base_width = 16;
};

struct ReproduceResult {
  evalrep::MetricsReport perfect;
  evalrep::MetricsReport disturbed;
  evalrep::MetricsReport calibrated;
  std::string model_path;
  std::string dataset_path;
};

// Applies the desk or full-size preset to the free parameters.
ReproduceOptions resolve_scale(ReproduceOptions opt);

// End-to-end pipeline: generate -> split -> train -> evaluate (perfect) ->
// disturb -> evaluate without calibration -> calibrate -> hybrid inputs ->
// evaluate. Writes the three-column table, reports, sample heatmaps, every
// intermediate artifact, and a manifest. Any stage failure is rethrown with
// the stage name; artifacts written so far are left in place.
ReproduceResult run_reproduce(const ReproduceOptions& opt,
                              const std::string& out_dir);

// Rebuilds specimen topographies from dataset targets and produces network
// inputs as measured by the disturbed system, with or without the hybrid
// calibration correction. Used by the reproduce pipeline and the CLI.
std::vector<SurfaceGrid> predict_disturbed(
    const net::Model& model, const data::Dataset& ds,
    const optics::Disturbance& dist,
    const calib::DisturbanceEstimate* est /* nullptr = no calibration */,
    int workers = 1);

}  // namespace vofm::pipeline
