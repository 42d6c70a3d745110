#pragma once

#include <string>
#include <vector>

#include "vofm/model_io.hpp"

namespace vofm::evalrep {

// Pooled error statistics over in-disc pixels. Deviation statistics are the
// same quantities for the zero predictor (truth vs zero), so the dataset's
// own deviation scale is always available for ratio comparisons.
struct MetricsReport {
  double rmse_nm = 0.0;
  double median_abs_nm = 0.0;
  double deviation_rmse_nm = 0.0;
  double deviation_median_abs_nm = 0.0;
  double median_of_sample_medians_nm = 0.0;
  std::vector<double> per_sample_rmse_nm;
  int sample_count = 0;
  long long pixel_count = 0;
  std::string dataset_digest;
  std::string model_digest;
};

// Pooled RMSE over all in-disc pixels of all samples, 64-bit accumulation.
double rmse_in_disc(const std::vector<SurfaceGrid>& preds,
                    const std::vector<SurfaceGrid>& truths);

// Pooled median of per-pixel absolute errors; even counts take the mean of
// the middle pair.
double median_abs_in_disc(const std::vector<SurfaceGrid>& preds,
                          const std::vector<SurfaceGrid>& truths);

// Full evaluation of a model on a dataset: per-sample predictions, pooled
// metrics, and the dataset's own deviation statistics.
MetricsReport evaluate(const net::Model& model, const data::Dataset& ds);

// Metrics of explicit predictions against dataset targets (used when the
// inputs were produced outside the dataset, e.g. the hybrid pipeline).
MetricsReport evaluate_predictions(const std::vector<SurfaceGrid>& preds,
                                   const data::Dataset& ds);

struct LearningCurveRow {
  double fraction;
  int train_samples;
  double single_rmse_nm;
  double ensemble_rmse_nm;
};

// Trains a fresh model (and an E-member ensemble) per fraction on nested
// seeded subsets of the training pool; all rows are evaluated against the
// same test set.
std::vector<LearningCurveRow> learning_curve(
    const data::Dataset& train_pool, const data::Dataset& test_set,
    const std::vector<double>& fractions, int ensemble_size,
    const net::UNetConfig& net_cfg, const net::TrainConfig& tc);

void write_learning_curve_csv(const std::vector<LearningCurveRow>& rows,
                              const std::string& path);

// 16-bit binary PGM (P5, maxval 65535) with a text sidecar "<path>.scale"
// recording min/max nm so pixel values round-trip.
void emit_heatmap(const SurfaceGrid& grid, const std::string& path);
SurfaceGrid read_heatmap(const std::string& path);

// JSON report plus "<path>.txt" with an aligned RMSE/Median table.
void write_report(const MetricsReport& report, const std::string& path);
MetricsReport read_report(const std::string& path);

}  // namespace vofm::evalrep
