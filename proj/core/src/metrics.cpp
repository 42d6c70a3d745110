#include "vofm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <sstream>

using nlohmann::json;

namespace vofm::evalrep {

namespace {

void require_pairs(const std::vector<SurfaceGrid>& preds,
                   const std::vector<SurfaceGrid>& truths) {
  if (preds.size() != truths.size() || preds.empty())
    throw Error(ErrorKind::invalid_input, "prediction/truth count mismatch");
  for (size_t i = 0; i < preds.size(); ++i)
    if (preds[i].size != truths[i].size)
      throw Error(ErrorKind::invalid_input, "prediction/truth size mismatch");
}

double median_of(std::vector<double>& v) {
  if (v.empty()) throw Error(ErrorKind::invalid_input, "median of empty set");
  std::sort(v.begin(), v.end());
  size_t n = v.size();
  if (n % 2 == 1) return v[n / 2];
  return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<SurfaceGrid> targets_as_grids(const data::Dataset& ds) {
  const int m = ds.meta.grid_size;
  std::vector<SurfaceGrid> out(ds.meta.sample_count);
  for (int i = 0; i < ds.meta.sample_count; ++i) {
    SurfaceGrid g(m);
    const float* t = ds.target(i);
    for (size_t p = 0; p < g.values.size(); ++p) g.values[p] = t[p];
    out[i] = std::move(g);
  }
  return out;
}

}  // namespace

double rmse_in_disc(const std::vector<SurfaceGrid>& preds,
                    const std::vector<SurfaceGrid>& truths) {
  require_pairs(preds, truths);
  double sum2 = 0.0;
  long long count = 0;
  for (size_t i = 0; i < preds.size(); ++i) {
    const int m = preds[i].size;
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < m; ++c)
        if (in_disc(r, c, m)) {
          double e = preds[i].at(r, c) - truths[i].at(r, c);
          sum2 += e * e;
          ++count;
        }
  }
  return std::sqrt(sum2 / static_cast<double>(count));
}

double median_abs_in_disc(const std::vector<SurfaceGrid>& preds,
                          const std::vector<SurfaceGrid>& truths) {
  require_pairs(preds, truths);
  std::vector<double> abs_err;
  for (size_t i = 0; i < preds.size(); ++i) {
    const int m = preds[i].size;
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < m; ++c)
        if (in_disc(r, c, m))
          abs_err.push_back(std::fabs(preds[i].at(r, c) - truths[i].at(r, c)));
  }
  return median_of(abs_err);
}

MetricsReport evaluate_predictions(const std::vector<SurfaceGrid>& preds,
                                   const data::Dataset& ds) {
  if (preds.size() != static_cast<size_t>(ds.meta.sample_count))
    throw Error(ErrorKind::invalid_input,
                "prediction count does not match the dataset");
  std::vector<SurfaceGrid> truths = targets_as_grids(ds);
  std::vector<SurfaceGrid> zeros(truths.size(),
                                 SurfaceGrid(ds.meta.grid_size));

  MetricsReport rep;
  rep.rmse_nm = rmse_in_disc(preds, truths);
  rep.median_abs_nm = median_abs_in_disc(preds, truths);
  rep.deviation_rmse_nm = rmse_in_disc(zeros, truths);
  rep.deviation_median_abs_nm = median_abs_in_disc(zeros, truths);
  rep.sample_count = ds.meta.sample_count;
  rep.dataset_digest = ds.meta.content_digest;

  const int m = ds.meta.grid_size;
  long long in_px = 0;
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < m; ++c)
      if (in_disc(r, c, m)) ++in_px;
  rep.pixel_count = in_px * ds.meta.sample_count;

  std::vector<double> sample_medians;
  rep.per_sample_rmse_nm.resize(preds.size());
  for (size_t i = 0; i < preds.size(); ++i) {
    double sum2 = 0.0;
    std::vector<double> abs_err;
    abs_err.reserve(in_px);
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < m; ++c)
        if (in_disc(r, c, m)) {
          double e = preds[i].at(r, c) - truths[i].at(r, c);
          sum2 += e * e;
          abs_err.push_back(std::fabs(e));
        }
    rep.per_sample_rmse_nm[i] = std::sqrt(sum2 / static_cast<double>(in_px));
    sample_medians.push_back(median_of(abs_err));
  }
  rep.median_of_sample_medians_nm = median_of(sample_medians);
  return rep;
}

MetricsReport evaluate(const net::Model& model, const data::Dataset& ds) {
  if (ds.meta.channel_count != model.net.config.in_channels)
    throw Error(ErrorKind::invalid_input,
                "dataset channels do not match the model");
  std::vector<SurfaceGrid> preds = net::predict_batch(
      model.net, model.norm, ds.inputs.data(), ds.meta.sample_count,
      ds.meta.channel_count, ds.meta.grid_size);
  MetricsReport rep = evaluate_predictions(preds, ds);
  rep.model_digest = model.digest();
  return rep;
}

std::vector<LearningCurveRow> learning_curve(
    const data::Dataset& train_pool, const data::Dataset& test_set,
    const std::vector<double>& fractions, int ensemble_size,
    const net::UNetConfig& net_cfg, const net::TrainConfig& tc) {
  if (fractions.empty() ||
      !std::is_sorted(fractions.begin(), fractions.end()))
    throw Error(ErrorKind::invalid_input,
                "fractions must be non-empty and ascending");
  for (double f : fractions)
    if (!(f > 0.0 && f <= 1.0))
      throw Error(ErrorKind::invalid_input, "fractions must lie in (0, 1]");
  if (ensemble_size < 1)
    throw Error(ErrorKind::invalid_input, "ensemble size must be >= 1");

  const int n = train_pool.meta.sample_count;
  // one seeded shuffle; fractions take nested prefixes
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_stream(tc.seed, 0x1c0e));
  for (int i = n - 1; i > 0; --i) {
    int j = static_cast<int>(rng.below(static_cast<uint64_t>(i) + 1));
    std::swap(order[i], order[j]);
  }

  std::vector<LearningCurveRow> rows;
  for (double frac : fractions) {
    int count = std::max(1, static_cast<int>(std::llround(frac * n)));
    std::vector<int> idx(order.begin(), order.begin() + count);
    std::sort(idx.begin(), idx.end());
    data::Dataset sub = data::subset_dataset(train_pool, idx);
    data::NormStats norm = data::compute_norm_stats(sub);

    std::vector<net::Model> members;
    for (int e = 0; e < ensemble_size; ++e) {
      net::TrainConfig mtc = tc;
      mtc.seed = derive_stream(tc.seed, 0xe4e + static_cast<uint64_t>(e));
      net::Model model;
      model.net = net::UNet<float>::build(net_cfg, mtc.seed);
      model.norm = norm;
      model.train_config = mtc;
      net::train(model.net, sub, norm, mtc);
      members.push_back(std::move(model));
    }

    // single-network column is the first member
    std::vector<SurfaceGrid> single = net::predict_batch(
        members[0].net, members[0].norm, test_set.inputs.data(),
        test_set.meta.sample_count, test_set.meta.channel_count,
        test_set.meta.grid_size);
    std::vector<SurfaceGrid> mean = single;
    for (size_t e = 1; e < members.size(); ++e) {
      std::vector<SurfaceGrid> p = net::predict_batch(
          members[e].net, members[e].norm, test_set.inputs.data(),
          test_set.meta.sample_count, test_set.meta.channel_count,
          test_set.meta.grid_size);
      for (size_t i = 0; i < mean.size(); ++i)
        for (size_t q = 0; q < mean[i].values.size(); ++q)
          mean[i].values[q] += p[i].values[q];
    }
    const double inv = 1.0 / members.size();
    for (auto& g : mean)
      for (double& v : g.values) v *= inv;

    std::vector<SurfaceGrid> truths = targets_as_grids(test_set);
    rows.push_back({frac, count, rmse_in_disc(single, truths),
                    rmse_in_disc(mean, truths)});
  }
  return rows;
}

void write_learning_curve_csv(const std::vector<LearningCurveRow>& rows,
                              const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path);
  out << "fraction,train_samples,single_rmse_nm,ensemble_rmse_nm\n";
  for (const auto& r : rows) {
    std::ostringstream line;
    line.precision(17);
    line << r.fraction << "," << r.train_samples << "," << r.single_rmse_nm
         << "," << r.ensemble_rmse_nm << "\n";
    out << line.str();
  }
  if (!out) throw Error(ErrorKind::io, "short write to " + path);
}

void emit_heatmap(const SurfaceGrid& grid, const std::string& path) {
  for (double v : grid.values)
    if (!std::isfinite(v))
      throw Error(ErrorKind::invalid_input, "non-finite value in heatmap grid");
  double lo = grid.values[0], hi = grid.values[0];
  for (double v : grid.values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path);
  out << "P5\n" << grid.size << " " << grid.size << "\n65535\n";
  const double span = hi - lo;
  for (double v : grid.values) {
    unsigned q = 0;
    if (span > 0.0)
      q = static_cast<unsigned>(
          std::llround((v - lo) / span * 65535.0));
    // maxval > 255: most significant byte first, per the PGM format
    out.put(static_cast<char>((q >> 8) & 0xff));
    out.put(static_cast<char>(q & 0xff));
  }
  if (!out) throw Error(ErrorKind::io, "short write to " + path);
  std::ofstream side(path + ".scale", std::ios::trunc);
  if (!side) throw Error(ErrorKind::io, "cannot write " + path + ".scale");
  side.precision(17);
  side << lo << " " << hi << "\n";
}

SurfaceGrid read_heatmap(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P5" || maxval != 65535 || w != h || w <= 0)
    throw Error(ErrorKind::format, "unsupported heatmap file: " + path);
  in.get();  // single whitespace after the header
  std::ifstream side(path + ".scale");
  if (!side) throw Error(ErrorKind::io, "cannot open " + path + ".scale");
  double lo = 0.0, hi = 0.0;
  side >> lo >> hi;
  SurfaceGrid g(w);
  for (double& v : g.values) {
    int b1 = in.get(), b0 = in.get();
    if (b1 < 0 || b0 < 0)
      throw Error(ErrorKind::format, "truncated heatmap file: " + path);
    unsigned q = (static_cast<unsigned>(b1) << 8) | static_cast<unsigned>(b0);
    v = (hi > lo) ? lo + q / 65535.0 * (hi - lo) : lo;
  }
  return g;
}

void write_report(const MetricsReport& report, const std::string& path) {
  if (report.sample_count <= 0 || report.pixel_count <= 0)
    throw Error(ErrorKind::invalid_input, "invalid metrics report");
  json j;
  j["rmse_nm"] = report.rmse_nm;
  j["median_abs_nm"] = report.median_abs_nm;
  j["deviation_rmse_nm"] = report.deviation_rmse_nm;
  j["deviation_median_abs_nm"] = report.deviation_median_abs_nm;
  j["median_of_sample_medians_nm"] = report.median_of_sample_medians_nm;
  j["per_sample_rmse_nm"] = report.per_sample_rmse_nm;
  j["sample_count"] = report.sample_count;
  j["pixel_count"] = report.pixel_count;
  j["dataset_digest"] = report.dataset_digest;
  j["model_digest"] = report.model_digest;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path);
  out << j.dump(2) << "\n";

  std::ofstream table(path + ".txt", std::ios::trunc);
  if (!table) throw Error(ErrorKind::io, "cannot write " + path + ".txt");
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-10s %14s %14s\n", "", "model",
                "deviation");
  table << buf;
  std::snprintf(buf, sizeof(buf), "%-10s %11.2f nm %11.2f nm\n", "RMSE",
                report.rmse_nm, report.deviation_rmse_nm);
  table << buf;
  std::snprintf(buf, sizeof(buf), "%-10s %11.2f nm %11.2f nm\n", "Median",
                report.median_abs_nm, report.deviation_median_abs_nm);
  table << buf;
}

MetricsReport read_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::format, std::string("bad report: ") + e.what());
  }
  MetricsReport r;
  try {
    r.rmse_nm = j.at("rmse_nm").get<double>();
    r.median_abs_nm = j.at("median_abs_nm").get<double>();
    r.deviation_rmse_nm = j.at("deviation_rmse_nm").get<double>();
    r.deviation_median_abs_nm = j.at("deviation_median_abs_nm").get<double>();
    r.median_of_sample_medians_nm =
        j.at("median_of_sample_medians_nm").get<double>();
    r.per_sample_rmse_nm = j.at("per_sample_rmse_nm").get<std::vector<double>>();
    r.sample_count = j.at("sample_count").get<int>();
    r.pixel_count = j.at("pixel_count").get<long long>();
    r.dataset_digest = j.at("dataset_digest").get<std::string>();
    r.model_digest = j.at("model_digest").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::format, std::string("bad report: ") + e.what());
  }
  return r;
}

}  // namespace vofm::evalrep
