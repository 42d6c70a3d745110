// vofm: virtual optical form measurement toolkit.
//
// Subcommands cover the full experiment pipeline: dataset generation,
// splitting, training, prediction, evaluation, calibration, hybrid
// evaluation, ensembles, learning curves, and the end-to-end reproduce run.
// Every command is a pure function of its flags and seeds and emits a run
// manifest before exiting successfully.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "vofm/parallel.hpp"
#include "vofm/pipeline.hpp"

namespace fs = std::filesystem;
using namespace vofm;

namespace {

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path);
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path);
  out << text;
  if (!out) throw Error(ErrorKind::io, "short write to " + path);
}

optics::ForwardConfig load_config_or_default(const std::string& config_path,
                                             const std::string& design) {
  if (!config_path.empty())
    return optics::ForwardConfig::from_json(read_text(config_path));
  return optics::default_config(design);
}

optics::Disturbance load_or_sample_disturbance(
    const std::string& path, bool have_seed, uint64_t seed,
    const optics::ForwardConfig& cfg) {
  if (!path.empty()) return optics::Disturbance::from_json(read_text(path));
  if (!have_seed)
    throw Error(ErrorKind::invalid_input,
                "either --disturbance or --disturbance-seed is required");
  return optics::sample_disturbance(cfg, seed);
}

void emit_manifest(const std::string& command,
                   const std::map<std::string, std::string>& flags,
                   const std::map<std::string, uint64_t>& seeds,
                   const std::map<std::string, std::string>& digests,
                   const std::vector<std::string>& artifacts,
                   const std::string& path) {
  pipeline::RunManifest m;
  m.command = command;
  m.flags = flags;
  m.seeds = seeds;
  m.config_digests = digests;
  m.artifacts = artifacts;
  m.timestamp = pipeline::utc_timestamp();
  fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  m.write(path);
}

std::vector<double> parse_fractions(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
  return out;
}

struct TrainFlags {
  int epochs = 10;
  int batch = 32;
  double lr0 = 5e-4;
  double drop_factor = 0.75;
  int drop_period = 5;
  double weight_decay = 0.004;
  int depth = 3;
  int width = 16;

  void attach(CLI::App* cmd) {
    cmd->add_option("--epochs", epochs, "Training epochs");
    cmd->add_option("--batch", batch, "Mini-batch size");
    cmd->add_option("--lr0", lr0, "Initial learning rate");
    cmd->add_option("--drop-factor", drop_factor, "Learning-rate drop factor");
    cmd->add_option("--drop-period", drop_period, "Epochs between drops");
    cmd->add_option("--weight-decay", weight_decay, "L2 weight penalty");
    cmd->add_option("--depth", depth, "U-Net depth");
    cmd->add_option("--width", width, "U-Net base width");
  }

  net::TrainConfig to_train_config(uint64_t seed) const {
    net::TrainConfig tc;
    tc.epochs = epochs;
    tc.batch_size = batch;
    tc.lr0 = lr0;
    tc.drop_factor = drop_factor;
    tc.drop_period = drop_period;
    tc.weight_decay = weight_decay;
    tc.seed = seed;
    return tc;
  }
};

net::Model train_one(const data::Dataset& train_ds, const TrainFlags& tf,
                     uint64_t seed) {
  net::UNetConfig ncfg;
  ncfg.depth = tf.depth;
  ncfg.base_width = tf.width;
  ncfg.in_channels = train_ds.meta.channel_count;
  net::Model model;
  model.norm = data::compute_norm_stats(train_ds);
  model.train_config = tf.to_train_config(seed);
  model.net = net::UNet<float>::build(ncfg, seed);
  net::train(model.net, train_ds, model.norm, model.train_config);
  return model;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"virtual optical form measurement toolkit"};
  app.require_subcommand(1);
  int workers = default_workers();
  app.add_option("--workers", workers,
                 "Worker threads (results are independent of this value)");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a seeded dataset");
  std::string gen_design = "freeform", gen_out, gen_config;
  int gen_n = 4000;
  uint64_t gen_seed = 0;
  gen->add_option("--design", gen_design, "asphere | freeform");
  gen->add_option("--n", gen_n, "Sample count");
  gen->add_option("--seed", gen_seed, "Generation seed")->required();
  gen->add_option("--config", gen_config, "Forward config JSON (default: shipped)");
  gen->add_option("--out", gen_out, "Output dataset directory")->required();

  // split
  auto* split = app.add_subcommand("split", "Split a dataset into train/test");
  std::string split_in, split_train, split_test;
  double split_frac = 0.10;
  uint64_t split_seed = 0;
  split->add_option("--in", split_in, "Input dataset directory")->required();
  split->add_option("--train-out", split_train, "Train output directory")->required();
  split->add_option("--test-out", split_test, "Test output directory")->required();
  split->add_option("--frac", split_frac, "Test fraction");
  split->add_option("--seed", split_seed, "Split seed")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a U-Net on a dataset");
  std::string train_data, train_out;
  uint64_t train_seed = 0;
  TrainFlags train_tf;
  train_cmd->add_option("--data", train_data, "Training dataset directory")->required();
  train_cmd->add_option("--out", train_out, "Output model file")->required();
  train_cmd->add_option("--seed", train_seed, "Training seed")->required();
  train_tf.attach(train_cmd);

  // predict
  auto* predict_cmd = app.add_subcommand("predict", "Predict one sample");
  std::string pr_model, pr_data, pr_out;
  int pr_index = 0;
  predict_cmd->add_option("--model", pr_model, "Model file")->required();
  predict_cmd->add_option("--data", pr_data, "Dataset directory")->required();
  predict_cmd->add_option("--index", pr_index, "Sample index");
  predict_cmd->add_option("--out", pr_out, "Output heatmap (PGM)")->required();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a model on a dataset");
  std::string ev_model, ev_data, ev_out;
  eval_cmd->add_option("--model", ev_model, "Model file")->required();
  eval_cmd->add_option("--data", ev_data, "Dataset directory")->required();
  eval_cmd->add_option("--out", ev_out, "Report JSON path")->required();

  // calibrate
  auto* cal_cmd = app.add_subcommand(
      "calibrate", "Estimate a disturbance from known calibration caps");
  std::string cal_config, cal_design = "freeform", cal_dist, cal_out;
  uint64_t cal_dist_seed = 0;
  bool cal_have_seed = false;
  int cal_jdist = 10;
  std::vector<double> cal_amplitudes = {5e3, -5e3, 1e4, -1e4, 2e4};
  cal_cmd->add_option("--config", cal_config, "Forward config JSON");
  cal_cmd->add_option("--design", cal_design, "Design for the default config");
  cal_cmd->add_option("--disturbance", cal_dist, "True disturbance JSON");
  cal_cmd->add_option("--disturbance-seed", cal_dist_seed,
                      "Seed to sample the true disturbance")
      ->each([&](const std::string&) { cal_have_seed = true; });
  cal_cmd->add_option("--j-dist", cal_jdist, "Max Noll order of the offsets");
  cal_cmd->add_option("--amplitudes", cal_amplitudes,
                      "Calibration cap amplitudes in nm");
  cal_cmd->add_option("--out", cal_out, "Estimate output JSON")->required();

  // hybrid-eval
  auto* hyb_cmd = app.add_subcommand(
      "hybrid-eval", "Evaluate a model on disturbed measurements");
  std::string hy_model, hy_data, hy_config, hy_dist, hy_est, hy_out;
  uint64_t hy_dist_seed = 0;
  bool hy_have_seed = false, hy_uncal = false;
  hyb_cmd->add_option("--model", hy_model, "Model file")->required();
  hyb_cmd->add_option("--data", hy_data, "Test dataset directory")->required();
  hyb_cmd->add_option("--config", hy_config, "Forward config JSON");
  hyb_cmd->add_option("--disturbance", hy_dist, "True disturbance JSON");
  hyb_cmd->add_option("--disturbance-seed", hy_dist_seed,
                      "Seed to sample the true disturbance")
      ->each([&](const std::string&) { hy_have_seed = true; });
  hyb_cmd->add_option("--estimate", hy_est,
                      "Disturbance estimate JSON (omit for no calibration)");
  hyb_cmd->add_flag("--uncalibrated", hy_uncal,
                    "Force evaluation without calibration");
  hyb_cmd->add_option("--out", hy_out, "Report JSON path")->required();

  // ensemble-train
  auto* ens_cmd = app.add_subcommand("ensemble-train",
                                     "Train an ensemble of U-Nets");
  std::string en_data, en_out;
  int en_members = 3;
  uint64_t en_seed = 0;
  TrainFlags en_tf;
  ens_cmd->add_option("--data", en_data, "Training dataset directory")->required();
  ens_cmd->add_option("--out-dir", en_out, "Output directory")->required();
  ens_cmd->add_option("--members", en_members, "Ensemble size");
  ens_cmd->add_option("--seed", en_seed, "Base seed")->required();
  en_tf.attach(ens_cmd);

  // learning-curve
  auto* lc_cmd = app.add_subcommand("learning-curve",
                                    "RMSE vs training-set size");
  std::string lc_train, lc_test, lc_fracs = "0.1,0.25,0.5,1.0", lc_out;
  int lc_ensemble = 1;
  uint64_t lc_seed = 0;
  TrainFlags lc_tf;
  lc_cmd->add_option("--train", lc_train, "Training pool directory")->required();
  lc_cmd->add_option("--test", lc_test, "Test dataset directory")->required();
  lc_cmd->add_option("--fractions", lc_fracs, "Comma-separated fractions");
  lc_cmd->add_option("--ensemble", lc_ensemble, "Ensemble size per fraction");
  lc_cmd->add_option("--seed", lc_seed, "Seed family")->required();
  lc_cmd->add_option("--out", lc_out, "Output CSV path")->required();
  lc_tf.attach(lc_cmd);

  // reproduce
  auto* rep_cmd = app.add_subcommand(
      "reproduce", "Full perfect/disturbed/calibrated comparison");
  std::string rp_design = "freeform", rp_out, rp_scale = "desk";
  uint64_t rp_seed = 0;
  rep_cmd->add_option("--design", rp_design, "asphere | freeform");
  rep_cmd->add_option("--out", rp_out, "Output directory")->required();
  rep_cmd->add_option("--scale", rp_scale, "desk | paper");
  rep_cmd->add_option("--seed", rp_seed, "Master seed")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      optics::ForwardConfig cfg = load_config_or_default(gen_config, gen_design);
      data::Dataset ds =
          data::generate_dataset(gen_design, gen_n, gen_seed, cfg, {}, workers);
      data::save_dataset(ds, gen_out);
      emit_manifest("gen-data",
                    {{"design", gen_design},
                     {"n", std::to_string(gen_n)},
                     {"config", gen_config},
                     {"out", gen_out}},
                    {{"seed", gen_seed}},
                    {{"forward_config", cfg.digest()},
                     {"dataset", ds.meta.content_digest}},
                    {"meta", "inputs.bin", "targets.bin"},
                    gen_out + "/manifest.json");
    } else if (split->parsed()) {
      data::Dataset ds = data::load_dataset(split_in);
      auto [train_ds, test_ds] = data::split_dataset(ds, split_frac, split_seed);
      data::save_dataset(train_ds, split_train);
      data::save_dataset(test_ds, split_test);
      std::map<std::string, std::string> flags = {
          {"in", split_in},
          {"train-out", split_train},
          {"test-out", split_test},
          {"frac", std::to_string(split_frac)}};
      emit_manifest("split", flags, {{"seed", split_seed}},
                    {{"train", train_ds.meta.content_digest},
                     {"test", test_ds.meta.content_digest}},
                    {"meta", "inputs.bin", "targets.bin"},
                    split_train + "/manifest.json");
      emit_manifest("split", flags, {{"seed", split_seed}},
                    {{"train", train_ds.meta.content_digest},
                     {"test", test_ds.meta.content_digest}},
                    {"meta", "inputs.bin", "targets.bin"},
                    split_test + "/manifest.json");
    } else if (train_cmd->parsed()) {
      data::Dataset train_ds = data::load_dataset(train_data);
      net::Model model = train_one(train_ds, train_tf, train_seed);
      net::save_model(model, train_out);
      emit_manifest("train",
                    {{"data", train_data},
                     {"out", train_out},
                     {"epochs", std::to_string(train_tf.epochs)},
                     {"batch", std::to_string(train_tf.batch)},
                     {"lr0", std::to_string(train_tf.lr0)},
                     {"drop-factor", std::to_string(train_tf.drop_factor)},
                     {"drop-period", std::to_string(train_tf.drop_period)},
                     {"weight-decay", std::to_string(train_tf.weight_decay)},
                     {"depth", std::to_string(train_tf.depth)},
                     {"width", std::to_string(train_tf.width)}},
                    {{"seed", train_seed}},
                    {{"dataset", train_ds.meta.content_digest},
                     {"model", model.digest()}},
                    {train_out}, train_out + ".manifest.json");
    } else if (predict_cmd->parsed()) {
      net::Model model = net::load_model(pr_model);
      data::Dataset ds = data::load_dataset(pr_data);
      if (pr_index < 0 || pr_index >= ds.meta.sample_count)
        throw Error(ErrorKind::invalid_input, "sample index out of range");
      auto preds = net::predict_batch(model.net, model.norm, ds.input(pr_index),
                                      1, ds.meta.channel_count,
                                      ds.meta.grid_size);
      evalrep::emit_heatmap(preds[0], pr_out);
      emit_manifest("predict",
                    {{"model", pr_model},
                     {"data", pr_data},
                     {"index", std::to_string(pr_index)},
                     {"out", pr_out}},
                    {},
                    {{"dataset", ds.meta.content_digest},
                     {"model", model.digest()}},
                    {pr_out, pr_out + ".scale"}, pr_out + ".manifest.json");
    } else if (eval_cmd->parsed()) {
      net::Model model = net::load_model(ev_model);
      data::Dataset ds = data::load_dataset(ev_data);
      evalrep::MetricsReport rep = evalrep::evaluate(model, ds);
      evalrep::write_report(rep, ev_out);
      emit_manifest("eval",
                    {{"model", ev_model}, {"data", ev_data}, {"out", ev_out}},
                    {},
                    {{"dataset", ds.meta.content_digest},
                     {"model", model.digest()}},
                    {ev_out, ev_out + ".txt"}, ev_out + ".manifest.json");
    } else if (cal_cmd->parsed()) {
      optics::ForwardConfig cfg = load_config_or_default(cal_config, cal_design);
      optics::Disturbance dist = load_or_sample_disturbance(
          cal_dist, cal_have_seed, cal_dist_seed, cfg);
      auto specimens =
          calib::generate_calibration_set(cfg, dist, cal_amplitudes);
      calib::DisturbanceEstimate est =
          calib::estimate_disturbance(specimens, cfg, cal_jdist);
      write_text(cal_out, est.to_json());
      emit_manifest("calibrate",
                    {{"config", cal_config},
                     {"design", cal_design},
                     {"disturbance", cal_dist},
                     {"j-dist", std::to_string(cal_jdist)},
                     {"out", cal_out}},
                    cal_have_seed
                        ? std::map<std::string, uint64_t>{{"disturbance-seed",
                                                           cal_dist_seed}}
                        : std::map<std::string, uint64_t>{},
                    {{"forward_config", cfg.digest()}}, {cal_out},
                    cal_out + ".manifest.json");
    } else if (hyb_cmd->parsed()) {
      net::Model model = net::load_model(hy_model);
      data::Dataset ds = data::load_dataset(hy_data);
      optics::ForwardConfig cfg =
          hy_config.empty() ? ds.forward_config()
                            : optics::ForwardConfig::from_json(read_text(hy_config));
      optics::Disturbance dist =
          load_or_sample_disturbance(hy_dist, hy_have_seed, hy_dist_seed, cfg);
      calib::DisturbanceEstimate est;
      bool calibrated = !hy_est.empty() && !hy_uncal;
      if (calibrated)
        est = calib::DisturbanceEstimate::from_json(read_text(hy_est));
      auto preds = pipeline::predict_disturbed(
          model, ds, dist, calibrated ? &est : nullptr, workers);
      evalrep::MetricsReport rep = evalrep::evaluate_predictions(preds, ds);
      rep.model_digest = model.digest();
      evalrep::write_report(rep, hy_out);
      emit_manifest("hybrid-eval",
                    {{"model", hy_model},
                     {"data", hy_data},
                     {"config", hy_config},
                     {"disturbance", hy_dist},
                     {"estimate", hy_est},
                     {"uncalibrated", calibrated ? "false" : "true"},
                     {"out", hy_out}},
                    hy_have_seed
                        ? std::map<std::string, uint64_t>{{"disturbance-seed",
                                                           hy_dist_seed}}
                        : std::map<std::string, uint64_t>{},
                    {{"dataset", ds.meta.content_digest},
                     {"model", model.digest()}},
                    {hy_out, hy_out + ".txt"}, hy_out + ".manifest.json");
    } else if (ens_cmd->parsed()) {
      data::Dataset train_ds = data::load_dataset(en_data);
      fs::create_directories(en_out);
      std::vector<std::string> artifacts;
      std::map<std::string, std::string> digests = {
          {"dataset", train_ds.meta.content_digest}};
      for (int e = 0; e < en_members; ++e) {
        uint64_t seed = derive_stream(en_seed, 0xe4e + static_cast<uint64_t>(e));
        net::Model model = train_one(train_ds, en_tf, seed);
        std::string path = en_out + "/member" + std::to_string(e) + ".vofm";
        net::save_model(model, path);
        artifacts.push_back("member" + std::to_string(e) + ".vofm");
        digests["member" + std::to_string(e)] = model.digest();
      }
      emit_manifest("ensemble-train",
                    {{"data", en_data},
                     {"out-dir", en_out},
                     {"members", std::to_string(en_members)},
                     {"epochs", std::to_string(en_tf.epochs)},
                     {"batch", std::to_string(en_tf.batch)},
                     {"depth", std::to_string(en_tf.depth)},
                     {"width", std::to_string(en_tf.width)}},
                    {{"seed", en_seed}}, digests, artifacts,
                    en_out + "/manifest.json");
    } else if (lc_cmd->parsed()) {
      data::Dataset pool = data::load_dataset(lc_train);
      data::Dataset test_ds = data::load_dataset(lc_test);
      net::UNetConfig ncfg;
      ncfg.depth = lc_tf.depth;
      ncfg.base_width = lc_tf.width;
      ncfg.in_channels = pool.meta.channel_count;
      auto rows = evalrep::learning_curve(pool, test_ds,
                                          parse_fractions(lc_fracs),
                                          lc_ensemble, ncfg,
                                          lc_tf.to_train_config(lc_seed));
      evalrep::write_learning_curve_csv(rows, lc_out);
      emit_manifest("learning-curve",
                    {{"train", lc_train},
                     {"test", lc_test},
                     {"fractions", lc_fracs},
                     {"ensemble", std::to_string(lc_ensemble)},
                     {"out", lc_out}},
                    {{"seed", lc_seed}},
                    {{"train", pool.meta.content_digest},
                     {"test", test_ds.meta.content_digest}},
                    {lc_out}, lc_out + ".manifest.json");
    } else if (rep_cmd->parsed()) {
      pipeline::ReproduceOptions opt;
      opt.design = rp_design;
      opt.scale = rp_scale;
      opt.seed = rp_seed;
      opt.workers = workers;
      pipeline::ReproduceResult res = pipeline::run_reproduce(opt, rp_out);
      std::cout << read_text(rp_out + "/table.txt");
      (void)res;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
