#pragma once

#include "vofm/dataset.hpp"
#include "vofm/unet.hpp"

namespace vofm::net {

struct TrainConfig {
  int epochs = 10;
  int batch_size = 32;
  double lr0 = 5e-4;
  double drop_factor = 0.75;  // gamma
  int drop_period = 5;        // epochs
  double weight_decay = 0.004;
  uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

// Adam moments, one pair per parameter block, shapes mirroring the network.
template <class T>
struct AdamState {
  struct Moments {
    Tensor<T> mw, vw;
    std::vector<T> mb, vb;
  };
  std::vector<Moments> blocks;
  int64_t t = 0;

  static AdamState init(const UNet<T>& net);
};

struct EpochStats {
  double loss = 0.0;  // mean over optimization steps
  double lr = 0.0;
  double seconds = 0.0;
};

using TrainHistory = std::vector<EpochStats>;

// Mean squared error over all pixels plus weight_decay * sum(weights^2);
// biases are not penalized.
template <class T>
double mse_loss(const Tensor<T>& pred, const Tensor<T>& target,
                const UNet<T>& net, double weight_decay);

// Exact gradient of mse_loss composed with the network.
template <class T>
std::vector<GradBlock<T>> loss_gradient(const UNet<T>& net,
                                        const Tensor<T>& inputs,
                                        const Tensor<T>& targets,
                                        double weight_decay,
                                        double* loss_out = nullptr);

// Standard Adam with bias correction; increments state.t.
template <class T>
void adam_step(UNet<T>& net, const std::vector<GradBlock<T>>& grads,
               AdamState<T>& state, double lr, const TrainConfig& tc);

double lr_at_epoch(const TrainConfig& tc, int epoch);

// Seeded shuffling, in-order mini-batches with the final partial batch kept.
// Aborts with a numeric error naming the step index if the loss goes
// non-finite. Deterministic for a fixed seed and platform.
TrainHistory train(UNet<float>& net, const data::Dataset& train_ds,
                   const data::NormStats& norm, const TrainConfig& tc);

// Normalize, forward, denormalize, zero outside the disc.
SurfaceGrid predict(const UNet<float>& net, const data::NormStats& norm,
                    const OPLField& delta_opl);

// Batched variant operating directly on dataset-layout float samples.
// Returns per-sample M x M grids, zeroed outside the disc.
std::vector<SurfaceGrid> predict_batch(const UNet<float>& net,
                                       const data::NormStats& norm,
                                       const float* inputs, int n, int k, int m,
                                       int batch_size = 32);

struct EnsembleMember {
  const UNet<float>* net;
  const data::NormStats* norm;
};

// Elementwise mean of the member predictions.
SurfaceGrid ensemble_predict(const std::vector<EnsembleMember>& members,
                             const OPLField& delta_opl);

}  // namespace vofm::net
