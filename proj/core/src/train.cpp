#include "vofm/train.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

#include "vofm/rng.hpp"

namespace vofm::net {

void TrainConfig::validate() const {
  if (epochs < 1) throw Error(ErrorKind::invalid_input, "epochs must be >= 1");
  if (batch_size < 1)
    throw Error(ErrorKind::invalid_input, "batch size must be >= 1");
  if (!(lr0 > 0.0)) throw Error(ErrorKind::invalid_input, "lr0 must be > 0");
  if (!(drop_factor > 0.0 && drop_factor <= 1.0))
    throw Error(ErrorKind::invalid_input, "drop factor must be in (0, 1]");
  if (drop_period < 1)
    throw Error(ErrorKind::invalid_input, "drop period must be >= 1");
  if (weight_decay < 0.0)
    throw Error(ErrorKind::invalid_input, "weight decay must be >= 0");
}

template <class T>
AdamState<T> AdamState<T>::init(const UNet<T>& net) {
  AdamState<T> st;
  st.blocks.reserve(net.blocks.size());
  for (const auto& b : net.blocks) {
    typename AdamState<T>::Moments m;
    m.mw = Tensor<T>(b.weights.n, b.weights.c, b.weights.h, b.weights.w);
    m.vw = Tensor<T>(b.weights.n, b.weights.c, b.weights.h, b.weights.w);
    m.mb.assign(b.bias.size(), T(0));
    m.vb.assign(b.bias.size(), T(0));
    st.blocks.push_back(std::move(m));
  }
  return st;
}

template <class T>
double mse_loss(const Tensor<T>& pred, const Tensor<T>& target,
                const UNet<T>& net, double weight_decay) {
  if (!pred.same_shape(target))
    throw Error(ErrorKind::invalid_input, "loss shape mismatch");
  double sum = 0.0;
  for (size_t i = 0; i < pred.v.size(); ++i) {
    double e = static_cast<double>(pred.v[i]) - static_cast<double>(target.v[i]);
    sum += e * e;
  }
  double loss = sum / static_cast<double>(pred.v.size());
  if (weight_decay > 0.0) {
    double w2 = 0.0;
    for (const auto& b : net.blocks)
      for (const T& w : b.weights.v) w2 += static_cast<double>(w) * w;
    loss += weight_decay * w2;
  }
  return loss;
}

template <class T>
std::vector<GradBlock<T>> loss_gradient(const UNet<T>& net,
                                        const Tensor<T>& inputs,
                                        const Tensor<T>& targets,
                                        double weight_decay, double* loss_out) {
  UNetCache<T> cache;
  Tensor<T> pred = net.forward(inputs, cache);
  if (!pred.same_shape(targets))
    throw Error(ErrorKind::invalid_input, "loss shape mismatch");
  Tensor<T> dpred(pred.n, pred.c, pred.h, pred.w);
  const double scale = 2.0 / static_cast<double>(pred.v.size());
  for (size_t i = 0; i < pred.v.size(); ++i)
    dpred.v[i] = static_cast<T>(
        scale * (static_cast<double>(pred.v[i]) - targets.v[i]));
  std::vector<GradBlock<T>> grads = net.backward(cache, dpred);
  if (weight_decay > 0.0) {
    for (size_t b = 0; b < grads.size(); ++b) {
      const auto& w = net.blocks[b].weights.v;
      auto& dw = grads[b].dw.v;
      for (size_t i = 0; i < w.size(); ++i)
        dw[i] += static_cast<T>(2.0 * weight_decay) * w[i];
    }
  }
  if (loss_out) *loss_out = mse_loss(pred, targets, net, weight_decay);
  return grads;
}

template <class T>
void adam_step(UNet<T>& net, const std::vector<GradBlock<T>>& grads,
               AdamState<T>& state, double lr, const TrainConfig& tc) {
  if (grads.size() != net.blocks.size() ||
      state.blocks.size() != net.blocks.size())
    throw Error(ErrorKind::invalid_input, "adam state shape mismatch");
  state.t += 1;
  const double b1 = tc.beta1, b2 = tc.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  auto update = [&](T* p, T* m, T* v, const T* g, size_t n) {
    for (size_t i = 0; i < n; ++i) {
      double gi = g[i];
      double mi = b1 * m[i] + (1.0 - b1) * gi;
      double vi = b2 * v[i] + (1.0 - b2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      double mhat = mi / bc1;
      double vhat = vi / bc2;
      p[i] = static_cast<T>(p[i] - lr * mhat / (std::sqrt(vhat) + tc.eps));
    }
  };
  for (size_t b = 0; b < net.blocks.size(); ++b) {
    auto& blk = net.blocks[b];
    auto& st = state.blocks[b];
    update(blk.weights.data(), st.mw.data(), st.vw.data(), grads[b].dw.data(),
           blk.weights.size());
    update(blk.bias.data(), st.mb.data(), st.vb.data(), grads[b].db.data(),
           blk.bias.size());
  }
}

double lr_at_epoch(const TrainConfig& tc, int epoch) {
  if (epoch < 0) throw Error(ErrorKind::invalid_input, "epoch must be >= 0");
  return tc.lr0 * std::pow(tc.drop_factor, epoch / tc.drop_period);
}

namespace {

// Dataset samples -> normalized float tensors.
void fill_normalized_batch(const data::Dataset& ds, const data::NormStats& norm,
                           const std::vector<int>& order, int first, int count,
                           Tensor<float>& x, Tensor<float>& y) {
  const int m = ds.meta.grid_size;
  const int k = ds.meta.channel_count;
  const size_t plane = static_cast<size_t>(m) * m;
  x = Tensor<float>(count, k, m, m);
  y = Tensor<float>(count, 1, m, m);
  for (int b = 0; b < count; ++b) {
    int s = order[first + b];
    const float* in = ds.input(s);
    const float* tg = ds.target(s);
    for (int ch = 0; ch < k; ++ch) {
      float mean = static_cast<float>(norm.input_mean[ch]);
      float inv = static_cast<float>(1.0 / norm.input_std[ch]);
      float* dst = x.data() + (static_cast<size_t>(b) * k + ch) * plane;
      const float* src = in + static_cast<size_t>(ch) * plane;
      for (size_t p = 0; p < plane; ++p) dst[p] = (src[p] - mean) * inv;
    }
    float tmean = static_cast<float>(norm.target_mean);
    float tinv = static_cast<float>(1.0 / norm.target_std);
    float* dst = y.data() + static_cast<size_t>(b) * plane;
    for (size_t p = 0; p < plane; ++p) dst[p] = (tg[p] - tmean) * tinv;
  }
}

}  // namespace

TrainHistory train(UNet<float>& net, const data::Dataset& train_ds,
                   const data::NormStats& norm, const TrainConfig& tc) {
  tc.validate();
  if (train_ds.meta.channel_count != net.config.in_channels)
    throw Error(ErrorKind::invalid_input,
                "dataset channel count does not match the network");
  if (norm.input_mean.size() != static_cast<size_t>(train_ds.meta.channel_count))
    throw Error(ErrorKind::invalid_input, "norm stats channel count mismatch");
  const int n = train_ds.meta.sample_count;

  AdamState<float> state = AdamState<float>::init(net);
  TrainHistory history;
  history.reserve(tc.epochs);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  int64_t step = 0;

  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    Rng rng(derive_stream(tc.seed, 0xe70c + static_cast<uint64_t>(epoch)));
    for (int i = n - 1; i > 0; --i) {
      int j = static_cast<int>(rng.below(static_cast<uint64_t>(i) + 1));
      std::swap(order[i], order[j]);
    }
    double lr = lr_at_epoch(tc, epoch);
    double loss_sum = 0.0;
    int steps_in_epoch = 0;
    for (int first = 0; first < n; first += tc.batch_size) {
      int count = std::min(tc.batch_size, n - first);
      Tensor<float> x, y;
      fill_normalized_batch(train_ds, norm, order, first, count, x, y);
      double loss = 0.0;
      std::vector<GradBlock<float>> grads;
      try {
        grads = loss_gradient(net, x, y, tc.weight_decay, &loss);
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::numeric)
          throw Error(ErrorKind::numeric,
                      "numeric failure at optimization step " +
                          std::to_string(step) + ": " + e.what());
        throw;
      }
      if (!std::isfinite(loss))
        throw Error(ErrorKind::numeric, "non-finite loss at optimization step " +
                                            std::to_string(step));
      adam_step(net, grads, state, lr, tc);
      loss_sum += loss;
      ++steps_in_epoch;
      ++step;
    }
    auto dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0);
    history.push_back({loss_sum / steps_in_epoch, lr, dt.count()});
  }
  return history;
}

std::vector<SurfaceGrid> predict_batch(const UNet<float>& net,
                                       const data::NormStats& norm,
                                       const float* inputs, int n, int k, int m,
                                       int batch_size) {
  if (k != net.config.in_channels)
    throw Error(ErrorKind::invalid_input, "input channel count mismatch");
  const size_t plane = static_cast<size_t>(m) * m;
  auto mask = disc_mask(m);
  std::vector<SurfaceGrid> out(n);
  for (int first = 0; first < n; first += batch_size) {
    int count = std::min(batch_size, n - first);
    Tensor<float> x(count, k, m, m);
    for (int b = 0; b < count; ++b) {
      const float* in = inputs + (static_cast<size_t>(first) + b) * k * plane;
      for (int ch = 0; ch < k; ++ch) {
        float mean = static_cast<float>(norm.input_mean[ch]);
        float inv = static_cast<float>(1.0 / norm.input_std[ch]);
        float* dst = x.data() + (static_cast<size_t>(b) * k + ch) * plane;
        for (size_t p = 0; p < plane; ++p)
          dst[p] = (in[ch * plane + p] - mean) * inv;
      }
    }
    Tensor<float> y = net.forward(x);
    for (int b = 0; b < count; ++b) {
      SurfaceGrid g(m);
      const float* src = y.data() + static_cast<size_t>(b) * plane;
      for (size_t p = 0; p < plane; ++p)
        if (mask[p])
          g.values[p] = static_cast<double>(src[p]) * norm.target_std +
                        norm.target_mean;
      out[first + b] = std::move(g);
    }
  }
  return out;
}

SurfaceGrid predict(const UNet<float>& net, const data::NormStats& norm,
                    const OPLField& delta_opl) {
  if (delta_opl.channels != net.config.in_channels)
    throw Error(ErrorKind::invalid_input, "input channel count mismatch");
  std::vector<float> in(delta_opl.values.size());
  for (size_t i = 0; i < in.size(); ++i)
    in[i] = static_cast<float>(delta_opl.values[i]);
  return predict_batch(net, norm, in.data(), 1, delta_opl.channels,
                       delta_opl.size)[0];
}

SurfaceGrid ensemble_predict(const std::vector<EnsembleMember>& members,
                             const OPLField& delta_opl) {
  if (members.empty())
    throw Error(ErrorKind::invalid_input, "ensemble needs at least one member");
  SurfaceGrid mean;
  for (size_t i = 0; i < members.size(); ++i) {
    SurfaceGrid p = predict(*members[i].net, *members[i].norm, delta_opl);
    if (i == 0) {
      mean = std::move(p);
    } else {
      if (mean.size != p.size)
        throw Error(ErrorKind::invalid_input, "ensemble member size mismatch");
      for (size_t q = 0; q < mean.values.size(); ++q)
        mean.values[q] += p.values[q];
    }
  }
  const double inv = 1.0 / static_cast<double>(members.size());
  for (double& v : mean.values) v *= inv;
  return mean;
}

template struct AdamState<float>;
template struct AdamState<double>;
template double mse_loss<float>(const Tensor<float>&, const Tensor<float>&,
                                const UNet<float>&, double);
template double mse_loss<double>(const Tensor<double>&, const Tensor<double>&,
                                 const UNet<double>&, double);
template std::vector<GradBlock<float>> loss_gradient<float>(
    const UNet<float>&, const Tensor<float>&, const Tensor<float>&, double,
    double*);
template std::vector<GradBlock<double>> loss_gradient<double>(
    const UNet<double>&, const Tensor<double>&, const Tensor<double>&, double,
    double*);
template void adam_step<float>(UNet<float>&, const std::vector<GradBlock<float>>&,
                               AdamState<float>&, double, const TrainConfig&);
template void adam_step<double>(UNet<double>&,
                                const std::vector<GradBlock<double>>&,
                                AdamState<double>&, double, const TrainConfig&);

}  // namespace vofm::net
