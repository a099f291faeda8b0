#pragma once

// Single-hidden-layer Elman network: one scalar input per time step, tanh
// hidden state, linear read-out of an n-step-ahead vector after the last
// input. Trained by full-batch gradient descent with backpropagation through
// time over fixed-length windows.

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "urbanflow/errors.hpp"

namespace urbanflow {

class ElmanNetwork {
 public:
  ElmanNetwork() = default;

  ElmanNetwork(std::size_t hidden, std::size_t outputs)
      : hidden_(hidden),
        outputs_(outputs),
        params_(hidden + hidden * hidden + hidden + outputs * hidden + outputs, 0.0) {}

  static ElmanNetwork random(std::size_t hidden, std::size_t outputs, std::uint64_t seed, double scale = 0.3) {
    ElmanNetwork net(hidden, outputs);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-scale, scale);
    for (double& p : net.params_) p = u(rng);
    return net;
  }

  std::size_t hidden() const noexcept { return hidden_; }
  std::size_t outputs() const noexcept { return outputs_; }
  std::size_t parameter_count() const noexcept { return params_.size(); }
  std::span<double> parameters() noexcept { return params_; }
  std::span<const double> parameters() const noexcept { return params_; }

  // Parameter blocks, in storage order.
  double input_weight(std::size_t i) const { return params_[i]; }
  double recurrent_weight(std::size_t to, std::size_t from) const { return params_[rec_offset() + to * hidden_ + from]; }
  double hidden_bias(std::size_t i) const { return params_[hbias_offset() + i]; }
  double output_weight(std::size_t j, std::size_t i) const { return params_[out_offset() + j * hidden_ + i]; }
  double output_bias(std::size_t j) const { return params_[obias_offset() + j]; }
  std::span<double> output_biases() { return std::span<double>(params_).subspan(obias_offset(), outputs_); }

  // Runs the sequence from a zero hidden state. `states`, when given,
  // receives h_0..h_T (T+1 vectors of `hidden` values).
  std::vector<double> forward(std::span<const double> inputs, std::vector<double>* states = nullptr) const {
    std::vector<double> h(hidden_, 0.0), next(hidden_, 0.0);
    if (states) {
      states->assign((inputs.size() + 1) * hidden_, 0.0);
    }
    for (std::size_t t = 0; t < inputs.size(); ++t) {
      for (std::size_t i = 0; i < hidden_; ++i) {
        double a = params_[i] * inputs[t] + params_[hbias_offset() + i];
        const double* row = &params_[rec_offset() + i * hidden_];
        for (std::size_t j = 0; j < hidden_; ++j) a += row[j] * h[j];
        next[i] = std::tanh(a);
      }
      h.swap(next);
      if (states) std::copy(h.begin(), h.end(), states->begin() + static_cast<std::ptrdiff_t>((t + 1) * hidden_));
    }
    std::vector<double> y(outputs_, 0.0);
    for (std::size_t j = 0; j < outputs_; ++j) {
      double v = params_[obias_offset() + j];
      for (std::size_t i = 0; i < hidden_; ++i) v += params_[out_offset() + j * hidden_ + i] * h[i];
      y[j] = v;
    }
    return y;
  }

 private:
  std::size_t rec_offset() const { return hidden_; }
  std::size_t hbias_offset() const { return hidden_ + hidden_ * hidden_; }
  std::size_t out_offset() const { return hbias_offset() + hidden_; }
  std::size_t obias_offset() const { return out_offset() + outputs_ * hidden_; }

  std::size_t hidden_ = 0;
  std::size_t outputs_ = 0;
  std::vector<double> params_;
};

struct TrainingSample {
  std::vector<double> inputs;
  std::vector<double> targets;
};

// Windows of `context` inputs followed by `horizon` targets, sliding by one.
inline std::vector<TrainingSample> make_samples(std::span<const double> series, std::size_t context,
                                                std::size_t horizon) {
  std::vector<TrainingSample> out;
  if (series.size() < context + horizon) return out;
  for (std::size_t t = context; t + horizon <= series.size(); ++t) {
    TrainingSample s;
    s.inputs.assign(series.begin() + static_cast<std::ptrdiff_t>(t - context),
                    series.begin() + static_cast<std::ptrdiff_t>(t));
    s.targets.assign(series.begin() + static_cast<std::ptrdiff_t>(t),
                     series.begin() + static_cast<std::ptrdiff_t>(t + horizon));
    out.push_back(std::move(s));
  }
  return out;
}

// Mean over samples of the mean squared output error.
inline double training_loss(const ElmanNetwork& net, std::span<const TrainingSample> samples) {
  if (samples.empty()) return 0.0;
  double total = 0.0;
  for (const auto& s : samples) {
    const auto y = net.forward(s.inputs);
    double e = 0.0;
    for (std::size_t j = 0; j < y.size(); ++j) e += (y[j] - s.targets[j]) * (y[j] - s.targets[j]);
    total += e / static_cast<double>(y.size());
  }
  return total / static_cast<double>(samples.size());
}

// Gradient of training_loss with respect to every parameter, by BPTT.
inline std::vector<double> loss_gradient(const ElmanNetwork& net, std::span<const TrainingSample> samples) {
  const std::size_t H = net.hidden();
  const std::size_t n = net.outputs();
  std::vector<double> grad(net.parameter_count(), 0.0);
  if (samples.empty()) return grad;

  const std::size_t rec = H, hbias = H + H * H, out = hbias + H, obias = out + n * H;
  const double scale = 2.0 / (static_cast<double>(n) * static_cast<double>(samples.size()));
  std::vector<double> states, dh(H), da(H), dh_prev(H);

  for (const auto& s : samples) {
    const std::size_t T = s.inputs.size();
    const auto y = net.forward(s.inputs, &states);
    const double* hT = &states[T * H];

    std::fill(dh.begin(), dh.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      const double dy = scale * (y[j] - s.targets[j]);
      grad[obias + j] += dy;
      for (std::size_t i = 0; i < H; ++i) {
        grad[out + j * H + i] += dy * hT[i];
        dh[i] += dy * net.output_weight(j, i);
      }
    }
    for (std::size_t t = T; t >= 1; --t) {
      const double* h = &states[t * H];
      const double* hp = &states[(t - 1) * H];
      for (std::size_t i = 0; i < H; ++i) da[i] = dh[i] * (1.0 - h[i] * h[i]);
      std::fill(dh_prev.begin(), dh_prev.end(), 0.0);
      for (std::size_t i = 0; i < H; ++i) {
        grad[i] += da[i] * s.inputs[t - 1];
        grad[hbias + i] += da[i];
        for (std::size_t j = 0; j < H; ++j) {
          grad[rec + i * H + j] += da[i] * hp[j];
          dh_prev[j] += net.recurrent_weight(i, j) * da[i];
        }
      }
      dh.swap(dh_prev);
    }
  }
  return grad;
}

struct TrainingOptions {
  std::size_t hidden = 8;
  std::size_t horizon = 1;
  std::size_t truncation = 8;  // BPTT window length
  std::uint64_t seed = 1;
  double init_scale = 0.3;
};

struct TrainingResult {
  ElmanNetwork network;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::vector<double> loss_history;  // loss before each epoch, then the final loss
};

// Pools windows from every series (windows never straddle two series).
inline TrainingResult train_recurrent(std::span<const std::vector<double>> series, std::size_t epochs,
                                      double learning_rate, const TrainingOptions& options = {}) {
  std::vector<TrainingSample> samples;
  std::size_t longest = 0;
  for (const auto& s : series) {
    longest = std::max(longest, s.size());
    auto part = make_samples(s, options.truncation, options.horizon);
    samples.insert(samples.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  if (longest < 20 || samples.empty())
    throw std::invalid_argument("training needs a series of at least 20 points");

  TrainingResult result;
  ElmanNetwork net = ElmanNetwork::random(options.hidden, options.horizon, options.seed, options.init_scale);
  double loss = training_loss(net, samples);
  result.initial_loss = loss;
  ElmanNetwork best = net;
  double best_loss = loss;

  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    result.loss_history.push_back(loss);
    const auto grad = loss_gradient(net, samples);
    auto p = net.parameters();
    for (std::size_t k = 0; k < p.size(); ++k) p[k] -= learning_rate * grad[k];
    loss = training_loss(net, samples);
    if (!std::isfinite(loss))
      throw DivergedTraining("training loss became non-finite at epoch " + std::to_string(epoch));
    if (loss < best_loss) {
      best_loss = loss;
      best = net;
    }
  }
  result.loss_history.push_back(loss);
  result.network = std::move(best);
  result.final_loss = best_loss;
  return result;
}

inline TrainingResult train_recurrent(std::span<const double> series, std::size_t epochs, double learning_rate,
                                      const TrainingOptions& options = {}) {
  std::vector<std::vector<double>> one{std::vector<double>(series.begin(), series.end())};
  return train_recurrent(std::span<const std::vector<double>>(one), epochs, learning_rate, options);
}

}  // namespace urbanflow
