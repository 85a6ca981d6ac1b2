#pragma once

// Stacked dilated convolutional GRU with per-cell bias fields and paired
// occupancy / semantic decoders.
//
// The step functions are written once over a value type T that is either
// Tensor<Scalar> (eager inference) or Var<Scalar> (recorded for training).

#include "occtrack/autodiff.hpp"
#include "occtrack/grid.hpp"
#include "occtrack/parameters.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace occtrack {

inline constexpr int kInputChannels = 2;

/// 2^(L+1) - 1 cells per side.
inline int receptive_field(int layers) {
  if (layers < 1) throw std::invalid_argument("receptive_field: need at least one layer");
  return (1 << (layers + 1)) - 1;
}

struct NetworkConfig {
  int layers = 3;     // L
  int channels = 16;  // C
  int grid = 100;     // M
  int classes = 4;    // K

  /// Layer k (1-based) uses dilation 2^(k-1).
  static int dilation(int layer) { return 1 << (layer - 1); }
  int receptive_field() const { return occtrack::receptive_field(layers); }
  int input_channels(int layer) const { return layer == 1 ? kInputChannels : channels; }

  void validate() const {
    if (layers < 1 || layers > 16) throw std::invalid_argument("network layers must be in 1..16");
    if (channels < 1) throw std::invalid_argument("network channels must be >= 1");
    if (grid < 1) throw std::invalid_argument("network grid size must be >= 1");
    if (classes < 2 || classes > 255) throw std::invalid_argument("network classes must be in 2..255");
  }

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

namespace names {
inline std::string gru(int layer, const char* field) { return "gru" + std::to_string(layer) + "." + field; }
inline const char* const kKernels[6] = {"w_xz", "w_hz", "w_xr", "w_hr", "w_xh", "w_hh"};
inline const char* const kBiases[3] = {"b_z", "b_r", "b_h"};
inline const std::string kOccupancyWeight = "occupancy.w";
inline const std::string kOccupancyBias = "occupancy.b";
inline const std::string kSemanticWeight = "semantic.w";
inline const std::string kSemanticBias = "semantic.b";
}  // namespace names

/// Parameters of the semantic decoder, the only ones trained when the recurrent part is frozen.
inline bool is_semantic_parameter(const std::string& name) { return name.rfind("semantic.", 0) == 0; }

/// Closed-form count: six 3x3 kernels and three C x M x M bias fields per
/// layer, a C->1 occupancy decoder and a C->K semantic decoder with biases.
inline std::int64_t parameter_count(const NetworkConfig& c) {
  const std::int64_t C = c.channels, M = c.grid, K = c.classes;
  std::int64_t n = 0;
  for (int k = 1; k <= c.layers; ++k) n += 3 * C * c.input_channels(k) * 9 + 3 * C * C * 9 + 3 * C * M * M;
  return n + (C + 1) + (K * C + K);
}

/// Glorot-uniform kernels (fan_in = Cin*9, fan_out = Cout*9), zero biases. Deterministic in seed.
template <typename Scalar>
ParameterStore<Scalar> init_params(const NetworkConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  ParameterStore<Scalar> store;
  auto glorot = [&rng](Shape shape, int fan_in, int fan_out) {
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> u(-bound, bound);
    Tensor<Scalar> t(std::move(shape));
    for (Eigen::Index i = 0; i < t.size(); ++i) t[i] = static_cast<Scalar>(u(rng));
    return t;
  };
  const int C = config.channels, M = config.grid;
  for (int k = 1; k <= config.layers; ++k) {
    const int cin = config.input_channels(k);
    for (int i = 0; i < 6; ++i) {
      const int in = i % 2 == 0 ? cin : C;  // even slots face the layer input, odd slots the hidden state
      store.add(names::gru(k, names::kKernels[i]), glorot({C, in, 3, 3}, in * 9, C * 9));
    }
    for (const char* b : names::kBiases) store.add(names::gru(k, b), Tensor<Scalar>({C, M, M}));
  }
  store.add(names::kOccupancyWeight, glorot({1, C}, C, 1));
  store.add(names::kOccupancyBias, Tensor<Scalar>({1}));
  store.add(names::kSemanticWeight, glorot({config.classes, C}, C, config.classes));
  store.add(names::kSemanticBias, Tensor<Scalar>({config.classes}));
  return store;
}

template <typename T>
struct GruWeights {
  T w_xz, w_hz, w_xr, w_hr, w_xh, w_hh;
  T b_z, b_r, b_h;
};

template <typename T>
struct DecoderWeights {
  T w, b;
};

template <typename T>
struct NetworkWeights {
  std::vector<GruWeights<T>> layers;
  DecoderWeights<T> occupancy;
  DecoderWeights<T> semantic;
};

template <typename T>
struct GateActivations {
  T update;     // f_t
  T reset;      // r_t
  T candidate;  // h-bar_t
};

template <typename T>
using HiddenState = std::vector<T>;  // one C x M x M activation per layer

namespace detail {

template <typename T, typename Fetch>
NetworkWeights<T> bind_weights(const NetworkConfig& config, Fetch&& fetch) {
  NetworkWeights<T> w;
  for (int k = 1; k <= config.layers; ++k) {
    auto f = [&](const char* field) { return fetch(names::gru(k, field)); };
    w.layers.push_back({f("w_xz"), f("w_hz"), f("w_xr"), f("w_hr"), f("w_xh"), f("w_hh"), f("b_z"), f("b_r"),
                        f("b_h")});
  }
  w.occupancy = {fetch(names::kOccupancyWeight), fetch(names::kOccupancyBias)};
  w.semantic = {fetch(names::kSemanticWeight), fetch(names::kSemanticBias)};
  return w;
}

template <typename Scalar>
void check_store(const NetworkConfig& config, const ParameterStore<Scalar>& store) {
  const auto& b = store.at(names::gru(1, "b_z"));
  if (b.shape() != Shape{config.channels, config.grid, config.grid})
    throw ShapeError("parameters do not match network config: bias field " + to_string(b.shape()));
  if (store.at(names::kSemanticBias).shape() != Shape{config.classes})
    throw ShapeError("parameters do not match network config: class count");
}

}  // namespace detail

/// Eager binding: copies the current parameter values.
template <typename Scalar>
NetworkWeights<Tensor<Scalar>> bind(const NetworkConfig& config, const ParameterStore<Scalar>& store) {
  detail::check_store(config, store);
  return detail::bind_weights<Tensor<Scalar>>(config, [&](const std::string& n) { return store.at(n).value(); });
}

/// Graph binding: parameters accepted by `trainable` (all when empty) become
/// gradient-collecting leaves, the rest enter as constants.
template <typename Scalar>
NetworkWeights<Var<Scalar>> bind(Graph<Scalar>& graph, const NetworkConfig& config,
                                 const ParameterStore<Scalar>& store,
                                 const std::function<bool(const std::string&)>& trainable = {}) {
  detail::check_store(config, store);
  return detail::bind_weights<Var<Scalar>>(config, [&](const std::string& n) {
    return !trainable || trainable(n) ? graph.parameter(store, n) : graph.constant(store.at(n).value());
  });
}

template <typename Scalar>
HiddenState<Tensor<Scalar>> zero_hidden(const NetworkConfig& config) {
  return HiddenState<Tensor<Scalar>>(static_cast<std::size_t>(config.layers),
                                     Tensor<Scalar>({config.channels, config.grid, config.grid}));
}

template <typename Scalar>
HiddenState<Var<Scalar>> zero_hidden(Graph<Scalar>& graph, const NetworkConfig& config) {
  const auto zero = graph.constant(Tensor<Scalar>({config.channels, config.grid, config.grid}));
  return HiddenState<Var<Scalar>>(static_cast<std::size_t>(config.layers), zero);
}

template <typename T>
struct LayerStep {
  T hidden;
  GateActivations<T> gates;
};

/// One ConvGRU update:
///   f  = sigmoid(W_xz*x + W_hz*h + b_z)
///   r  = sigmoid(W_xr*x + W_hr*h + b_r)
///   h~ = tanh(W_xh*x + r o (W_hh*h) + b_h)
///   h' = f o h + (1 - f) o h~
template <typename T>
LayerStep<T> gru_layer_step(const T& input, const T& h_prev, const GruWeights<T>& w, int dilation) {
  const T f = sigmoid(conv2d_dilated(input, w.w_xz, dilation, w.b_z) + conv2d_dilated(h_prev, w.w_hz, dilation));
  const T r = sigmoid(conv2d_dilated(input, w.w_xr, dilation, w.b_r) + conv2d_dilated(h_prev, w.w_hr, dilation));
  const T cand =
      tanh_act(conv2d_dilated(input, w.w_xh, dilation, w.b_h) + r * conv2d_dilated(h_prev, w.w_hh, dilation));
  T h = f * h_prev + one_minus(f) * cand;
  return {std::move(h), {f, r, cand}};
}

/// Advances every layer by one step. Layer 1 reads the encoded observation,
/// layer k > 1 the new activation of layer k-1.
template <typename T>
HiddenState<T> advance(const NetworkWeights<T>& w, const HiddenState<T>& h_prev, const T& input,
                       std::vector<GateActivations<T>>* gates = nullptr) {
  if (h_prev.size() != w.layers.size()) throw ShapeError("hidden state has the wrong number of layers");
  HiddenState<T> h;
  h.reserve(h_prev.size());
  const T* below = &input;
  for (std::size_t k = 0; k < w.layers.size(); ++k) {
    auto step = gru_layer_step(*below, h_prev[k], w.layers[k], NetworkConfig::dilation(static_cast<int>(k) + 1));
    h.push_back(std::move(step.hidden));
    if (gates) gates->push_back(std::move(step.gates));
    below = &h.back();
  }
  return h;
}

/// [1, M, M] occupancy probabilities from the top layer.
template <typename T>
T decode_occupancy(const NetworkWeights<T>& w, const HiddenState<T>& h) {
  return sigmoid(pointwise_conv(h.back(), w.occupancy.w, w.occupancy.b));
}

/// [K, M, M] per-cell class distribution from the top layer.
template <typename T>
T decode_semantics(const NetworkWeights<T>& w, const HiddenState<T>& h) {
  return softmax_per_cell(pointwise_conv(h.back(), w.semantic.w, w.semantic.b));
}

template <typename T>
struct StepOutput {
  HiddenState<T> hidden;
  T occupancy;
  T semantics;
};

/// Full update: new hidden state plus both decoder outputs.
template <typename T>
StepOutput<T> forward_step(const NetworkWeights<T>& w, const HiddenState<T>& h_prev, const T& input) {
  StepOutput<T> out;
  out.hidden = advance(w, h_prev, input);
  out.occupancy = decode_occupancy(w, out.hidden);
  out.semantics = decode_semantics(w, out.hidden);
  return out;
}

/// Eager convenience over a partial observation.
template <typename Scalar>
StepOutput<Tensor<Scalar>> forward_step(const NetworkWeights<Tensor<Scalar>>& w,
                                        const HiddenState<Tensor<Scalar>>& h_prev, const PartialObservation& x) {
  return forward_step(w, h_prev, encode_observation<Scalar>(x));
}

}  // namespace occtrack
