#pragma once

#include "occtrack/autodiff.hpp"
#include "occtrack/network.hpp"
#include "occtrack/world.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace occtrack {

/// Show/predict schedule shared by every training stage: `show` real frames
/// followed by `predict` empty inputs, repeated to tile the minibatch.
struct Schedule {
  int minibatch_length = 40;
  int show = 10;
  int predict = 10;

  int cycles() const { return minibatch_length / (show + predict); }
  int predict_frames() const { return cycles() * predict; }
  /// Frame t (0-based) of a minibatch receives the empty observation and carries the loss.
  bool is_predict_frame(int t) const { return t % (show + predict) >= show; }

  void validate() const {
    if (show < 1 || predict < 1) throw std::invalid_argument("show and predict lengths must be >= 1");
    if (minibatch_length < 1 || minibatch_length % (show + predict) != 0)
      throw std::invalid_argument("show + predict cycles must tile the minibatch length exactly");
  }
};

struct TrainConfig {
  Schedule schedule;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::adam;
  int epochs = 1;
  double clip_norm = 5.0;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SemanticTrainConfig {
  Schedule schedule;
  double labeled_fraction = 0.02;  // share of training episodes whose frames carry labels
  bool freeze_recurrent = true;
  bool loss_on_show_frames = false;
  double learning_rate = 3e-3;
  int epochs = 200;
  double clip_norm = 5.0;
  std::uint64_t seed = 1;

  void validate() const;
};

class NonFiniteLoss : public std::runtime_error {
 public:
  explicit NonFiniteLoss(int minibatch)
      : std::runtime_error("non-finite loss in minibatch " + std::to_string(minibatch)), minibatch_(minibatch) {}
  int minibatch() const { return minibatch_; }

 private:
  int minibatch_;
};

/// Network inputs for a minibatch: the encoded observation on show frames, all zeros on predict frames.
template <typename Scalar>
std::vector<Tensor<Scalar>> scheduled_inputs(std::span<const Frame> slice, const Schedule& schedule) {
  std::vector<Tensor<Scalar>> inputs;
  inputs.reserve(slice.size());
  for (std::size_t t = 0; t < slice.size(); ++t) {
    if (schedule.is_predict_frame(static_cast<int>(t))) {
      const int m = slice[t].observation.size();
      inputs.emplace_back(Shape{kInputChannels, m, m});
    } else {
      inputs.push_back(encode_observation<Scalar>(slice[t].observation));
    }
  }
  return inputs;
}

/// Semantic targets of a frame: the class at every visibly occupied, labeled cell; ignore elsewhere.
ByteGrid label_mask(const Frame& frame);

/// Records the unrolled occupancy objective on `graph`: the mean over predict
/// frames of the masked BCE between y_hat and the frame's observed occupancy,
/// masked by its visibility.
template <typename Scalar>
Var<Scalar> occupancy_objective(Graph<Scalar>& graph, const NetworkWeights<Var<Scalar>>& w,
                                const NetworkConfig& config, std::span<const Frame> slice, const Schedule& schedule) {
  auto h = zero_hidden(graph, config);
  const auto inputs = scheduled_inputs<Scalar>(slice, schedule);
  std::vector<Var<Scalar>> terms;
  for (std::size_t t = 0; t < slice.size(); ++t) {
    h = advance(w, h, graph.constant(inputs[t]));
    if (!schedule.is_predict_frame(static_cast<int>(t))) continue;
    const auto& obs = slice[t].observation;
    terms.push_back(masked_bce_loss(decode_occupancy(w, h), to_tensor<Scalar>(obs.occupancy),
                                    to_tensor<Scalar>(obs.visibility)));
  }
  return scaled_sum(terms, Scalar(1) / static_cast<Scalar>(terms.size()));
}

struct StepStats {
  double loss = 0;
  double grad_norm = 0;  // before clipping
};

/// One BPTT pass over a minibatch: gradients are accumulated into the store and
/// clipped to `clip_norm` (no clipping when <= 0). Does not update parameters.
template <typename Scalar>
StepStats unsupervised_occupancy_step(const NetworkConfig& config, ParameterStore<Scalar>& store,
                                      std::span<const Frame> slice, const Schedule& schedule, double clip_norm) {
  schedule.validate();
  if (static_cast<int>(slice.size()) < schedule.minibatch_length)
    throw std::invalid_argument("minibatch slice has " + std::to_string(slice.size()) + " frames, need " +
                                std::to_string(schedule.minibatch_length));
  slice = slice.first(static_cast<std::size_t>(schedule.minibatch_length));
  Graph<Scalar> graph;
  const auto w = bind(graph, config, store);
  const auto loss = occupancy_objective(graph, w, config, slice, schedule);
  graph.backward(loss);
  graph.accumulate_into(store);
  StepStats stats{static_cast<double>(loss.value().item()), 0};
  stats.grad_norm = clip_norm > 0 ? clip_grad_norm(store, clip_norm) : global_grad_norm(store);
  return stats;
}

struct MinibatchRecord {
  int epoch = 0;
  int minibatch = 0;
  double loss = 0;
  double grad_norm = 0;
  double wall_ms = 0;
};

struct TrainHooks {
  std::function<void(const MinibatchRecord&)> on_minibatch;
  std::function<void(int epoch, const ParameterStore<float>&)> on_epoch;  // e.g. write a checkpoint
};

/// Non-overlapping minibatch slices of every episode, in episode order.
std::vector<std::span<const Frame>> minibatches(const std::vector<Episode>& episodes, int length);

/// Runs epochs [first_epoch, config.epochs). Minibatch order is shuffled per
/// epoch with a generator seeded by (seed, epoch), so a resumed run replays
/// the same order. Returns the mean loss of each epoch run.
std::vector<double> train_occupancy(const NetworkConfig& net, ParameterStore<float>& store,
                                    const std::vector<Episode>& episodes, const TrainConfig& config,
                                    const TrainHooks& hooks = {}, int first_epoch = 0);

/// Inverse class frequency over the labeled cells of `episodes`, scaled to mean 1.
/// Classes without labels get the weight of a single observation.
std::vector<float> inverse_frequency_weights(const std::vector<Episode>& episodes, int classes);

/// Deterministic choice of round(fraction * N) episodes (at least one) to treat as labeled.
std::vector<std::size_t> select_labeled_episodes(std::size_t count, double fraction, std::uint64_t seed);

/// Semantic objective over one labeled slice; returns the loss node. With
/// `loss_on_show_frames` the show frames are supervised as well.
template <typename Scalar>
Var<Scalar> semantic_objective(Graph<Scalar>& graph, const NetworkWeights<Var<Scalar>>& w,
                               const NetworkConfig& config, std::span<const Frame> slice, const Schedule& schedule,
                               const std::vector<Scalar>& class_weights, bool loss_on_show_frames) {
  auto h = zero_hidden(graph, config);
  const auto inputs = scheduled_inputs<Scalar>(slice, schedule);
  std::vector<Var<Scalar>> terms;
  for (std::size_t t = 0; t < slice.size(); ++t) {
    h = advance(w, h, graph.constant(inputs[t]));
    if (!loss_on_show_frames && !schedule.is_predict_frame(static_cast<int>(t))) continue;
    terms.push_back(weighted_masked_nll(decode_semantics(w, h), label_mask(slice[t]), class_weights));
  }
  return scaled_sum(terms, Scalar(1) / static_cast<Scalar>(terms.size()));
}

/// One semantic transfer pass. With freeze_recurrent the recurrent rollout runs
/// eagerly and only the semantic decoder is recorded, so gradients reach
/// nothing else.
StepStats semantic_transfer_step(const NetworkConfig& config, ParameterStore<float>& store,
                                 std::span<const Frame> slice, const SemanticTrainConfig& sem,
                                 const std::vector<float>& class_weights);

/// Trains the semantic decoder (or everything, when not frozen) on labeled episodes.
std::vector<double> train_semantic(const NetworkConfig& net, ParameterStore<float>& store,
                                   const std::vector<Episode>& labeled, const SemanticTrainConfig& config,
                                   const std::vector<float>& class_weights, const TrainHooks& hooks = {});

// ---------------------------------------------------------------------------
// One-shot classifier: three dilated 3x3 conv layers (dilations 1, 2, 4) with
// tanh and per-channel bias, then a 1x1 softmax head. Sees only x_t.

struct OneShotConfig {
  int channels = 8;
  int classes = kNumClasses;
  int epochs = 30;
  double learning_rate = 3e-3;
  std::uint64_t seed = 1;
};

ParameterStore<float> init_one_shot(const OneShotConfig& config, std::uint64_t seed);

template <typename T>
T one_shot_forward(const std::vector<T>& p, const T& input) {
  // p = {conv1.w, conv1.b, conv2.w, conv2.b, conv3.w, conv3.b, head.w, head.b}
  T h = tanh_act(conv2d_dilated(input, p[0], 1, p[1]));
  h = tanh_act(conv2d_dilated(h, p[2], 2, p[3]));
  h = tanh_act(conv2d_dilated(h, p[4], 4, p[5]));
  return softmax_per_cell(pointwise_conv(h, p[6], p[7]));
}

inline const std::vector<std::string>& one_shot_names() {
  static const std::vector<std::string> n = {"oneshot.conv1.w", "oneshot.conv1.b", "oneshot.conv2.w",
                                             "oneshot.conv2.b", "oneshot.conv3.w", "oneshot.conv3.b",
                                             "oneshot.head.w",  "oneshot.head.b"};
  return n;
}

/// [K, M, M] class distribution from a single observation.
Tensor<float> one_shot_predict(const ParameterStore<float>& params, const PartialObservation& x);

/// Trains on every frame of the labeled episodes with the weighted masked NLL.
/// Returns the per-epoch mean loss.
std::vector<double> train_one_shot_baseline(ParameterStore<float>& params, const std::vector<Episode>& labeled,
                                            const OneShotConfig& config, const std::vector<float>& class_weights);

}  // namespace occtrack
