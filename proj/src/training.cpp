#include "occtrack/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

namespace occtrack {
namespace {

double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

std::mt19937_64 epoch_rng(std::uint64_t seed, int epoch) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch)};
  return std::mt19937_64(seq);
}

template <typename Item>
std::vector<std::size_t> shuffled_order(const std::vector<Item>& items, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto rng = epoch_rng(seed, epoch);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

/// Top-layer activations of an eager rollout under the schedule.
std::vector<Tensor<float>> frozen_features(const NetworkConfig& config, const NetworkWeights<Tensor<float>>& w,
                                           std::span<const Frame> slice, const Schedule& schedule) {
  auto h = zero_hidden<float>(config);
  const auto inputs = scheduled_inputs<float>(slice, schedule);
  std::vector<Tensor<float>> features;
  features.reserve(slice.size());
  for (const auto& x : inputs) {
    h = advance(w, h, x);
    features.push_back(h.back());
  }
  return features;
}

/// Semantic loss over cached top-layer features; only decoder leaves take gradients.
StepStats decoder_step(ParameterStore<float>& store, std::span<const Frame> slice,
                       const std::vector<Tensor<float>>& features, const SemanticTrainConfig& sem,
                       const std::vector<float>& class_weights) {
  Graph<float> graph;
  const auto w = graph.parameter(store, names::kSemanticWeight);
  const auto b = graph.parameter(store, names::kSemanticBias);
  std::vector<Var<float>> terms;
  for (std::size_t t = 0; t < slice.size(); ++t) {
    if (!sem.loss_on_show_frames && !sem.schedule.is_predict_frame(static_cast<int>(t))) continue;
    const auto probs = softmax_per_cell(pointwise_conv(graph.constant(features[t]), w, b));
    terms.push_back(weighted_masked_nll(probs, label_mask(slice[t]), class_weights));
  }
  const auto loss = scaled_sum(terms, 1.0f / static_cast<float>(terms.size()));
  graph.backward(loss);
  graph.accumulate_into(store);
  StepStats stats{loss.value().item(), 0};
  stats.grad_norm = sem.clip_norm > 0 ? clip_grad_norm(store, sem.clip_norm) : global_grad_norm(store);
  return stats;
}

void check_slice(std::span<const Frame> slice, const Schedule& schedule) {
  schedule.validate();
  if (static_cast<int>(slice.size()) < schedule.minibatch_length)
    throw std::invalid_argument("minibatch slice has " + std::to_string(slice.size()) + " frames, need " +
                                std::to_string(schedule.minibatch_length));
}

}  // namespace

void TrainConfig::validate() const {
  schedule.validate();
  if (!(learning_rate > 0)) throw std::invalid_argument("learning rate must be positive");
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
}

void SemanticTrainConfig::validate() const {
  schedule.validate();
  if (!(labeled_fraction > 0 && labeled_fraction <= 1)) throw std::invalid_argument("labeled fraction must be in (0, 1]");
  if (!(learning_rate > 0)) throw std::invalid_argument("learning rate must be positive");
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
}

ByteGrid label_mask(const Frame& frame) {
  const auto keep = (frame.observation.occupancy != 0) && (frame.classes != kIgnoreLabel);
  return keep.select(frame.classes, ByteGrid::Constant(frame.classes.rows(), frame.classes.cols(), kIgnoreLabel));
}

std::vector<std::span<const Frame>> minibatches(const std::vector<Episode>& episodes, int length) {
  std::vector<std::span<const Frame>> out;
  for (const auto& ep : episodes) {
    const std::span<const Frame> frames(ep.frames);
    for (std::size_t start = 0; start + static_cast<std::size_t>(length) <= frames.size();
         start += static_cast<std::size_t>(length))
      out.push_back(frames.subspan(start, static_cast<std::size_t>(length)));
  }
  return out;
}

std::vector<double> train_occupancy(const NetworkConfig& net, ParameterStore<float>& store,
                                    const std::vector<Episode>& episodes, const TrainConfig& config,
                                    const TrainHooks& hooks, int first_epoch) {
  config.validate();
  if (episodes.empty()) throw std::invalid_argument("train_occupancy: no training episodes");
  const auto batches = minibatches(episodes, config.schedule.minibatch_length);
  if (batches.empty()) throw std::invalid_argument("train_occupancy: episodes shorter than one minibatch");

  std::vector<double> curve;
  for (int epoch = first_epoch; epoch < config.epochs; ++epoch) {
    double total = 0;
    for (std::size_t idx : shuffled_order(batches, config.seed, epoch)) {
      const auto start = std::chrono::steady_clock::now();
      const auto stats = unsupervised_occupancy_step(net, store, batches[idx], config.schedule, config.clip_norm);
      if (!std::isfinite(stats.loss)) throw NonFiniteLoss(static_cast<int>(idx));
      optimizer_step(store, config.learning_rate, config.optimizer);
      total += stats.loss;
      if (hooks.on_minibatch)
        hooks.on_minibatch({epoch, static_cast<int>(idx), stats.loss, stats.grad_norm, elapsed_ms(start)});
    }
    curve.push_back(total / static_cast<double>(batches.size()));
    if (hooks.on_epoch) hooks.on_epoch(epoch, store);
  }
  return curve;
}

std::vector<float> inverse_frequency_weights(const std::vector<Episode>& episodes, int classes) {
  std::vector<double> counts(static_cast<std::size_t>(classes), 0.0);
  for (const auto& ep : episodes)
    for (const auto& f : ep.frames) {
      const ByteGrid labels = label_mask(f);
      for (Eigen::Index i = 0; i < labels.size(); ++i) {
        const auto l = labels.data()[i];
        if (l == kIgnoreLabel) continue;
        if (l >= classes) throw std::out_of_range("label " + std::to_string(l) + " outside class range");
        counts[l] += 1;
      }
    }
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  std::vector<double> w(counts.size());
  for (std::size_t k = 0; k < counts.size(); ++k) w[k] = std::max(total, 1.0) / std::max(counts[k], 1.0);
  const double mean = std::accumulate(w.begin(), w.end(), 0.0) / static_cast<double>(w.size());
  std::vector<float> out;
  for (double v : w) out.push_back(static_cast<float>(v / mean));
  return out;
}

std::vector<std::size_t> select_labeled_episodes(std::size_t count, double fraction, std::uint64_t seed) {
  if (count == 0) return {};
  const auto n = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(fraction * static_cast<double>(count))),
                                         1, count);
  std::vector<std::size_t> idx(count);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  return idx;
}

StepStats semantic_transfer_step(const NetworkConfig& config, ParameterStore<float>& store,
                                 std::span<const Frame> slice, const SemanticTrainConfig& sem,
                                 const std::vector<float>& class_weights) {
  check_slice(slice, sem.schedule);
  detail::check_class_weights(class_weights);
  slice = slice.first(static_cast<std::size_t>(sem.schedule.minibatch_length));
  if (sem.freeze_recurrent) {
    const auto features = frozen_features(config, bind(config, store), slice, sem.schedule);
    return decoder_step(store, slice, features, sem, class_weights);
  }
  Graph<float> graph;
  const auto w = bind(graph, config, store);
  const auto loss =
      semantic_objective(graph, w, config, slice, sem.schedule, class_weights, sem.loss_on_show_frames);
  graph.backward(loss);
  graph.accumulate_into(store);
  StepStats stats{loss.value().item(), 0};
  stats.grad_norm = sem.clip_norm > 0 ? clip_grad_norm(store, sem.clip_norm) : global_grad_norm(store);
  return stats;
}

std::vector<double> train_semantic(const NetworkConfig& net, ParameterStore<float>& store,
                                   const std::vector<Episode>& labeled, const SemanticTrainConfig& config,
                                   const std::vector<float>& class_weights, const TrainHooks& hooks) {
  config.validate();
  detail::check_class_weights(class_weights);
  const auto batches = minibatches(labeled, config.schedule.minibatch_length);
  if (batches.empty()) throw std::invalid_argument("train_semantic: no labeled minibatches");
  const ParameterFilter<float> trainable = [&config](const Parameter<float>& p) {
    return !config.freeze_recurrent || is_semantic_parameter(p.name());
  };

  // Frozen recurrent weights make every rollout fixed, so the features are computed once.
  std::vector<std::vector<Tensor<float>>> cache;
  if (config.freeze_recurrent) {
    const auto w = bind(net, store);
    for (const auto& b : batches) cache.push_back(frozen_features(net, w, b, config.schedule));
  }

  std::vector<double> curve;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    double total = 0;
    for (std::size_t idx : shuffled_order(batches, config.seed, epoch)) {
      const auto start = std::chrono::steady_clock::now();
      const auto stats = config.freeze_recurrent
                             ? decoder_step(store, batches[idx], cache[idx], config, class_weights)
                             : semantic_transfer_step(net, store, batches[idx], config, class_weights);
      if (!std::isfinite(stats.loss)) throw NonFiniteLoss(static_cast<int>(idx));
      optimizer_step(store, config.learning_rate, OptimizerKind::adam, trainable);
      total += stats.loss;
      if (hooks.on_minibatch)
        hooks.on_minibatch({epoch, static_cast<int>(idx), stats.loss, stats.grad_norm, elapsed_ms(start)});
    }
    curve.push_back(total / static_cast<double>(batches.size()));
    if (hooks.on_epoch) hooks.on_epoch(epoch, store);
  }
  return curve;
}

ParameterStore<float> init_one_shot(const OneShotConfig& config, std::uint64_t seed) {
  if (config.channels < 1 || config.classes < 2) throw std::invalid_argument("invalid one-shot classifier config");
  std::mt19937_64 rng(seed);
  auto glorot = [&rng](Shape shape, int fan_in, int fan_out) {
    std::uniform_real_distribution<double> u(-std::sqrt(6.0 / (fan_in + fan_out)), std::sqrt(6.0 / (fan_in + fan_out)));
    Tensor<float> t(std::move(shape));
    for (Eigen::Index i = 0; i < t.size(); ++i) t[i] = static_cast<float>(u(rng));
    return t;
  };
  const int c = config.channels;
  const auto& n = one_shot_names();
  ParameterStore<float> store;
  store.add(n[0], glorot({c, kInputChannels, 3, 3}, kInputChannels * 9, c * 9));
  store.add(n[1], Tensor<float>({c}));
  store.add(n[2], glorot({c, c, 3, 3}, c * 9, c * 9));
  store.add(n[3], Tensor<float>({c}));
  store.add(n[4], glorot({c, c, 3, 3}, c * 9, c * 9));
  store.add(n[5], Tensor<float>({c}));
  store.add(n[6], glorot({config.classes, c}, c, config.classes));
  store.add(n[7], Tensor<float>({config.classes}));
  return store;
}

Tensor<float> one_shot_predict(const ParameterStore<float>& params, const PartialObservation& x) {
  std::vector<Tensor<float>> p;
  for (const auto& n : one_shot_names()) p.push_back(params.at(n).value());
  return one_shot_forward(p, encode_observation<float>(x));
}

std::vector<double> train_one_shot_baseline(ParameterStore<float>& params, const std::vector<Episode>& labeled,
                                            const OneShotConfig& config, const std::vector<float>& class_weights) {
  detail::check_class_weights(class_weights);
  std::vector<const Frame*> frames;
  for (const auto& ep : labeled)
    for (const auto& f : ep.frames) frames.push_back(&f);
  if (frames.empty()) throw std::invalid_argument("train_one_shot_baseline: no labeled frames");

  const ParameterFilter<float> mine = [](const Parameter<float>& p) { return p.name().rfind("oneshot.", 0) == 0; };
  std::vector<double> curve;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    double total = 0;
    for (std::size_t idx : shuffled_order(frames, config.seed, epoch)) {
      Graph<float> graph;
      std::vector<Var<float>> p;
      for (const auto& n : one_shot_names()) p.push_back(graph.parameter(params, n));
      const auto probs = one_shot_forward(p, graph.constant(encode_observation<float>(frames[idx]->observation)));
      const auto loss = weighted_masked_nll(probs, label_mask(*frames[idx]), class_weights);
      graph.backward(loss);
      graph.accumulate_into(params);
      if (!std::isfinite(loss.value().item())) throw NonFiniteLoss(static_cast<int>(idx));
      optimizer_step(params, config.learning_rate, OptimizerKind::adam, mine);
      total += loss.value().item();
    }
    curve.push_back(total / static_cast<double>(frames.size()));
  }
  return curve;
}

}  // namespace occtrack
