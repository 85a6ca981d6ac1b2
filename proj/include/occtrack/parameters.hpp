#pragma once

#include "occtrack/tensor.hpp"

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace occtrack {

/// A named trainable tensor with its gradient buffer and adaptive-moment state.
/// The shape is fixed at construction; only element values may change.
template <typename Scalar>
class Parameter {
 public:
  using Array = typename Tensor<Scalar>::Array;
  using ArrayMap = Eigen::Map<Array>;

  Parameter(std::string name, Tensor<Scalar> init)
      : name_(std::move(name)),
        value_(std::move(init)),
        grad_(value_.shape()),
        first_moment_(value_.shape()),
        second_moment_(value_.shape()) {}

  const std::string& name() const { return name_; }
  const Shape& shape() const { return value_.shape(); }
  Eigen::Index size() const { return value_.size(); }

  const Tensor<Scalar>& value() const { return value_; }
  const Tensor<Scalar>& grad() const { return grad_; }
  const Tensor<Scalar>& first_moment() const { return first_moment_; }
  const Tensor<Scalar>& second_moment() const { return second_moment_; }
  std::int64_t steps() const { return steps_; }

  ArrayMap values() { return ArrayMap(value_.data(), value_.size()); }
  ArrayMap grads() { return ArrayMap(grad_.data(), grad_.size()); }
  ArrayMap first_moments() { return ArrayMap(first_moment_.data(), first_moment_.size()); }
  ArrayMap second_moments() { return ArrayMap(second_moment_.data(), second_moment_.size()); }
  void set_steps(std::int64_t steps) { steps_ = steps; }

  void assign(const Tensor<Scalar>& value) { assign_to(value_, value); }
  void assign_moments(const Tensor<Scalar>& first, const Tensor<Scalar>& second) {
    assign_to(first_moment_, first);
    assign_to(second_moment_, second);
  }

 private:
  void assign_to(Tensor<Scalar>& dst, const Tensor<Scalar>& src) const {
    if (src.shape() != dst.shape())
      throw ShapeError("parameter '" + name_ + "' has shape " + to_string(dst.shape()) + ", cannot assign " +
                       to_string(src.shape()));
    dst.array() = src.array();
  }

  std::string name_;
  Tensor<Scalar> value_;
  Tensor<Scalar> grad_;
  Tensor<Scalar> first_moment_;
  Tensor<Scalar> second_moment_;
  std::int64_t steps_ = 0;
};

/// Insertion-ordered collection of uniquely named parameters.
template <typename Scalar>
class ParameterStore {
 public:
  Parameter<Scalar>& add(const std::string& name, Tensor<Scalar> init) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter name '" + name + "'");
    index_.emplace(name, params_.size());
    params_.emplace_back(name, std::move(init));
    return params_.back();
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  Parameter<Scalar>& at(const std::string& name) { return params_[lookup(name)]; }
  const Parameter<Scalar>& at(const std::string& name) const { return params_[lookup(name)]; }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  std::size_t size() const { return params_.size(); }

  /// Total number of scalar parameters.
  Eigen::Index scalar_count() const {
    Eigen::Index n = 0;
    for (const auto& p : params_) n += p.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.grads().setZero();
  }

 private:
  std::size_t lookup(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
    return it->second;
  }

  std::vector<Parameter<Scalar>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

enum class OptimizerKind { sgd, adam };

struct AdamSettings {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class NonFiniteGradient : public std::runtime_error {
 public:
  explicit NonFiniteGradient(std::string parameter)
      : std::runtime_error("non-finite gradient in parameter '" + parameter + "'"), parameter_(std::move(parameter)) {}
  const std::string& parameter() const { return parameter_; }

 private:
  std::string parameter_;
};

template <typename Scalar>
using ParameterFilter = std::function<bool(const Parameter<Scalar>&)>;

template <typename Scalar>
double global_grad_norm(const ParameterStore<Scalar>& store) {
  double sq = 0;
  for (const auto& p : store) sq += p.grad().array().template cast<double>().square().sum();
  return std::sqrt(sq);
}

/// Rescales all gradients so their joint L2 norm is at most max_norm. Returns the norm before clipping.
template <typename Scalar>
double clip_grad_norm(ParameterStore<Scalar>& store, double max_norm) {
  const double norm = global_grad_norm(store);
  if (std::isfinite(norm) && norm > max_norm && norm > 0) {
    const auto scale = static_cast<Scalar>(max_norm / norm);
    for (auto& p : store) p.grads() *= scale;
  }
  return norm;
}

/// Applies one update to every parameter accepted by `trainable` (all when empty)
/// and zeroes every gradient. A non-finite gradient aborts before anything changes.
template <typename Scalar>
void optimizer_step(ParameterStore<Scalar>& store, double learning_rate, OptimizerKind kind,
                    const ParameterFilter<Scalar>& trainable = {}, const AdamSettings& adam = {}) {
  for (const auto& p : store)
    if ((!trainable || trainable(p)) && !p.grad().all_finite()) throw NonFiniteGradient(p.name());

  const auto lr = static_cast<Scalar>(learning_rate);
  for (auto& p : store) {
    if (trainable && !trainable(p)) continue;
    auto g = p.grads();
    switch (kind) {
      case OptimizerKind::sgd:
        p.values() -= lr * g;
        break;
      case OptimizerKind::adam: {
        p.set_steps(p.steps() + 1);
        const auto b1 = static_cast<Scalar>(adam.beta1), b2 = static_cast<Scalar>(adam.beta2);
        auto m = p.first_moments();
        auto v = p.second_moments();
        m = b1 * m + (Scalar(1) - b1) * g;
        v = b2 * v + (Scalar(1) - b2) * g.square();
        const auto t = static_cast<double>(p.steps());
        const auto m_scale = static_cast<Scalar>(1.0 / (1.0 - std::pow(adam.beta1, t)));
        const auto v_scale = static_cast<Scalar>(1.0 / (1.0 - std::pow(adam.beta2, t)));
        p.values() -= lr * (m * m_scale) / ((v * v_scale).sqrt() + static_cast<Scalar>(adam.epsilon));
        break;
      }
    }
  }
  store.zero_grad();
}

}  // namespace occtrack
