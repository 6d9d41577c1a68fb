#pragma once

#include <cmath>
#include <deque>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "ssrstf/autograd.hpp"
#include "ssrstf/tensor.hpp"

namespace ssrstf {

using Rng = std::mt19937_64;

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  /// Whether decoupled weight decay applies (false for biases, norms, positional encodings).
  bool decay = true;
};

/// Ordered collection of named parameters. Element addresses are stable for
/// the lifetime of the set, so tapes may reference them directly.
template <typename T>
class ParamSet {
 public:
  Tensor<T>& add(std::string name, Tensor<T> value, bool decay) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
    index_.emplace(name, items_.size());
    items_.push_back({std::move(name), std::move(value), decay});
    return items_.back().value;
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
    return it->second;
  }
  Tensor<T>& at(const std::string& name) { return items_[index_of(name)].value; }
  const Tensor<T>& at(const std::string& name) const { return items_[index_of(name)].value; }

  std::size_t size() const { return items_.size(); }
  Parameter<T>& operator[](std::size_t i) { return items_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return items_[i]; }
  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : items_) n += p.value.size();
    return n;
  }

  template <typename U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (const auto& p : items_) out.add(p.name, p.value.template cast<U>(), p.decay);
    return out;
  }

 private:
  std::deque<Parameter<T>> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Leaf variables for every parameter of a set, recorded on one tape.
template <typename T>
class ParamBinding {
 public:
  ParamBinding(Tape<T>& tape, const ParamSet<T>& params) : params_(&params) {
    vars_.reserve(params.size());
    for (const auto& p : params) vars_.push_back(tape.parameter(p.value));
  }

  /// Uses caller-supplied variables, one per parameter in set order.
  ParamBinding(const ParamSet<T>& params, std::vector<Var<T>> vars)
      : params_(&params), vars_(std::move(vars)) {
    if (vars_.size() != params.size())
      throw std::invalid_argument("ParamBinding: " + std::to_string(vars_.size()) +
                                  " variables for " + std::to_string(params.size()) +
                                  " parameters");
  }

  Var<T> operator()(const std::string& name) const { return vars_[params_->index_of(name)]; }
  Var<T> at(std::size_t i) const { return vars_[i]; }
  std::size_t size() const { return vars_.size(); }

 private:
  const ParamSet<T>* params_;
  std::vector<Var<T>> vars_;
};

/// Uniform in +-sqrt(6 / (fan_in + fan_out)).
template <typename T>
Tensor<T> xavier_uniform(Rng& rng, Shape shape, std::size_t fan_in, std::size_t fan_out) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(dist(rng));
  return t;
}

template <typename T>
Tensor<T> normal_init(Rng& rng, Shape shape, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(dist(rng));
  return t;
}

}  // namespace ssrstf
