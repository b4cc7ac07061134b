// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "vgjepa/autodiff/tape.hpp"
#include "vgjepa/common/rng.hpp"

namespace vgjepa::ad {

// Named parameters with Adam moments and a step counter.
template <class T>
class ParamSet {
 public:
  struct Entry {
    std::string name;
    Tensor<T> value;
    Tensor<T> m;
    Tensor<T> v;
  };

  std::size_t add(std::string name, Tensor<T> value) {
    if (index_.count(name)) {
      throw ConfigError("duplicate parameter name '" + name + "'");
    }
    Tensor<T> m(value.shape()), v(value.shape());
    index_.emplace(name, entries_.size());
    entries_.push_back(Entry{std::move(name), std::move(value), std::move(m),
                             std::move(v)});
    return entries_.size() - 1;
  }

  std::size_t size() const noexcept { return entries_.size(); }
  Entry& operator[](std::size_t i) { return entries_.at(i); }
  const Entry& operator[](std::size_t i) const { return entries_.at(i); }
  const std::vector<Entry>& entries() const noexcept { return entries_; }

  bool contains(std::string_view name) const {
    return index_.count(std::string(name)) != 0;
  }
  std::size_t index_of(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) {
      throw DataError("unknown parameter '" + std::string(name) + "'");
    }
    return it->second;
  }

  std::uint64_t step() const noexcept { return step_; }
  void set_step(std::uint64_t s) noexcept { step_ = s; }
  void increment_step() noexcept { ++step_; }

  // Zeroes moments and the step counter; values are untouched.
  void reset_optimizer_state() {
    for (auto& e : entries_) {
      e.m.fill(T{0});
      e.v.fill(T{0});
    }
    step_ = 0;
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
  }
  std::size_t scalar_count(std::string_view prefix) const {
    std::size_t n = 0;
    for (const auto& e : entries_)
      if (e.name.starts_with(prefix)) n += e.value.size();
    return n;
  }

  // Indices of parameters whose name starts with any of the prefixes.
  std::vector<std::size_t> select(const std::vector<std::string>& prefixes) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < entries_.size(); ++i)
      for (const auto& p : prefixes)
        if (entries_[i].name.starts_with(p)) {
          out.push_back(i);
          break;
        }
    return out;
  }

  template <class U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (const auto& e : entries_) out.add(e.name, e.value.template cast<U>());
    out.set_step(step_);
    return out;
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
  std::uint64_t step_ = 0;
};

// Gradients aligned index-for-index with a ParamSet.
template <class T>
using GradSet = std::vector<Tensor<T>>;

template <class T>
GradSet<T> zero_grads(const ParamSet<T>& params) {
  GradSet<T> g;
  g.reserve(params.size());
  for (const auto& e : params.entries()) g.emplace_back(e.value.shape());
  return g;
}

// Binds parameters onto a tape on first use. Frozen parameters are bound as
// constants, so no gradient reaches them.
template <class T>
class Binder {
 public:
  Binder(Tape<T>& tape, const ParamSet<T>& params, bool trainable)
      : tape_(&tape), params_(&params), mask_(params.size(), trainable) {}
  // Per-parameter trainability, aligned with the ParamSet.
  Binder(Tape<T>& tape, const ParamSet<T>& params, std::vector<bool> mask)
      : tape_(&tape), params_(&params), mask_(std::move(mask)) {
    if (mask_.size() != params.size()) throw ConfigError("binder mask size mismatch");
  }

  Var<T> operator()(std::size_t index) {
    auto it = bound_.find(index);
    if (it != bound_.end()) return it->second;
    Var<T> v = tape_->leaf((*params_)[index].value, mask_.at(index));
    bound_.emplace(index, v);
    return v;
  }
  Var<T> operator()(std::string_view name) { return (*this)(params_->index_of(name)); }

  Tape<T>& tape() const { return *tape_; }
  const ParamSet<T>& params() const { return *params_; }
  bool trainable(std::size_t index) const { return mask_.at(index); }

  // Adds this binder's parameter gradients into grads.
  void collect(GradSet<T>& grads) const {
    for (const auto& [index, var] : bound_) {
      if (!mask_[index]) continue;
      Tensor<T> g = tape_->grad(var);
      Tensor<T>& dst = grads.at(index);
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
    }
  }

 private:
  Tape<T>* tape_;
  const ParamSet<T>* params_;
  std::vector<bool> mask_;
  std::unordered_map<std::size_t, Var<T>> bound_;
};

// He-uniform weight initialization: U(-b, b) with b = sqrt(6 / fan_in).
template <class T>
Tensor<T> he_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor<T> t(std::move(shape));
  const double b = std::sqrt(6.0 / static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  for (auto& v : t.data()) v = static_cast<T>(uniform(rng, -b, b));
  return t;
}

// Default linear-layer init: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template <class T>
Tensor<T> fan_in_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor<T> t(std::move(shape));
  const double b = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  for (auto& v : t.data()) v = static_cast<T>(uniform(rng, -b, b));
  return t;
}

}  // namespace vgjepa::ad
