// Copyright 2026 The crnn Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "crnn/optim.hpp"

#include <cmath>

#include "crnn/error.hpp"

namespace crnn {

namespace {

void check_sizes(std::size_t slot, std::size_t params, std::size_t grads) {
  if (params != grads || slot != params) {
    throw UsageError("optimizer step: parameter, gradient and state sizes differ (" +
                     std::to_string(params) + ", " + std::to_string(grads) + ", " +
                     std::to_string(slot) + ")");
  }
}

}  // namespace

void adadelta_step(AdadeltaState& state, const AdadeltaOptions& options,
                   std::span<double> params, std::span<const double> grads) {
  check_sizes(state.mean_sq_grad.size(), params.size(), grads.size());
  check_sizes(state.mean_sq_update.size(), params.size(), grads.size());
  const double rho = options.rho;
  const double eps = options.epsilon;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    double& eg = state.mean_sq_grad[i];
    double& ex = state.mean_sq_update[i];
    eg = rho * eg + (1.0 - rho) * g * g;
    const double dx = -(std::sqrt(ex + eps) / std::sqrt(eg + eps)) * g;
    ex = rho * ex + (1.0 - rho) * dx * dx;
    params[i] += dx;
  }
}

void momentum_step(MomentumState& state, const MomentumOptions& options,
                   std::span<double> params, std::span<const double> grads) {
  check_sizes(state.velocity.size(), params.size(), grads.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    double& v = state.velocity[i];
    v = options.momentum * v - options.learning_rate * grads[i];
    params[i] += v;
  }
}

void Optimizer::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    std::span<const double> g = p.grad();
    if (g.empty()) {
      zeros_.assign(p.numel(), 0.0);
      g = zeros_;
    }
    update(i, p.values(), g);
  }
}

void Optimizer::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

Adadelta::Adadelta(std::vector<Tensor> params, AdadeltaOptions options)
    : Optimizer(std::move(params)), options_(options) {
  for (const Tensor& p : parameters()) {
    states_.push_back({std::vector<double>(p.numel(), 0.0),
                       std::vector<double>(p.numel(), 0.0)});
  }
}

std::vector<std::vector<double>*> Adadelta::slots() {
  std::vector<std::vector<double>*> out;
  for (auto& s : states_) out.push_back(&s.mean_sq_grad);
  for (auto& s : states_) out.push_back(&s.mean_sq_update);
  return out;
}

void Adadelta::update(std::size_t index, std::span<double> params,
                      std::span<const double> grads) {
  adadelta_step(states_[index], options_, params, grads);
}

Momentum::Momentum(std::vector<Tensor> params, MomentumOptions options)
    : Optimizer(std::move(params)), options_(options) {
  for (const Tensor& p : parameters()) {
    states_.push_back({std::vector<double>(p.numel(), 0.0)});
  }
}

std::vector<std::vector<double>*> Momentum::slots() {
  std::vector<std::vector<double>*> out;
  for (auto& s : states_) out.push_back(&s.velocity);
  return out;
}

void Momentum::update(std::size_t index, std::span<double> params,
                      std::span<const double> grads) {
  momentum_step(states_[index], options_, params, grads);
}

double clip_grad_norm(std::vector<Tensor>& params, double max_norm) {
  double total = 0.0;
  for (const Tensor& p : params) {
    for (double g : p.grad()) total += g * g;
  }
  const double norm = std::sqrt(total);
  if (norm > max_norm && norm > 0.0) {
    const double k = max_norm / norm;
    for (Tensor& p : params) {
      for (double& g : p.mutable_grad()) g *= k;
    }
  }
  return norm;
}

}  // namespace crnn
