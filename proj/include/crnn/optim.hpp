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

// Parameter update rules: ADADELTA and SGD with classical momentum.

#ifndef CRNN_OPTIM_HPP_
#define CRNN_OPTIM_HPP_

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "crnn/tensor.hpp"

namespace crnn {

struct AdadeltaOptions {
  double rho = 0.9;
  double epsilon = 1e-6;
};

// Running averages for one parameter block.
struct AdadeltaState {
  std::vector<double> mean_sq_grad;    // E[g^2]
  std::vector<double> mean_sq_update;  // E[dx^2]
};

// E[g^2] <- rho E[g^2] + (1 - rho) g^2
// dx     <- -sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g
// E[dx^2] <- rho E[dx^2] + (1 - rho) dx^2
// params += dx
void adadelta_step(AdadeltaState& state, const AdadeltaOptions& options,
                   std::span<double> params, std::span<const double> grads);

struct MomentumOptions {
  double learning_rate = 0.01;
  double momentum = 0.9;
};

struct MomentumState {
  std::vector<double> velocity;
};

// v <- mu v - lr g; params += v
void momentum_step(MomentumState& state, const MomentumOptions& options,
                   std::span<double> params, std::span<const double> grads);

// Updates a fixed list of parameter tensors from their accumulated
// gradients. Tensors without a gradient are treated as having a zero one.
class Optimizer {
 public:
  virtual ~Optimizer() = default;

  void step();
  void zero_grad();
  const std::vector<Tensor>& parameters() const { return params_; }

  virtual std::string name() const = 0;
  // Flattened optimizer slots, for checkpointing: one vector per slot kind
  // per parameter, in parameter order.
  virtual std::vector<std::vector<double>*> slots() = 0;

 protected:
  explicit Optimizer(std::vector<Tensor> params) : params_(std::move(params)) {}
  virtual void update(std::size_t index, std::span<double> params,
                      std::span<const double> grads) = 0;

 private:
  std::vector<Tensor> params_;
  std::vector<double> zeros_;
};

class Adadelta : public Optimizer {
 public:
  Adadelta(std::vector<Tensor> params, AdadeltaOptions options = {});
  std::string name() const override { return "adadelta"; }
  std::vector<std::vector<double>*> slots() override;
  const AdadeltaState& state(std::size_t index) const { return states_[index]; }

 private:
  void update(std::size_t index, std::span<double> params,
              std::span<const double> grads) override;

  AdadeltaOptions options_;
  std::vector<AdadeltaState> states_;
};

class Momentum : public Optimizer {
 public:
  Momentum(std::vector<Tensor> params, MomentumOptions options = {});
  std::string name() const override { return "momentum"; }
  std::vector<std::vector<double>*> slots() override;
  const MomentumState& state(std::size_t index) const { return states_[index]; }

 private:
  void update(std::size_t index, std::span<double> params,
              std::span<const double> grads) override;

  MomentumOptions options_;
  std::vector<MomentumState> states_;
};

// Rescales all gradients so their joint L2 norm is at most `max_norm`.
// Returns the norm before clipping.
double clip_grad_norm(std::vector<Tensor>& params, double max_norm);

}  // namespace crnn

#endif  // CRNN_OPTIM_HPP_
